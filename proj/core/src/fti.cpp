#include "logfid/fti.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <ostream>
#include <random>

#include "logfid/csv.hpp"
#include "logfid/seed.hpp"

namespace logfid {

std::vector<long> count_vector(std::span<const int> subprocess_ids, int k) {
  if (k < 1) throw ConfigError("count vector needs k >= 1");
  std::vector<long> counts(static_cast<std::size_t>(k), 0);
  for (int s : subprocess_ids) {
    if (s < 0 || s >= k) {
      throw ContractError("subprocess symbol " + std::to_string(s) + " outside [0, " +
                          std::to_string(k) + ")");
    }
    ++counts[static_cast<std::size_t>(s)];
  }
  return counts;
}

std::string to_string(Representation r) {
  switch (r) {
    case Representation::CountVector: return "cv";
    case Representation::Phmm: return "phmm";
    case Representation::CountVectorPhmm: return "cv+phmm";
  }
  return "?";
}

Representation parse_representation(const std::string& name) {
  if (name == "cv") return Representation::CountVector;
  if (name == "phmm") return Representation::Phmm;
  if (name == "cv+phmm") return Representation::CountVectorPhmm;
  throw ConfigError("unknown feature representation: " + name);
}

std::vector<double> fti_features(std::span<const int> subprocess_ids, int k, double phmm_score,
                                 Representation representation) {
  std::vector<double> out;
  if (representation != Representation::Phmm) {
    for (long c : count_vector(subprocess_ids, k)) out.push_back(static_cast<double>(c));
  }
  if (representation != Representation::CountVector) out.push_back(phmm_score);
  return out;
}

std::string to_string(ClassifierKind kind) {
  switch (kind) {
    case ClassifierKind::LogisticRegression: return "lr";
    case ClassifierKind::DecisionTree: return "dt";
    case ClassifierKind::RandomForest: return "rf";
  }
  return "?";
}

ClassifierKind parse_classifier(const std::string& name) {
  if (name == "lr") return ClassifierKind::LogisticRegression;
  if (name == "dt") return ClassifierKind::DecisionTree;
  if (name == "rf") return ClassifierKind::RandomForest;
  throw ConfigError("unknown classifier: " + name);
}

int DecisionTree::predict(std::span<const double> x) const {
  if (nodes.empty()) throw StateError("decision tree is empty");
  int i = 0;
  while (nodes[static_cast<std::size_t>(i)].feature >= 0) {
    const auto& n = nodes[static_cast<std::size_t>(i)];
    i = x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right;
  }
  return nodes[static_cast<std::size_t>(i)].label;
}

int DecisionTree::depth() const {
  if (nodes.empty()) return 0;
  std::vector<int> level(nodes.size(), 0);
  int deepest = 0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    deepest = std::max(deepest, level[i]);
    if (nodes[i].feature >= 0) {
      level[static_cast<std::size_t>(nodes[i].left)] = level[i] + 1;
      level[static_cast<std::size_t>(nodes[i].right)] = level[i] + 1;
    }
  }
  return deepest;
}

namespace {

using Rows = std::vector<std::vector<double>>;

// ---- logistic regression ----

struct LrProblem {
  Eigen::MatrixXd x;  // n x f, standardized
  Eigen::MatrixXd y;  // n x C one-hot
  double l2 = 0.0;    // coefficient of ||W||^2 / 2
};

double lr_loss(const LrProblem& p, const Eigen::MatrixXd& w, const Eigen::RowVectorXd& b,
               Eigen::MatrixXd* gw, Eigen::RowVectorXd* gb) {
  const auto n = static_cast<double>(p.x.rows());
  Eigen::MatrixXd z = p.x * w;
  z.rowwise() += b;
  double loss = 0.0;
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const double m = z.row(i).maxCoeff();
    z.row(i) = (z.row(i).array() - m).exp();
    const double s = z.row(i).sum();
    z.row(i) /= s;
    Eigen::Index target = 0;
    p.y.row(i).maxCoeff(&target);
    loss -= std::log(std::max(z(i, target), 1e-300));
  }
  loss = loss / n + 0.5 * p.l2 * w.squaredNorm();
  if (gw) {
    const Eigen::MatrixXd diff = (z - p.y) / n;
    *gw = p.x.transpose() * diff + p.l2 * w;
    *gb = diff.colwise().sum();
  }
  return loss;
}

LogisticModel fit_logistic(const Rows& rows, const std::vector<int>& labels, int classes,
                           const FtiOptions& opt) {
  const auto n = static_cast<Eigen::Index>(rows.size());
  const auto f = static_cast<Eigen::Index>(rows[0].size());
  LogisticModel model;
  Eigen::MatrixXd raw(n, f);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < f; ++j) raw(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  model.mean = raw.colwise().mean();
  Eigen::MatrixXd centered = raw.rowwise() - model.mean;
  model.scale = (centered.array().square().colwise().sum() / static_cast<double>(n)).sqrt();
  for (Eigen::Index j = 0; j < f; ++j) {
    if (!(model.scale(j) > 1e-12)) model.scale(j) = 1.0;
  }

  LrProblem p;
  p.x = centered.array().rowwise() / model.scale.array();
  p.y = Eigen::MatrixXd::Zero(n, classes);
  for (Eigen::Index i = 0; i < n; ++i) p.y(i, labels[static_cast<std::size_t>(i)]) = 1.0;
  if (!(opt.inverse_l2 > 0.0)) throw ConfigError("inverse_l2 must be positive");
  p.l2 = 1.0 / (opt.inverse_l2 * static_cast<double>(n));

  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(f, classes);
  Eigen::RowVectorXd b = Eigen::RowVectorXd::Zero(classes);
  Eigen::MatrixXd gw;
  Eigen::RowVectorXd gb;
  double loss = lr_loss(p, w, b, &gw, &gb);
  model.loss_trace.push_back(loss);
  double step = 1.0;
  for (int iter = 0; iter < opt.max_iterations; ++iter) {
    const double gmax = std::max(gw.cwiseAbs().maxCoeff(), gb.cwiseAbs().maxCoeff());
    if (gmax < opt.tolerance) break;
    const double gnorm2 = gw.squaredNorm() + gb.squaredNorm();
    step = std::min(step * 2.0, 1e4);
    double next = 0.0;
    Eigen::MatrixXd w2;
    Eigen::RowVectorXd b2;
    bool accepted = false;
    while (step > 1e-16) {
      w2 = w - step * gw;
      b2 = b - step * gb;
      next = lr_loss(p, w2, b2, nullptr, nullptr);
      if (next <= loss - 1e-4 * step * gnorm2) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
    w = std::move(w2);
    b = std::move(b2);
    loss = lr_loss(p, w, b, &gw, &gb);
    model.loss_trace.push_back(loss);
  }
  if (!w.allFinite() || !b.allFinite()) throw NumericError("logistic regression diverged");
  model.weights = std::move(w);
  model.bias = std::move(b);
  return model;
}

int logistic_predict(const LogisticModel& m, std::span<const double> x) {
  Eigen::RowVectorXd v(static_cast<Eigen::Index>(x.size()));
  for (std::size_t j = 0; j < x.size(); ++j) v(static_cast<Eigen::Index>(j)) = x[j];
  v = (v - m.mean).array() / m.scale.array();
  const Eigen::RowVectorXd z = v * m.weights + m.bias;
  Eigen::Index best = 0;
  for (Eigen::Index c = 1; c < z.size(); ++c) {
    if (z(c) > z(best)) best = c;
  }
  return static_cast<int>(best);
}

// ---- trees ----

double gini(const std::vector<long>& counts, long total) {
  if (total == 0) return 0.0;
  double s = 0.0;
  for (long c : counts) {
    const double p = static_cast<double>(c) / static_cast<double>(total);
    s += p * p;
  }
  return 1.0 - s;
}

int majority(const std::vector<long>& counts) {
  return static_cast<int>(std::max_element(counts.begin(), counts.end()) - counts.begin());
}

class TreeBuilder {
 public:
  TreeBuilder(const Rows& rows, const std::vector<int>& labels, int classes, const FtiOptions& opt,
              int candidates, std::mt19937_64& rng)
      : rows_(rows), labels_(labels), classes_(classes), opt_(opt), candidates_(candidates), rng_(rng) {}

  DecisionTree build(std::vector<std::size_t> indices) {
    tree_.nodes.clear();
    grow(std::move(indices), 0);
    return std::move(tree_);
  }

 private:
  struct Split {
    int feature = -1;
    double threshold = 0.0;
    double impurity = 0.0;
  };

  std::vector<long> counts_of(const std::vector<std::size_t>& idx) const {
    std::vector<long> c(static_cast<std::size_t>(classes_), 0);
    for (auto i : idx) ++c[static_cast<std::size_t>(labels_[i])];
    return c;
  }

  void consider(int feature, std::vector<std::size_t>& idx, Split& best) const {
    const auto f = static_cast<std::size_t>(feature);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      return rows_[a][f] < rows_[b][f] || (rows_[a][f] == rows_[b][f] && a < b);
    });
    const long n = static_cast<long>(idx.size());
    std::vector<long> left(static_cast<std::size_t>(classes_), 0);
    std::vector<long> right = counts_of(idx);
    for (long i = 0; i + 1 < n; ++i) {
      const int y = labels_[idx[static_cast<std::size_t>(i)]];
      ++left[static_cast<std::size_t>(y)];
      --right[static_cast<std::size_t>(y)];
      const double a = rows_[idx[static_cast<std::size_t>(i)]][f];
      const double b = rows_[idx[static_cast<std::size_t>(i + 1)]][f];
      if (!(a < b)) continue;
      const long nl = i + 1;
      const long nr = n - nl;
      if (nl < opt_.min_leaf || nr < opt_.min_leaf) continue;
      const double imp = (static_cast<double>(nl) * gini(left, nl) + static_cast<double>(nr) * gini(right, nr)) /
                         static_cast<double>(n);
      if (best.feature < 0 || imp < best.impurity) {
        double mid = a + (b - a) / 2.0;
        if (!(mid < b)) mid = a;
        best = {feature, mid, imp};
      }
    }
  }

  int grow(std::vector<std::size_t> idx, int depth) {
    const int id = static_cast<int>(tree_.nodes.size());
    tree_.nodes.emplace_back();
    const auto counts = counts_of(idx);
    tree_.nodes[static_cast<std::size_t>(id)].label = majority(counts);
    const long n = static_cast<long>(idx.size());
    if (depth >= opt_.max_depth || gini(counts, n) == 0.0 || n < 2 * opt_.min_leaf) return id;

    const int f = static_cast<int>(rows_[0].size());
    std::vector<int> order(static_cast<std::size_t>(f));
    std::iota(order.begin(), order.end(), 0);
    if (candidates_ < f) std::shuffle(order.begin(), order.end(), rng_);
    Split best;
    for (int j = 0; j < f; ++j) {
      // past the candidate budget, keep looking only while nothing splits
      if (j >= candidates_ && best.feature >= 0) break;
      consider(order[static_cast<std::size_t>(j)], idx, best);
    }
    if (best.feature < 0) return id;

    std::vector<std::size_t> left, right;
    for (auto i : idx) {
      (rows_[i][static_cast<std::size_t>(best.feature)] <= best.threshold ? left : right).push_back(i);
    }
    tree_.nodes[static_cast<std::size_t>(id)].feature = best.feature;
    tree_.nodes[static_cast<std::size_t>(id)].threshold = best.threshold;
    const int l = grow(std::move(left), depth + 1);
    const int r = grow(std::move(right), depth + 1);
    tree_.nodes[static_cast<std::size_t>(id)].left = l;
    tree_.nodes[static_cast<std::size_t>(id)].right = r;
    return id;
  }

  const Rows& rows_;
  const std::vector<int>& labels_;
  int classes_;
  const FtiOptions& opt_;
  int candidates_;
  std::mt19937_64& rng_;
  DecisionTree tree_;
};

}  // namespace

FtiModel fit_fti(const std::vector<std::vector<double>>& features,
                 const std::vector<std::string>& labels, const FtiOptions& options) {
  if (features.empty() || features.size() != labels.size()) {
    throw ConfigError("FTI training needs one label per feature row");
  }
  const std::size_t f = features[0].size();
  if (f == 0) throw ConfigError("FTI features are empty");
  for (const auto& row : features) {
    if (row.size() != f) throw ConfigError("FTI feature rows differ in length");
    for (double v : row) {
      if (!std::isfinite(v)) throw ConfigError("FTI features must be finite");
    }
  }

  FtiModel model;
  model.kind = options.kind;
  model.n_features = static_cast<int>(f);
  model.classes = labels;
  std::sort(model.classes.begin(), model.classes.end());
  model.classes.erase(std::unique(model.classes.begin(), model.classes.end()), model.classes.end());
  if (model.classes.size() < 2) throw ConfigError("FTI training needs at least two failure types");
  std::vector<int> y;
  y.reserve(labels.size());
  for (const auto& l : labels) {
    y.push_back(static_cast<int>(std::lower_bound(model.classes.begin(), model.classes.end(), l) -
                                 model.classes.begin()));
  }
  const int classes = static_cast<int>(model.classes.size());
  std::vector<std::size_t> all(features.size());
  std::iota(all.begin(), all.end(), std::size_t{0});

  switch (options.kind) {
    case ClassifierKind::LogisticRegression:
      model.logistic = fit_logistic(features, y, classes, options);
      break;
    case ClassifierKind::DecisionTree: {
      if (options.max_depth < 1 || options.min_leaf < 1) throw ConfigError("invalid tree options");
      std::mt19937_64 rng(options.seed);
      TreeBuilder builder(features, y, classes, options, static_cast<int>(f), rng);
      model.trees.push_back(builder.build(all));
      break;
    }
    case ClassifierKind::RandomForest: {
      if (options.max_depth < 1 || options.min_leaf < 1 || options.n_trees < 1) {
        throw ConfigError("invalid forest options");
      }
      const int candidates =
          options.all_features ? static_cast<int>(f)
                               : std::max(1, static_cast<int>(std::sqrt(static_cast<double>(f))));
      for (int t = 0; t < options.n_trees; ++t) {
        std::mt19937_64 rng(derive_seed(options.seed, static_cast<std::uint64_t>(t)));
        std::vector<std::size_t> sample = all;
        if (options.bootstrap) {
          std::uniform_int_distribution<std::size_t> pick(0, all.size() - 1);
          for (auto& s : sample) s = pick(rng);
        }
        TreeBuilder builder(features, y, classes, options, candidates, rng);
        model.trees.push_back(builder.build(std::move(sample)));
      }
      break;
    }
  }
  return model;
}

int FtiModel::predict_index(std::span<const double> x) const {
  if (static_cast<int>(x.size()) != n_features) {
    throw ContractError("expected " + std::to_string(n_features) + " features, got " +
                        std::to_string(x.size()));
  }
  if (kind == ClassifierKind::LogisticRegression) return logistic_predict(logistic, x);
  if (trees.empty()) throw StateError("FTI model has no trees");
  if (trees.size() == 1) return trees[0].predict(x);
  std::vector<long> votes(classes.size(), 0);
  for (const auto& t : trees) ++votes[static_cast<std::size_t>(t.predict(x))];
  return majority(votes);
}

const std::string& FtiModel::predict(std::span<const double> x) const {
  return classes[static_cast<std::size_t>(predict_index(x))];
}

void write_predictions_csv(std::ostream& out, const std::vector<FtiPrediction>& rows) {
  csv::write_row(out, {"task_id", "predicted_type", "true_type"});
  for (const auto& r : rows) csv::write_row(out, {r.task_id, r.predicted, r.truth});
}

}  // namespace logfid
