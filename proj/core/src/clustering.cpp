#include "logfid/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <memory>
#include <ostream>
#include <random>
#include <set>

#include "logfid/csv.hpp"

namespace logfid {

CentroidSet CentroidSet::from_matrix(Matrix m) {
  CentroidSet c;
  c.m = std::move(m);
  c.reset_counters();
  return c;
}

bool CentroidSet::identical(const CentroidSet& other) const {
  if (m.rows() != other.m.rows() || m.cols() != other.m.cols()) return false;
  if (counters != other.counters) return false;
  return std::memcmp(m.data(), other.m.data(), sizeof(double) * static_cast<std::size_t>(m.size())) == 0;
}

Assignment assign(const RowVector& embedding, const CentroidSet& centroids) {
  if (!centroids.initialized()) throw StateError("centroids are not initialized");
  if (embedding.size() != centroids.m.cols()) {
    throw ContractError("embedding and centroid dimensions differ");
  }
  Assignment best{0, std::numeric_limits<double>::infinity()};
  for (Eigen::Index j = 0; j < centroids.m.rows(); ++j) {
    const double dist = (embedding - centroids.m.row(j)).squaredNorm();
    if (dist < best.squared_distance) best = {static_cast<int>(j), dist};
  }
  return best;
}

double kmeans_loss(std::span<const RowVector> embeddings, std::span<const int> assignments,
                   const CentroidSet& centroids) {
  if (embeddings.size() != assignments.size()) {
    throw ContractError("kmeans_loss: embeddings and assignments differ in length");
  }
  if (embeddings.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < embeddings.size(); ++i) {
    if (assignments[i] < 0 || assignments[i] >= centroids.k()) {
      throw ContractError("kmeans_loss: assignment out of range");
    }
    total += (embeddings[i] - centroids.m.row(assignments[i])).squaredNorm();
  }
  return total / static_cast<double>(embeddings.size());
}

double kmeans_loss(std::span<const RowVector> embeddings, const CentroidSet& centroids) {
  if (embeddings.empty()) return 0.0;
  double total = 0.0;
  for (const auto& e : embeddings) total += assign(e, centroids).squared_distance;
  return total / static_cast<double>(embeddings.size());
}

void update_centroid(CentroidSet& centroids, int index, const RowVector& embedding,
                     CentroidRule rule) {
  if (index < 0 || index >= centroids.k()) throw ContractError("centroid index out of range");
  if (centroids.counters.size() != static_cast<std::size_t>(centroids.k())) {
    centroids.reset_counters();
  }
  auto& c = centroids.counters[static_cast<std::size_t>(index)];
  const RowVector delta = (embedding - centroids.m.row(index)) / c;
  if (rule == CentroidRule::Toward) {
    centroids.m.row(index) += delta;
  } else {
    centroids.m.row(index) -= delta;
  }
  c += 1.0;
}

namespace {

std::size_t count_distinct(std::span<const RowVector> rows) {
  auto less = [](const RowVector* a, const RowVector* b) {
    return std::lexicographical_compare(a->data(), a->data() + a->size(), b->data(),
                                        b->data() + b->size());
  };
  std::set<const RowVector*, decltype(less)> seen(less);
  for (const auto& r : rows) seen.insert(&r);
  return seen.size();
}

}  // namespace

CentroidSet initialize_centroids(std::span<const RowVector> embeddings, int k, std::uint64_t seed,
                                 KMeansOptions options, std::vector<double>* loss_trace) {
  if (k < 1) throw ConfigError("k must be at least 1");
  if (embeddings.empty()) throw ConfigError("no embeddings to cluster");
  if (count_distinct(embeddings) < static_cast<std::size_t>(k)) {
    throw ConfigError("fewer distinct embeddings than clusters (k = " + std::to_string(k) + ")");
  }
  const auto n = embeddings.size();
  const auto d = embeddings[0].size();

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  Matrix m(k, d);
  m.row(0) = embeddings[pick(rng)];
  std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
  for (int j = 1; j < k; ++j) {
    std::size_t far = 0;
    double far_dist = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      nearest[i] = std::min(nearest[i], (embeddings[i] - m.row(j - 1)).squaredNorm());
      if (nearest[i] > far_dist) {
        far_dist = nearest[i];
        far = i;
      }
    }
    m.row(j) = embeddings[far];
  }

  CentroidSet centroids = CentroidSet::from_matrix(std::move(m));
  std::vector<int> labels(n, 0);
  auto reassign = [&] {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto a = assign(embeddings[i], centroids);
      labels[i] = a.index;
      total += a.squared_distance;
    }
    return total / static_cast<double>(n);
  };

  double loss = reassign();
  if (loss_trace) loss_trace->push_back(loss);
  for (int iter = 0; iter < options.max_iterations; ++iter) {
    Matrix sums = Matrix::Zero(k, d);
    std::vector<std::size_t> sizes(static_cast<std::size_t>(k), 0);
    for (std::size_t i = 0; i < n; ++i) {
      sums.row(labels[i]) += embeddings[i];
      ++sizes[static_cast<std::size_t>(labels[i])];
    }
    for (int j = 0; j < k; ++j) {
      // an emptied cluster keeps its previous centroid
      if (sizes[static_cast<std::size_t>(j)] > 0) {
        centroids.m.row(j) = sums.row(j) / static_cast<double>(sizes[static_cast<std::size_t>(j)]);
      }
    }
    const double next = reassign();
    if (loss_trace) loss_trace->push_back(next);
    const bool converged = loss - next <= options.tolerance;
    loss = next;
    if (converged) break;
  }
  centroids.reset_counters();
  return centroids;
}

double joint_objective(const EncoderParams& params, const CentroidSet& centroids,
                       const std::vector<MaskedSample>& samples, const TokenVocab& vocab,
                       double lambda) {
  if (samples.empty()) throw DegenerateInputError("evaluation corpus is empty");
  double masked = 0.0;
  double cluster = 0.0;
  for (const auto& s : samples) {
    auto out = forward(params, s.tokens);
    masked += weighted_cross_entropy(out.logits, s.target, vocab);
    cluster += assign(out.lse_embedding, centroids).squared_distance;
  }
  const auto n = static_cast<double>(samples.size());
  return masked / n + lambda * cluster / n;
}

namespace {

class CentroidObserver : public BatchObserver {
 public:
  CentroidObserver(CentroidSet& centroids, CentroidRule rule) : centroids_(centroids), rule_(rule) {
    snapshot();
  }

  const RowVector* assign(const RowVector& embedding) override {
    return &rows_[static_cast<std::size_t>(logfid::assign(embedding, centroids_).index)];
  }

  void after_step(std::span<const RowVector> embeddings) override {
    // assignments use the centroids the network step was taken against
    std::vector<int> labels;
    labels.reserve(embeddings.size());
    for (const auto& e : embeddings) labels.push_back(logfid::assign(e, centroids_).index);
    for (std::size_t i = 0; i < embeddings.size(); ++i) {
      update_centroid(centroids_, labels[i], embeddings[i], rule_);
    }
    if (!centroids_.m.allFinite()) throw NumericError("centroid update produced non-finite values");
    snapshot();
  }

 private:
  void snapshot() {
    rows_.clear();
    for (Eigen::Index j = 0; j < centroids_.m.rows(); ++j) rows_.emplace_back(centroids_.m.row(j));
  }

  CentroidSet& centroids_;
  CentroidRule rule_;
  std::vector<RowVector> rows_;
};

}  // namespace

JointResult joint_train(EncoderParams params, CentroidSet centroids,
                        const std::vector<MaskedSample>& corpus, const TokenVocab& vocab,
                        const TrainingConfig& config, const std::vector<MaskedSample>* evaluation,
                        CentroidRule rule) {
  config.validate();
  if (corpus.empty()) throw DegenerateInputError("joint training corpus is empty");
  if (!centroids.initialized()) throw StateError("centroids are not initialized");
  if (centroids.dim() != params.shape.d) {
    throw ContractError("centroid dimension does not match the encoder");
  }

  std::mt19937_64 rng(joint_stream_seed(config.seed));
  JointResult result{std::move(params), std::move(centroids), {}, {}};
  for (int epoch = 1; epoch <= config.phase2_max_epochs; ++epoch) {
    const EncoderParams checkpoint = result.params;
    result.centroids.reset_counters();
    CentroidObserver observer(result.centroids, rule);
    double loss = 0.0;
    try {
      loss = run_epoch(result.params, corpus, vocab, config, rng, &observer, config.lambda);
    } catch (const NumericError& e) {
      throw TrainingAborted(std::string("joint training aborted: ") + e.what(),
                            std::make_shared<const EncoderParams>(checkpoint), epoch);
    }
    if (!std::isfinite(loss) || !result.params.all_finite()) {
      throw TrainingAborted("joint training produced non-finite loss",
                            std::make_shared<const EncoderParams>(checkpoint), epoch);
    }
    result.train_masked_loss.push_back(loss);
    if (evaluation && !evaluation->empty()) {
      result.eval_objective.push_back(
          joint_objective(result.params, result.centroids, *evaluation, vocab, config.lambda));
    }
  }
  return result;
}

SubprocessChoice extract_subprocess_id(std::span<const MaskedSample> samples,
                                       const EncoderParams& params, const CentroidSet& centroids,
                                       std::size_t window_length) {
  if (samples.empty()) throw DegenerateInputError("window has no masked samples");
  for (const auto& s : samples) {
    if (!(s.origin == samples[0].origin)) {
      throw ContractError("masked samples come from different windows");
    }
  }
  std::vector<int> counts(static_cast<std::size_t>(centroids.k()), 0);
  for (const auto& s : samples) {
    ++counts[static_cast<std::size_t>(assign(embed(params, s.tokens), centroids).index)];
  }
  const auto best = std::max_element(counts.begin(), counts.end());  // first maximum
  const double length = static_cast<double>(window_length > 0 ? window_length : samples.size());
  return {static_cast<int>(best - counts.begin()), static_cast<double>(*best) / length};
}

SubprocessExtractor::SubprocessExtractor(EncoderParams params, CentroidSet centroids,
                                         TokenVocab vocab)
    : params_(std::move(params)), centroids_(std::move(centroids)), vocab_(std::move(vocab)) {
  if (!centroids_.initialized()) throw StateError("centroids are not initialized");
  if (centroids_.dim() != params_.shape.d) {
    throw ContractError("centroid dimension does not match the encoder");
  }
}

SubprocessChoice SubprocessExtractor::extract(std::span<const EventId> window) const {
  if (window.empty()) throw DegenerateInputError("cannot extract a subprocess from an empty window");
  std::vector<int> events(window.begin(), window.end());
  for (auto& e : events) {
    if (!vocab_.is_event(e)) e = vocab_.unknown();
  }
  auto padded = pad_and_prepend(events, params_.shape.max_length, vocab_);
  auto it = cache_.find(padded);
  if (it == cache_.end()) {
    std::vector<int> counts(static_cast<std::size_t>(centroids_.k()), 0);
    for (const auto& s : generate_masked_set(padded, vocab_)) {
      ++counts[static_cast<std::size_t>(assign(embed(params_, s.tokens), centroids_).index)];
    }
    it = cache_.emplace(std::move(padded), std::move(counts)).first;
  }
  const auto& counts = it->second;
  const auto best = std::max_element(counts.begin(), counts.end());
  return {static_cast<int>(best - counts.begin()),
          static_cast<double>(*best) / static_cast<double>(window.size())};
}

SubprocessSequence SubprocessExtractor::sequence(const WindowedSequence& windowed) const {
  SubprocessSequence out{windowed.task_id, {}, windowed.label};
  out.subprocess_ids.reserve(windowed.windows.size());
  for (const auto& w : windowed.windows) out.subprocess_ids.push_back(extract(w).id);
  return out;
}

std::vector<AssignmentRow> assignment_rows(const SubprocessExtractor& extractor,
                                           const WindowedSequence& windowed) {
  std::vector<AssignmentRow> rows;
  for (std::size_t i = 0; i < windowed.windows.size(); ++i) {
    const auto choice = extractor.extract(windowed.windows[i]);
    rows.push_back({windowed.task_id, i, choice.id, choice.score});
  }
  return rows;
}

void write_assignments_csv(std::ostream& out, const std::vector<AssignmentRow>& rows) {
  csv::write_row(out, {"task_id", "window_index", "subprocess_id", "score"});
  for (const auto& r : rows) {
    csv::write_row(out, {r.task_id, std::to_string(r.window_index), std::to_string(r.subprocess_id),
                         csv::format_double(r.score)});
  }
}

}  // namespace logfid
