#include "logfid/detector.hpp"

#include <cmath>
#include <limits>
#include <ostream>
#include <random>

#include "logfid/csv.hpp"
#include "logfid/error.hpp"

namespace logfid {

void HmmModel::validate(double tolerance) const {
  const auto h = pi.size();
  if (h < 1) throw ContractError("HMM needs at least one state");
  if (a.rows() != h || a.cols() != h || b.rows() != h || b.cols() < 1) {
    throw ContractError("HMM parameter shapes are inconsistent");
  }
  auto check = [&](const Eigen::Ref<const Eigen::RowVectorXd>& row, const char* what) {
    if ((row.array() < 0.0).any() || !row.allFinite()) {
      throw ContractError(std::string("HMM ") + what + " has invalid entries");
    }
    if (std::abs(row.sum() - 1.0) > tolerance) {
      throw ContractError(std::string("HMM ") + what + " does not sum to 1");
    }
  };
  check(pi.transpose(), "initial distribution");
  for (Eigen::Index i = 0; i < h; ++i) {
    check(a.row(i), "transition row");
    check(b.row(i), "emission row");
  }
}

namespace {

void check_symbols(const HmmModel& model, std::span<const int> symbols) {
  if (symbols.empty()) throw DegenerateInputError("cannot score an empty subprocess sequence");
  for (int s : symbols) {
    if (s < 0 || s >= model.symbols()) {
      throw ContractError("subprocess symbol " + std::to_string(s) + " outside [0, " +
                          std::to_string(model.symbols()) + ")");
    }
  }
}

// Scaled forward pass. alpha rows are normalized; log P = sum log c_t.
// Returns false when some c_t is zero.
bool forward_scaled(const HmmModel& m, std::span<const int> obs, Eigen::MatrixXd& alpha,
                    Eigen::VectorXd& scale) {
  const auto n = static_cast<Eigen::Index>(obs.size());
  const auto h = m.pi.size();
  alpha.resize(n, h);
  scale.resize(n);
  for (Eigen::Index t = 0; t < n; ++t) {
    if (t == 0) {
      alpha.row(0) = m.pi.transpose().cwiseProduct(m.b.col(obs[0]).transpose());
    } else {
      alpha.row(t) = (alpha.row(t - 1) * m.a).cwiseProduct(m.b.col(obs[static_cast<std::size_t>(t)]).transpose());
    }
    scale(t) = alpha.row(t).sum();
    if (!(scale(t) > 0.0)) return false;
    alpha.row(t) /= scale(t);
  }
  return true;
}

}  // namespace

double log_likelihood(const HmmModel& model, std::span<const int> symbols) {
  check_symbols(model, symbols);
  Eigen::MatrixXd alpha;
  Eigen::VectorXd scale;
  if (!forward_scaled(model, symbols, alpha, scale)) {
    return -std::numeric_limits<double>::infinity();
  }
  return scale.array().log().sum();
}

double hmm_log_score(const HmmModel& model, std::span<const int> symbols) {
  const double ll = log_likelihood(model, symbols);
  if (!std::isfinite(ll)) return kMaxLogScore;
  return std::min(-ll, kMaxLogScore);
}

namespace {

Eigen::RowVectorXd random_row(Eigen::Index n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.5, 1.5);
  Eigen::RowVectorXd r(n);
  for (Eigen::Index i = 0; i < n; ++i) r(i) = u(rng);
  return r / r.sum();
}

double prior_term(const HmmModel& m, double smoothing) {
  return smoothing > 0.0 ? smoothing * m.b.array().log().sum() : 0.0;
}

}  // namespace

HmmModel fit_hmm(const std::vector<std::vector<int>>& train, int states, int symbols,
                 std::uint64_t seed, HmmFitOptions options, HmmFitTrace* trace) {
  if (train.empty()) throw ConfigError("HMM training set is empty");
  if (states < 1) throw ConfigError("HMM needs at least one hidden state");
  if (symbols < 1) throw ConfigError("HMM needs at least one symbol");
  if (options.max_iterations < 0 || !(options.smoothing >= 0.0)) {
    throw ConfigError("invalid HMM fitting options");
  }

  std::mt19937_64 rng(seed);
  HmmModel m;
  m.pi = random_row(states, rng).transpose();
  m.a.resize(states, states);
  m.b.resize(states, symbols);
  for (int i = 0; i < states; ++i) {
    m.a.row(i) = random_row(states, rng);
    m.b.row(i) = random_row(symbols, rng);
  }
  for (const auto& seq : train) check_symbols(m, seq);

  Eigen::MatrixXd alpha, beta;
  Eigen::VectorXd scale;
  double previous = -std::numeric_limits<double>::infinity();

  for (int iter = 0; iter <= options.max_iterations; ++iter) {
    Eigen::VectorXd pi_acc = Eigen::VectorXd::Zero(states);
    Eigen::MatrixXd a_num = Eigen::MatrixXd::Zero(states, states);
    Eigen::VectorXd a_den = Eigen::VectorXd::Zero(states);
    Eigen::MatrixXd b_num = Eigen::MatrixXd::Zero(states, symbols);
    double total_ll = 0.0;

    for (const auto& obs : train) {
      if (!forward_scaled(m, obs, alpha, scale)) {
        throw NumericError("HMM assigns zero probability to a training sequence");
      }
      total_ll += scale.array().log().sum();
      const auto n = static_cast<Eigen::Index>(obs.size());
      beta.resize(n, states);
      beta.row(n - 1).setOnes();
      for (Eigen::Index t = n - 2; t >= 0; --t) {
        const Eigen::RowVectorXd weighted =
            beta.row(t + 1).cwiseProduct(m.b.col(obs[static_cast<std::size_t>(t + 1)]).transpose());
        beta.row(t) = (m.a * weighted.transpose()).transpose() / scale(t + 1);
      }
      for (Eigen::Index t = 0; t < n; ++t) {
        const Eigen::RowVectorXd gamma = alpha.row(t).cwiseProduct(beta.row(t));
        if (t == 0) pi_acc += gamma.transpose();
        b_num.col(obs[static_cast<std::size_t>(t)]) += gamma.transpose();
        if (t + 1 < n) {
          a_den += gamma.transpose();
          const Eigen::RowVectorXd next =
              beta.row(t + 1).cwiseProduct(m.b.col(obs[static_cast<std::size_t>(t + 1)]).transpose()) /
              scale(t + 1);
          a_num += (alpha.row(t).transpose() * next).cwiseProduct(m.a);
        }
      }
    }

    const double objective = total_ll + prior_term(m, options.smoothing);
    if (trace) {
      trace->log_likelihood.push_back(total_ll);
      trace->objective.push_back(objective);
      trace->iterations = iter;
    }
    if (iter == options.max_iterations || objective - previous < options.tolerance) break;
    previous = objective;

    m.pi = pi_acc / pi_acc.sum();
    for (int i = 0; i < states; ++i) {
      // a state never left keeps its previous transition row
      if (a_den(i) > 0.0) m.a.row(i) = a_num.row(i) / a_num.row(i).sum();
      const Eigen::RowVectorXd counts = b_num.row(i).array() + options.smoothing;
      if (counts.sum() > 0.0) m.b.row(i) = counts / counts.sum();
    }
    if (!m.pi.allFinite() || !m.a.allFinite() || !m.b.allFinite()) {
      throw NumericError("Baum-Welch produced non-finite parameters");
    }
  }
  return m;
}

HmmModel fit_hmm(const std::vector<SubprocessSequence>& train, int states, int symbols,
                 std::uint64_t seed, HmmFitOptions options, HmmFitTrace* trace) {
  std::vector<std::vector<int>> raw;
  raw.reserve(train.size());
  for (const auto& s : train) raw.push_back(s.subprocess_ids);
  return fit_hmm(raw, states, symbols, seed, options, trace);
}

Thresholds thresholds_from_scores(double mean_t, std::span<const double> scores) {
  if (scores.size() < 2) throw ConfigError("calibration needs at least 2 validation sequences");
  Thresholds th;
  th.mean_t = mean_t;
  double sum = 0.0;
  for (double s : scores) sum += s;
  th.mu = sum / static_cast<double>(scores.size());
  double ss = 0.0;
  for (double s : scores) ss += (s - th.mu) * (s - th.mu);
  th.sigma = std::max(std::sqrt(ss / static_cast<double>(scores.size())), kSigmaFloor);
  th.a1 = th.mu - 3.0 * th.sigma;
  th.a2 = th.mu + 3.0 * th.sigma;
  return th;
}

Thresholds calibrate(const HmmModel& model, const std::vector<SubprocessSequence>& validation) {
  if (validation.size() < 2) throw ConfigError("calibration needs at least 2 validation sequences");
  std::vector<double> t;
  t.reserve(validation.size());
  double sum = 0.0;
  for (const auto& s : validation) {
    t.push_back(hmm_log_score(model, s.subprocess_ids));
    sum += t.back();
  }
  const double mean_t = sum / static_cast<double>(t.size());
  std::vector<double> scores;
  scores.reserve(t.size());
  for (double x : t) scores.push_back(normality_score(mean_t, x));
  return thresholds_from_scores(mean_t, scores);
}

DetectionResult detect(const HmmModel& model, const Thresholds& thresholds,
                       const SubprocessSequence& seq) {
  DetectionResult r;
  r.task_id = seq.task_id;
  r.log_score = hmm_log_score(model, seq.subprocess_ids);
  r.score = normality_score(thresholds.mean_t, r.log_score);
  r.failure = thresholds.outside(r.score);
  return r;
}

void write_detections_csv(std::ostream& out, const std::vector<DetectionResult>& rows) {
  csv::write_row(out, {"task_id", "log_score", "score", "verdict"});
  for (const auto& r : rows) {
    csv::write_row(out, {r.task_id, csv::format_double(r.log_score), csv::format_double(r.score),
                         r.failure ? "failure" : "normal"});
  }
}

}  // namespace logfid
