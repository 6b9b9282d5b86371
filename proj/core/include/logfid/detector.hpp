#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "logfid/error.hpp"
#include "logfid/sequencer.hpp"

namespace logfid {

/// Discrete-emission HMM over subprocess symbols 0..k-1.
struct HmmModel {
  Eigen::VectorXd pi;  // H
  Eigen::MatrixXd a;   // H x H, row-stochastic
  Eigen::MatrixXd b;   // H x k, row-stochastic

  int states() const { return static_cast<int>(pi.size()); }
  int symbols() const { return static_cast<int>(b.cols()); }
  /// Throws ContractError on shape mismatch, negative entries or rows that
  /// do not sum to 1 within tolerance.
  void validate(double tolerance = 1e-9) const;
};

/// Returned by hmm_log_score when the sequence has probability zero.
inline constexpr double kMaxLogScore = 1e6;

/// log P(symbols | model) by the scaled forward algorithm; -inf when the
/// probability is zero.
double log_likelihood(const HmmModel& model, std::span<const int> symbols);

/// t(s) = -log P(s | model), capped at kMaxLogScore.
double hmm_log_score(const HmmModel& model, std::span<const int> symbols);

struct HmmFitOptions {
  int max_iterations = 200;
  double tolerance = 1e-6;  // stop when the objective improves by less
  double smoothing = 1e-6;  // additive emission count
};

struct HmmFitTrace {
  std::vector<double> log_likelihood;  // total over the training set, per iteration
  std::vector<double> objective;       // log likelihood + smoothing prior term
  int iterations = 0;
};

/// Baum-Welch from a seeded random stochastic start. The trace starts with the
/// initial model and holds one entry per EM update.
HmmModel fit_hmm(const std::vector<std::vector<int>>& train, int states, int symbols,
                 std::uint64_t seed, HmmFitOptions options = {}, HmmFitTrace* trace = nullptr);
HmmModel fit_hmm(const std::vector<SubprocessSequence>& train, int states, int symbols,
                 std::uint64_t seed, HmmFitOptions options = {}, HmmFitTrace* trace = nullptr);

/// ((mean_t - t)^2).
inline double normality_score(double mean_t, double t) {
  const double diff = mean_t - t;
  return diff * diff;
}

inline constexpr double kSigmaFloor = 1e-9;

struct Thresholds {
  double mean_t = 0.0;
  double mu = 0.0;
  double sigma = kSigmaFloor;
  double a1 = 0.0;
  double a2 = 0.0;

  bool outside(double score) const { return score < a1 || score > a2; }
};

/// mu +- 3 sigma of the given scores (population sigma, floored).
Thresholds thresholds_from_scores(double mean_t, std::span<const double> scores);

/// mean_t from the validation log scores, then thresholds over their
/// normality scores.
Thresholds calibrate(const HmmModel& model, const std::vector<SubprocessSequence>& validation);

struct DetectionResult {
  std::string task_id;
  double log_score = 0.0;  // t(s)
  double score = 0.0;      // normality score
  bool failure = false;
};

DetectionResult detect(const HmmModel& model, const Thresholds& thresholds,
                       const SubprocessSequence& seq);

void write_detections_csv(std::ostream& out, const std::vector<DetectionResult>& rows);

}  // namespace logfid
