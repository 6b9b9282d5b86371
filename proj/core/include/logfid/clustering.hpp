#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "logfid/encoder.hpp"
#include "logfid/sequencer.hpp"

namespace logfid {

/// k subprocess centroids (rows of M) with per-epoch assignment counters.
struct CentroidSet {
  Matrix m;                      // k x d
  std::vector<double> counters;  // c_k, reset to 1 at every epoch start

  int k() const { return static_cast<int>(m.rows()); }
  int dim() const { return static_cast<int>(m.cols()); }
  bool initialized() const { return m.rows() > 0 && m.cols() > 0; }
  void reset_counters() { counters.assign(static_cast<std::size_t>(m.rows()), 1.0); }

  static CentroidSet from_matrix(Matrix m);
  bool identical(const CentroidSet& other) const;
};

struct Assignment {
  int index = 0;
  double squared_distance = 0.0;
};

/// Nearest centroid, ties toward the lowest index.
Assignment assign(const RowVector& embedding, const CentroidSet& centroids);

/// Mean squared distance of each embedding to its given centroid.
double kmeans_loss(std::span<const RowVector> embeddings, std::span<const int> assignments,
                   const CentroidSet& centroids);
/// Same, using the nearest centroid for every embedding.
double kmeans_loss(std::span<const RowVector> embeddings, const CentroidSet& centroids);

enum class CentroidRule {
  Toward,   // m += (1/c)(phi - m)
  Literal,  // m -= (1/c)(phi - m), the sign as printed
};

/// One counter-damped step of centroid `index` toward (or away from) the
/// embedding, then increments its counter.
void update_centroid(CentroidSet& centroids, int index, const RowVector& embedding,
                     CentroidRule rule = CentroidRule::Toward);

struct KMeansOptions {
  double tolerance = 1e-6;
  int max_iterations = 100;
};

/// Farthest-point seeding from a seeded first pick, then Lloyd iterations.
/// `loss_trace`, when given, receives the loss after seeding and after every
/// iteration.
CentroidSet initialize_centroids(std::span<const RowVector> embeddings, int k, std::uint64_t seed,
                                 KMeansOptions options = {},
                                 std::vector<double>* loss_trace = nullptr);

struct JointResult {
  EncoderParams params;
  CentroidSet centroids;
  std::vector<double> train_masked_loss;  // mean J_m seen during each epoch
  std::vector<double> eval_objective;     // J_m + lambda * J_k on the evaluation split
};

/// Phase 2: alternating updates of the network (centroids fixed) and the
/// centroids (network fixed) for config.phase2_max_epochs epochs.
JointResult joint_train(EncoderParams params, CentroidSet centroids,
                        const std::vector<MaskedSample>& corpus, const TokenVocab& vocab,
                        const TrainingConfig& config,
                        const std::vector<MaskedSample>* evaluation = nullptr,
                        CentroidRule rule = CentroidRule::Toward);

/// J_m + lambda * J_k in evaluation mode.
double joint_objective(const EncoderParams& params, const CentroidSet& centroids,
                       const std::vector<MaskedSample>& samples, const TokenVocab& vocab,
                       double lambda);

struct SubprocessChoice {
  int id = 0;
  double score = 0.0;
};

/// Majority vote over the window's masked samples, with counts divided by
/// the window's event count (defaults to the sample count).
SubprocessChoice extract_subprocess_id(std::span<const MaskedSample> samples,
                                       const EncoderParams& params, const CentroidSet& centroids,
                                       std::size_t window_length = 0);

/// Window-to-subprocess mapping over frozen parameters. Event ids outside the
/// vocabulary are encoded as the unknown token. Results are cached per
/// distinct window, so one instance must not be shared across threads.
class SubprocessExtractor {
 public:
  SubprocessExtractor(EncoderParams params, CentroidSet centroids, TokenVocab vocab);

  SubprocessChoice extract(std::span<const EventId> window) const;
  SubprocessSequence sequence(const WindowedSequence& windowed) const;

  const EncoderParams& params() const { return params_; }
  const CentroidSet& centroids() const { return centroids_; }
  const TokenVocab& vocab() const { return vocab_; }
  std::size_t cache_size() const { return cache_.size(); }

 private:
  EncoderParams params_;
  CentroidSet centroids_;
  TokenVocab vocab_;
  mutable std::map<std::vector<int>, std::vector<int>> cache_;  // tokens -> per-centroid counts
};

struct AssignmentRow {
  std::string task_id;
  std::size_t window_index = 0;
  int subprocess_id = 0;
  double score = 0.0;
};

std::vector<AssignmentRow> assignment_rows(const SubprocessExtractor& extractor,
                                           const WindowedSequence& windowed);
void write_assignments_csv(std::ostream& out, const std::vector<AssignmentRow>& rows);

}  // namespace logfid
