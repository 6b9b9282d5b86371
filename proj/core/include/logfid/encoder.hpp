#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "logfid/error.hpp"
#include "logfid/parser.hpp"

namespace logfid {

using Matrix = Eigen::MatrixXd;
using RowVector = Eigen::RowVectorXd;

/// Event tokens occupy [0, num_events); four reserved tokens follow.
struct TokenVocab {
  int num_events = 0;
  std::vector<double> weights;  // size(), reserved entries are 0

  int lse() const { return num_events; }
  int pad() const { return num_events + 1; }
  int mask() const { return num_events + 2; }
  int unknown() const { return num_events + 3; }
  int size() const { return num_events + 4; }
  bool is_event(int token) const { return token >= 0 && token < num_events; }

  bool operator==(const TokenVocab&) const = default;
};

inline constexpr double kMinTokenWeight = 1e-3;

/// w_c = 1 - count_c / total, floored at kMinTokenWeight.
TokenVocab compute_token_weights(std::span<const long> event_counts);

struct SampleOrigin {
  std::size_t sequence = 0;
  std::size_t window = 0;
  bool operator==(const SampleOrigin&) const = default;
};

struct MaskedSample {
  SampleOrigin origin;
  std::vector<int> tokens;  // max_length + 1, tokens[0] == [LSE]
  int masked_position = 0;
  int target = 0;
};

/// [LSE] followed by the first max_length events, right-padded with [PD].
std::vector<int> pad_and_prepend(std::span<const int> window, int max_length,
                                 const TokenVocab& vocab);

/// One sample per event position; [LSE] and [PD] are never masked.
std::vector<MaskedSample> generate_masked_set(std::span<const int> padded,
                                              const TokenVocab& vocab,
                                              SampleOrigin origin = {});

struct TrainingConfig {
  int d = 128;
  int n_layers = 2;
  int n_heads = 4;
  int ff_dim = 0;  // 0 selects 4 * d
  double dropout = 0.01;
  double learning_rate = 1e-4;
  int max_length = 32;
  double lambda = 0.1;
  int phase1_max_epochs = 200;
  int phase1_patience = 5;
  int phase2_max_epochs = 20;
  int batch_size = 256;
  std::uint64_t seed = 42;

  int resolved_ff_dim() const { return ff_dim > 0 ? ff_dim : 4 * d; }
  void validate() const;
  bool operator==(const TrainingConfig&) const = default;
};

struct EncoderShape {
  int vocab_size = 0;
  int d = 0;
  int n_layers = 0;
  int n_heads = 0;
  int ff_dim = 0;
  int max_length = 0;

  int positions() const { return max_length + 1; }
  bool operator==(const EncoderShape&) const = default;
};

struct LayerParams {
  Matrix wq, wk, wv, wo;  // d x d
  Matrix bq, bk, bv, bo;  // 1 x d
  Matrix ln1_gain, ln1_bias;
  Matrix ff_w1, ff_b1;  // d x ff, 1 x ff
  Matrix ff_w2, ff_b2;  // ff x d, 1 x d
  Matrix ln2_gain, ln2_bias;

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    f(prefix + "wq", wq); f(prefix + "wk", wk); f(prefix + "wv", wv); f(prefix + "wo", wo);
    f(prefix + "bq", bq); f(prefix + "bk", bk); f(prefix + "bv", bv); f(prefix + "bo", bo);
    f(prefix + "ln1_gain", ln1_gain); f(prefix + "ln1_bias", ln1_bias);
    f(prefix + "ff_w1", ff_w1); f(prefix + "ff_b1", ff_b1);
    f(prefix + "ff_w2", ff_w2); f(prefix + "ff_b2", ff_b2);
    f(prefix + "ln2_gain", ln2_gain); f(prefix + "ln2_bias", ln2_bias);
  }
};

/// Self-attention encoder (post-norm) plus a two-layer ReLU output head that
/// maps the [LSE] representation to token logits.
struct EncoderParams {
  EncoderShape shape;
  Matrix token_embedding;     // vocab x d
  Matrix position_embedding;  // positions x d
  std::vector<LayerParams> layers;
  Matrix head_w1, head_b1;  // d x d, 1 x d
  Matrix head_w2, head_b2;  // d x vocab, 1 x vocab

  static EncoderParams zeros(const EncoderShape& shape);
  static EncoderParams random(const EncoderShape& shape, std::uint64_t seed);

  template <class F>
  void visit(F&& f) {
    f(std::string("token_embedding"), token_embedding);
    f(std::string("position_embedding"), position_embedding);
    for (std::size_t l = 0; l < layers.size(); ++l) {
      layers[l].visit("layer" + std::to_string(l) + ".", f);
    }
    f(std::string("head_w1"), head_w1);
    f(std::string("head_b1"), head_b1);
    f(std::string("head_w2"), head_w2);
    f(std::string("head_b2"), head_b2);
  }
  template <class F>
  void visit(F&& f) const {
    const_cast<EncoderParams*>(this)->visit(
        [&](const std::string& name, Matrix& m) { f(name, static_cast<const Matrix&>(m)); });
  }

  std::size_t parameter_count() const;
  bool all_finite() const;
  /// Exact (bitwise) equality of shapes and every parameter value.
  bool identical(const EncoderParams& other) const;
};

EncoderShape make_shape(const TrainingConfig& config, const TokenVocab& vocab);

/// Inverted dropout; a null Dropout* everywhere means evaluation mode.
class Dropout {
 public:
  Dropout(double rate, std::mt19937_64& rng) : rate_(rate), rng_(&rng) {}
  /// Scaled keep-mask of the given shape (all ones when rate == 0).
  Matrix mask(Eigen::Index rows, Eigen::Index cols);
  double rate() const { return rate_; }

 private:
  double rate_;
  std::mt19937_64* rng_;
};

struct ForwardResult {
  RowVector lse_embedding;  // 1 x d
  RowVector logits;         // 1 x vocab
};

/// Throws NumericError on non-finite outputs. Deterministic when dropout is
/// null.
ForwardResult forward(const EncoderParams& params, std::span<const int> tokens,
                      Dropout* dropout = nullptr);

/// [LSE] embedding only, evaluation mode.
RowVector embed(const EncoderParams& params, std::span<const int> tokens);

RowVector softmax(const RowVector& logits);

/// (1/C) * w_target * (-log softmax(logits)_target) with C = logits.size().
double weighted_cross_entropy(const RowVector& logits, int target, std::span<const double> weights);
/// As above; additionally rejects reserved tokens as targets.
double weighted_cross_entropy(const RowVector& logits, int target, const TokenVocab& vocab);

/// Optional pull of the [LSE] embedding toward a centroid, adding
/// lambda * ||e - centroid||^2 to the sample objective. `assign` picks the
/// centroid from the sample's own embedding and may return null.
struct EmbeddingPull {
  std::function<const RowVector*(const RowVector&)> assign;
  double lambda = 0.0;

  static EmbeddingPull toward(const RowVector& centroid, double lambda) {
    return {[&centroid](const RowVector&) { return &centroid; }, lambda};
  }
};

struct SampleLoss {
  double masked = 0.0;   // J_m
  double cluster = 0.0;  // squared distance, unweighted by lambda
  RowVector lse_embedding;
};

/// Runs forward and backward for one sample, adding scale * dJ/dparams into
/// grad (which must have params' shape).
SampleLoss accumulate_gradient(const EncoderParams& params, const MaskedSample& sample,
                               const TokenVocab& vocab, EncoderParams& grad, double scale,
                               Dropout* dropout = nullptr, EmbeddingPull pull = {});

/// params <- params - learning_rate * gradient. Throws NumericError (leaving
/// params untouched) when the gradient is not finite.
void sgd_step(EncoderParams& params, const EncoderParams& gradient, double learning_rate);

/// Stops once the best loss has not improved for `patience` consecutive epochs.
class EarlyStopping {
 public:
  explicit EarlyStopping(int patience);
  /// Records one epoch loss; returns true when training should stop.
  bool update(double loss);
  int best_epoch() const { return best_epoch_; }  // 1-based, 0 before any update
  double best_loss() const { return best_loss_; }
  int epochs_seen() const { return epochs_; }

 private:
  int patience_;
  int epochs_ = 0;
  int best_epoch_ = 0;
  int stale_ = 0;
  double best_loss_ = 0.0;
};

/// Raised when training produces non-finite values; carries the last
/// parameters known to be finite.
class TrainingAborted : public NumericError {
 public:
  TrainingAborted(const std::string& what, std::shared_ptr<const EncoderParams> checkpoint,
                  int epoch)
      : NumericError(what), checkpoint_(std::move(checkpoint)), epoch_(epoch) {}
  const EncoderParams& checkpoint() const { return *checkpoint_; }
  int epoch() const { return epoch_; }

 private:
  std::shared_ptr<const EncoderParams> checkpoint_;
  int epoch_;
};

/// Hooks into run_epoch. `assign` returns the centroid a sample is pulled
/// toward (null for none); `after_step` runs once per mini-batch after the
/// network update and sees the embeddings the batch was trained on.
class BatchObserver {
 public:
  virtual ~BatchObserver() = default;
  virtual const RowVector* assign(const RowVector& embedding) = 0;
  virtual void after_step(std::span<const RowVector> embeddings) = 0;
};

/// One shuffled pass over the samples with SGD on J_m (+ lambda * J_k when
/// an observer is given and lambda > 0). Returns the mean sample J_m.
double run_epoch(EncoderParams& params, const std::vector<MaskedSample>& samples,
                 const TokenVocab& vocab, const TrainingConfig& config, std::mt19937_64& rng,
                 BatchObserver* observer = nullptr, double lambda = 0.0);

/// Mean J_m in evaluation mode.
double evaluate_loss(const EncoderParams& params, const std::vector<MaskedSample>& samples,
                     const TokenVocab& vocab);

struct PretrainResult {
  EncoderParams params;  // best-loss parameters
  std::vector<double> epoch_losses;
  int best_epoch = 0;
};

/// Stream seeds used by the two training phases, derived from the config
/// seed so each phase is reproducible on its own.
std::uint64_t init_seed(std::uint64_t seed);
std::uint64_t pretrain_stream_seed(std::uint64_t seed);
std::uint64_t joint_stream_seed(std::uint64_t seed);

/// Phase 1: masked-event prediction only, early-stopped on epoch loss.
PretrainResult pretrain(const std::vector<MaskedSample>& corpus, const TokenVocab& vocab,
                        const TrainingConfig& config);
PretrainResult pretrain(const std::vector<MaskedSample>& corpus, const TokenVocab& vocab,
                        const TrainingConfig& config, EncoderParams initial);

}  // namespace logfid
