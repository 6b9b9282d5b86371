#include "logfid/encoder.hpp"

#include "logfid/seed.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

namespace logfid {

namespace {

constexpr double kLayerNormEps = 1e-5;

struct LayerNormCache {
  Matrix xhat;
  Eigen::VectorXd inv_std;
};

Matrix layer_norm(const Matrix& r, const Matrix& gain, const Matrix& bias, LayerNormCache& cache) {
  const auto n = static_cast<double>(r.cols());
  Eigen::VectorXd mean = r.rowwise().sum() / n;
  Matrix centered = r.colwise() - mean;
  Eigen::VectorXd var = centered.array().square().rowwise().sum() / n;
  cache.inv_std = (var.array() + kLayerNormEps).rsqrt();
  cache.xhat = centered.array().colwise() * cache.inv_std.array();
  Matrix y = cache.xhat.array().rowwise() * gain.row(0).array();
  y.rowwise() += bias.row(0);
  return y;
}

Matrix layer_norm_backward(const Matrix& dy, const LayerNormCache& cache, const Matrix& gain,
                           Matrix& dgain, Matrix& dbias) {
  dgain.row(0) += (dy.array() * cache.xhat.array()).colwise().sum().matrix();
  dbias.row(0) += dy.colwise().sum();
  const auto n = static_cast<double>(dy.cols());
  Matrix dxhat = dy.array().rowwise() * gain.row(0).array();
  Eigen::VectorXd mean_dxhat = dxhat.rowwise().sum() / n;
  Eigen::VectorXd mean_dxhat_xhat = (dxhat.array() * cache.xhat.array()).rowwise().sum() / n;
  Matrix dr = dxhat;
  dr.colwise() -= mean_dxhat;
  dr -= (cache.xhat.array().colwise() * mean_dxhat_xhat.array()).matrix();
  dr = dr.array().colwise() * cache.inv_std.array();
  return dr;
}

void row_softmax_inplace(Matrix& s) {
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    const double m = s.row(i).maxCoeff();
    s.row(i) = (s.row(i).array() - m).exp();
    s.row(i) /= s.row(i).sum();
  }
}

struct LayerCache {
  Eigen::Index query_rows = 0;
  Matrix x;  // positions x d input
  Matrix q, k, v;
  std::vector<Matrix> probs;  // per head, query_rows x positions
  Matrix o;
  Matrix mask1;
  LayerNormCache ln1;
  Matrix y1;
  Matrix h_pre, h;
  Matrix mask2;
  LayerNormCache ln2;
};

// Layer over all positions as keys/values; only the first `query_rows`
// positions produce outputs.
Matrix layer_forward(const LayerParams& p, const Matrix& x, Eigen::Index query_rows, int n_heads,
                     Dropout* dropout, LayerCache& c) {
  const Eigen::Index d = x.cols();
  const Eigen::Index dh = d / n_heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  c.query_rows = query_rows;
  c.x = x;
  const auto xq = x.topRows(query_rows);
  c.q = xq * p.wq;
  c.q.rowwise() += p.bq.row(0);
  c.k = x * p.wk;
  c.k.rowwise() += p.bk.row(0);
  c.v = x * p.wv;
  c.v.rowwise() += p.bv.row(0);

  c.o.resize(query_rows, d);
  c.probs.resize(static_cast<std::size_t>(n_heads));
  for (int h = 0; h < n_heads; ++h) {
    Matrix s = c.q.middleCols(h * dh, dh) * c.k.middleCols(h * dh, dh).transpose() * scale;
    row_softmax_inplace(s);
    c.o.middleCols(h * dh, dh) = s * c.v.middleCols(h * dh, dh);
    c.probs[static_cast<std::size_t>(h)] = std::move(s);
  }
  Matrix a = c.o * p.wo;
  a.rowwise() += p.bo.row(0);
  if (dropout) {
    c.mask1 = dropout->mask(query_rows, d);
    a = a.cwiseProduct(c.mask1);
  }
  c.y1 = layer_norm(xq + a, p.ln1_gain, p.ln1_bias, c.ln1);

  c.h_pre = c.y1 * p.ff_w1;
  c.h_pre.rowwise() += p.ff_b1.row(0);
  c.h = c.h_pre.cwiseMax(0.0);
  Matrix f = c.h * p.ff_w2;
  f.rowwise() += p.ff_b2.row(0);
  if (dropout) {
    c.mask2 = dropout->mask(query_rows, d);
    f = f.cwiseProduct(c.mask2);
  }
  return layer_norm(c.y1 + f, p.ln2_gain, p.ln2_bias, c.ln2);
}

Matrix layer_backward(const LayerParams& p, const LayerCache& c, const Matrix& dy2, int n_heads,
                      bool dropout_active, LayerParams& g) {
  const Eigen::Index d = c.x.cols();
  const Eigen::Index dh = d / n_heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const Eigen::Index qr = c.query_rows;

  Matrix dr2 = layer_norm_backward(dy2, c.ln2, p.ln2_gain, g.ln2_gain, g.ln2_bias);
  Matrix dy1 = dr2;
  Matrix df = dropout_active ? Matrix(dr2.cwiseProduct(c.mask2)) : dr2;
  g.ff_w2.noalias() += c.h.transpose() * df;
  g.ff_b2.row(0) += df.colwise().sum();
  Matrix dh_act = df * p.ff_w2.transpose();
  Matrix dh_pre = (c.h_pre.array() > 0.0).select(dh_act, 0.0);
  g.ff_w1.noalias() += c.y1.transpose() * dh_pre;
  g.ff_b1.row(0) += dh_pre.colwise().sum();
  dy1.noalias() += dh_pre * p.ff_w1.transpose();

  Matrix dr1 = layer_norm_backward(dy1, c.ln1, p.ln1_gain, g.ln1_gain, g.ln1_bias);
  Matrix da = dropout_active ? Matrix(dr1.cwiseProduct(c.mask1)) : dr1;
  g.wo.noalias() += c.o.transpose() * da;
  g.bo.row(0) += da.colwise().sum();
  Matrix d_o = da * p.wo.transpose();

  Matrix dq(qr, d);
  Matrix dk(c.x.rows(), d);
  Matrix dv(c.x.rows(), d);
  for (int h = 0; h < n_heads; ++h) {
    const Matrix& prob = c.probs[static_cast<std::size_t>(h)];
    const auto d_oh = d_o.middleCols(h * dh, dh);
    Matrix dprob = d_oh * c.v.middleCols(h * dh, dh).transpose();
    dv.middleCols(h * dh, dh) = prob.transpose() * d_oh;
    Eigen::VectorXd row_dot = (dprob.array() * prob.array()).rowwise().sum();
    Matrix ds = prob.array() * (dprob.colwise() - row_dot).array();
    dq.middleCols(h * dh, dh) = ds * c.k.middleCols(h * dh, dh) * scale;
    dk.middleCols(h * dh, dh) = ds.transpose() * c.q.middleCols(h * dh, dh) * scale;
  }
  const auto xq = c.x.topRows(qr);
  g.wq.noalias() += xq.transpose() * dq;
  g.bq.row(0) += dq.colwise().sum();
  g.wk.noalias() += c.x.transpose() * dk;
  g.bk.row(0) += dk.colwise().sum();
  g.wv.noalias() += c.x.transpose() * dv;
  g.bv.row(0) += dv.colwise().sum();

  Matrix dx = dk * p.wk.transpose();
  dx.noalias() += dv * p.wv.transpose();
  dx.topRows(qr) += dq * p.wq.transpose();
  dx.topRows(qr) += dr1;
  return dx;
}

struct ForwardCache {
  std::vector<LayerCache> layers;
  RowVector embedding;
  RowVector head_pre;
  RowVector head_act;
  RowVector logits;
};

void check_tokens(const EncoderParams& params, std::span<const int> tokens) {
  if (static_cast<int>(tokens.size()) != params.shape.positions()) {
    throw ContractError("token list length does not match max_length + 1");
  }
  for (int t : tokens) {
    if (t < 0 || t >= params.shape.vocab_size) throw ContractError("token outside vocabulary");
  }
}

void run_forward(const EncoderParams& params, std::span<const int> tokens, Dropout* dropout,
                 ForwardCache& cache) {
  check_tokens(params, tokens);
  const auto positions = static_cast<Eigen::Index>(tokens.size());
  Matrix x(positions, params.shape.d);
  for (Eigen::Index i = 0; i < positions; ++i) {
    x.row(i) = params.token_embedding.row(tokens[static_cast<std::size_t>(i)]) +
               params.position_embedding.row(i);
  }
  const auto n_layers = params.layers.size();
  cache.layers.resize(n_layers);
  for (std::size_t l = 0; l < n_layers; ++l) {
    // Only the [LSE] row of the final layer feeds the loss.
    const Eigen::Index rows = (l + 1 == n_layers) ? 1 : positions;
    x = layer_forward(params.layers[l], x, rows, params.shape.n_heads, dropout, cache.layers[l]);
  }
  cache.embedding = x.row(0);
  cache.head_pre = cache.embedding * params.head_w1 + params.head_b1.row(0);
  cache.head_act = cache.head_pre.cwiseMax(0.0);
  cache.logits = cache.head_act * params.head_w2 + params.head_b2.row(0);
  if (!cache.logits.allFinite() || !cache.embedding.allFinite()) {
    throw NumericError("encoder forward produced non-finite values");
  }
}

Matrix xavier(int rows, int cols, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> u(-limit, limit);
  Matrix m(rows, cols);
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = u(rng);
  return m;
}

Matrix gaussian(int rows, int cols, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, stddev);
  Matrix m(rows, cols);
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = n(rng);
  return m;
}

}  // namespace

TokenVocab compute_token_weights(std::span<const long> event_counts) {
  if (event_counts.empty()) throw ConfigError("token weights need at least one event");
  long total = 0;
  for (long c : event_counts) {
    if (c < 0) throw ConfigError("event counts must be non-negative");
    total += c;
  }
  if (total == 0) throw ConfigError("event counts are all zero");
  TokenVocab vocab;
  vocab.num_events = static_cast<int>(event_counts.size());
  vocab.weights.assign(static_cast<std::size_t>(vocab.size()), 0.0);
  for (std::size_t i = 0; i < event_counts.size(); ++i) {
    const double w = 1.0 - static_cast<double>(event_counts[i]) / static_cast<double>(total);
    vocab.weights[i] = std::max(w, kMinTokenWeight);
  }
  return vocab;
}

std::vector<int> pad_and_prepend(std::span<const int> window, int max_length,
                                 const TokenVocab& vocab) {
  if (window.empty()) throw DegenerateInputError("cannot pad an empty window");
  if (max_length < 1) throw ConfigError("max_length must be positive");
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(max_length) + 1);
  out.push_back(vocab.lse());
  const auto kept = std::min<std::size_t>(window.size(), static_cast<std::size_t>(max_length));
  out.insert(out.end(), window.begin(), window.begin() + static_cast<std::ptrdiff_t>(kept));
  out.resize(static_cast<std::size_t>(max_length) + 1, vocab.pad());
  return out;
}

std::vector<MaskedSample> generate_masked_set(std::span<const int> padded, const TokenVocab& vocab,
                                              SampleOrigin origin) {
  if (padded.empty() || padded[0] != vocab.lse()) {
    throw ContractError("padded sequence must begin with [LSE]");
  }
  std::vector<MaskedSample> out;
  for (std::size_t i = 1; i < padded.size(); ++i) {
    const int token = padded[i];
    if (token == vocab.pad() || token == vocab.lse() || token == vocab.mask()) continue;
    MaskedSample s;
    s.origin = origin;
    s.tokens.assign(padded.begin(), padded.end());
    s.tokens[i] = vocab.mask();
    s.masked_position = static_cast<int>(i);
    s.target = token;
    out.push_back(std::move(s));
  }
  return out;
}

void TrainingConfig::validate() const {
  if (d < 1 || n_heads < 1 || d % n_heads != 0) {
    throw ConfigError("model size must be a positive multiple of the head count");
  }
  if (n_layers < 1) throw ConfigError("encoder needs at least one layer");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (max_length < 1) throw ConfigError("max_length must be positive");
  if (!(lambda >= 0.0)) throw ConfigError("lambda must be non-negative");
  if (phase1_patience < 1) throw ConfigError("patience must be at least 1");
  if (phase1_max_epochs < 1 || phase2_max_epochs < 0) throw ConfigError("invalid epoch budget");
  if (batch_size < 1) throw ConfigError("batch size must be positive");
}

EncoderShape make_shape(const TrainingConfig& config, const TokenVocab& vocab) {
  return {vocab.size(), config.d, config.n_layers, config.n_heads, config.resolved_ff_dim(),
          config.max_length};
}

EncoderParams EncoderParams::zeros(const EncoderShape& s) {
  EncoderParams p;
  p.shape = s;
  p.token_embedding = Matrix::Zero(s.vocab_size, s.d);
  p.position_embedding = Matrix::Zero(s.positions(), s.d);
  p.layers.resize(static_cast<std::size_t>(s.n_layers));
  for (auto& l : p.layers) {
    l.wq = l.wk = l.wv = l.wo = Matrix::Zero(s.d, s.d);
    l.bq = l.bk = l.bv = l.bo = Matrix::Zero(1, s.d);
    l.ln1_gain = l.ln1_bias = l.ln2_gain = l.ln2_bias = Matrix::Zero(1, s.d);
    l.ff_w1 = Matrix::Zero(s.d, s.ff_dim);
    l.ff_b1 = Matrix::Zero(1, s.ff_dim);
    l.ff_w2 = Matrix::Zero(s.ff_dim, s.d);
    l.ff_b2 = Matrix::Zero(1, s.d);
  }
  p.head_w1 = Matrix::Zero(s.d, s.d);
  p.head_b1 = Matrix::Zero(1, s.d);
  p.head_w2 = Matrix::Zero(s.d, s.vocab_size);
  p.head_b2 = Matrix::Zero(1, s.vocab_size);
  return p;
}

EncoderParams EncoderParams::random(const EncoderShape& s, std::uint64_t seed) {
  if (s.d < 1 || s.n_heads < 1 || s.d % s.n_heads != 0 || s.vocab_size < 1 || s.n_layers < 1) {
    throw ConfigError("invalid encoder shape");
  }
  std::mt19937_64 rng(seed);
  EncoderParams p = zeros(s);
  p.token_embedding = gaussian(s.vocab_size, s.d, 1.0, rng);
  p.position_embedding = gaussian(s.positions(), s.d, 0.1, rng);
  for (auto& l : p.layers) {
    l.wq = xavier(s.d, s.d, rng);
    l.wk = xavier(s.d, s.d, rng);
    l.wv = xavier(s.d, s.d, rng);
    l.wo = xavier(s.d, s.d, rng);
    l.ln1_gain.setOnes();
    l.ln2_gain.setOnes();
    l.ff_w1 = xavier(s.d, s.ff_dim, rng);
    l.ff_w2 = xavier(s.ff_dim, s.d, rng);
  }
  p.head_w1 = xavier(s.d, s.d, rng);
  p.head_w2 = xavier(s.d, s.vocab_size, rng);
  return p;
}

std::size_t EncoderParams::parameter_count() const {
  std::size_t n = 0;
  visit([&](const std::string&, const Matrix& m) { n += static_cast<std::size_t>(m.size()); });
  return n;
}

bool EncoderParams::all_finite() const {
  bool ok = true;
  visit([&](const std::string&, const Matrix& m) { ok = ok && m.allFinite(); });
  return ok;
}

bool EncoderParams::identical(const EncoderParams& other) const {
  if (!(shape == other.shape) || layers.size() != other.layers.size()) return false;
  std::vector<const Matrix*> mine;
  std::vector<const Matrix*> theirs;
  visit([&](const std::string&, const Matrix& m) { mine.push_back(&m); });
  other.visit([&](const std::string&, const Matrix& m) { theirs.push_back(&m); });
  for (std::size_t i = 0; i < mine.size(); ++i) {
    const Matrix& a = *mine[i];
    const Matrix& b = *theirs[i];
    if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
    if (std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) != 0) {
      return false;
    }
  }
  return true;
}

Matrix Dropout::mask(Eigen::Index rows, Eigen::Index cols) {
  Matrix m = Matrix::Ones(rows, cols);
  if (rate_ <= 0.0) return m;
  const double keep_scale = 1.0 / (1.0 - rate_);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = u(*rng_) < rate_ ? 0.0 : keep_scale;
  }
  return m;
}

ForwardResult forward(const EncoderParams& params, std::span<const int> tokens, Dropout* dropout) {
  ForwardCache cache;
  run_forward(params, tokens, dropout, cache);
  return {cache.embedding, cache.logits};
}

RowVector embed(const EncoderParams& params, std::span<const int> tokens) {
  ForwardCache cache;
  run_forward(params, tokens, nullptr, cache);
  return cache.embedding;
}

RowVector softmax(const RowVector& logits) {
  const double m = logits.maxCoeff();
  RowVector e = (logits.array() - m).exp();
  return e / e.sum();
}

double weighted_cross_entropy(const RowVector& logits, int target, std::span<const double> weights) {
  if (static_cast<std::size_t>(logits.size()) != weights.size()) {
    throw ContractError("logits and weights differ in length");
  }
  if (target < 0 || target >= logits.size()) throw ContractError("loss target out of range");
  const double m = logits.maxCoeff();
  const double log_sum = m + std::log((logits.array() - m).exp().sum());
  const double nll = log_sum - logits(target);
  return weights[static_cast<std::size_t>(target)] * nll / static_cast<double>(logits.size());
}

double weighted_cross_entropy(const RowVector& logits, int target, const TokenVocab& vocab) {
  if (!vocab.is_event(target)) throw ContractError("loss target must be an event token");
  return weighted_cross_entropy(logits, target, std::span<const double>(vocab.weights));
}

SampleLoss accumulate_gradient(const EncoderParams& params, const MaskedSample& sample,
                               const TokenVocab& vocab, EncoderParams& grad, double scale,
                               Dropout* dropout, EmbeddingPull pull) {
  ForwardCache cache;
  run_forward(params, sample.tokens, dropout, cache);

  SampleLoss out;
  out.masked = weighted_cross_entropy(cache.logits, sample.target, vocab);
  out.lse_embedding = cache.embedding;

  const double coeff = scale * vocab.weights[static_cast<std::size_t>(sample.target)] /
                       static_cast<double>(vocab.size());
  RowVector dlogits = softmax(cache.logits) * coeff;
  dlogits(sample.target) -= coeff;

  grad.head_w2.noalias() += cache.head_act.transpose() * dlogits;
  grad.head_b2.row(0) += dlogits;
  RowVector dact = dlogits * params.head_w2.transpose();
  RowVector dpre = (cache.head_pre.array() > 0.0).select(dact, 0.0);
  grad.head_w1.noalias() += cache.embedding.transpose() * dpre;
  grad.head_b1.row(0) += dpre;
  Matrix dx = dpre * params.head_w1.transpose();  // 1 x d

  if (pull.assign) {
    if (const RowVector* centroid = pull.assign(cache.embedding)) {
      RowVector diff = cache.embedding - *centroid;
      out.cluster = diff.squaredNorm();
      // Skipped at lambda == 0 so the update is bitwise the pure J_m step.
      if (pull.lambda > 0.0) dx.row(0) += (2.0 * pull.lambda * scale) * diff;
    }
  }

  for (std::size_t l = params.layers.size(); l-- > 0;) {
    dx = layer_backward(params.layers[l], cache.layers[l], dx, params.shape.n_heads,
                        dropout != nullptr, grad.layers[l]);
  }
  for (Eigen::Index i = 0; i < dx.rows(); ++i) {
    grad.token_embedding.row(sample.tokens[static_cast<std::size_t>(i)]) += dx.row(i);
    grad.position_embedding.row(i) += dx.row(i);
  }
  return out;
}

void sgd_step(EncoderParams& params, const EncoderParams& gradient, double learning_rate) {
  if (!(params.shape == gradient.shape)) throw ContractError("gradient shape mismatch");
  if (!gradient.all_finite()) throw NumericError("non-finite gradient");
  std::vector<const Matrix*> grads;
  gradient.visit([&](const std::string&, const Matrix& m) { grads.push_back(&m); });
  std::size_t i = 0;
  params.visit([&](const std::string&, Matrix& m) { m.noalias() -= learning_rate * *grads[i++]; });
}

EarlyStopping::EarlyStopping(int patience) : patience_(patience) {
  if (patience < 1) throw ConfigError("patience must be at least 1");
}

bool EarlyStopping::update(double loss) {
  ++epochs_;
  if (best_epoch_ == 0 || loss < best_loss_) {
    best_loss_ = loss;
    best_epoch_ = epochs_;
    stale_ = 0;
    return false;
  }
  return ++stale_ >= patience_;
}

double run_epoch(EncoderParams& params, const std::vector<MaskedSample>& samples,
                 const TokenVocab& vocab, const TrainingConfig& config, std::mt19937_64& rng,
                 BatchObserver* observer, double lambda) {
  if (samples.empty()) throw DegenerateInputError("training corpus is empty");
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);

  Dropout dropout(config.dropout, rng);
  Dropout* active = config.dropout > 0.0 ? &dropout : nullptr;
  EncoderParams grad = EncoderParams::zeros(params.shape);
  std::vector<RowVector> embeddings;
  double total = 0.0;

  const auto batch = static_cast<std::size_t>(config.batch_size);
  for (std::size_t start = 0; start < order.size(); start += batch) {
    const std::size_t end = std::min(order.size(), start + batch);
    const double scale = 1.0 / static_cast<double>(end - start);
    grad.visit([](const std::string&, Matrix& m) { m.setZero(); });
    embeddings.clear();
    for (std::size_t i = start; i < end; ++i) {
      const auto& s = samples[order[i]];
      EmbeddingPull pull;
      if (observer) {
        pull.assign = [observer](const RowVector& e) { return observer->assign(e); };
        pull.lambda = lambda;
      }
      auto loss = accumulate_gradient(params, s, vocab, grad, scale, active, pull);
      total += loss.masked;
      if (observer) embeddings.push_back(std::move(loss.lse_embedding));
    }
    sgd_step(params, grad, config.learning_rate);
    if (observer) observer->after_step(embeddings);
  }
  return total / static_cast<double>(samples.size());
}

double evaluate_loss(const EncoderParams& params, const std::vector<MaskedSample>& samples,
                     const TokenVocab& vocab) {
  if (samples.empty()) throw DegenerateInputError("evaluation corpus is empty");
  double total = 0.0;
  for (const auto& s : samples) {
    total += weighted_cross_entropy(forward(params, s.tokens).logits, s.target, vocab);
  }
  return total / static_cast<double>(samples.size());
}

std::uint64_t init_seed(std::uint64_t seed) { return derive_seed(seed, 0); }
std::uint64_t pretrain_stream_seed(std::uint64_t seed) { return derive_seed(seed, 1); }
std::uint64_t joint_stream_seed(std::uint64_t seed) { return derive_seed(seed, 2); }

PretrainResult pretrain(const std::vector<MaskedSample>& corpus, const TokenVocab& vocab,
                        const TrainingConfig& config) {
  config.validate();
  return pretrain(corpus, vocab, config,
                  EncoderParams::random(make_shape(config, vocab), init_seed(config.seed)));
}

PretrainResult pretrain(const std::vector<MaskedSample>& corpus, const TokenVocab& vocab,
                        const TrainingConfig& config, EncoderParams initial) {
  config.validate();
  if (corpus.empty()) throw DegenerateInputError("pretraining corpus is empty");
  std::mt19937_64 rng(pretrain_stream_seed(config.seed));
  EarlyStopping stopper(config.phase1_patience);
  PretrainResult result{initial, {}, 0};
  EncoderParams current = std::move(initial);
  for (int epoch = 1; epoch <= config.phase1_max_epochs; ++epoch) {
    double loss = 0.0;
    try {
      loss = run_epoch(current, corpus, vocab, config, rng);
    } catch (const NumericError& e) {
      throw TrainingAborted(std::string("pretraining aborted: ") + e.what(),
                            std::make_shared<const EncoderParams>(result.params), epoch);
    }
    if (!std::isfinite(loss) || !current.all_finite()) {
      throw TrainingAborted("pretraining produced non-finite loss",
                            std::make_shared<const EncoderParams>(result.params), epoch);
    }
    result.epoch_losses.push_back(loss);
    const bool stop = stopper.update(loss);
    if (stopper.best_epoch() == epoch) result.params = current;
    if (stop) break;
  }
  result.best_epoch = stopper.best_epoch();
  return result;
}

}  // namespace logfid
