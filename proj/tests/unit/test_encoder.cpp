#include <doctest.h>

#include <cmath>

#include "logfid/encoder.hpp"
#include "support/gradient_oracle.hpp"

using namespace logfid;

namespace {

TokenVocab uniform_vocab(int events) {
  std::vector<long> counts(static_cast<std::size_t>(events), 1);
  return compute_token_weights(counts);
}

TrainingConfig tiny_config() {
  TrainingConfig c;
  c.d = 8;
  c.n_layers = 2;
  c.n_heads = 2;
  c.max_length = 4;
  c.dropout = 0.0;
  c.batch_size = 4;
  c.learning_rate = 0.5;
  c.seed = 7;
  return c;
}

}  // namespace

TEST_CASE("pad_and_prepend") {
  auto vocab = uniform_vocab(6);
  // E2, E5, E3 with max_length 4
  auto padded = pad_and_prepend(std::vector<int>{2, 5, 3}, 4, vocab);
  CHECK(padded == std::vector<int>{vocab.lse(), 2, 5, 3, vocab.pad()});

  auto full = pad_and_prepend(std::vector<int>{1, 2, 3, 4}, 4, vocab);
  CHECK(std::count(full.begin(), full.end(), vocab.pad()) == 0);

  auto truncated = pad_and_prepend(std::vector<int>{0, 1, 2, 3, 4, 5}, 4, vocab);
  CHECK(truncated == std::vector<int>{vocab.lse(), 0, 1, 2, 3});

  CHECK_THROWS_AS(pad_and_prepend(std::vector<int>{}, 4, vocab), DegenerateInputError);
}

TEST_CASE("generate_masked_set") {
  auto vocab = uniform_vocab(6);
  auto padded = pad_and_prepend(std::vector<int>{2, 5, 3}, 4, vocab);
  auto samples = generate_masked_set(padded, vocab, {3, 1});
  REQUIRE(samples.size() == 3);
  CHECK(samples[1].tokens == std::vector<int>{vocab.lse(), 2, vocab.mask(), 3, vocab.pad()});
  CHECK(samples[1].target == 5);
  for (const auto& s : samples) {
    CHECK(std::count(s.tokens.begin(), s.tokens.end(), vocab.mask()) == 1);
    CHECK(s.tokens[static_cast<std::size_t>(s.masked_position)] == vocab.mask());
    CHECK(vocab.is_event(s.target));
    CHECK(s.origin == SampleOrigin{3, 1});
  }

  auto single = generate_masked_set(pad_and_prepend(std::vector<int>{4}, 4, vocab), vocab);
  CHECK(single.size() == 1);
  CHECK_THROWS_AS(generate_masked_set(std::vector<int>{1, 2}, vocab), ContractError);
}

TEST_CASE("compute_token_weights") {
  auto a = compute_token_weights(std::vector<long>{1, 1});
  CHECK(a.weights[0] == 0.5);
  CHECK(a.weights[1] == 0.5);
  for (int r = a.lse(); r < a.size(); ++r) CHECK(a.weights[static_cast<std::size_t>(r)] == 0.0);

  auto b = compute_token_weights(std::vector<long>{99, 1});
  CHECK(b.weights[0] == doctest::Approx(0.01).epsilon(1e-12));
  CHECK(b.weights[1] == doctest::Approx(0.99).epsilon(1e-12));

  auto c = compute_token_weights(std::vector<long>{7, 0});
  CHECK(c.weights[0] == kMinTokenWeight);
  CHECK(c.weights[1] == 1.0);

  CHECK_THROWS_AS(compute_token_weights(std::vector<long>{0, 0}), ConfigError);
}

TEST_CASE("weighted_cross_entropy identities") {
  RowVector uniform = RowVector::Zero(4);
  std::vector<double> ones(4, 1.0);
  CHECK(weighted_cross_entropy(uniform, 2, ones) == doctest::Approx(0.25 * std::log(4.0)).epsilon(1e-15));
  CHECK(weighted_cross_entropy(uniform, 2, ones) == doctest::Approx(0.34657359).epsilon(1e-8));

  RowVector logits(4);
  logits << 3.0, -1.0, 0.5, 2.0;
  std::vector<double> zero_target = {1.0, 0.0, 1.0, 1.0};
  CHECK(weighted_cross_entropy(logits, 1, zero_target) == 0.0);

  // all weights 1 -> plain cross-entropy / C
  const double ce = -std::log(softmax(logits)(0));
  CHECK(weighted_cross_entropy(logits, 0, ones) == doctest::Approx(ce / 4.0).epsilon(1e-14));

  // doubling the target weight doubles the loss exactly
  std::vector<double> w1 = {0.3, 0.7, 0.2, 0.9};
  std::vector<double> w2 = w1;
  w2[3] *= 2.0;
  CHECK(weighted_cross_entropy(logits, 3, w2) == 2.0 * weighted_cross_entropy(logits, 3, w1));

  auto vocab = uniform_vocab(3);
  RowVector vlogits = RowVector::Zero(vocab.size());
  CHECK_THROWS_AS(weighted_cross_entropy(vlogits, vocab.pad(), vocab), ContractError);
  CHECK_THROWS_AS(weighted_cross_entropy(vlogits, vocab.lse(), vocab), ContractError);
}

TEST_CASE("forward shape, determinism and softmax normalization") {
  auto vocab = uniform_vocab(5);
  auto config = tiny_config();
  config.dropout = 0.1;
  auto params = EncoderParams::random(make_shape(config, vocab), 3);
  auto tokens = pad_and_prepend(std::vector<int>{0, 3, 1}, config.max_length, vocab);

  auto a = forward(params, tokens);
  auto b = forward(params, tokens);
  CHECK(a.logits.size() == vocab.size());
  CHECK(a.lse_embedding.size() == config.d);
  CHECK((a.logits.array() == b.logits.array()).all());
  CHECK((a.lse_embedding.array() == b.lse_embedding.array()).all());
  CHECK(softmax(a.logits).sum() == doctest::Approx(1.0).epsilon(1e-6));

  std::mt19937_64 rng(1);
  Dropout dropout(0.5, rng);
  auto c = forward(params, tokens, &dropout);
  CHECK_FALSE((c.lse_embedding.array() == a.lse_embedding.array()).all());

  CHECK_THROWS_AS(forward(params, std::vector<int>{vocab.lse(), 1}), ContractError);
}

TEST_CASE("attention without positions is permutation invariant") {
  auto vocab = uniform_vocab(5);
  auto config = tiny_config();
  auto params = EncoderParams::random(make_shape(config, vocab), 11);
  auto swapped_a = pad_and_prepend(std::vector<int>{1, 4, 2}, config.max_length, vocab);
  auto swapped_b = pad_and_prepend(std::vector<int>{4, 1, 2}, config.max_length, vocab);

  auto with_pos_a = embed(params, swapped_a);
  auto with_pos_b = embed(params, swapped_b);
  CHECK((with_pos_a - with_pos_b).norm() > 1e-6);

  params.position_embedding.setZero();
  auto a = embed(params, swapped_a);
  auto b = embed(params, swapped_b);
  CHECK((a - b).norm() < 1e-12);
}

TEST_CASE("analytic gradient matches central finite differences") {
  for (std::uint64_t seed : {1u, 2u}) {
    auto problem = testing::make_fd_problem(6, 4, seed, 0.3);
    TrainingConfig config = tiny_config();
    auto params = EncoderParams::random(make_shape(config, problem.vocab), seed + 10);
    problem.centroid = RowVector::Constant(config.d, 0.2);
    auto errors = testing::gradient_relative_errors(params, problem);
    for (const auto& [name, err] : errors) {
      INFO(name);
      CHECK(err < 1e-4);
    }
  }
}

TEST_CASE("sgd_step") {
  auto vocab = uniform_vocab(4);
  auto config = tiny_config();
  auto params = EncoderParams::random(make_shape(config, vocab), 5);
  auto before = params;
  sgd_step(params, EncoderParams::zeros(params.shape), 0.1);
  CHECK(params.identical(before));

  auto bad = EncoderParams::zeros(params.shape);
  bad.head_b2(0, 0) = std::nan("");
  CHECK_THROWS_AS(sgd_step(params, bad, 0.1), NumericError);
  CHECK(params.identical(before));
}

TEST_CASE("one small step on a repeated batch decreases the loss") {
  auto problem = testing::make_fd_problem(6, 4, 9, 0.0);
  auto config = tiny_config();
  auto params = EncoderParams::random(make_shape(config, problem.vocab), 21);
  const double before = testing::fd_objective(params, problem);
  auto grad = testing::analytic_gradient(params, problem);
  sgd_step(params, grad, 1e-2);
  CHECK(testing::fd_objective(params, problem) <= before);
}

TEST_CASE("early stopping fires after the patience window") {
  EarlyStopping stop(5);
  std::vector<double> losses = {5.0, 4.0, 3.0, 2.5};  // improves through epoch 4
  for (double l : losses) CHECK_FALSE(stop.update(l));
  int stopped_at = 0;
  for (int epoch = 5; epoch < 20; ++epoch) {
    if (stop.update(2.5 + 0.01 * epoch)) {
      stopped_at = epoch;
      break;
    }
  }
  CHECK(stopped_at == 4 + 5);
  CHECK(stop.best_epoch() == 4);
  CHECK_THROWS_AS(EarlyStopping(0), ConfigError);
}

namespace {

// Three deterministic contexts: each event fully determines its partner.
std::vector<MaskedSample> toy_corpus(const TokenVocab& vocab, int max_length) {
  std::vector<std::vector<int>> windows = {{0, 1}, {2, 3}, {4, 5}};
  std::vector<MaskedSample> out;
  for (int rep = 0; rep < 4; ++rep) {
    for (std::size_t w = 0; w < windows.size(); ++w) {
      auto padded = pad_and_prepend(windows[w], max_length, vocab);
      for (auto& s : generate_masked_set(padded, vocab, {w, 0})) out.push_back(std::move(s));
    }
  }
  return out;
}

}  // namespace

TEST_CASE("pretraining learns a deterministic toy corpus") {
  auto vocab = uniform_vocab(6);
  auto config = tiny_config();
  config.phase1_max_epochs = 150;
  config.learning_rate = 1.0;
  auto corpus = toy_corpus(vocab, config.max_length);
  auto result = pretrain(corpus, vocab, config);

  const double uniform_baseline = std::log(static_cast<double>(vocab.size())) / vocab.size();
  CHECK(*std::min_element(result.epoch_losses.begin(), result.epoch_losses.end()) <
        uniform_baseline);

  int correct = 0;
  for (const auto& s : corpus) {
    Eigen::Index arg = 0;
    forward(result.params, s.tokens).logits.maxCoeff(&arg);
    correct += arg == s.target;
  }
  CHECK(static_cast<double>(correct) / static_cast<double>(corpus.size()) > 0.95);

  auto again = pretrain(corpus, vocab, config);
  CHECK(again.params.identical(result.params));
  CHECK(again.epoch_losses == result.epoch_losses);
}
