#include <doctest.h>

#include <cmath>

#include "logfid/clustering.hpp"

using namespace logfid;

namespace {

RowVector vec(std::initializer_list<double> values) {
  RowVector v(static_cast<Eigen::Index>(values.size()));
  Eigen::Index i = 0;
  for (double x : values) v(i++) = x;
  return v;
}

CentroidSet centroids_of(std::initializer_list<RowVector> rows) {
  Matrix m(static_cast<Eigen::Index>(rows.size()), rows.begin()->size());
  Eigen::Index i = 0;
  for (const auto& r : rows) m.row(i++) = r;
  return CentroidSet::from_matrix(m);
}

TrainingConfig small_config() {
  TrainingConfig c;
  c.d = 8;
  c.n_layers = 2;
  c.n_heads = 2;
  c.max_length = 4;
  c.dropout = 0.1;
  c.batch_size = 4;
  c.learning_rate = 0.5;
  c.seed = 3;
  return c;
}

std::vector<MaskedSample> corpus_of(const std::vector<std::vector<int>>& windows,
                                    const TokenVocab& vocab, int max_length) {
  std::vector<MaskedSample> out;
  for (std::size_t w = 0; w < windows.size(); ++w) {
    auto padded = pad_and_prepend(windows[w], max_length, vocab);
    for (auto& s : generate_masked_set(padded, vocab, {w, 0})) out.push_back(std::move(s));
  }
  return out;
}

}  // namespace

TEST_CASE("assign picks the nearest centroid with low-index ties") {
  auto c = centroids_of({vec({0, 0}), vec({2, 0}), vec({5, 5})});
  auto a = assign(vec({5, 5}), c);
  CHECK(a.index == 2);
  CHECK(a.squared_distance == 0.0);
  CHECK(assign(vec({1, 0}), c).index == 0);
  CHECK(assign(vec({1.6, 0}), c).index == 1);

  auto single = centroids_of({vec({3, 3})});
  CHECK(assign(vec({-100, 7}), single).index == 0);

  CHECK_THROWS_AS(assign(vec({1, 1}), CentroidSet{}), StateError);
}

TEST_CASE("kmeans_loss uses squared distances") {
  auto c = centroids_of({vec({0, 0}), vec({10, 0})});
  std::vector<RowVector> one = {vec({1, 0})};
  std::vector<int> to_zero = {0};
  CHECK(kmeans_loss(one, to_zero, c) == 1.0);

  std::vector<RowVector> at = {vec({0, 0}), vec({10, 0})};
  std::vector<int> labels = {0, 1};
  CHECK(kmeans_loss(at, labels, c) == 0.0);

  std::vector<RowVector> two = {vec({1, 0}), vec({10, 3})};
  CHECK(kmeans_loss(two, labels, c) == 5.0);
  CHECK(kmeans_loss(two, c) == 5.0);
}

TEST_CASE("update_centroid") {
  auto c = centroids_of({vec({0, 0})});
  update_centroid(c, 0, vec({1, 0}));
  CHECK(c.m.row(0) == vec({1, 0}));
  CHECK(c.counters[0] == 2.0);

  auto scalar = CentroidSet::from_matrix(Matrix::Zero(1, 1));
  scalar.counters[0] = 2.0;
  update_centroid(scalar, 0, vec({1}));
  CHECK(scalar.m(0, 0) == 0.5);

  auto fixed = centroids_of({vec({0.3, -2})});
  fixed.counters[0] = 7.0;
  update_centroid(fixed, 0, vec({0.3, -2}));
  CHECK(fixed.m.row(0) == vec({0.3, -2}));

  // contraction by (1 - 1/c)
  for (double counter : {1.0, 2.0, 3.0, 8.0}) {
    auto m = centroids_of({vec({0.5, -1.5, 2.0})});
    m.counters[0] = counter;
    const RowVector phi = vec({-1.0, 4.0, 0.25});
    const double before = (m.m.row(0) - phi).norm();
    update_centroid(m, 0, phi);
    CHECK((m.m.row(0) - phi).norm() == doctest::Approx((1.0 - 1.0 / counter) * before).epsilon(1e-12));
  }

  auto literal = centroids_of({vec({0, 0})});
  literal.counters[0] = 2.0;
  update_centroid(literal, 0, vec({1, 0}), CentroidRule::Literal);
  CHECK(literal.m.row(0) == vec({-0.5, 0}));

  CHECK_THROWS_AS(update_centroid(c, 3, vec({0, 0})), ContractError);
}

TEST_CASE("initialize_centroids") {
  std::vector<RowVector> points = {vec({0, 0}), vec({0, 1}), vec({10, 10}), vec({10, 11}),
                                   vec({-8, 4}), vec({-9, 4})};

  auto one = initialize_centroids(points, 1, 5);
  RowVector mean = RowVector::Zero(2);
  for (const auto& p : points) mean += p;
  mean /= static_cast<double>(points.size());
  CHECK((one.m.row(0) - mean).norm() < 1e-12);

  auto all = initialize_centroids(points, 6, 5);
  CHECK(kmeans_loss(points, all) == 0.0);

  std::vector<double> trace;
  auto three = initialize_centroids(points, 3, 9, {}, &trace);
  REQUIRE(trace.size() >= 2);
  for (std::size_t i = 1; i < trace.size(); ++i) CHECK(trace[i] <= trace[i - 1]);
  CHECK(kmeans_loss(points, three) == doctest::Approx(0.25));
  CHECK(three.counters == std::vector<double>(3, 1.0));

  CHECK(initialize_centroids(points, 3, 9).identical(three));

  std::vector<RowVector> dupes = {vec({1, 1}), vec({1, 1}), vec({2, 2})};
  CHECK_THROWS_AS(initialize_centroids(dupes, 3, 1), ConfigError);
}

TEST_CASE("Lloyd loss never increases on random data") {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<RowVector> points;
    for (int i = 0; i < 60; ++i) {
      RowVector p(3);
      for (int j = 0; j < 3; ++j) p(j) = g(rng) + (i % 4) * 3.0;
      points.push_back(p);
    }
    std::vector<double> trace;
    initialize_centroids(points, 2 + trial % 5, static_cast<std::uint64_t>(trial), {}, &trace);
    for (std::size_t i = 1; i < trace.size(); ++i) CHECK(trace[i] <= trace[i - 1] + 1e-12);
  }
}

TEST_CASE("joint training with lambda 0 is pure masked training") {
  std::vector<long> counts(6, 1);
  auto vocab = compute_token_weights(counts);
  auto config = small_config();
  config.lambda = 0.0;
  config.phase2_max_epochs = 1;
  auto corpus = corpus_of({{0, 1, 2}, {3, 4}, {5, 0, 1, 2}, {2, 2}}, vocab, config.max_length);
  auto params = EncoderParams::random(make_shape(config, vocab), 1);

  std::vector<RowVector> embeddings;
  for (const auto& s : corpus) embeddings.push_back(embed(params, s.tokens));
  auto centroids = initialize_centroids(embeddings, 3, 2);

  auto joint = joint_train(params, centroids, corpus, vocab, config);

  auto plain = params;
  std::mt19937_64 rng(joint_stream_seed(config.seed));
  run_epoch(plain, corpus, vocab, config, rng);
  CHECK(joint.params.identical(plain));
  CHECK_FALSE(joint.params.identical(params));

  config.lambda = 0.1;
  auto pulled = joint_train(params, centroids, corpus, vocab, config);
  CHECK_FALSE(pulled.params.identical(plain));
}

TEST_CASE("joint training lowers the evaluation objective") {
  std::vector<long> counts = {4, 4, 2, 2, 1, 1};
  auto vocab = compute_token_weights(counts);
  auto config = small_config();
  config.dropout = 0.0;
  config.phase2_max_epochs = 20;
  config.lambda = 0.1;
  auto corpus = corpus_of({{0, 1}, {2, 3}, {4, 5}, {0, 1, 0}, {2, 3, 2}}, vocab, config.max_length);
  auto params = pretrain(corpus, vocab, [&] {
                  auto c = config;
                  c.phase1_max_epochs = 20;
                  return c;
                }()).params;
  std::vector<RowVector> embeddings;
  for (const auto& s : corpus) embeddings.push_back(embed(params, s.tokens));
  auto centroids = initialize_centroids(embeddings, 3, 4);

  auto result = joint_train(params, centroids, corpus, vocab, config, &corpus);
  REQUIRE(result.eval_objective.size() == 20);
  for (double j : result.eval_objective) CHECK(std::isfinite(j));
  CHECK(result.eval_objective.back() < result.eval_objective.front());

  auto again = joint_train(params, centroids, corpus, vocab, config, &corpus);
  CHECK(again.params.identical(result.params));
  CHECK(again.centroids.identical(result.centroids));
}

namespace {

// With positions zeroed, masked samples holding the same token multiset
// share an embedding, which lets the test place centroids exactly.
struct VoteFixture {
  TokenVocab vocab = compute_token_weights(std::vector<long>(6, 1));
  EncoderParams params;

  VoteFixture() {
    TrainingConfig c = small_config();
    params = EncoderParams::random(make_shape(c, vocab), 8);
    params.position_embedding.setZero();
  }

  std::vector<MaskedSample> samples(std::vector<int> window) const {
    return generate_masked_set(pad_and_prepend(window, 4, vocab), vocab, {0, 0});
  }
};

}  // namespace

TEST_CASE("extract_subprocess_id votes and divides by window length") {
  VoteFixture f;
  auto s = f.samples({2, 2, 5});
  RowVector a = embed(f.params, s[0].tokens);
  RowVector b = embed(f.params, s[2].tokens);
  REQUIRE((a - embed(f.params, s[1].tokens)).norm() < 1e-12);
  REQUIRE((a - b).norm() > 1e-6);

  auto c = centroids_of({RowVector::Constant(a.size(), 1e3), a, b});
  auto choice = extract_subprocess_id(s, f.params, c);
  CHECK(choice.id == 1);
  CHECK(choice.score == doctest::Approx(2.0 / 3.0));

  auto tie = f.samples({2, 5});
  auto ct = centroids_of({RowVector::Constant(a.size(), 1e3), embed(f.params, tie[0].tokens),
                          embed(f.params, tie[1].tokens)});
  CHECK(extract_subprocess_id(tie, f.params, ct).id == 1);

  auto same = f.samples({3, 3, 3});
  auto cs = centroids_of({embed(f.params, same[0].tokens), RowVector::Constant(a.size(), 1e3)});
  auto all = extract_subprocess_id(same, f.params, cs);
  CHECK(all.id == 0);
  CHECK(all.score <= 1.0);

  CHECK_THROWS_AS(extract_subprocess_id(std::span<const MaskedSample>{}, f.params, c),
                  DegenerateInputError);
}

TEST_CASE("SubprocessExtractor agrees with direct extraction and caches windows") {
  VoteFixture f;
  auto s = f.samples({2, 2, 5});
  auto c = centroids_of({RowVector::Constant(f.params.shape.d, 1e3), embed(f.params, s[0].tokens),
                         embed(f.params, s[2].tokens)});
  SubprocessExtractor extractor(f.params, c, f.vocab);

  WindowedSequence w{"t1", {{2, 2, 5}, {1, 4}, {2, 2, 5}, {99}}, 60.0, TaskLabel::normal()};
  auto seq = extractor.sequence(w);
  REQUIRE(seq.subprocess_ids.size() == 4);
  CHECK(seq.subprocess_ids[0] == 1);
  CHECK(seq.subprocess_ids[0] == seq.subprocess_ids[2]);
  CHECK(extractor.cache_size() == 3);
  for (int id : seq.subprocess_ids) CHECK((id >= 0 && id < c.k()));

  // windows longer than max_length vote over the kept prefix but divide by the full length
  auto long_choice = extractor.extract(std::vector<int>{2, 2, 5, 1, 1, 1});
  auto direct = extract_subprocess_id(f.samples({2, 2, 5, 1}), f.params, c, 6);
  CHECK(long_choice.id == direct.id);
  CHECK(long_choice.score == direct.score);
}
