#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "logfid/detector.hpp"
#include "support/hmm_oracle.hpp"

using namespace logfid;

TEST_CASE("single-state model score") {
  HmmModel m;
  m.pi = Eigen::VectorXd::Ones(1);
  m.a = Eigen::MatrixXd::Ones(1, 1);
  m.b.resize(1, 2);
  m.b << 0.5, 0.5;
  std::vector<int> seq = {0, 0};
  CHECK(hmm_log_score(m, seq) == doctest::Approx(-std::log(0.25)).epsilon(1e-14));
  CHECK(hmm_log_score(m, seq) == doctest::Approx(1.3863).epsilon(1e-4));

  std::vector<int> bad = {0, 2};
  CHECK_THROWS_AS(hmm_log_score(m, bad), ContractError);
  CHECK_THROWS_AS(hmm_log_score(m, std::vector<int>{}), DegenerateInputError);
}

TEST_CASE("degenerate model emitting one sequence") {
  HmmModel m;
  m.pi = Eigen::Vector2d(1.0, 0.0);
  m.a.resize(2, 2);
  m.a << 0, 1, 0, 1;
  m.b.resize(2, 2);
  m.b << 1, 0, 0, 1;
  CHECK(hmm_log_score(m, std::vector<int>{0, 1, 1}) == 0.0);
  CHECK(hmm_log_score(m, std::vector<int>{1, 1, 1}) == kMaxLogScore);
  CHECK(hmm_log_score(m, std::vector<int>{0, 0}) == kMaxLogScore);
}

TEST_CASE("forward algorithm matches brute-force enumeration") {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> hs(1, 3), ks(1, 4), ns(1, 5);
  for (int trial = 0; trial < 200; ++trial) {
    const int h = hs(rng), k = ks(rng), n = ns(rng);
    auto m = testing::random_model(h, k, rng);
    std::uniform_int_distribution<int> sym(0, k - 1);
    std::vector<int> obs;
    for (int i = 0; i < n; ++i) obs.push_back(sym(rng));
    // compared as probabilities: log P is exactly 0 when k == 1
    const double brute = testing::brute_force_probability(m, obs);
    const double fwd = std::exp(log_likelihood(m, obs));
    CHECK(std::abs(fwd - brute) <= 1e-10 * brute);
  }
}

TEST_CASE("Baum-Welch is monotone and keeps rows stochastic") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    auto truth = testing::random_model(2, 4, rng);
    std::vector<std::vector<int>> data;
    for (int i = 0; i < 30; ++i) data.push_back(testing::sample_hmm(truth, 12, rng));
    for (int h : {1, 2, 3}) {
      HmmFitTrace trace;
      auto m = fit_hmm(data, h, 4, static_cast<std::uint64_t>(trial), {}, &trace);
      CHECK_NOTHROW(m.validate(1e-9));
      REQUIRE(trace.objective.size() >= 2);
      for (std::size_t i = 1; i < trace.objective.size(); ++i) {
        CHECK(trace.objective[i] >= trace.objective[i - 1] - 1e-8);
        CHECK(trace.log_likelihood[i] >= trace.log_likelihood[i - 1] - 1e-8);
      }
    }
  }
}

TEST_CASE("single-state fit recovers empirical frequencies") {
  std::vector<std::vector<int>> data = {{0, 1, 1}, {2, 1}, {1, 0, 0, 1}};
  auto m = fit_hmm(data, 1, 4, 3);
  CHECK(m.a(0, 0) == 1.0);
  // counts 3, 5, 1, 0 of 9
  CHECK(m.b(0, 0) == doctest::Approx(3.0 / 9.0).epsilon(1e-5));
  CHECK(m.b(0, 1) == doctest::Approx(5.0 / 9.0).epsilon(1e-5));
  CHECK(m.b(0, 2) == doctest::Approx(1.0 / 9.0).epsilon(1e-5));
  CHECK(m.b(0, 3) > 0.0);
  CHECK(m.b(0, 3) < 1e-6);
  // the unseen symbol still scores finitely
  CHECK(hmm_log_score(m, std::vector<int>{3}) < kMaxLogScore);
}

TEST_CASE("a two-state fit beats one state on two-state data") {
  HmmModel truth;
  truth.pi = Eigen::Vector2d(0.5, 0.5);
  truth.a.resize(2, 2);
  truth.a << 0.9, 0.1, 0.1, 0.9;
  truth.b.resize(2, 3);
  truth.b << 0.8, 0.1, 0.1, 0.1, 0.1, 0.8;
  std::mt19937_64 rng(77);
  std::vector<std::vector<int>> data;
  for (int i = 0; i < 40; ++i) data.push_back(testing::sample_hmm(truth, 20, rng));
  HmmFitTrace one, two;
  fit_hmm(data, 1, 3, 1, {}, &one);
  fit_hmm(data, 2, 3, 1, {}, &two);
  CHECK(two.log_likelihood.back() >= one.log_likelihood.back());

  CHECK_THROWS_AS(fit_hmm(std::vector<std::vector<int>>{}, 2, 3, 1), ConfigError);
}

TEST_CASE("normality score") {
  CHECK(normality_score(3.5, 3.5) == 0.0);
  CHECK(normality_score(4.0, 6.0) == 4.0);
  CHECK(normality_score(4.0, 2.0) == normality_score(4.0, 6.0));
}

TEST_CASE("threshold estimation") {
  std::vector<double> flat = {1, 1, 1};
  auto f = thresholds_from_scores(0.0, flat);
  CHECK(f.sigma == kSigmaFloor);
  CHECK(f.a1 < f.a2);
  CHECK(f.a1 == doctest::Approx(1.0));
  CHECK(f.a2 == doctest::Approx(1.0));

  std::vector<double> two = {0, 2};
  auto t = thresholds_from_scores(0.0, two);
  CHECK(t.mu == 1.0);
  CHECK(t.sigma == 1.0);
  CHECK(t.a1 == -2.0);
  CHECK(t.a2 == 4.0);
  CHECK(t.a1 == t.mu - 3.0 * t.sigma);
  CHECK(t.a2 == t.mu + 3.0 * t.sigma);

  std::vector<double> one = {1};
  CHECK_THROWS_AS(thresholds_from_scores(0.0, one), ConfigError);

  std::mt19937_64 rng(11);
  std::normal_distribution<double> g(5.0, 2.0);
  std::vector<double> draws;
  for (int i = 0; i < 200000; ++i) draws.push_back(g(rng));
  auto th = thresholds_from_scores(0.0, draws);
  std::size_t inside = 0;
  for (double x : draws) inside += !th.outside(x);
  CHECK(static_cast<double>(inside) / static_cast<double>(draws.size()) ==
        doctest::Approx(0.9973).epsilon(0.005));
}

TEST_CASE("calibrate and detect") {
  std::mt19937_64 rng(3);
  auto truth = testing::random_model(2, 3, rng);
  std::vector<SubprocessSequence> train, valid;
  for (int i = 0; i < 40; ++i) {
    train.push_back({"t" + std::to_string(i), testing::sample_hmm(truth, 10, rng), {}});
    valid.push_back({"v" + std::to_string(i), testing::sample_hmm(truth, 10, rng), {}});
  }
  auto m = fit_hmm(train, 2, 3, 9);
  auto th = calibrate(m, valid);

  double mean_t = 0.0;
  for (const auto& v : valid) mean_t += hmm_log_score(m, v.subprocess_ids);
  mean_t /= static_cast<double>(valid.size());
  CHECK(th.mean_t == doctest::Approx(mean_t).epsilon(1e-12));

  // validation order does not matter
  auto reversed = valid;
  std::reverse(reversed.begin(), reversed.end());
  CHECK(calibrate(m, reversed).mean_t == doctest::Approx(th.mean_t).epsilon(1e-14));

  Thresholds manual{th.mean_t, 2.0, 0.5, 0.5, 3.5};
  CHECK_FALSE(manual.outside(2.0));
  CHECK(manual.outside(2.0 + 4 * 0.5));
  for (const auto& v : valid) {
    auto r = detect(m, th, v);
    CHECK(r.failure == (r.score < th.a1 || r.score > th.a2));
    CHECK(r.score == normality_score(th.mean_t, r.log_score));
  }

  // a much longer sequence is far from the validation mean
  std::vector<int> long_seq = testing::sample_hmm(truth, 200, rng);
  CHECK(detect(m, th, {"x", long_seq, {}}).failure);

  std::ostringstream csv;
  write_detections_csv(csv, {detect(m, th, valid[0])});
  CHECK(csv.str().rfind("task_id,log_score,score,verdict\n", 0) == 0);

  CHECK_THROWS_AS(calibrate(m, {valid[0]}), ConfigError);
}
