#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <sstream>

#include "logfid/error.hpp"
#include "logfid/eval.hpp"

using namespace logfid;

TEST_CASE("precision, recall and F1") {
  const auto perfect = prf1({5, 0, 0, 7});
  CHECK(perfect.precision == 1.0);
  CHECK(perfect.recall == 1.0);
  CHECK(perfect.f1 == 1.0);

  const auto silent = prf1({0, 0, 4, 10});
  CHECK(silent.precision == 0.0);
  CHECK(silent.recall == 0.0);
  CHECK(silent.f1 == 0.0);

  const auto s = prf1({8, 2, 4, 0});
  CHECK(s.precision == doctest::Approx(0.8));
  CHECK(s.recall == doctest::Approx(2.0 / 3.0));
  CHECK(s.f1 == doctest::Approx(0.7273).epsilon(1e-4));
}

TEST_CASE("metric identities hold on random confusion counts") {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<long> d(0, 40);
  for (int i = 0; i < 500; ++i) {
    const ConfusionCounts c{d(rng), d(rng), d(rng), d(rng)};
    const auto s = prf1(c);
    const double p = c.tp + c.fp == 0 ? 0.0 : double(c.tp) / double(c.tp + c.fp);
    const double r = c.tp + c.fn == 0 ? 0.0 : double(c.tp) / double(c.tp + c.fn);
    // F1 = 2TP / (2TP + FP + FN) whenever TP > 0
    const double f = c.tp == 0 ? 0.0 : 2.0 * double(c.tp) / double(2 * c.tp + c.fp + c.fn);
    CHECK(s.precision == doctest::Approx(p));
    CHECK(s.recall == doctest::Approx(r));
    CHECK(s.f1 == doctest::Approx(f));
  }
}

TEST_CASE("binary counts treat failure as positive") {
  const auto c = binary_counts({true, true, false, false, true}, {true, false, true, false, true});
  CHECK(c == ConfusionCounts{2, 1, 1, 1});
  CHECK(c.total() == 5);
  CHECK_THROWS_AS(binary_counts({true}, {}), ContractError);
}

TEST_CASE("macro F1") {
  std::map<std::string, ConfusionCounts> counts;
  counts["a"] = {3, 0, 0, 0};  // F1 1
  counts["b"] = {1, 1, 1, 0};  // F1 0.5
  counts["c"] = {0, 2, 2, 0};  // F1 0
  CHECK(macro_f1(counts, {"a", "b", "c"}) == doctest::Approx(0.5));
  CHECK(macro_f1({{"x", {1, 1, 1, 0}}, {"y", {1, 1, 1, 0}}}, {"x", "y"}) == doctest::Approx(0.5));
  CHECK(macro_f1(counts, {"a", "missing"}) == doctest::Approx(0.5));
  CHECK_THROWS_AS(macro_f1(counts, {}), ConfigError);

  // 3-class confusion matrix, rows truth, columns prediction:
  //        a  b  c
  //   a    4  1  0
  //   b    0  3  2
  //   c    1  0  4
  // F1 a = 8/10, F1 b = 6/9, F1 c = 8/11
  std::vector<std::string> truth, pred;
  const int m[3][3] = {{4, 1, 0}, {0, 3, 2}, {1, 0, 4}};
  const std::string names[3] = {"a", "b", "c"};
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      for (int n = 0; n < m[i][j]; ++n) {
        truth.push_back(names[i]);
        pred.push_back(names[j]);
      }
    }
  }
  const std::vector<std::string> classes = {"a", "b", "c"};
  const auto cc = class_counts(truth, pred, classes);
  CHECK(cc.at("b") == ConfusionCounts{3, 1, 2, 9});
  CHECK(macro_f1(cc, classes) == doctest::Approx((0.8 + 6.0 / 9.0 + 8.0 / 11.0) / 3.0));
}

TEST_CASE("mean and sample standard deviation") {
  const std::vector<double> v = {1, 2, 3, 4};
  CHECK(mean(v) == doctest::Approx(2.5));
  CHECK(sample_sd(v) == doctest::Approx(std::sqrt(5.0 / 3.0)));
  CHECK(sample_sd(std::vector<double>{7}) == 0.0);
  CHECK(mean(std::vector<double>{}) == 0.0);
}

TEST_CASE("index splits are disjoint and cover the input") {
  const auto s = split_indices(101, 0.6, 0.2, 9);
  CHECK(s.train.size() == 61);
  CHECK(s.validation.size() == 20);
  CHECK(s.test.size() == 20);
  std::set<std::size_t> all(s.train.begin(), s.train.end());
  all.insert(s.validation.begin(), s.validation.end());
  all.insert(s.test.begin(), s.test.end());
  CHECK(all.size() == 101);
  CHECK(*all.rbegin() == 100);
  const auto again = split_indices(101, 0.6, 0.2, 9);
  CHECK(again.train == s.train);
  CHECK(split_indices(101, 0.6, 0.2, 10).train != s.train);
  CHECK_THROWS_AS(split_indices(10, 0.8, 0.3, 1), ConfigError);
}

TEST_CASE("detection split divides normal tasks and tests every failure") {
  std::vector<EventSequence> seqs;
  for (int i = 0; i < 50; ++i) {
    EventSequence s;
    s.task_id = "t" + std::to_string(i);
    s.label = i % 10 == 3 ? TaskLabel::failed("x") : TaskLabel::normal();
    seqs.push_back(s);
  }
  const auto s = detection_split(seqs, 0.6, 0.2, 4);
  CHECK(s.train.size() == 27);  // round(0.6 * 45)
  CHECK(s.validation.size() == 9);
  CHECK(s.test.size() == 9 + 5);
  std::set<std::size_t> seen;
  for (const auto* part : {&s.train, &s.validation, &s.test}) {
    for (auto i : *part) CHECK(seen.insert(i).second);
  }
  CHECK(seen.size() == 50);
  for (auto i : s.train) CHECK_FALSE(seqs[i].label->failure);
  for (auto i : s.validation) CHECK_FALSE(seqs[i].label->failure);
  CHECK(std::count_if(s.test.begin(), s.test.end(), [&](auto i) { return seqs[i].label->failure; }) == 5);
}

TEST_CASE("stratified split keeps class proportions") {
  std::vector<std::string> labels;
  for (int i = 0; i < 17; ++i) labels.push_back("a");
  for (int i = 0; i < 16; ++i) labels.push_back("b");
  for (int i = 0; i < 17; ++i) labels.push_back("c");
  const auto s = stratified_split(labels, 0.6, 2);
  auto count = [&](const std::vector<std::size_t>& idx, const std::string& c) {
    return std::count_if(idx.begin(), idx.end(), [&](auto i) { return labels[i] == c; });
  };
  CHECK(count(s.train, "a") == 10);
  CHECK(count(s.train, "b") == 10);
  CHECK(count(s.test, "b") == 6);
  CHECK(s.train.size() + s.test.size() == labels.size());
  CHECK(std::is_sorted(s.train.begin(), s.train.end()));
}

TEST_CASE("report summaries and CSV output") {
  ExperimentReport r{Protocol::Robustness, "{}", {}};
  r.rows = {{"b=0.05", "f1", 0, 0.9}, {"b=0.05", "f1", 1, 0.8}, {"b=0.10", "f1", 0, 0.7}};
  const auto s = r.summary_of("b=0.05", "f1");
  CHECK(s.n == 2);
  CHECK(s.mean == doctest::Approx(0.85));
  CHECK(s.sd == doctest::Approx(std::sqrt(0.005)));
  CHECK(r.summary().size() == 2);
  CHECK(r.summary().front().setting == "b=0.05");
  CHECK_THROWS_AS(r.summary_of("b=0.20", "f1"), ContractError);

  std::ostringstream rows, summary;
  write_report_csv(rows, r);
  write_summary_csv(summary, r);
  CHECK(rows.str().rfind("protocol,setting,metric,repetition,value\nrobustness,b=0.05,f1,0,0.9\n", 0) == 0);
  CHECK(summary.str().rfind("protocol,setting,metric,n,mean,sd\n", 0) == 0);
  CHECK(ratio_setting(0.1) == "b=0.10");
  CHECK(window_setting(180) == "w=180");
}

TEST_CASE("protocol names") {
  for (auto p : {Protocol::Detection, Protocol::Fti, Protocol::EntropySweep, Protocol::Robustness}) {
    CHECK(parse_protocol(to_string(p)) == p);
  }
  CHECK_THROWS_AS(parse_protocol("rq5"), ConfigError);
}
