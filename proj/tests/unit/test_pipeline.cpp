#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <sstream>

#include "logfid/error.hpp"
#include "logfid/eval.hpp"

using namespace logfid;

namespace {

PipelineConfig tiny_config() {
  auto c = PipelineConfig::desk();
  c.encoder.d = 8;
  c.encoder.n_heads = 2;
  c.encoder.n_layers = 1;
  c.encoder.phase1_max_epochs = 2;
  c.encoder.phase2_max_epochs = 1;
  c.max_training_windows = 150;
  c.k = 4;
  c.n_tasks = 60;
  c.failure_ratio = 0.15;
  c.seed = 11;
  return c;
}

struct Trained {
  PipelineConfig config = tiny_config();
  SyntheticData data;
  Corpus corpus;
  ModelBundle bundle;

  Trained() {
    data = synthetic_data(WorkloadModel::default_model(), config);
    std::map<std::string, TaskLabel> labels;
    for (const auto& t : data.tasks) labels[t.sequence.task_id] = *t.sequence.label;
    corpus = corpus_from_records(data.records, labels, config.parser);
    bundle = train_bundle(corpus, config);
  }
};

const Trained& trained() {
  static const Trained t;
  return t;
}

}  // namespace

TEST_CASE("configuration JSON round-trips for both presets") {
  for (const auto& name : {"full", "desk"}) {
    const auto c = PipelineConfig::from_preset(name);
    const auto again = PipelineConfig::from_json(c.to_json());
    CHECK(again.to_json() == c.to_json());
    CHECK(again.hash() == c.hash());
  }
  CHECK(PipelineConfig::from_preset("full").hash() != PipelineConfig::from_preset("desk").hash());
  const auto full = PipelineConfig::from_preset("full");
  CHECK(full.parser.similarity_threshold == 0.45);
  CHECK(full.parser.depth == 5);
  CHECK(full.encoder.max_length == 32);
  CHECK(full.encoder.d == 128);
  CHECK(full.encoder.lambda == 0.1);
  CHECK(full.k == 10);
  CHECK(full.hmm_states == 2);
  CHECK(full.window_size == 180.0);
}

TEST_CASE("configuration overlays and rejects unknown or mistyped keys") {
  const auto c = PipelineConfig::from_json(R"({"preset": "desk", "k": 7, "encoder": {"lambda": 0.5}})");
  CHECK(c.k == 7);
  CHECK(c.encoder.lambda == 0.5);
  CHECK(c.encoder.d == PipelineConfig::desk().encoder.d);
  CHECK_THROWS_AS(PipelineConfig::from_json(R"({"kk": 7})"), ConfigError);
  CHECK_THROWS_AS(PipelineConfig::from_json(R"({"encoder": {"depth": 3}})"), ConfigError);
  CHECK_THROWS_AS(PipelineConfig::from_json(R"({"k": "ten"})"), ConfigError);
  CHECK_THROWS_AS(PipelineConfig::from_json(R"({"preset": "huge"})"), ConfigError);
  CHECK_THROWS_AS(PipelineConfig::from_json("{not json"), ConfigError);
  CHECK_THROWS_AS(PipelineConfig::from_json(R"({"window_size": -1})"), ConfigError);
  CHECK_THROWS_AS(PipelineConfig::from_json(R"({"splits": {"train_fraction": 0.9}})"), ConfigError);
  CHECK_THROWS_AS(PipelineConfig::from_json(R"({"fti": {"classifier": "svm"}})"), ConfigError);
}

TEST_CASE("training writes a bundle that round-trips bitwise") {
  const auto& t = trained();
  const auto bytes = serialize_bundle(t.bundle);
  const auto back = deserialize_bundle(bytes);
  CHECK(back.identical(t.bundle));
  CHECK(serialize_bundle(back) == bytes);
  CHECK(back.version == ModelBundle::kFormatVersion);
  CHECK(back.provenance.config_hash == t.config.hash());
  CHECK(back.provenance.seed == t.config.seed);
  CHECK(back.provenance.data_first_timestamp < back.provenance.data_last_timestamp);
  CHECK(back.models.fti.has_value());
  CHECK(back.vocabulary.size() == t.corpus.vocabulary.size());

  const auto path = (std::filesystem::temp_directory_path() / "logfid_test_bundle.bin").string();
  save_bundle(path, t.bundle);
  CHECK(load_bundle(path).identical(t.bundle));
  std::remove(path.c_str());
  CHECK_THROWS_AS(load_bundle(path), IoError);
}

TEST_CASE("corrupt bundles are rejected") {
  const auto bytes = serialize_bundle(trained().bundle);
  auto bumped = bytes;
  bumped[8] = static_cast<char>(ModelBundle::kFormatVersion + 1);
  CHECK_THROWS_AS(deserialize_bundle(bumped), FormatError);
  auto magic = bytes;
  magic[0] = 'X';
  CHECK_THROWS_AS(deserialize_bundle(magic), FormatError);
  for (std::size_t cut : {std::size_t{0}, std::size_t{5}, bytes.size() / 3, bytes.size() - 1}) {
    CHECK_THROWS_AS(deserialize_bundle(bytes.substr(0, cut)), FormatError);
  }
  CHECK_THROWS_AS(deserialize_bundle(bytes + "x"), FormatError);
}

TEST_CASE("training is deterministic under a fixed seed") {
  const auto& t = trained();
  const auto again = train_bundle(t.corpus, t.config);
  CHECK(again.identical(t.bundle));
  auto other = t.config;
  other.seed = 12;
  CHECK_FALSE(train_bundle(t.corpus, other).identical(t.bundle));
}

TEST_CASE("online detection scores every task") {
  const auto& t = trained();
  const auto verdicts = detect_records(t.bundle, t.data.records);
  REQUIRE(verdicts.size() == t.data.tasks.size());
  for (std::size_t i = 0; i < verdicts.size(); ++i) {
    const auto& v = verdicts[i];
    CHECK(v.detection.task_id == t.data.tasks[i].sequence.task_id);
    CHECK(std::isfinite(v.detection.score));
    CHECK(v.detection.score >= 0.0);
    CHECK(v.failure_type.empty() == !v.detection.failure);
  }
  CHECK(detect_records(t.bundle, {}).empty());

  std::ostringstream out;
  write_verdicts_csv(out, {verdicts.front()});
  CHECK(out.str().rfind("task_id,log_score,score,verdict,failure_type\n", 0) == 0);
}

TEST_CASE("lines outside the frozen vocabulary map to the unknown event") {
  const auto& vocab = trained().bundle.vocabulary;
  std::vector<RawLogRecord> records = {
      {1.0, "a", "keystone token issued for user 42", std::nullopt},
      {2.0, "a", "completely novel message never seen", std::nullopt},
  };
  const auto seqs = parse_with_vocabulary(records, vocab, ParserConfig{});
  REQUIRE(seqs.size() == 1);
  CHECK(seqs[0].events[0].event_id == 0);
  CHECK(seqs[0].events[1].event_id == static_cast<EventId>(vocab.size()));
}

TEST_CASE("training names the failing stage") {
  const auto& t = trained();
  std::vector<EventSequence> normals;
  for (const auto& s : t.corpus.sequences) {
    if (!s.label->failure) normals.push_back(s);
  }
  CHECK_THROWS_AS(train_detector({}, normals, t.corpus.num_events(), t.config), ConfigError);
  CHECK_THROWS_AS(train_detector(normals, {normals[0]}, t.corpus.num_events(), t.config), ConfigError);

  auto broken = normals;
  broken[0].events.clear();
  try {
    train_detector(broken, normals, t.corpus.num_events(), t.config);
    FAIL("expected an error");
  } catch (const DegenerateInputError& e) {
    CHECK(std::string(e.what()).rfind("windowing: ", 0) == 0);
  }
}
