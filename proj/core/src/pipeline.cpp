#include "logfid/pipeline.hpp"

#include <algorithm>
#include <numeric>
#include <ostream>
#include <random>

#include "logfid/csv.hpp"
#include "logfid/error.hpp"
#include "logfid/seed.hpp"

namespace logfid {

namespace {

// Streams derived from the pipeline seed, one per stochastic stage.
constexpr std::uint64_t kWindowSampleStream = 101;
constexpr std::uint64_t kKMeansStream = 102;
constexpr std::uint64_t kHmmStream = 103;
constexpr std::uint64_t kFtiStream = 104;

[[noreturn]] void rethrow_in_stage(const std::string& stage, const Error& e) {
  const std::string what = stage + ": " + e.what();
  switch (e.kind()) {
    case ErrorKind::Config: throw ConfigError(what);
    case ErrorKind::Degenerate: throw DegenerateInputError(what);
    case ErrorKind::Contract: throw ContractError(what);
    case ErrorKind::State: throw StateError(what);
    case ErrorKind::Numeric: throw NumericError(what);
    case ErrorKind::Format: throw FormatError(what);
    case ErrorKind::Io: throw IoError(what);
  }
  throw Error(e.kind(), what);
}

template <class F>
auto stage(const std::string& name, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const Error& e) {
    rethrow_in_stage(name, e);
  }
}

}  // namespace

TrainedModels train_detector(const std::vector<EventSequence>& train,
                             const std::vector<EventSequence>& validation, int num_events,
                             const PipelineConfig& config, TrainingLog* log) {
  config.validate();
  if (train.empty()) throw ConfigError("no normal sequences to train on");
  if (validation.size() < 2) throw ConfigError("calibration needs at least 2 normal validation sequences");
  if (num_events < 1) throw ConfigError("the event vocabulary is empty");

  TrainingConfig enc = config.encoder;
  enc.seed = config.seed;
  TrainedModels models;

  std::vector<std::vector<EventId>> windows;
  stage("windowing", [&] {
    for (const auto& seq : train) {
      for (auto& w : window(seq, config.window_size).windows) windows.push_back(std::move(w));
    }
    const auto cap = static_cast<std::size_t>(config.max_training_windows);
    if (cap > 0 && windows.size() > cap) {
      std::mt19937_64 rng(derive_seed(config.seed, kWindowSampleStream));
      std::shuffle(windows.begin(), windows.end(), rng);
      windows.resize(cap);
    }
  });

  std::vector<MaskedSample> samples;
  stage("token weights", [&] {
    std::vector<long> counts(static_cast<std::size_t>(num_events), 0);
    for (const auto& seq : train) {
      for (const auto& e : seq.events) {
        if (e.event_id >= 0 && e.event_id < num_events) ++counts[static_cast<std::size_t>(e.event_id)];
      }
    }
    models.tokens = compute_token_weights(counts);
    for (std::size_t i = 0; i < windows.size(); ++i) {
      std::vector<int> events(windows[i].begin(), windows[i].end());
      for (auto& e : events) {
        if (!models.tokens.is_event(e)) e = models.tokens.unknown();
      }
      const auto padded = pad_and_prepend(events, enc.max_length, models.tokens);
      auto set = generate_masked_set(padded, models.tokens, {i, 0});
      samples.insert(samples.end(), set.begin(), set.end());
    }
  });

  const auto pre = stage("pretraining", [&] { return pretrain(samples, models.tokens, enc); });

  const auto centroids = stage("centroid initialization", [&] {
    std::vector<RowVector> embeddings;
    embeddings.reserve(samples.size());
    for (const auto& s : samples) embeddings.push_back(embed(pre.params, s.tokens));
    return initialize_centroids(embeddings, config.k, derive_seed(config.seed, kKMeansStream));
  });

  auto joint = stage("joint training", [&] {
    return joint_train(pre.params, centroids, samples, models.tokens, enc);
  });
  models.encoder = std::move(joint.params);
  models.centroids = std::move(joint.centroids);

  const auto extractor = make_extractor(models);
  std::vector<SubprocessSequence> train_subs, val_subs;
  stage("subprocess extraction", [&] {
    for (const auto& s : train) train_subs.push_back(to_subprocesses(extractor, s, config.window_size));
    for (const auto& s : validation) val_subs.push_back(to_subprocesses(extractor, s, config.window_size));
  });

  HmmFitTrace trace;
  models.hmm = stage("hmm fit", [&] {
    return fit_hmm(train_subs, config.hmm_states, config.k, derive_seed(config.seed, kHmmStream),
                   config.hmm, &trace);
  });
  models.thresholds = stage("calibration", [&] { return calibrate(models.hmm, val_subs); });
  models.fti_representation = config.fti_representation;

  if (log) {
    log->pretrain_losses = pre.epoch_losses;
    log->joint_losses = joint.train_masked_loss;
    log->hmm = std::move(trace);
    log->training_windows = windows.size();
    log->masked_samples = samples.size();
  }
  return models;
}

SubprocessExtractor make_extractor(const TrainedModels& models) {
  return SubprocessExtractor(models.encoder, models.centroids, models.tokens);
}

SubprocessSequence to_subprocesses(const SubprocessExtractor& extractor, const EventSequence& seq,
                                   double window_size) {
  return extractor.sequence(window(seq, window_size));
}

void train_fti(TrainedModels& models, const std::vector<EventSequence>& failures,
               const PipelineConfig& config) {
  const auto extractor = make_extractor(models);
  std::vector<std::vector<double>> x;
  std::vector<std::string> y;
  stage("fti features", [&] {
    for (const auto& seq : failures) {
      if (!seq.label || !seq.label->failure) {
        throw ContractError("sequence " + seq.task_id + " is not a labeled failure");
      }
      const auto subs = to_subprocesses(extractor, seq, config.window_size);
      const auto d = detect(models.hmm, models.thresholds, subs);
      x.push_back(fti_features(subs.subprocess_ids, models.centroids.k(), d.score,
                               config.fti_representation));
      y.push_back(seq.label->failure_type);
    }
  });
  FtiOptions options = config.fti;
  options.seed = derive_seed(config.seed, kFtiStream);
  models.fti = stage("fti fit", [&] { return fit_fti(x, y, options); });
  models.fti_representation = config.fti_representation;
}

Verdict classify(const TrainedModels& models, const SubprocessExtractor& extractor,
                 const EventSequence& seq, double window_size) {
  Verdict v;
  const auto subs = to_subprocesses(extractor, seq, window_size);
  v.detection = detect(models.hmm, models.thresholds, subs);
  if (v.detection.failure && models.fti) {
    const auto x = fti_features(subs.subprocess_ids, models.centroids.k(), v.detection.score,
                                models.fti_representation);
    v.failure_type = models.fti->predict(x);
  }
  return v;
}

void write_verdicts_csv(std::ostream& out, const std::vector<Verdict>& rows) {
  csv::write_row(out, {"task_id", "log_score", "score", "verdict", "failure_type"});
  for (const auto& r : rows) {
    csv::write_row(out, {r.detection.task_id, csv::format_double(r.detection.log_score),
                         csv::format_double(r.detection.score),
                         r.detection.failure ? "failure" : "normal", r.failure_type});
  }
}

void attach_labels(std::vector<EventSequence>& corpus,
                   const std::map<std::string, TaskLabel>& labels) {
  for (auto& seq : corpus) {
    auto it = labels.find(seq.task_id);
    if (it != labels.end()) seq.label = it->second;
  }
}

ParsedCorpus parse_corpus(const std::vector<RawLogRecord>& records, const ParserConfig& config) {
  Parser parser(config);
  std::vector<EventId> ids;
  ids.reserve(records.size());
  for (const auto& r : records) ids.push_back(parser.parse(r).event_id);
  return {export_vocabulary(parser), group_by_task(records, ids)};
}

std::vector<EventSequence> parse_with_vocabulary(const std::vector<RawLogRecord>& records,
                                                 const std::vector<LogTemplate>& vocabulary,
                                                 const ParserConfig& config) {
  const Parser parser = Parser::from_vocabulary(vocabulary, config);
  const auto unknown = static_cast<EventId>(vocabulary.size());
  std::vector<EventId> ids;
  ids.reserve(records.size());
  for (const auto& r : records) {
    validate_record(r);
    ids.push_back(parser.match(r.content).value_or(unknown));
  }
  return group_by_task(records, ids);
}

std::vector<Verdict> detect_records(const ModelBundle& bundle, const std::vector<RawLogRecord>& records) {
  const auto sequences = parse_with_vocabulary(records, bundle.vocabulary, bundle.parser);
  const auto extractor = make_extractor(bundle.models);
  std::vector<Verdict> out;
  out.reserve(sequences.size());
  for (const auto& seq : sequences) out.push_back(classify(bundle.models, extractor, seq, bundle.window_size));
  return out;
}

}  // namespace logfid
