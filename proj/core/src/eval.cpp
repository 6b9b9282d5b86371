#include "logfid/eval.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <set>
#include <ostream>
#include <random>
#include <sstream>

#include "logfid/csv.hpp"
#include "logfid/error.hpp"
#include "logfid/seed.hpp"

namespace logfid {

namespace {

double ratio(long num, long den) { return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den); }

bool is_failure(const EventSequence& s) { return s.label && s.label->failure; }

// Seed streams for the protocols, all derived from the master seed.
constexpr std::uint64_t kCorpusStream = 1;
constexpr std::uint64_t kFailureStream = 2;
constexpr std::uint64_t kRenderStream = 3;
constexpr std::uint64_t kDetectionStream = 1000;
constexpr std::uint64_t kInstabilityStream = 7;
constexpr std::uint64_t kFtiModelStream = 2000;
constexpr std::uint64_t kFtiSplitStream = 3000;
constexpr std::uint64_t kEntropyStream = 4000;
constexpr std::uint64_t kOfflineSplitStream = 5000;

}  // namespace

Scores prf1(const ConfusionCounts& c) {
  Scores s;
  s.precision = ratio(c.tp, c.tp + c.fp);
  s.recall = ratio(c.tp, c.tp + c.fn);
  const double denom = s.precision + s.recall;
  s.f1 = denom == 0.0 ? 0.0 : 2.0 * s.precision * s.recall / denom;
  return s;
}

ConfusionCounts binary_counts(const std::vector<bool>& truth, const std::vector<bool>& predicted) {
  if (truth.size() != predicted.size()) throw ContractError("truth and predictions differ in length");
  ConfusionCounts c;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] && predicted[i]) ++c.tp;
    else if (!truth[i] && predicted[i]) ++c.fp;
    else if (truth[i] && !predicted[i]) ++c.fn;
    else ++c.tn;
  }
  return c;
}

std::map<std::string, ConfusionCounts> class_counts(const std::vector<std::string>& truth,
                                                    const std::vector<std::string>& predicted,
                                                    const std::vector<std::string>& classes) {
  if (truth.size() != predicted.size()) throw ContractError("truth and predictions differ in length");
  std::map<std::string, ConfusionCounts> out;
  for (const auto& c : classes) {
    auto& k = out[c];
    for (std::size_t i = 0; i < truth.size(); ++i) {
      const bool t = truth[i] == c;
      const bool p = predicted[i] == c;
      if (t && p) ++k.tp;
      else if (!t && p) ++k.fp;
      else if (t && !p) ++k.fn;
      else ++k.tn;
    }
  }
  return out;
}

double macro_f1(const std::map<std::string, ConfusionCounts>& counts,
                const std::vector<std::string>& classes) {
  if (classes.empty()) throw ConfigError("macro F1 needs at least one class");
  double sum = 0.0;
  for (const auto& c : classes) {
    auto it = counts.find(c);
    if (it != counts.end()) sum += prf1(it->second).f1;
  }
  return sum / static_cast<double>(classes.size());
}

double mean(std::span<const double> values) {
  if (values.empty()) return 0.0;
  return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

double sample_sd(std::span<const double> values) {
  if (values.size() < 2) return 0.0;
  const double m = mean(values);
  double ss = 0.0;
  for (double v : values) ss += (v - m) * (v - m);
  return std::sqrt(ss / static_cast<double>(values.size() - 1));
}

std::string to_string(Protocol p) {
  switch (p) {
    case Protocol::Detection: return "detection";
    case Protocol::Fti: return "fti";
    case Protocol::EntropySweep: return "entropy_sweep";
    case Protocol::Robustness: return "robustness";
  }
  return "?";
}

Protocol parse_protocol(const std::string& name) {
  if (name == "detection") return Protocol::Detection;
  if (name == "fti") return Protocol::Fti;
  if (name == "entropy_sweep" || name == "entropy") return Protocol::EntropySweep;
  if (name == "robustness") return Protocol::Robustness;
  throw ConfigError("unknown protocol '" + name + "' (expected detection, fti, entropy_sweep or robustness)");
}

std::vector<SummaryRow> ExperimentReport::summary() const {
  std::vector<std::pair<std::string, std::string>> order;
  std::map<std::pair<std::string, std::string>, std::vector<double>> values;
  for (const auto& r : rows) {
    auto key = std::make_pair(r.setting, r.metric);
    auto [it, inserted] = values.try_emplace(key);
    if (inserted) order.push_back(key);
    it->second.push_back(r.value);
  }
  std::vector<SummaryRow> out;
  for (const auto& key : order) {
    const auto& v = values[key];
    out.push_back({key.first, key.second, v.size(), mean(v), sample_sd(v)});
  }
  return out;
}

SummaryRow ExperimentReport::summary_of(const std::string& setting, const std::string& metric) const {
  for (const auto& s : summary()) {
    if (s.setting == setting && s.metric == metric) return s;
  }
  throw ContractError("report has no " + setting + "/" + metric + " rows");
}

void write_report_csv(std::ostream& out, const ExperimentReport& report) {
  csv::write_row(out, {"protocol", "setting", "metric", "repetition", "value"});
  for (const auto& r : report.rows) {
    csv::write_row(out, {to_string(report.protocol), r.setting, r.metric, std::to_string(r.repetition),
                         csv::format_double(r.value)});
  }
}

void write_summary_csv(std::ostream& out, const ExperimentReport& report) {
  csv::write_row(out, {"protocol", "setting", "metric", "n", "mean", "sd"});
  for (const auto& s : report.summary()) {
    csv::write_row(out, {to_string(report.protocol), s.setting, s.metric, std::to_string(s.n),
                         csv::format_double(s.mean), csv::format_double(s.sd)});
  }
}

void write_summary_text(std::ostream& out, const ExperimentReport& report) {
  out << "protocol: " << to_string(report.protocol) << "\n\n";
  out << std::left << std::setw(16) << "setting" << std::setw(18) << "metric" << std::right
      << std::setw(5) << "n" << std::setw(12) << "mean" << std::setw(12) << "sd" << "\n";
  for (const auto& s : report.summary()) {
    std::ostringstream m, d;
    m << std::fixed << std::setprecision(4) << s.mean;
    d << std::fixed << std::setprecision(4) << s.sd;
    out << std::left << std::setw(16) << s.setting << std::setw(18) << s.metric << std::right
        << std::setw(5) << s.n << std::setw(12) << m.str() << std::setw(12) << d.str() << "\n";
  }
  out << "\nconfiguration:\n" << report.config_json << "\n";
}

SyntheticData synthetic_data(const WorkloadModel& model, const PipelineConfig& config) {
  config.validate();
  SyntheticData d;
  d.tasks = generate_corpus(model, config.n_tasks, derive_seed(config.seed, kCorpusStream));
  inject_failures(d.tasks, model, config.failure_ratio, derive_seed(config.seed, kFailureStream));
  d.records = render_records(d.tasks, model, derive_seed(config.seed, kRenderStream));
  return d;
}

Corpus corpus_from_records(const std::vector<RawLogRecord>& records,
                           const std::map<std::string, TaskLabel>& labels, const ParserConfig& parser) {
  auto parsed = parse_corpus(records, parser);
  attach_labels(parsed.sequences, labels);
  return {std::move(parsed.sequences), std::move(parsed.vocabulary)};
}

Corpus synthetic_corpus(const WorkloadModel& model, const PipelineConfig& config) {
  const auto data = synthetic_data(model, config);
  std::map<std::string, TaskLabel> labels;
  for (const auto& t : data.tasks) labels[t.sequence.task_id] = *t.sequence.label;
  return corpus_from_records(data.records, labels, config.parser);
}

Split split_indices(std::size_t n, double train_fraction, double validation_fraction,
                    std::uint64_t seed) {
  if (!(train_fraction > 0.0) || !(validation_fraction >= 0.0) ||
      train_fraction + validation_fraction > 1.0) {
    throw ConfigError("invalid split fractions");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n)));
  const auto n_val = std::min(n - n_train, static_cast<std::size_t>(
                                               std::llround(validation_fraction * static_cast<double>(n))));
  Split s;
  s.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.validation.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train),
                      order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  s.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), order.end());
  return s;
}

Split detection_split(const std::vector<EventSequence>& sequences, double train_fraction,
                      double validation_fraction, std::uint64_t seed) {
  std::vector<std::size_t> normals, failures;
  for (std::size_t i = 0; i < sequences.size(); ++i) {
    (is_failure(sequences[i]) ? failures : normals).push_back(i);
  }
  const auto local = split_indices(normals.size(), train_fraction, validation_fraction, seed);
  Split s;
  for (auto i : local.train) s.train.push_back(normals[i]);
  for (auto i : local.validation) s.validation.push_back(normals[i]);
  for (auto i : local.test) s.test.push_back(normals[i]);
  s.test.insert(s.test.end(), failures.begin(), failures.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

Split stratified_split(const std::vector<std::string>& labels, double train_fraction,
                       std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ConfigError("invalid split fraction");
  std::map<std::string, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
  std::mt19937_64 rng(seed);
  Split s;
  for (auto& [label, idx] : by_class) {
    std::shuffle(idx.begin(), idx.end(), rng);
    const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(idx.size())));
    s.train.insert(s.train.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
    s.test.insert(s.test.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
  }
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

std::string ratio_setting(double b) {
  std::ostringstream out;
  out << "b=" << std::fixed << std::setprecision(2) << b;
  return out.str();
}

std::string window_setting(double w) { return "w=" + csv::format_double(w); }

namespace {

void notify(const Progress& progress, const std::string& message) {
  if (progress) progress(message);
}

std::vector<EventSequence> pick(const Corpus& corpus, const std::vector<std::size_t>& idx,
                                bool normal_only) {
  std::vector<EventSequence> out;
  for (auto i : idx) {
    if (!normal_only || !is_failure(corpus.sequences[i])) out.push_back(corpus.sequences[i]);
  }
  return out;
}

void add_scores(ExperimentReport& report, const std::string& setting, int rep, const Scores& s) {
  report.rows.push_back({setting, "precision", rep, s.precision});
  report.rows.push_back({setting, "recall", rep, s.recall});
  report.rows.push_back({setting, "f1", rep, s.f1});
}

Scores detection_scores(const TrainedModels& models, const SubprocessExtractor& extractor,
                        const std::vector<EventSequence>& test, double window_size) {
  std::vector<bool> truth, predicted;
  for (const auto& s : test) {
    truth.push_back(is_failure(s));
    predicted.push_back(classify(models, extractor, s, window_size).detection.failure);
  }
  const auto c = binary_counts(truth, predicted);
  return prf1(c);
}

std::pair<ExperimentReport, ExperimentReport> detection_protocols(const Corpus& corpus,
                                                                  const PipelineConfig& config,
                                                                  bool robustness,
                                                                  const Progress& progress) {
  config.validate();
  ExperimentReport detection{Protocol::Detection, config.to_json(), {}};
  ExperimentReport robust{Protocol::Robustness, config.to_json(), {}};
  for (int rep = 0; rep < config.detection_repetitions; ++rep) {
    const auto rep_seed = derive_seed(config.seed, kDetectionStream + static_cast<std::uint64_t>(rep));
    const auto split = detection_split(corpus.sequences, config.train_fraction,
                                      config.validation_fraction, rep_seed);
    const auto train = pick(corpus, split.train, true);
    const auto validation = pick(corpus, split.validation, true);
    const auto test = pick(corpus, split.test, false);
    if (test.empty()) throw ConfigError("the detection split leaves no test sequences");
    PipelineConfig cfg = config;
    cfg.seed = rep_seed;
    notify(progress, "detection repetition " + std::to_string(rep + 1) + "/" +
                         std::to_string(config.detection_repetitions) + ": training");
    const auto models = train_detector(train, validation, corpus.num_events(), cfg);
    const auto extractor = make_extractor(models);
    add_scores(detection, "detection", rep, detection_scores(models, extractor, test, cfg.window_size));
    if (!robustness) continue;
    for (double b : config.injection_ratios) {
      auto perturbed = test;
      InjectionConfig inj;
      inj.ratio = b;
      inj.seed = derive_seed(rep_seed, kInstabilityStream);
      inject_instability(perturbed, inj);
      add_scores(robust, ratio_setting(b), rep, detection_scores(models, extractor, perturbed, cfg.window_size));
    }
  }
  return {std::move(detection), std::move(robust)};
}

}  // namespace

ExperimentReport run_detection(const Corpus& corpus, const PipelineConfig& config,
                               const Progress& progress) {
  return detection_protocols(corpus, config, false, progress).first;
}

ExperimentReport run_robustness(const Corpus& corpus, const PipelineConfig& config,
                                const Progress& progress) {
  return detection_protocols(corpus, config, true, progress).second;
}

std::pair<ExperimentReport, ExperimentReport> run_detection_and_robustness(
    const Corpus& corpus, const PipelineConfig& config, const Progress& progress) {
  return detection_protocols(corpus, config, true, progress);
}

ExperimentReport run_fti(const Corpus& corpus, const PipelineConfig& config, const Progress& progress) {
  config.validate();
  ExperimentReport report{Protocol::Fti, config.to_json(), {}};
  const auto model_seed = derive_seed(config.seed, kFtiModelStream);
  const auto split = detection_split(corpus.sequences, config.train_fraction,
                                    config.validation_fraction, model_seed);
  PipelineConfig cfg = config;
  cfg.seed = model_seed;
  notify(progress, "fti: training the subprocess model");
  const auto models = train_detector(pick(corpus, split.train, true), pick(corpus, split.validation, true),
                                     corpus.num_events(), cfg);
  const auto extractor = make_extractor(models);

  std::vector<std::vector<int>> ids;
  std::vector<double> scores;
  std::vector<std::string> labels;
  for (const auto& s : corpus.sequences) {
    if (!is_failure(s)) continue;
    const auto subs = to_subprocesses(extractor, s, cfg.window_size);
    scores.push_back(detect(models.hmm, models.thresholds, subs).score);
    ids.push_back(subs.subprocess_ids);
    labels.push_back(s.label->failure_type);
  }
  std::vector<std::string> classes = labels;
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
  if (classes.size() < 2) throw ConfigError("FTI needs at least two failure types in the corpus");

  const Representation reps[] = {Representation::CountVector, Representation::Phmm,
                                 Representation::CountVectorPhmm};
  const ClassifierKind kinds[] = {ClassifierKind::LogisticRegression, ClassifierKind::DecisionTree,
                                  ClassifierKind::RandomForest};
  for (int rep = 0; rep < config.fti_repetitions; ++rep) {
    if (rep % 10 == 0) {
      notify(progress, "fti repetition " + std::to_string(rep + 1) + "/" + std::to_string(config.fti_repetitions));
    }
    const auto rep_seed = derive_seed(config.seed, kFtiSplitStream + static_cast<std::uint64_t>(rep));
    const auto s = stratified_split(labels, config.fti_train_fraction, rep_seed);
    if (s.test.empty()) throw ConfigError("the FTI split leaves no test sequences");
    for (auto r : reps) {
      auto features = [&](std::size_t i) {
        return fti_features(ids[i], models.centroids.k(), scores[i], r);
      };
      std::vector<std::vector<double>> x;
      std::vector<std::string> y;
      for (auto i : s.train) {
        x.push_back(features(i));
        y.push_back(labels[i]);
      }
      double sum = 0.0;
      for (auto kind : kinds) {
        FtiOptions options = config.fti;
        options.kind = kind;
        options.seed = rep_seed;
        const auto model = fit_fti(x, y, options);
        std::vector<std::string> truth, predicted;
        for (auto i : s.test) {
          truth.push_back(labels[i]);
          predicted.push_back(model.predict(features(i)));
        }
        const double f1 = macro_f1(class_counts(truth, predicted, classes), classes);
        report.rows.push_back({to_string(r) + "/" + to_string(kind), "macro_f1", rep, f1});
        sum += f1;
      }
      report.rows.push_back({to_string(r), "macro_f1", rep, sum / 3.0});
    }
  }
  return report;
}

ExperimentReport run_entropy_sweep(const Corpus& corpus, const PipelineConfig& config,
                                   const Progress& progress) {
  config.validate();
  if (config.window_sizes.empty()) throw ConfigError("the entropy sweep needs window sizes");
  ExperimentReport report{Protocol::EntropySweep, config.to_json(), {}};
  const auto seed = derive_seed(config.seed, kEntropyStream);
  const auto split = detection_split(corpus.sequences, config.train_fraction,
                                    config.validation_fraction, seed);
  const auto train = pick(corpus, split.train, true);
  const auto validation = pick(corpus, split.validation, true);

  const auto event_row = entropy_report(corpus.sequences, {}).front();
  report.rows.push_back({"event", "mean_entropy", 0, event_row.mean_entropy});
  report.rows.push_back({"event", "mean_symbols", 0, event_row.mean_symbols});
  for (double w : config.window_sizes) {
    notify(progress, "entropy sweep: window " + csv::format_double(w) + " s");
    PipelineConfig cfg = config;
    cfg.seed = seed;
    cfg.window_size = w;
    const auto models = train_detector(train, validation, corpus.num_events(), cfg);
    const auto extractor = make_extractor(models);
    const SubprocessMap map = [&](double, std::span<const EventId> win) { return extractor.extract(win).id; };
    const auto rows = entropy_report(corpus.sequences, {w}, map);
    report.rows.push_back({window_setting(w), "mean_entropy", 0, rows.back().mean_entropy});
    report.rows.push_back({window_setting(w), "mean_symbols", 0, rows.back().mean_symbols});
  }
  return report;
}

ExperimentReport run_protocol(Protocol protocol, const Corpus& corpus, const PipelineConfig& config,
                              const Progress& progress) {
  switch (protocol) {
    case Protocol::Detection: return run_detection(corpus, config, progress);
    case Protocol::Fti: return run_fti(corpus, config, progress);
    case Protocol::EntropySweep: return run_entropy_sweep(corpus, config, progress);
    case Protocol::Robustness: return run_robustness(corpus, config, progress);
  }
  throw ConfigError("unknown protocol");
}

ModelBundle train_bundle(const Corpus& corpus, const PipelineConfig& config, const Progress& progress) {
  config.validate();
  std::vector<std::size_t> normals;
  std::vector<EventSequence> failures;
  std::set<std::string> types;
  for (std::size_t i = 0; i < corpus.sequences.size(); ++i) {
    const auto& s = corpus.sequences[i];
    if (is_failure(s)) {
      failures.push_back(s);
      types.insert(s.label->failure_type);
    } else {
      normals.push_back(i);
    }
  }
  const double share = config.train_fraction / (config.train_fraction + config.validation_fraction);
  const auto split = split_indices(normals.size(), share, 1.0 - share,
                                   derive_seed(config.seed, kOfflineSplitStream));
  std::vector<EventSequence> train, validation;
  for (auto i : split.train) train.push_back(corpus.sequences[normals[i]]);
  for (auto i : split.validation) validation.push_back(corpus.sequences[normals[i]]);

  ModelBundle bundle;
  bundle.parser = config.parser;
  bundle.vocabulary = corpus.vocabulary;
  bundle.window_size = config.window_size;
  notify(progress, "training on " + std::to_string(train.size()) + " normal tasks, calibrating on " +
                       std::to_string(validation.size()));
  bundle.models = train_detector(train, validation, corpus.num_events(), config);
  if (types.size() >= 2) {
    notify(progress, "fitting the failure type classifier on " + std::to_string(failures.size()) + " tasks");
    train_fti(bundle.models, failures, config);
  }

  bundle.provenance.config_hash = config.hash();
  bundle.provenance.seed = config.seed;
  bundle.provenance.config_json = config.to_json();
  bool first = true;
  for (const auto& s : corpus.sequences) {
    for (const auto& e : s.events) {
      if (first || e.timestamp < bundle.provenance.data_first_timestamp) bundle.provenance.data_first_timestamp = e.timestamp;
      if (first || e.timestamp > bundle.provenance.data_last_timestamp) bundle.provenance.data_last_timestamp = e.timestamp;
      first = false;
    }
  }
  return bundle;
}

}  // namespace logfid
