// logfid: generate, inject, train, detect, entropy, experiment, eval.
//
// Exit codes: 0 success, 1 usage or configuration, 2 data, 3 numeric.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "logfid/csv.hpp"
#include "logfid/error.hpp"
#include "logfid/eval.hpp"
#include "logfid/records.hpp"
#include "logfid/synth.hpp"

namespace {

using nlohmann::ordered_json;
using namespace logfid;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

bool quiet = false;

void note(const std::string& message) {
  if (!quiet) std::cerr << "logfid: " << message << "\n";
}

void set_path(ordered_json& j, const std::string& dotted, ordered_json value) {
  ordered_json* node = &j;
  std::size_t start = 0;
  for (;;) {
    const auto dot = dotted.find('.', start);
    const std::string key = dotted.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) throw UsageError("malformed configuration key '" + dotted + "'");
    if (dot == std::string::npos) {
      (*node)[key] = std::move(value);
      return;
    }
    if (!node->contains(key) || !(*node)[key].is_object()) (*node)[key] = ordered_json::object();
    node = &(*node)[key];
    start = dot + 1;
  }
}

// Configuration layering: preset, then the --config file, then flags.
class ConfigFlags {
 public:
  void attach(CLI::App* cmd) {
    cmd->add_option("-c,--config", file_, "JSON configuration file");
    cmd->add_option("--preset", preset_, "full or desk");
    bind<std::uint64_t>(cmd, "--seed", "seed", "master seed");
    cmd->add_option("--set", sets_, "override any configuration key, e.g. --set encoder.lambda=0.01")
        ->take_all();
  }

  template <class T>
  void bind(CLI::App* cmd, const std::string& flag, const std::string& key, const std::string& help) {
    auto value = std::make_shared<T>();
    CLI::Option* opt = cmd->add_option(flag, *value, help);
    setters_.push_back([value, opt, key](ordered_json& j) {
      if (opt->count() > 0) set_path(j, key, *value);
    });
  }

  PipelineConfig resolve() const {
    ordered_json j = ordered_json::object();
    if (!file_.empty()) {
      std::ifstream in(file_);
      if (!in) throw IoError("cannot read configuration file " + file_);
      try {
        j = ordered_json::parse(in);
      } catch (const nlohmann::json::exception& e) {
        throw ConfigError("configuration file " + file_ + " is not valid JSON: " + e.what());
      }
    }
    if (!preset_.empty()) j["preset"] = preset_;
    for (const auto& s : setters_) s(j);
    for (const auto& s : sets_) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + s + "'");
      const std::string value = s.substr(eq + 1);
      ordered_json parsed;
      try {
        parsed = ordered_json::parse(value);
      } catch (const nlohmann::json::exception&) {
        parsed = value;
      }
      set_path(j, s.substr(0, eq), std::move(parsed));
    }
    return PipelineConfig::from_json(j.dump());
  }

 private:
  std::string file_;
  std::string preset_;
  std::vector<std::string> sets_;
  std::vector<std::function<void(ordered_json&)>> setters_;
};

const std::string& require(const std::string& value, const std::string& flag) {
  if (value.empty()) throw UsageError(flag + " is required");
  return value;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  return out;
}

// "-" or empty means stdout.
template <class F>
void write_to(const std::string& path, F&& write) {
  if (path.empty() || path == "-") {
    write(std::cout);
    return;
  }
  auto out = open_out(path);
  write(out);
  if (!out) throw IoError("write failed for " + path);
}

std::map<std::string, TaskLabel> load_labels(const std::string& path) {
  if (path.empty()) return {};
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path);
  return read_ground_truth_csv(in);
}

Corpus load_or_generate(const PipelineConfig& config) {
  if (config.input.empty()) {
    note("no input given; generating " + std::to_string(config.n_tasks) + " synthetic tasks");
    return synthetic_corpus(WorkloadModel::default_model(), config);
  }
  return corpus_from_records(read_records_file(config.input), load_labels(config.labels), config.parser);
}

const Progress progress = [](const std::string& m) { note(m); };

// generate -----------------------------------------------------------------

int cmd_generate(const PipelineConfig& config) {
  const auto model = WorkloadModel::default_model();
  const auto data = synthetic_data(model, config);
  write_records_file(require(config.output, "--output"), data.records);
  auto out = open_out(require(config.labels, "--labels"));
  write_ground_truth_csv(out, data.tasks, model);
  note("wrote " + std::to_string(data.records.size()) + " records for " +
       std::to_string(data.tasks.size()) + " tasks");
  return kExitOk;
}

// inject -------------------------------------------------------------------

struct InjectFlags {
  double ratio = 0.1;
  std::string ops = "remove,duplicate,shuffle";
  std::string modified;
};

// Instability operations act on log lines: each task becomes a sequence
// whose "events" are indices into the record list.
int cmd_inject(const PipelineConfig& config, const InjectFlags& flags) {
  const auto records = read_records_file(require(config.input, "--input"));
  std::vector<EventId> ids(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) ids[i] = static_cast<EventId>(i);
  auto tasks = group_by_task(records, ids);

  InjectionConfig inj;
  inj.ratio = flags.ratio;
  inj.seed = config.seed;
  inj.operations.clear();
  std::stringstream list(flags.ops);
  for (std::string op; std::getline(list, op, ',');) {
    if (!op.empty()) inj.operations.push_back(parse_instability_op(op));
  }
  const auto touched = inject_instability(tasks, inj);

  std::vector<RawLogRecord> out;
  out.reserve(records.size() + touched.size());
  for (const auto& t : tasks) {
    for (const auto& e : t.events) {
      auto r = records[static_cast<std::size_t>(e.event_id)];
      r.timestamp = e.timestamp;
      out.push_back(std::move(r));
    }
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const RawLogRecord& a, const RawLogRecord& b) { return a.timestamp < b.timestamp; });
  write_records_file(require(config.output, "--output"), out);
  if (!flags.modified.empty()) {
    auto m = open_out(flags.modified);
    csv::write_row(m, {"task_id"});
    for (auto i : touched) csv::write_row(m, {tasks[i].task_id});
  }
  note("perturbed " + std::to_string(touched.size()) + " of " + std::to_string(tasks.size()) + " tasks");
  return kExitOk;
}

// train --------------------------------------------------------------------

int cmd_train(const PipelineConfig& config, const std::string& vocabulary_path) {
  const auto& bundle_path = require(config.bundle, "--bundle");
  const auto records = read_records_file(require(config.input, "--input"));
  const auto corpus = corpus_from_records(records, load_labels(config.labels), config.parser);
  note("parsed " + std::to_string(records.size()) + " records into " +
       std::to_string(corpus.sequences.size()) + " tasks and " + std::to_string(corpus.num_events()) +
       " templates");
  const auto bundle = train_bundle(corpus, config, progress);
  save_bundle(bundle_path, bundle);
  if (!vocabulary_path.empty()) {
    auto out = open_out(vocabulary_path);
    write_vocabulary_csv(out, bundle.vocabulary);
  }
  note("wrote " + bundle_path);
  return kExitOk;
}

// detect -------------------------------------------------------------------

int cmd_detect(const PipelineConfig& config) {
  const auto bundle = load_bundle(require(config.bundle, "--bundle"));
  const auto records = read_records_file(require(config.input, "--input"));
  const auto verdicts = detect_records(bundle, records);
  write_to(config.output, [&](std::ostream& out) { write_verdicts_csv(out, verdicts); });
  const auto flagged = std::count_if(verdicts.begin(), verdicts.end(),
                                     [](const Verdict& v) { return v.detection.failure; });
  note(std::to_string(flagged) + " of " + std::to_string(verdicts.size()) + " tasks flagged");
  return kExitOk;
}

// entropy ------------------------------------------------------------------

int cmd_entropy(const PipelineConfig& config, bool event_only) {
  const auto corpus = load_or_generate(config);
  std::vector<EntropyRow> rows;
  if (event_only) {
    rows = entropy_report(corpus.sequences, {});
  } else {
    const auto report = run_entropy_sweep(corpus, config, progress);
    rows.push_back({"event", 0.0, report.summary_of("event", "mean_symbols").mean,
                    report.summary_of("event", "mean_entropy").mean});
    for (double w : config.window_sizes) {
      const auto s = window_setting(w);
      rows.push_back({"subprocess", w, report.summary_of(s, "mean_symbols").mean,
                      report.summary_of(s, "mean_entropy").mean});
    }
  }
  write_to(config.output, [&](std::ostream& out) { write_entropy_csv(out, rows); });
  return kExitOk;
}

// experiment ---------------------------------------------------------------

void write_report_files(const std::string& dir, const ExperimentReport& report) {
  const std::filesystem::path base(dir);
  const auto name = to_string(report.protocol);
  {
    auto out = open_out((base / (name + "_report.csv")).string());
    write_report_csv(out, report);
  }
  {
    auto out = open_out((base / (name + "_summary.csv")).string());
    write_summary_csv(out, report);
  }
  write_summary_text(std::cout, report);
  std::cout << "\n";
}

int cmd_experiment(const PipelineConfig& config, const std::string& protocol) {
  const std::string dir = config.output.empty() ? "." : config.output;
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir + ": " + ec.message());
  std::vector<Protocol> selected;
  if (protocol == "all") {
    selected = {Protocol::EntropySweep, Protocol::Detection, Protocol::Fti};
  } else {
    selected = {parse_protocol(protocol)};
  }
  const auto corpus = load_or_generate(config);
  for (auto p : selected) {
    if (protocol == "all" && p == Protocol::Detection) {
      const auto [detection, robustness] = run_detection_and_robustness(corpus, config, progress);
      write_report_files(dir, detection);
      write_report_files(dir, robustness);
      continue;
    }
    write_report_files(dir, run_protocol(p, corpus, config, progress));
  }
  return kExitOk;
}

// eval ---------------------------------------------------------------------

struct Prediction {
  std::string task_id;
  bool failure = false;
  std::string failure_type;
};

std::vector<Prediction> read_predictions(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path);
  std::string line;
  if (!std::getline(in, line)) throw FormatError(path + ": empty predictions file");
  const auto header = csv::split_row(line);
  auto column = [&](const std::string& name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw FormatError(path + ": missing column " + name);
    return static_cast<std::size_t>(it - header.begin());
  };
  const auto id_col = column("task_id");
  const auto verdict_col = column("verdict");
  const auto type_col = column("failure_type");
  std::vector<Prediction> out;
  for (int n = 2; std::getline(in, line); ++n) {
    if (line.empty()) continue;
    const auto f = csv::split_row(line);
    if (f.size() != header.size()) throw FormatError(path + ":" + std::to_string(n) + ": wrong field count");
    const auto& v = f[verdict_col];
    if (v != "failure" && v != "normal") {
      throw FormatError(path + ":" + std::to_string(n) + ": verdict must be failure or normal");
    }
    out.push_back({f[id_col], v == "failure", f[type_col]});
  }
  return out;
}

int cmd_eval(const std::string& predictions_path, const PipelineConfig& config) {
  const auto predictions = read_predictions(require(predictions_path, "--predictions"));
  const auto labels = load_labels(require(config.labels, "--labels"));
  std::vector<bool> truth, predicted;
  std::vector<std::string> type_truth, type_predicted;
  std::set<std::string> types;
  for (const auto& p : predictions) {
    const auto it = labels.find(p.task_id);
    if (it == labels.end()) throw FormatError("no ground truth for task " + p.task_id);
    truth.push_back(it->second.failure);
    predicted.push_back(p.failure);
    if (it->second.failure) types.insert(it->second.failure_type);
    if (it->second.failure && p.failure && !p.failure_type.empty()) {
      type_truth.push_back(it->second.failure_type);
      type_predicted.push_back(p.failure_type);
    }
  }
  const auto counts = binary_counts(truth, predicted);
  const auto scores = prf1(counts);
  write_to(config.output, [&](std::ostream& out) {
    csv::write_row(out, {"metric", "value"});
    csv::write_row(out, {"tasks", std::to_string(counts.total())});
    csv::write_row(out, {"tp", std::to_string(counts.tp)});
    csv::write_row(out, {"fp", std::to_string(counts.fp)});
    csv::write_row(out, {"fn", std::to_string(counts.fn)});
    csv::write_row(out, {"tn", std::to_string(counts.tn)});
    csv::write_row(out, {"precision", csv::format_double(scores.precision)});
    csv::write_row(out, {"recall", csv::format_double(scores.recall)});
    csv::write_row(out, {"f1", csv::format_double(scores.f1)});
    if (!type_truth.empty()) {
      const std::vector<std::string> classes(types.begin(), types.end());
      const double m = macro_f1(class_counts(type_truth, type_predicted, classes), classes);
      csv::write_row(out, {"typed_tasks", std::to_string(type_truth.size())});
      csv::write_row(out, {"type_macro_f1", csv::format_double(m)});
    }
  });
  return kExitOk;
}

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Config: return kExitUsage;
    case ErrorKind::Numeric: return kExitNumeric;
    default: return kExitData;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Log-based failure detection and failure type identification"};
  app.require_subcommand(1);
  app.add_flag("-q,--quiet", quiet, "suppress progress messages");
  app.fallthrough();

  std::map<std::string, ConfigFlags> flags;
  auto command = [&](const std::string& name, const std::string& help) {
    CLI::App* cmd = app.add_subcommand(name, help);
    flags[name].attach(cmd);
    return cmd;
  };

  auto* generate = command("generate", "write a synthetic corpus (JSONL records) and its ground truth (CSV)");
  flags["generate"].bind<std::string>(generate, "-o,--output", "paths.output", "records file");
  flags["generate"].bind<std::string>(generate, "-l,--labels", "paths.labels", "ground truth CSV to write");
  flags["generate"].bind<int>(generate, "--n-tasks", "synth.n_tasks", "number of tasks");
  flags["generate"].bind<double>(generate, "--failure-ratio", "synth.failure_ratio", "share of failed tasks");

  InjectFlags inject_flags;
  auto* inject = command("inject", "perturb a share of the tasks with remove/duplicate/shuffle edits");
  flags["inject"].bind<std::string>(inject, "-i,--input", "paths.input", "records file");
  flags["inject"].bind<std::string>(inject, "-o,--output", "paths.output", "perturbed records file");
  inject->add_option("--ratio", inject_flags.ratio, "share of tasks to perturb")->capture_default_str();
  inject->add_option("--ops", inject_flags.ops, "comma separated operations")->capture_default_str();
  inject->add_option("--modified", inject_flags.modified, "CSV listing the perturbed task ids");

  std::string vocabulary_path;
  auto* train = command("train", "train the detector (and the type classifier when labels are given)");
  flags["train"].bind<std::string>(train, "-i,--input", "paths.input", "records file");
  flags["train"].bind<std::string>(train, "-l,--labels", "paths.labels", "ground truth CSV");
  flags["train"].bind<std::string>(train, "-b,--bundle", "paths.bundle", "model bundle to write");
  flags["train"].bind<double>(train, "-w,--window-size", "window_size", "window length in seconds");
  flags["train"].bind<int>(train, "-k,--clusters", "k", "number of subprocesses");
  flags["train"].bind<int>(train, "--hmm-states", "hmm_states", "hidden states");
  flags["train"].bind<double>(train, "--lambda", "encoder.lambda", "clustering loss weight");
  train->add_option("--vocabulary", vocabulary_path, "also write the template vocabulary CSV");

  auto* detect = command("detect", "score tasks with a trained bundle");
  flags["detect"].bind<std::string>(detect, "-b,--bundle", "paths.bundle", "model bundle");
  flags["detect"].bind<std::string>(detect, "-i,--input", "paths.input", "records file");
  flags["detect"].bind<std::string>(detect, "-o,--output", "paths.output", "verdicts CSV (default stdout)");

  bool event_only = false;
  auto* entropy = command("entropy", "mean per-task entropy of event and subprocess sequences");
  flags["entropy"].bind<std::string>(entropy, "-i,--input", "paths.input", "records file (default: synthetic)");
  flags["entropy"].bind<std::string>(entropy, "-l,--labels", "paths.labels", "ground truth CSV");
  flags["entropy"].bind<std::string>(entropy, "-o,--output", "paths.output", "entropy CSV (default stdout)");
  entropy->add_flag("--event-only", event_only, "skip the subprocess models");

  std::string protocol = "all";
  auto* experiment = command("experiment", "run detection, robustness, fti or entropy_sweep protocols");
  experiment->add_option("-p,--protocol", protocol, "detection, robustness, fti, entropy_sweep or all")
      ->capture_default_str();
  flags["experiment"].bind<std::string>(experiment, "-i,--input", "paths.input", "records file (default: synthetic)");
  flags["experiment"].bind<std::string>(experiment, "-l,--labels", "paths.labels", "ground truth CSV");
  flags["experiment"].bind<std::string>(experiment, "-o,--output", "paths.output", "report directory");
  flags["experiment"].bind<int>(experiment, "--repetitions", "splits.detection_repetitions",
                                "detection repetitions");
  flags["experiment"].bind<int>(experiment, "--fti-repetitions", "splits.fti_repetitions", "fti repetitions");
  flags["experiment"].bind<int>(experiment, "--n-tasks", "synth.n_tasks", "synthetic tasks");

  std::string predictions_path;
  auto* eval = command("eval", "precision, recall, F1 and type macro-F1 of a verdicts CSV");
  eval->add_option("-P,--predictions", predictions_path, "verdicts CSV from detect");
  flags["eval"].bind<std::string>(eval, "-l,--labels", "paths.labels", "ground truth CSV");
  flags["eval"].bind<std::string>(eval, "-o,--output", "paths.output", "metrics CSV (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    const auto* cmd = app.get_subcommands().front();
    const auto config = flags.at(cmd->get_name()).resolve();
    if (cmd == generate) return cmd_generate(config);
    if (cmd == inject) return cmd_inject(config, inject_flags);
    if (cmd == train) return cmd_train(config, vocabulary_path);
    if (cmd == detect) return cmd_detect(config);
    if (cmd == entropy) return cmd_entropy(config, event_only);
    if (cmd == experiment) return cmd_experiment(config, protocol);
    if (cmd == eval) return cmd_eval(predictions_path, config);
  } catch (const UsageError& e) {
    std::cerr << "logfid: " << e.what() << "\n";
    return kExitUsage;
  } catch (const Error& e) {
    std::cerr << "logfid: error: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "logfid: error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}
