#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "logfid/pipeline.hpp"
#include "logfid/synth.hpp"

namespace logfid {

struct ConfusionCounts {
  long tp = 0;
  long fp = 0;
  long fn = 0;
  long tn = 0;

  long total() const { return tp + fp + fn + tn; }
  bool operator==(const ConfusionCounts&) const = default;
};

struct Scores {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

/// 0/0 is taken as 0 for every ratio.
Scores prf1(const ConfusionCounts& counts);

/// Failure is the positive class.
ConfusionCounts binary_counts(const std::vector<bool>& truth, const std::vector<bool>& predicted);

/// One-vs-rest counts for each class.
std::map<std::string, ConfusionCounts> class_counts(const std::vector<std::string>& truth,
                                                    const std::vector<std::string>& predicted,
                                                    const std::vector<std::string>& classes);

/// Unweighted mean of per-class F1; classes missing from the map count as 0.
double macro_f1(const std::map<std::string, ConfusionCounts>& counts,
                const std::vector<std::string>& classes);

double mean(std::span<const double> values);
/// Sample standard deviation (n - 1); 0 for fewer than two values.
double sample_sd(std::span<const double> values);

enum class Protocol { Detection, Fti, EntropySweep, Robustness };

std::string to_string(Protocol p);
Protocol parse_protocol(const std::string& name);

struct ReportRow {
  std::string setting;
  std::string metric;
  int repetition = 0;
  double value = 0.0;
};

struct SummaryRow {
  std::string setting;
  std::string metric;
  std::size_t n = 0;
  double mean = 0.0;
  double sd = 0.0;
};

struct ExperimentReport {
  Protocol protocol = Protocol::Detection;
  std::string config_json;
  std::vector<ReportRow> rows;

  /// Per (setting, metric) in first-appearance order.
  std::vector<SummaryRow> summary() const;
  /// Throws ContractError when the pair is absent.
  SummaryRow summary_of(const std::string& setting, const std::string& metric) const;
};

void write_report_csv(std::ostream& out, const ExperimentReport& report);
void write_summary_csv(std::ostream& out, const ExperimentReport& report);
/// Aligned table followed by the resolved configuration.
void write_summary_text(std::ostream& out, const ExperimentReport& report);

struct Corpus {
  std::vector<EventSequence> sequences;  // labeled
  std::vector<LogTemplate> vocabulary;

  int num_events() const { return static_cast<int>(vocabulary.size()); }
};

struct SyntheticData {
  std::vector<GeneratedTask> tasks;
  std::vector<RawLogRecord> records;
};

/// config.n_tasks tasks with config.failure_ratio failures, rendered to log lines.
SyntheticData synthetic_data(const WorkloadModel& model, const PipelineConfig& config);

/// Parses records and attaches whatever labels are known.
Corpus corpus_from_records(const std::vector<RawLogRecord>& records,
                           const std::map<std::string, TaskLabel>& labels, const ParserConfig& parser);

/// synthetic_data() parsed back into labeled sequences.
Corpus synthetic_corpus(const WorkloadModel& model, const PipelineConfig& config);

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
  std::vector<std::size_t> test;  // empty when the fractions sum to 1
};

/// Seeded permutation cut into round(n * train) / round(n * validation) / rest.
Split split_indices(std::size_t n, double train_fraction, double validation_fraction,
                    std::uint64_t seed);

/// split_indices over the normal sequences only; every failure sequence
/// joins the test share.
Split detection_split(const std::vector<EventSequence>& sequences, double train_fraction,
                      double validation_fraction, std::uint64_t seed);

/// Per class, round(n_c * train_fraction) members go to train and the rest to test.
Split stratified_split(const std::vector<std::string>& labels, double train_fraction,
                       std::uint64_t seed);

using Progress = std::function<void(const std::string&)>;

/// Offline training on a parsed corpus: normal tasks (all unlabeled ones
/// count as normal) are split train/validation in the ratio of the configured
/// fractions; the classifier is fitted when at least two failure types are
/// labeled.
ModelBundle train_bundle(const Corpus& corpus, const PipelineConfig& config,
                         const Progress& progress = {});

ExperimentReport run_detection(const Corpus& corpus, const PipelineConfig& config,
                               const Progress& progress = {});
ExperimentReport run_robustness(const Corpus& corpus, const PipelineConfig& config,
                                const Progress& progress = {});
/// Both reports from one set of trained models.
std::pair<ExperimentReport, ExperimentReport> run_detection_and_robustness(
    const Corpus& corpus, const PipelineConfig& config, const Progress& progress = {});
ExperimentReport run_fti(const Corpus& corpus, const PipelineConfig& config,
                         const Progress& progress = {});
ExperimentReport run_entropy_sweep(const Corpus& corpus, const PipelineConfig& config,
                                   const Progress& progress = {});
ExperimentReport run_protocol(Protocol protocol, const Corpus& corpus, const PipelineConfig& config,
                              const Progress& progress = {});

/// Setting labels used in reports.
std::string ratio_setting(double b);
std::string window_setting(double w);

}  // namespace logfid
