#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "logfid/clustering.hpp"
#include "logfid/detector.hpp"
#include "logfid/encoder.hpp"
#include "logfid/fti.hpp"
#include "logfid/parser.hpp"
#include "logfid/sequencer.hpp"

namespace logfid {

/// Every hyperparameter of the pipeline and the experiment protocols.
/// The default-constructed value is the full-size setup; desk() shrinks the
/// encoder and its training budget so a run fits on a laptop CPU.
struct PipelineConfig {
  std::string preset = "full";
  ParserConfig parser;
  double window_size = 180.0;
  TrainingConfig encoder;
  int k = 10;
  int hmm_states = 2;
  HmmFitOptions hmm;
  int max_training_windows = 0;  // 0 keeps every training window

  // splits and repetitions
  double train_fraction = 0.6;
  double validation_fraction = 0.2;
  double fti_train_fraction = 0.6;
  int detection_repetitions = 10;
  int fti_repetitions = 30;
  std::vector<double> window_sizes = {60, 120, 180, 240, 300};
  std::vector<double> injection_ratios = {0.0, 0.05, 0.10, 0.15, 0.20};

  FtiOptions fti;
  Representation fti_representation = Representation::CountVectorPhmm;

  // synthetic corpus
  int n_tasks = 500;
  double failure_ratio = 0.1;

  std::uint64_t seed = 42;

  // paths
  std::string input;
  std::string labels;
  std::string output;
  std::string bundle;

  static PipelineConfig desk();
  static PipelineConfig from_preset(const std::string& name);

  void validate() const;
  /// Pretty JSON with every field present.
  std::string to_json() const;
  /// Missing keys keep the preset's value ("preset" is read first);
  /// unknown keys are a ConfigError.
  static PipelineConfig from_json(const std::string& text);
  /// FNV-1a over to_json().
  std::uint64_t hash() const;
};

/// Frozen models of one trained pipeline.
struct TrainedModels {
  TokenVocab tokens;
  EncoderParams encoder;
  CentroidSet centroids;
  HmmModel hmm;
  Thresholds thresholds;
  std::optional<FtiModel> fti;
  Representation fti_representation = Representation::CountVectorPhmm;
};

struct TrainingLog {
  std::vector<double> pretrain_losses;
  std::vector<double> joint_losses;
  HmmFitTrace hmm;
  std::size_t training_windows = 0;
  std::size_t masked_samples = 0;
};

/// Encoder pretraining, joint clustering, HMM fit and threshold calibration
/// on normal sequences. Errors are re-raised with the failing stage named.
TrainedModels train_detector(const std::vector<EventSequence>& train,
                             const std::vector<EventSequence>& validation, int num_events,
                             const PipelineConfig& config, TrainingLog* log = nullptr);

SubprocessExtractor make_extractor(const TrainedModels& models);

SubprocessSequence to_subprocesses(const SubprocessExtractor& extractor, const EventSequence& seq,
                                   double window_size);

/// Fits the configured classifier on labeled failure sequences.
void train_fti(TrainedModels& models, const std::vector<EventSequence>& failures,
               const PipelineConfig& config);

struct Verdict {
  DetectionResult detection;
  std::string failure_type;  // set when flagged and a classifier is present
};

Verdict classify(const TrainedModels& models, const SubprocessExtractor& extractor,
                 const EventSequence& seq, double window_size);

void write_verdicts_csv(std::ostream& out, const std::vector<Verdict>& rows);

/// Ground truth attached to parsed sequences; tasks absent from the map
/// keep no label.
void attach_labels(std::vector<EventSequence>& corpus,
                   const std::map<std::string, TaskLabel>& labels);

struct ParsedCorpus {
  std::vector<LogTemplate> vocabulary;
  std::vector<EventSequence> sequences;
};

ParsedCorpus parse_corpus(const std::vector<RawLogRecord>& records, const ParserConfig& config);

/// Frozen-vocabulary parse; lines matching no template get event id
/// vocabulary.size(), which the encoder reads as the unknown token.
std::vector<EventSequence> parse_with_vocabulary(const std::vector<RawLogRecord>& records,
                                                 const std::vector<LogTemplate>& vocabulary,
                                                 const ParserConfig& config);

struct Provenance {
  std::uint64_t config_hash = 0;
  std::uint64_t seed = 0;
  double data_first_timestamp = 0.0;
  double data_last_timestamp = 0.0;
  std::string config_json;
};

struct ModelBundle {
  static constexpr std::uint32_t kFormatVersion = 1;

  std::uint32_t version = kFormatVersion;
  ParserConfig parser;
  std::vector<LogTemplate> vocabulary;
  double window_size = 0.0;
  TrainedModels models;
  Provenance provenance;

  bool identical(const ModelBundle& other) const;
};

std::string serialize_bundle(const ModelBundle& bundle);
/// Throws FormatError on a bad magic, an unsupported version or truncation.
ModelBundle deserialize_bundle(const std::string& bytes);

/// Online phase: frozen-vocabulary parse, then one verdict per task.
std::vector<Verdict> detect_records(const ModelBundle& bundle, const std::vector<RawLogRecord>& records);

void save_bundle(const std::string& path, const ModelBundle& bundle);
ModelBundle load_bundle(const std::string& path);

}  // namespace logfid
