#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "logfid/error.hpp"
#include "logfid/parser.hpp"
#include "logfid/sequencer.hpp"

namespace logfid {

/// One workload step: a burst of events followed by an idle phase in which
/// poll events arrive as a Poisson process.
struct SubprocessTemplate {
  std::string name;
  std::vector<std::vector<EventId>> slots;  // alternatives per slot, the first is the usual one
  double alternative_probability = 0.0;     // chance a multi-choice slot leaves its first entry
  double wait_min = 0.0;                    // idle phase length range, seconds
  double wait_max = 0.0;
  std::vector<EventId> poll_events;
};

struct TimingModel {
  double burst_gap_mean = 1.5;      // seconds between events of one burst
  double poll_interval_mean = 45.0;
  std::vector<EventId> background_events;  // may replace any poll
  double background_probability = 0.0;
};

enum class FailureEdit { TruncateTail, RepeatBlock, Substitute };

std::string to_string(FailureEdit edit);

struct FailureMode {
  std::string type;
  FailureEdit edit = FailureEdit::Substitute;
  int target = -1;  // subprocess template index; -1 picks a random segment (whole sequence for Substitute)
  std::map<EventId, EventId> substitutions;
  std::vector<EventId> error_events;  // emitted after the edited block
  int repeat_min = 1;
  int repeat_max = 1;
  double hang_min = 0.0;  // extra idle time after the edited block
  double hang_max = 0.0;
  std::vector<EventId> hang_poll_events;
};

struct WorkloadModel {
  std::vector<std::string> event_patterns;  // index = event id; {n} {ip} {uuid} are variables
  std::vector<std::string> event_levels;
  std::vector<SubprocessTemplate> subprocesses;
  std::vector<double> initial;                   // start distribution over subprocesses
  std::vector<std::vector<double>> transitions;  // one row per subprocess; last column ends the task
  TimingModel timing;
  std::vector<FailureMode> failure_modes;

  int vocabulary_size() const { return static_cast<int>(event_patterns.size()); }
  /// Throws ConfigError when the grammar or templates are malformed.
  void validate() const;
  /// Expected events per generated (normal) task.
  double expected_events_per_task() const;

  /// Ten-step cloud workload with three failure modes.
  static WorkloadModel default_model();
};

/// Events [begin, end) of a task produced by one subprocess visit,
/// including its idle phase.
struct Segment {
  int subprocess = 0;
  std::size_t begin = 0;
  std::size_t burst_end = 0;  // [begin, burst_end) is the burst
  std::size_t end = 0;
  bool operator==(const Segment&) const = default;
};

struct GeneratedTask {
  EventSequence sequence;
  std::vector<Segment> segments;
  bool operator==(const GeneratedTask&) const = default;
};

/// Tasks "task-00000", ... each labeled normal. Deterministic under seed.
std::vector<GeneratedTask> generate_corpus(const WorkloadModel& model, int n_tasks,
                                           std::uint64_t seed, double start_time = 1.7e9);

/// Applies one failure mode's edit in place and labels the task.
void apply_failure(GeneratedTask& task, const FailureMode& mode, const WorkloadModel& model,
                   std::mt19937_64& rng);

/// Exactly round(ratio * N) tasks receive a failure; modes are dealt in turn
/// over a seeded random choice of tasks. Returns the edited task indices.
std::vector<std::size_t> inject_failures(std::vector<GeneratedTask>& corpus,
                                         const WorkloadModel& model, double failure_ratio,
                                         std::uint64_t seed);

enum class InstabilityOp { Remove, Duplicate, Shuffle };

std::string to_string(InstabilityOp op);
InstabilityOp parse_instability_op(const std::string& name);

struct InjectionConfig {
  double ratio = 0.0;
  std::vector<InstabilityOp> operations = {InstabilityOp::Remove, InstabilityOp::Duplicate,
                                           InstabilityOp::Shuffle};
  std::uint64_t seed = 0;
  int shuffle_span = 3;
  int ops_per_sequence = 1;

  void validate() const;
};

void remove_event(EventSequence& seq, std::size_t position);
/// Inserts a copy of the event right after it, with the same timestamp.
void duplicate_event(EventSequence& seq, std::size_t position);
/// Reorders the event ids of [position, position + span) by a random
/// non-identity permutation; timestamps stay in place.
void shuffle_span(EventSequence& seq, std::size_t position, int span, std::mt19937_64& rng);

/// Modifies exactly round(ratio * N) sequences, each by a uniformly chosen
/// operation at a uniformly chosen position. For a fixed seed the modified
/// sets are nested in the ratio. Labels are untouched. Returns the indices.
std::vector<std::size_t> inject_instability(std::vector<EventSequence>& corpus,
                                            const InjectionConfig& config);

/// Renders tasks to log records, merged across tasks in timestamp order.
std::vector<RawLogRecord> render_records(const std::vector<GeneratedTask>& tasks,
                                         const WorkloadModel& model, std::uint64_t seed);

/// Sidecar table: task_id, label, failure_type, segments.
void write_ground_truth_csv(std::ostream& out, const std::vector<GeneratedTask>& tasks,
                            const WorkloadModel& model);
/// Reads the labels back, keyed by task id.
std::map<std::string, TaskLabel> read_ground_truth_csv(std::istream& in);

}  // namespace logfid
