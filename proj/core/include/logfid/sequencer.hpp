#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "logfid/parser.hpp"

namespace logfid {

/// Ground truth attached to a task. An empty failure type means normal.
struct TaskLabel {
  bool failure = false;
  std::string failure_type;

  static TaskLabel normal() { return {}; }
  static TaskLabel failed(std::string type) { return {true, std::move(type)}; }
  bool operator==(const TaskLabel&) const = default;
};

struct TimedEvent {
  double timestamp = 0.0;
  EventId event_id = 0;
  bool operator==(const TimedEvent&) const = default;
};

struct EventSequence {
  std::string task_id;
  std::vector<TimedEvent> events;
  std::optional<TaskLabel> label;

  std::vector<EventId> event_ids() const;
  bool operator==(const EventSequence&) const = default;
};

/// Throws DegenerateInputError on empty or out-of-order sequences.
void validate_sequence(const EventSequence& seq);

struct WindowedSequence {
  std::string task_id;
  std::vector<std::vector<EventId>> windows;
  double window_size = 0.0;
  std::optional<TaskLabel> label;
};

struct SubprocessSequence {
  std::string task_id;
  std::vector<int> subprocess_ids;
  std::optional<TaskLabel> label;
};

/// Buckets events by floor((t - t_first) / window_size); empty buckets are
/// dropped.
WindowedSequence window(const EventSequence& seq, double window_size);

/// Groups records by task id (first-appearance order), sorting each task's
/// events stably by timestamp.
std::vector<EventSequence> group_by_task(const std::vector<RawLogRecord>& records,
                                         const std::vector<EventId>& event_ids);

/// Shannon entropy in bits of the empirical symbol distribution.
double shannon_entropy(std::span<const int> symbols);

struct EntropyRow {
  std::string representation;  // "event" or "subprocess"
  double window_size = 0.0;    // 0 for the event-level row
  double mean_symbols = 0.0;   // mean count of distinct symbols per sequence
  double mean_entropy = 0.0;   // bits, averaged over sequences
};

/// Maps one window (at the given window size) to a subprocess id.
using SubprocessMap = std::function<int(double window_size, std::span<const EventId> window)>;

std::vector<EntropyRow> entropy_report(const std::vector<EventSequence>& corpus,
                                       const std::vector<double>& window_sizes,
                                       const SubprocessMap& subprocess_map = {});

void write_entropy_csv(std::ostream& out, const std::vector<EntropyRow>& rows);

}  // namespace logfid
