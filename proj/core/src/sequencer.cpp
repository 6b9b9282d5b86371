#include "logfid/sequencer.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <ostream>
#include <unordered_map>

#include "logfid/csv.hpp"
#include "logfid/error.hpp"

namespace logfid {

std::vector<EventId> EventSequence::event_ids() const {
  std::vector<EventId> ids;
  ids.reserve(events.size());
  for (const auto& e : events) ids.push_back(e.event_id);
  return ids;
}

void validate_sequence(const EventSequence& seq) {
  if (seq.events.empty()) throw DegenerateInputError("sequence " + seq.task_id + " is empty");
  for (std::size_t i = 1; i < seq.events.size(); ++i) {
    if (seq.events[i].timestamp < seq.events[i - 1].timestamp) {
      throw DegenerateInputError("sequence " + seq.task_id + " has decreasing timestamps");
    }
  }
}

WindowedSequence window(const EventSequence& seq, double window_size) {
  if (!(window_size > 0.0) || !std::isfinite(window_size)) {
    throw ConfigError("window size must be positive");
  }
  validate_sequence(seq);
  WindowedSequence out{seq.task_id, {}, window_size, seq.label};
  const double start = seq.events.front().timestamp;
  long current = -1;
  for (const auto& e : seq.events) {
    const auto bucket = static_cast<long>(std::floor((e.timestamp - start) / window_size));
    if (bucket != current) {
      out.windows.emplace_back();
      current = bucket;
    }
    out.windows.back().push_back(e.event_id);
  }
  return out;
}

std::vector<EventSequence> group_by_task(const std::vector<RawLogRecord>& records,
                                         const std::vector<EventId>& event_ids) {
  if (records.size() != event_ids.size()) {
    throw ContractError("group_by_task: records and event ids differ in length");
  }
  std::vector<EventSequence> out;
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < records.size(); ++i) {
    auto [it, inserted] = index.try_emplace(records[i].task_id, out.size());
    if (inserted) out.push_back({records[i].task_id, {}, std::nullopt});
    out[it->second].events.push_back({records[i].timestamp, event_ids[i]});
  }
  for (auto& seq : out) {
    std::stable_sort(seq.events.begin(), seq.events.end(),
                     [](const TimedEvent& a, const TimedEvent& b) { return a.timestamp < b.timestamp; });
  }
  return out;
}

double shannon_entropy(std::span<const int> symbols) {
  if (symbols.empty()) throw DegenerateInputError("entropy of an empty symbol list");
  std::map<int, std::size_t> counts;
  for (int s : symbols) ++counts[s];
  const double n = static_cast<double>(symbols.size());
  double h = 0.0;
  for (const auto& [sym, c] : counts) {
    const double p = static_cast<double>(c) / n;
    h -= p * std::log2(p);
  }
  // -0.0 for a single symbol
  return h <= 0.0 ? 0.0 : h;
}

namespace {

std::size_t distinct_count(std::vector<int> v) {
  std::sort(v.begin(), v.end());
  return static_cast<std::size_t>(std::unique(v.begin(), v.end()) - v.begin());
}

}  // namespace

std::vector<EntropyRow> entropy_report(const std::vector<EventSequence>& corpus,
                                       const std::vector<double>& window_sizes,
                                       const SubprocessMap& subprocess_map) {
  if (corpus.empty()) throw DegenerateInputError("entropy report over an empty corpus");
  const double n = static_cast<double>(corpus.size());

  std::vector<EntropyRow> rows;
  EntropyRow event_row{"event", 0.0, 0.0, 0.0};
  for (const auto& seq : corpus) {
    auto ids = seq.event_ids();
    event_row.mean_symbols += static_cast<double>(distinct_count(ids));
    event_row.mean_entropy += shannon_entropy(ids);
  }
  event_row.mean_symbols /= n;
  event_row.mean_entropy /= n;
  rows.push_back(event_row);

  if (!subprocess_map) return rows;
  for (double w : window_sizes) {
    EntropyRow row{"subprocess", w, 0.0, 0.0};
    for (const auto& seq : corpus) {
      auto windowed = window(seq, w);
      std::vector<int> ids;
      ids.reserve(windowed.windows.size());
      for (const auto& win : windowed.windows) ids.push_back(subprocess_map(w, win));
      row.mean_symbols += static_cast<double>(distinct_count(ids));
      row.mean_entropy += shannon_entropy(ids);
    }
    row.mean_symbols /= n;
    row.mean_entropy /= n;
    rows.push_back(row);
  }
  return rows;
}

void write_entropy_csv(std::ostream& out, const std::vector<EntropyRow>& rows) {
  csv::write_row(out, {"representation", "window_size_s", "mean_symbols", "mean_entropy_bits"});
  for (const auto& r : rows) {
    csv::write_row(out, {r.representation, csv::format_double(r.window_size),
                         csv::format_double(r.mean_symbols), csv::format_double(r.mean_entropy)});
  }
}

}  // namespace logfid
