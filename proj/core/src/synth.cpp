#include "logfid/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <sstream>

#include <Eigen/Dense>

#include "logfid/csv.hpp"
#include "logfid/seed.hpp"

namespace logfid {

std::string to_string(FailureEdit edit) {
  switch (edit) {
    case FailureEdit::TruncateTail: return "truncate_tail";
    case FailureEdit::RepeatBlock: return "repeat_block";
    case FailureEdit::Substitute: return "substitute";
  }
  return "?";
}

std::string to_string(InstabilityOp op) {
  switch (op) {
    case InstabilityOp::Remove: return "remove";
    case InstabilityOp::Duplicate: return "duplicate";
    case InstabilityOp::Shuffle: return "shuffle";
  }
  return "?";
}

InstabilityOp parse_instability_op(const std::string& name) {
  if (name == "remove") return InstabilityOp::Remove;
  if (name == "duplicate") return InstabilityOp::Duplicate;
  if (name == "shuffle") return InstabilityOp::Shuffle;
  throw ConfigError("unknown instability operation: " + name);
}

void WorkloadModel::validate() const {
  const int n_events = vocabulary_size();
  if (n_events < 1) throw ConfigError("workload has no events");
  if (!event_levels.empty() && event_levels.size() != event_patterns.size()) {
    throw ConfigError("event levels and patterns differ in length");
  }
  auto check_event = [&](EventId e, const std::string& where) {
    if (e < 0 || e >= n_events) {
      throw ConfigError(where + " refers to unknown event " + std::to_string(e));
    }
  };
  const auto n = subprocesses.size();
  if (n == 0) throw ConfigError("workload has no subprocess templates");
  for (const auto& s : subprocesses) {
    if (s.slots.empty()) throw ConfigError("subprocess " + s.name + " is empty");
    for (const auto& slot : s.slots) {
      if (slot.empty()) throw ConfigError("subprocess " + s.name + " has an empty slot");
      for (EventId e : slot) check_event(e, "subprocess " + s.name);
    }
    for (EventId e : s.poll_events) check_event(e, "subprocess " + s.name);
    if (s.wait_min < 0.0 || s.wait_max < s.wait_min) {
      throw ConfigError("subprocess " + s.name + " has an invalid wait range");
    }
    if (s.alternative_probability < 0.0 || s.alternative_probability > 1.0) {
      throw ConfigError("subprocess " + s.name + " has an invalid alternative probability");
    }
  }
  auto check_row = [](const std::vector<double>& row, std::size_t size, const std::string& what) {
    if (row.size() != size) throw ConfigError(what + " has the wrong length");
    double sum = 0.0;
    for (double p : row) {
      if (!(p >= 0.0)) throw ConfigError(what + " has a negative entry");
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw ConfigError(what + " does not sum to 1");
  };
  check_row(initial, n, "initial distribution");
  if (transitions.size() != n) throw ConfigError("grammar needs one row per subprocess");
  for (std::size_t i = 0; i < n; ++i) check_row(transitions[i], n + 1, "grammar row " + std::to_string(i));
  for (EventId e : timing.background_events) check_event(e, "background events");
  if (!(timing.burst_gap_mean > 0.0) || !(timing.poll_interval_mean > 0.0)) {
    throw ConfigError("timing means must be positive");
  }
  for (const auto& m : failure_modes) {
    if (m.type.empty()) throw ConfigError("failure mode without a type");
    if (m.target >= static_cast<int>(n)) throw ConfigError("failure mode " + m.type + " targets an unknown subprocess");
    for (const auto& [from, to] : m.substitutions) {
      check_event(from, "failure mode " + m.type);
      check_event(to, "failure mode " + m.type);
    }
    for (EventId e : m.error_events) check_event(e, "failure mode " + m.type);
    for (EventId e : m.hang_poll_events) check_event(e, "failure mode " + m.type);
    if (m.repeat_min < 1 || m.repeat_max < m.repeat_min) throw ConfigError("invalid repeat range");
    if (m.hang_min < 0.0 || m.hang_max < m.hang_min) throw ConfigError("invalid hang range");
  }

  // every template reachable must be able to end
  Eigen::MatrixXd q(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) q(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = transitions[i][j];
  const Eigen::MatrixXd fundamental = Eigen::MatrixXd::Identity(q.rows(), q.cols()) - q;
  if (std::abs(fundamental.determinant()) < 1e-12) throw ConfigError("grammar never terminates");
}

double WorkloadModel::expected_events_per_task() const {
  validate();
  const auto n = static_cast<Eigen::Index>(subprocesses.size());
  Eigen::MatrixXd q(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) q(i, j) = transitions[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  Eigen::RowVectorXd start(n);
  for (Eigen::Index i = 0; i < n; ++i) start(i) = initial[static_cast<std::size_t>(i)];
  const Eigen::RowVectorXd visits =
      start * (Eigen::MatrixXd::Identity(n, n) - q).inverse();
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& s = subprocesses[static_cast<std::size_t>(i)];
    double per_visit = static_cast<double>(s.slots.size());
    if (!s.poll_events.empty() || !timing.background_events.empty()) {
      per_visit += 0.5 * (s.wait_min + s.wait_max) / timing.poll_interval_mean;
    }
    total += visits(i) * per_visit;
  }
  return total;
}

namespace {

double uniform(std::mt19937_64& rng, double lo, double hi) {
  if (hi <= lo) return lo;
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

double exponential(std::mt19937_64& rng, double mean) {
  return std::exponential_distribution<double>(1.0 / mean)(rng);
}

template <class T>
const T& pick(std::mt19937_64& rng, const std::vector<T>& v) {
  return v[std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng)];
}

int draw(std::mt19937_64& rng, const std::vector<double>& p) {
  return std::discrete_distribution<int>(p.begin(), p.end())(rng);
}

// Poisson arrivals on [0, length): poll ids from `own`, replaced by a
// background event with the timing model's probability.
std::vector<std::pair<double, EventId>> polls(std::mt19937_64& rng, const TimingModel& timing,
                                              const std::vector<EventId>& own, double length) {
  std::vector<std::pair<double, EventId>> out;
  if (own.empty() && timing.background_events.empty()) return out;
  double t = exponential(rng, timing.poll_interval_mean);
  while (t < length) {
    const bool background = own.empty() || (!timing.background_events.empty() &&
                                             uniform(rng, 0.0, 1.0) < timing.background_probability);
    out.emplace_back(t, background ? pick(rng, timing.background_events) : pick(rng, own));
    t += exponential(rng, timing.poll_interval_mean);
  }
  return out;
}

constexpr int kMaxSegments = 10000;

GeneratedTask generate_task(const WorkloadModel& model, std::string task_id, double start,
                            std::mt19937_64& rng) {
  GeneratedTask task;
  task.sequence.task_id = std::move(task_id);
  task.sequence.label = TaskLabel::normal();
  auto& events = task.sequence.events;
  double t = start;
  int state = draw(rng, model.initial);
  const int end_state = static_cast<int>(model.subprocesses.size());
  for (int visit = 0; state != end_state; ++visit) {
    if (visit >= kMaxSegments) throw ConfigError("generated task exceeds the segment limit");
    const auto& s = model.subprocesses[static_cast<std::size_t>(state)];
    Segment seg{state, events.size(), 0, 0};
    for (const auto& slot : s.slots) {
      EventId e = slot[0];
      if (slot.size() > 1 && uniform(rng, 0.0, 1.0) < s.alternative_probability) {
        e = slot[std::uniform_int_distribution<std::size_t>(1, slot.size() - 1)(rng)];
      }
      events.push_back({t, e});
      t += exponential(rng, model.timing.burst_gap_mean);
    }
    seg.burst_end = events.size();
    const double wait = uniform(rng, s.wait_min, s.wait_max);
    for (const auto& [offset, e] : polls(rng, model.timing, s.poll_events, wait)) {
      events.push_back({t + offset, e});
    }
    t += wait;
    seg.end = events.size();
    task.segments.push_back(seg);
    state = draw(rng, model.transitions[static_cast<std::size_t>(state)]);
  }
  return task;
}

std::string task_name(int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "task-%05d", index);
  return buf;
}

// Inserts events (relative times in [0, duration)) before index `position`,
// shifting everything from `position` on by `duration`. The segment `owner`
// (if any) absorbs the new events; later segments are re-indexed.
void insert_block(GeneratedTask& task, std::size_t position,
                  const std::vector<std::pair<double, EventId>>& block, double duration,
                  double gap, int owner) {
  auto& ev = task.sequence.events;
  const double base = position < ev.size() ? ev[position].timestamp
                                           : (ev.empty() ? 0.0 : ev.back().timestamp + gap);
  for (std::size_t i = position; i < ev.size(); ++i) ev[i].timestamp += duration;
  std::vector<TimedEvent> inserted;
  for (const auto& [rel, e] : block) inserted.push_back({base + rel, e});
  ev.insert(ev.begin() + static_cast<std::ptrdiff_t>(position), inserted.begin(), inserted.end());
  const std::size_t count = inserted.size();
  for (std::size_t i = 0; i < task.segments.size(); ++i) {
    auto& s = task.segments[i];
    if (static_cast<int>(i) == owner) {
      s.end += count;
    } else if (s.begin >= position) {
      s.begin += count;
      s.burst_end += count;
      s.end += count;
    }
  }
}

std::size_t target_segment(const GeneratedTask& task, int target, std::mt19937_64& rng) {
  if (task.segments.empty()) throw DegenerateInputError("task has no segments to edit");
  if (target >= 0) {
    for (std::size_t i = 0; i < task.segments.size(); ++i) {
      if (task.segments[i].subprocess == target) return i;
    }
  }
  // target absent: any segment
  return std::uniform_int_distribution<std::size_t>(0, task.segments.size() - 1)(rng);
}

std::vector<std::pair<double, EventId>> error_block(const std::vector<EventId>& errors, double gap) {
  std::vector<std::pair<double, EventId>> out;
  for (std::size_t i = 0; i < errors.size(); ++i) out.emplace_back(static_cast<double>(i) * gap, errors[i]);
  return out;
}

}  // namespace

std::vector<GeneratedTask> generate_corpus(const WorkloadModel& model, int n_tasks,
                                           std::uint64_t seed, double start_time) {
  if (n_tasks < 1) throw ConfigError("n_tasks must be at least 1");
  model.validate();
  std::vector<GeneratedTask> out;
  out.reserve(static_cast<std::size_t>(n_tasks));
  for (int i = 0; i < n_tasks; ++i) {
    std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
    out.push_back(generate_task(model, task_name(i), start_time + 17.0 * i, rng));
  }
  return out;
}

void apply_failure(GeneratedTask& task, const FailureMode& mode, const WorkloadModel& model,
                   std::mt19937_64& rng) {
  auto& ev = task.sequence.events;
  const double gap = model.timing.burst_gap_mean;
  switch (mode.edit) {
    case FailureEdit::TruncateTail: {
      const std::size_t si = target_segment(task, mode.target, rng);
      Segment& seg = task.segments[si];
      const std::size_t burst = std::max<std::size_t>(1, seg.burst_end - seg.begin);
      const std::size_t keep = seg.begin + std::uniform_int_distribution<std::size_t>(1, burst)(rng);
      ev.erase(ev.begin() + static_cast<std::ptrdiff_t>(keep), ev.end());
      seg.burst_end = std::min(seg.burst_end, keep);
      seg.end = keep;
      task.segments.resize(si + 1);
      insert_block(task, ev.size(), error_block(mode.error_events, gap),
                   gap * static_cast<double>(mode.error_events.size()), gap, static_cast<int>(si));
      break;
    }
    case FailureEdit::RepeatBlock: {
      const std::size_t si = target_segment(task, mode.target, rng);
      const Segment seg = task.segments[si];
      const int repeats = std::uniform_int_distribution<int>(mode.repeat_min, mode.repeat_max)(rng);
      const double t0 = ev[seg.begin].timestamp;
      const double span = seg.end < ev.size() ? ev[seg.end].timestamp - t0
                                              : ev[seg.end - 1].timestamp - t0 + gap;
      std::vector<std::pair<double, EventId>> block;
      for (int r = 0; r < repeats; ++r) {
        for (std::size_t i = seg.begin; i < seg.end; ++i) {
          block.emplace_back(r * span + (ev[i].timestamp - t0), ev[i].event_id);
        }
      }
      const double errors_at = repeats * span;
      for (std::size_t i = 0; i < mode.error_events.size(); ++i) {
        block.emplace_back(errors_at + static_cast<double>(i) * gap, mode.error_events[i]);
      }
      insert_block(task, seg.end, block,
                   errors_at + gap * static_cast<double>(mode.error_events.size()), gap,
                   static_cast<int>(si));
      break;
    }
    case FailureEdit::Substitute: {
      std::size_t begin = 0, end = ev.size();
      int owner = -1;
      if (mode.target >= 0 || !mode.error_events.empty() || mode.hang_max > 0.0) {
        const std::size_t si = target_segment(task, mode.target, rng);
        begin = task.segments[si].begin;
        end = task.segments[si].end;
        owner = static_cast<int>(si);
      }
      for (std::size_t i = begin; i < end; ++i) {
        auto it = mode.substitutions.find(ev[i].event_id);
        if (it != mode.substitutions.end()) ev[i].event_id = it->second;
      }
      if (owner >= 0 && (!mode.error_events.empty() || mode.hang_max > 0.0)) {
        auto block = error_block(mode.error_events, gap);
        const double lead = gap * static_cast<double>(mode.error_events.size());
        const double hang = uniform(rng, mode.hang_min, mode.hang_max);
        for (const auto& [rel, e] : polls(rng, model.timing, mode.hang_poll_events, hang)) {
          block.emplace_back(lead + rel, e);
        }
        insert_block(task, end, block, lead + hang, gap, owner);
      }
      break;
    }
  }
  task.sequence.label = TaskLabel::failed(mode.type);
}

std::vector<std::size_t> inject_failures(std::vector<GeneratedTask>& corpus,
                                         const WorkloadModel& model, double failure_ratio,
                                         std::uint64_t seed) {
  if (model.failure_modes.empty()) throw ConfigError("no failure modes defined");
  if (!(failure_ratio > 0.0 && failure_ratio < 1.0)) {
    throw ConfigError("failure ratio must lie in (0, 1)");
  }
  const auto count = static_cast<std::size_t>(std::llround(failure_ratio * static_cast<double>(corpus.size())));
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  order.resize(count);
  for (std::size_t j = 0; j < order.size(); ++j) {
    std::mt19937_64 task_rng(derive_seed(seed, order[j] + 1));
    apply_failure(corpus[order[j]], model.failure_modes[j % model.failure_modes.size()], model,
                  task_rng);
  }
  std::sort(order.begin(), order.end());
  return order;
}

void InjectionConfig::validate() const {
  if (!(ratio >= 0.0 && ratio <= 1.0)) throw ConfigError("injection ratio must lie in [0, 1]");
  if (ratio > 0.0 && operations.empty()) throw ConfigError("no instability operations enabled");
  if (shuffle_span < 2) throw ConfigError("shuffle span must be at least 2");
  if (ops_per_sequence < 1) throw ConfigError("ops_per_sequence must be at least 1");
}

void remove_event(EventSequence& seq, std::size_t position) {
  if (position >= seq.events.size()) throw ContractError("remove position out of range");
  if (seq.events.size() == 1) throw DegenerateInputError("cannot remove the only event");
  seq.events.erase(seq.events.begin() + static_cast<std::ptrdiff_t>(position));
}

void duplicate_event(EventSequence& seq, std::size_t position) {
  if (position >= seq.events.size()) throw ContractError("duplicate position out of range");
  const TimedEvent copy = seq.events[position];
  seq.events.insert(seq.events.begin() + static_cast<std::ptrdiff_t>(position) + 1, copy);
}

void shuffle_span(EventSequence& seq, std::size_t position, int span, std::mt19937_64& rng) {
  if (span < 2) throw ConfigError("shuffle span must be at least 2");
  if (position + static_cast<std::size_t>(span) > seq.events.size()) {
    throw ContractError("shuffle span runs past the sequence end");
  }
  std::vector<std::size_t> perm(static_cast<std::size_t>(span));
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  do {
    std::shuffle(perm.begin(), perm.end(), rng);
  } while (std::is_sorted(perm.begin(), perm.end()));
  std::vector<EventId> ids;
  for (auto p : perm) ids.push_back(seq.events[position + p].event_id);
  for (std::size_t i = 0; i < ids.size(); ++i) seq.events[position + i].event_id = ids[i];
}

namespace {

void perturb(EventSequence& seq, const InjectionConfig& config, std::mt19937_64& rng) {
  const auto before = seq.event_ids();
  auto op = pick(rng, config.operations);
  const std::size_t n = seq.events.size();
  const auto span = static_cast<std::size_t>(config.shuffle_span);
  if (op == InstabilityOp::Remove && n < 2) op = InstabilityOp::Duplicate;
  if (op == InstabilityOp::Shuffle && n < span) op = InstabilityOp::Duplicate;
  switch (op) {
    case InstabilityOp::Remove:
      remove_event(seq, std::uniform_int_distribution<std::size_t>(0, n - 1)(rng));
      break;
    case InstabilityOp::Duplicate:
      duplicate_event(seq, std::uniform_int_distribution<std::size_t>(0, n - 1)(rng));
      break;
    case InstabilityOp::Shuffle:
      shuffle_span(seq, std::uniform_int_distribution<std::size_t>(0, n - span)(rng),
                   config.shuffle_span, rng);
      // a span of equal events cannot change order
      if (seq.event_ids() == before) {
        duplicate_event(seq, std::uniform_int_distribution<std::size_t>(0, n - 1)(rng));
      }
      break;
  }
}

}  // namespace

std::vector<std::size_t> inject_instability(std::vector<EventSequence>& corpus,
                                            const InjectionConfig& config) {
  config.validate();
  const auto count = static_cast<std::size_t>(std::llround(config.ratio * static_cast<double>(corpus.size())));
  if (count == 0) return {};
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(config.seed);
  std::shuffle(order.begin(), order.end(), rng);
  order.resize(count);
  for (auto idx : order) {
    if (corpus[idx].events.empty()) throw DegenerateInputError("cannot perturb an empty sequence");
    std::mt19937_64 seq_rng(derive_seed(config.seed, idx + 1));
    for (int k = 0; k < config.ops_per_sequence; ++k) perturb(corpus[idx], config, seq_rng);
  }
  std::sort(order.begin(), order.end());
  return order;
}

namespace {

std::string fill_pattern(const std::string& pattern, std::mt19937_64& rng) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(pattern.size() + 32);
  for (std::size_t i = 0; i < pattern.size(); ++i) {
    if (pattern[i] == '{') {
      const auto close = pattern.find('}', i);
      const std::string name = pattern.substr(i + 1, close - i - 1);
      if (name == "n") {
        out += std::to_string(std::uniform_int_distribution<int>(1, 65535)(rng));
      } else if (name == "ip") {
        std::uniform_int_distribution<int> octet(1, 254);
        out += "10." + std::to_string(octet(rng)) + "." + std::to_string(octet(rng)) + "." +
               std::to_string(octet(rng));
      } else if (name == "uuid") {
        std::uniform_int_distribution<int> nib(0, 15);
        for (int k = 0; k < 32; ++k) {
          if (k == 8 || k == 12 || k == 16 || k == 20) out += '-';
          out += kHex[nib(rng)];
        }
      } else {
        throw ConfigError("unknown placeholder {" + name + "}");
      }
      i = close;
    } else {
      out += pattern[i];
    }
  }
  return out;
}

}  // namespace

std::vector<RawLogRecord> render_records(const std::vector<GeneratedTask>& tasks,
                                         const WorkloadModel& model, std::uint64_t seed) {
  std::vector<RawLogRecord> out;
  for (std::size_t ti = 0; ti < tasks.size(); ++ti) {
    std::mt19937_64 rng(derive_seed(seed, ti));
    for (const auto& e : tasks[ti].sequence.events) {
      if (e.event_id < 0 || e.event_id >= model.vocabulary_size()) {
        throw ContractError("event " + std::to_string(e.event_id) + " has no text pattern");
      }
      RawLogRecord r;
      r.timestamp = e.timestamp;
      r.task_id = tasks[ti].sequence.task_id;
      r.level = model.event_levels.empty() ? std::string("INFO")
                                           : model.event_levels[static_cast<std::size_t>(e.event_id)];
      r.content = fill_pattern(model.event_patterns[static_cast<std::size_t>(e.event_id)], rng);
      out.push_back(std::move(r));
    }
  }
  std::stable_sort(out.begin(), out.end(), [](const RawLogRecord& a, const RawLogRecord& b) {
    return a.timestamp < b.timestamp;
  });
  return out;
}

void write_ground_truth_csv(std::ostream& out, const std::vector<GeneratedTask>& tasks,
                            const WorkloadModel& model) {
  csv::write_row(out, {"task_id", "label", "failure_type", "segments"});
  for (const auto& t : tasks) {
    const TaskLabel label = t.sequence.label.value_or(TaskLabel::normal());
    std::string segments;
    for (const auto& s : t.segments) {
      if (!segments.empty()) segments += ';';
      segments += model.subprocesses[static_cast<std::size_t>(s.subprocess)].name + ":" +
                  std::to_string(s.begin) + "-" + std::to_string(s.end);
    }
    csv::write_row(out, {t.sequence.task_id, label.failure ? "failure" : "normal",
                         label.failure_type, segments});
  }
}

std::map<std::string, TaskLabel> read_ground_truth_csv(std::istream& in) {
  std::map<std::string, TaskLabel> out;
  std::string line;
  if (!std::getline(in, line)) throw FormatError("ground truth file is empty");
  const auto header = csv::split_row(line);
  if (header.size() < 3 || header[0] != "task_id" || header[1] != "label") {
    throw FormatError("ground truth header must start with task_id,label,failure_type");
  }
  std::size_t number = 1;
  while (std::getline(in, line)) {
    ++number;
    if (line.empty()) continue;
    const auto f = csv::split_row(line);
    if (f.size() < 3) throw FormatError("ground truth line " + std::to_string(number) + " is short");
    if (f[1] == "failure") {
      out[f[0]] = TaskLabel::failed(f[2]);
    } else if (f[1] == "normal") {
      out[f[0]] = TaskLabel::normal();
    } else {
      throw FormatError("ground truth line " + std::to_string(number) + ": unknown label " + f[1]);
    }
  }
  return out;
}

}  // namespace logfid
