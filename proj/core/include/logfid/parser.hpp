#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace logfid {

using EventId = int;

inline constexpr std::string_view kWildcard = "<*>";

struct RawLogRecord {
  double timestamp = 0.0;  // seconds since epoch
  std::string task_id;
  std::string content;
  std::optional<std::string> level;
};

/// Throws DegenerateInputError if the record violates its invariants.
void validate_record(const RawLogRecord& record);

struct LogTemplate {
  EventId event_id = 0;
  std::vector<std::string> tokens;
  long occurrence_count = 0;

  std::string text() const;
  bool operator==(const LogTemplate&) const = default;
};

/// A named predicate deciding whether a whole token is a variable.
struct MaskingRule {
  std::string name;
  std::function<bool(std::string_view)> matches;
};

/// Integers/decimals, IPv4 (optional :port), hex runs of >= 4 digits, UUIDs.
std::vector<MaskingRule> default_masking_rules();
MaskingRule regex_rule(std::string name, const std::string& pattern);

bool is_number_token(std::string_view token);
bool is_ipv4_token(std::string_view token);
bool is_hex_token(std::string_view token);
bool is_uuid_token(std::string_view token);

/// Whitespace split, then replace tokens matched by any rule with the wildcard.
std::vector<std::string> preprocess_line(std::string_view raw,
                                         const std::vector<MaskingRule>& rules);

struct ParserConfig {
  double similarity_threshold = 0.45;
  int depth = 5;
  std::size_t max_children = 100;
};

struct ParseResult {
  EventId event_id = 0;
  const LogTemplate* log_template = nullptr;
  bool created = false;
};

/// Fixed-depth parse tree. Routing uses the token count, then the first
/// `depth - 2` tokens; a leaf holds the candidate templates, compared by
/// positional similarity.
class Parser {
 public:
  explicit Parser(ParserConfig config = {},
                  std::vector<MaskingRule> rules = default_masking_rules());

  /// Rebuilds a tree from a vocabulary previously returned by
  /// export_vocabulary(). Event ids must be dense and ordered.
  static Parser from_vocabulary(std::vector<LogTemplate> templates,
                                ParserConfig config = {},
                                std::vector<MaskingRule> rules = default_masking_rules());

  ParseResult parse(const RawLogRecord& record);
  ParseResult parse_tokens(const std::vector<std::string>& tokens);

  /// Read-only lookup against the current tree; never mutates.
  std::optional<EventId> match(std::string_view content) const;
  std::optional<EventId> match_tokens(const std::vector<std::string>& tokens) const;

  const std::vector<LogTemplate>& templates() const { return templates_; }
  const ParserConfig& config() const { return config_; }
  const std::vector<MaskingRule>& rules() const { return rules_; }

 private:
  struct Node {
    std::map<std::string, std::unique_ptr<Node>, std::less<>> children;
    std::vector<EventId> group;
  };

  const Node* find_leaf(const std::vector<std::string>& tokens) const;
  Node& leaf_for_insert(const std::vector<std::string>& tokens);
  std::optional<EventId> best_match(const Node& leaf,
                                    const std::vector<std::string>& tokens) const;

  ParserConfig config_;
  std::vector<MaskingRule> rules_;
  std::map<std::size_t, std::unique_ptr<Node>> roots_;  // keyed by token count
  std::vector<LogTemplate> templates_;
};

/// Fraction of positions where the template token equals the line token or
/// is a wildcard. Sequences of different length score 0.
double template_similarity(const std::vector<std::string>& template_tokens,
                           const std::vector<std::string>& tokens);

/// Templates ordered by event id.
std::vector<LogTemplate> export_vocabulary(const Parser& parser);

void write_vocabulary_csv(std::ostream& out, const std::vector<LogTemplate>& vocab);
std::vector<LogTemplate> read_vocabulary_csv(std::istream& in);

}  // namespace logfid
