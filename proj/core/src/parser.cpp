#include "logfid/parser.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <istream>
#include <ostream>
#include <regex>

#include "logfid/csv.hpp"
#include "logfid/error.hpp"

namespace logfid {

namespace {

bool is_digit(char c) { return c >= '0' && c <= '9'; }
bool is_hex_digit(char c) { return std::isxdigit(static_cast<unsigned char>(c)) != 0; }

bool has_digit(std::string_view token) {
  return std::any_of(token.begin(), token.end(), is_digit);
}

std::string_view trim(std::string_view s) {
  auto not_space = [](char c) { return !std::isspace(static_cast<unsigned char>(c)); };
  auto first = std::find_if(s.begin(), s.end(), not_space);
  auto last = std::find_if(s.rbegin(), s.rend(), not_space).base();
  if (first >= last) return {};
  return s.substr(static_cast<std::size_t>(first - s.begin()),
                  static_cast<std::size_t>(last - first));
}

// Routing key for one token position.
std::string_view route_key(std::string_view token) {
  if (token == kWildcard || has_digit(token)) return kWildcard;
  return token;
}

}  // namespace

void validate_record(const RawLogRecord& record) {
  if (!std::isfinite(record.timestamp) || record.timestamp < 0.0) {
    throw DegenerateInputError("record timestamp must be finite and non-negative");
  }
  if (trim(record.content).empty()) {
    throw DegenerateInputError("record content is empty");
  }
}

std::string LogTemplate::text() const {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i];
  }
  return out;
}

bool is_number_token(std::string_view t) {
  if (!t.empty() && (t.front() == '+' || t.front() == '-')) t.remove_prefix(1);
  if (t.empty()) return false;
  bool seen_digit = false;
  bool seen_dot = false;
  for (char c : t) {
    if (is_digit(c)) {
      seen_digit = true;
    } else if (c == '.' && !seen_dot) {
      seen_dot = true;
    } else {
      return false;
    }
  }
  return seen_digit && t.back() != '.';
}

bool is_ipv4_token(std::string_view t) {
  if (auto colon = t.find(':'); colon != std::string_view::npos) {
    auto port = t.substr(colon + 1);
    if (port.empty() || !std::all_of(port.begin(), port.end(), is_digit)) return false;
    t = t.substr(0, colon);
  }
  int octets = 0;
  std::size_t pos = 0;
  while (pos <= t.size()) {
    auto dot = t.find('.', pos);
    auto part = t.substr(pos, dot == std::string_view::npos ? std::string_view::npos : dot - pos);
    if (part.empty() || part.size() > 3 || !std::all_of(part.begin(), part.end(), is_digit)) {
      return false;
    }
    int value = 0;
    std::from_chars(part.data(), part.data() + part.size(), value);
    if (value > 255) return false;
    ++octets;
    if (dot == std::string_view::npos) break;
    pos = dot + 1;
  }
  return octets == 4;
}

bool is_hex_token(std::string_view t) {
  if (t.size() > 2 && t[0] == '0' && (t[1] == 'x' || t[1] == 'X')) {
    t.remove_prefix(2);
    return !t.empty() && std::all_of(t.begin(), t.end(), is_hex_digit);
  }
  // Pure words like "dead" or "cafe" would otherwise be masked.
  return t.size() >= 4 && std::all_of(t.begin(), t.end(), is_hex_digit) && has_digit(t);
}

bool is_uuid_token(std::string_view t) {
  static constexpr std::size_t kGroups[] = {8, 4, 4, 4, 12};
  if (t.size() != 36) return false;
  std::size_t pos = 0;
  for (std::size_t g = 0; g < 5; ++g) {
    for (std::size_t i = 0; i < kGroups[g]; ++i, ++pos) {
      if (!is_hex_digit(t[pos])) return false;
    }
    if (g < 4) {
      if (t[pos] != '-') return false;
      ++pos;
    }
  }
  return true;
}

std::vector<MaskingRule> default_masking_rules() {
  return {
      {"number", is_number_token},
      {"ipv4", is_ipv4_token},
      {"hex", is_hex_token},
      {"uuid", is_uuid_token},
  };
}

MaskingRule regex_rule(std::string name, const std::string& pattern) {
  auto re = std::make_shared<std::regex>(pattern, std::regex::ECMAScript | std::regex::optimize);
  return {std::move(name), [re](std::string_view token) {
            return std::regex_match(token.begin(), token.end(), *re);
          }};
}

std::vector<std::string> preprocess_line(std::string_view raw,
                                         const std::vector<MaskingRule>& rules) {
  auto body = trim(raw);
  if (body.empty()) throw DegenerateInputError("log line is empty after trimming");

  std::vector<std::string> tokens;
  std::size_t pos = 0;
  while (pos < body.size()) {
    while (pos < body.size() && std::isspace(static_cast<unsigned char>(body[pos]))) ++pos;
    auto start = pos;
    while (pos < body.size() && !std::isspace(static_cast<unsigned char>(body[pos]))) ++pos;
    if (pos > start) {
      auto token = body.substr(start, pos - start);
      bool masked = std::any_of(rules.begin(), rules.end(),
                                [&](const MaskingRule& r) { return r.matches(token); });
      tokens.emplace_back(masked ? kWildcard : token);
    }
  }
  return tokens;
}

double template_similarity(const std::vector<std::string>& template_tokens,
                           const std::vector<std::string>& tokens) {
  if (template_tokens.size() != tokens.size() || tokens.empty()) return 0.0;
  std::size_t same = 0;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (template_tokens[i] == kWildcard || template_tokens[i] == tokens[i]) ++same;
  }
  return static_cast<double>(same) / static_cast<double>(tokens.size());
}

Parser::Parser(ParserConfig config, std::vector<MaskingRule> rules)
    : config_(config), rules_(std::move(rules)) {
  if (!(config_.similarity_threshold > 0.0 && config_.similarity_threshold < 1.0)) {
    throw ConfigError("parser similarity threshold must lie in (0, 1)");
  }
  if (config_.depth < 1) throw ConfigError("parser depth must be positive");
  if (config_.max_children < 2) throw ConfigError("parser max_children must be >= 2");
}

Parser Parser::from_vocabulary(std::vector<LogTemplate> templates, ParserConfig config,
                               std::vector<MaskingRule> rules) {
  Parser parser(config, std::move(rules));
  for (std::size_t i = 0; i < templates.size(); ++i) {
    auto& t = templates[i];
    if (t.event_id != static_cast<EventId>(i)) {
      throw FormatError("vocabulary event ids must be dense and ordered");
    }
    if (t.tokens.empty()) throw FormatError("vocabulary template has no tokens");
    parser.leaf_for_insert(t.tokens).group.push_back(t.event_id);
    parser.templates_.push_back(std::move(t));
  }
  return parser;
}

const Parser::Node* Parser::find_leaf(const std::vector<std::string>& tokens) const {
  auto root = roots_.find(tokens.size());
  if (root == roots_.end()) return nullptr;
  const Node* node = root->second.get();
  const auto route_depth =
      std::min<std::size_t>(tokens.size(), static_cast<std::size_t>(std::max(0, config_.depth - 2)));
  for (std::size_t i = 0; i < route_depth; ++i) {
    auto key = route_key(tokens[i]);
    auto it = node->children.find(key);
    if (it == node->children.end()) it = node->children.find(kWildcard);
    if (it == node->children.end()) return nullptr;
    node = it->second.get();
  }
  return node;
}

Parser::Node& Parser::leaf_for_insert(const std::vector<std::string>& tokens) {
  auto& root = roots_[tokens.size()];
  if (!root) root = std::make_unique<Node>();
  Node* node = root.get();
  const auto route_depth =
      std::min<std::size_t>(tokens.size(), static_cast<std::size_t>(std::max(0, config_.depth - 2)));
  for (std::size_t i = 0; i < route_depth; ++i) {
    std::string_view key = route_key(tokens[i]);
    auto it = node->children.find(key);
    if (it == node->children.end()) {
      if (key != kWildcard && node->children.size() + 1 >= config_.max_children) {
        key = kWildcard;
        it = node->children.find(key);
      }
      if (it == node->children.end()) {
        it = node->children.emplace(std::string(key), std::make_unique<Node>()).first;
      }
    }
    node = it->second.get();
  }
  return *node;
}

std::optional<EventId> Parser::best_match(const Node& leaf,
                                          const std::vector<std::string>& tokens) const {
  std::optional<EventId> best;
  double best_sim = -1.0;
  // Group ids are appended in creation order, so the first strict maximum is
  // also the lowest event id among ties.
  for (EventId id : leaf.group) {
    double sim = template_similarity(templates_[static_cast<std::size_t>(id)].tokens, tokens);
    if (sim > best_sim) {
      best_sim = sim;
      best = id;
    }
  }
  if (best && best_sim >= config_.similarity_threshold) return best;
  return std::nullopt;
}

ParseResult Parser::parse(const RawLogRecord& record) {
  validate_record(record);
  return parse_tokens(preprocess_line(record.content, rules_));
}

ParseResult Parser::parse_tokens(const std::vector<std::string>& tokens) {
  if (tokens.empty()) throw DegenerateInputError("cannot parse an empty token list");
  Node& leaf = leaf_for_insert(tokens);
  if (auto id = best_match(leaf, tokens)) {
    auto& tmpl = templates_[static_cast<std::size_t>(*id)];
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      if (tmpl.tokens[i] != tokens[i]) tmpl.tokens[i] = kWildcard;
    }
    ++tmpl.occurrence_count;
    return {*id, &tmpl, false};
  }
  // A line made only of variables has no anchor; keep its shape anyway.
  const auto id = static_cast<EventId>(templates_.size());
  templates_.push_back({id, tokens, 1});
  leaf.group.push_back(id);
  return {id, &templates_.back(), true};
}

std::optional<EventId> Parser::match(std::string_view content) const {
  return match_tokens(preprocess_line(content, rules_));
}

std::optional<EventId> Parser::match_tokens(const std::vector<std::string>& tokens) const {
  const Node* leaf = find_leaf(tokens);
  if (!leaf) return std::nullopt;
  return best_match(*leaf, tokens);
}

std::vector<LogTemplate> export_vocabulary(const Parser& parser) {
  auto out = parser.templates();
  std::sort(out.begin(), out.end(),
            [](const LogTemplate& a, const LogTemplate& b) { return a.event_id < b.event_id; });
  return out;
}

void write_vocabulary_csv(std::ostream& out, const std::vector<LogTemplate>& vocab) {
  csv::write_row(out, {"event_id", "occurrence_count", "template"});
  for (const auto& t : vocab) {
    csv::write_row(out, {std::to_string(t.event_id), std::to_string(t.occurrence_count), t.text()});
  }
}

std::vector<LogTemplate> read_vocabulary_csv(std::istream& in) {
  std::vector<LogTemplate> vocab;
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (header) {
      header = false;
      continue;
    }
    if (line.empty()) continue;
    auto fields = csv::split_row(line);
    if (fields.size() != 3) throw FormatError("vocabulary row must have 3 fields: " + line);
    LogTemplate t;
    t.event_id = std::stoi(fields[0]);
    t.occurrence_count = std::stol(fields[1]);
    std::string_view text = fields[2];
    std::size_t pos = 0;
    while (pos < text.size()) {
      auto sp = text.find(' ', pos);
      if (sp == std::string_view::npos) sp = text.size();
      if (sp > pos) t.tokens.emplace_back(text.substr(pos, sp - pos));
      pos = sp + 1;
    }
    vocab.push_back(std::move(t));
  }
  return vocab;
}

}  // namespace logfid
