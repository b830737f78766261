#include "fieldvqa/response_parser.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <optional>
#include <regex>
#include <tuple>

namespace fieldvqa {

namespace {

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '\f' || c == '\v'; }

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

void append_utf8(std::string& out, unsigned cp) {
  if (cp < 0x80) {
    out += static_cast<char>(cp);
  } else if (cp < 0x800) {
    out += static_cast<char>(0xC0 | (cp >> 6));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else {
    out += static_cast<char>(0xE0 | (cp >> 12));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  }
}

// Reads a quoted string starting at s[pos] (the quote). Returns the decoded
// text and the offset just past the closing quote (or s.size()).
std::pair<std::string, std::size_t> read_quoted(std::string_view s, std::size_t pos) {
  const char quote = s[pos];
  std::string out;
  std::size_t i = pos + 1;
  while (i < s.size() && s[i] != quote) {
    if (s[i] == '\\' && i + 1 < s.size()) {
      const char e = s[i + 1];
      i += 2;
      switch (e) {
        case 'n': out += '\n'; break;
        case 't': out += '\t'; break;
        case 'r': out += '\r'; break;
        case 'b': out += '\b'; break;
        case 'f': out += '\f'; break;
        case 'u':
          if (i + 4 <= s.size()) {
            try {
              append_utf8(out, static_cast<unsigned>(std::stoul(std::string(s.substr(i, 4)), nullptr, 16)));
              i += 4;
            } catch (const std::exception&) {
              out += "\\u";
            }
          }
          break;
        default: out += e; break;
      }
      continue;
    }
    out += s[i++];
  }
  return {std::move(out), std::min(i + 1, s.size())};
}

bool quote_can_open(std::string_view s, std::size_t pos) {
  if (s[pos] == '"') return true;
  // A single quote opens a string only at token start, so apostrophes inside
  // unquoted values stay literal.
  std::size_t j = pos;
  while (j > 0 && is_space(s[j - 1])) --j;
  return j == 0 || s[j - 1] == '{' || s[j - 1] == ',' || s[j - 1] == ':' || s[j - 1] == '[';
}

// Offset one past the bracket closing the one at s[pos], or s.size().
std::size_t match_bracket(std::string_view s, std::size_t pos, bool* closed = nullptr) {
  if (closed) *closed = false;
  int depth = 0;
  for (std::size_t i = pos; i < s.size(); ++i) {
    const char c = s[i];
    if ((c == '"' || c == '\'') && quote_can_open(s, i)) {
      i = read_quoted(s, i).second - 1;
      continue;
    }
    if (c == '{' || c == '[') ++depth;
    if (c == '}' || c == ']') {
      if (--depth == 0) {
        if (closed) *closed = true;
        return i + 1;
      }
    }
  }
  return s.size();
}

bool is_key_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == ' ' || c == '.';
}

// At s[pos] (just after a ','), does another key start? i.e. ws* (quote |
// bare-key) ws* ':'
bool next_key_starts(std::string_view s, std::size_t pos) {
  while (pos < s.size() && is_space(s[pos])) ++pos;
  if (pos >= s.size()) return false;
  if (s[pos] == '"' || s[pos] == '\'') {
    auto end = read_quoted(s, pos).second;
    while (end < s.size() && is_space(s[end])) ++end;
    return end < s.size() && s[end] == ':';
  }
  if (!std::isalpha(static_cast<unsigned char>(s[pos])) && s[pos] != '_') return false;
  while (pos < s.size() && s[pos] != ':' && is_key_char(s[pos]) && s[pos] != '\n') ++pos;
  return pos < s.size() && s[pos] == ':';
}

void parse_object_body(std::string_view s, std::size_t& pos, std::vector<std::pair<std::string, std::string>>& out);

// Value that starts at s[pos]; nested objects are flattened into `out`.
std::optional<std::string> parse_value(std::string_view s, std::size_t& pos,
                                       std::vector<std::pair<std::string, std::string>>& out) {
  if (pos >= s.size()) return std::nullopt;
  const char c = s[pos];
  if (c == '"' || c == '\'') {
    auto [text, next] = read_quoted(s, pos);
    pos = next;
    return text;
  }
  if (c == '{') {
    ++pos;
    parse_object_body(s, pos, out);
    return std::nullopt;
  }
  if (c == '[') {
    bool closed = false;
    const auto end = match_bracket(s, pos, &closed);
    auto inner = s.substr(pos + 1, (closed ? end - 1 : end) - (pos + 1));
    pos = end;
    std::size_t ipos = 0;
    while (ipos < inner.size() && is_space(inner[ipos])) ++ipos;
    if (ipos >= inner.size()) return std::nullopt;
    if (inner[ipos] == '"' || inner[ipos] == '\'' || inner[ipos] == '{') return parse_value(inner, ipos, out);
    auto first = inner.substr(ipos, inner.find(',', ipos) == std::string_view::npos ? std::string_view::npos
                                                                                     : inner.find(',', ipos) - ipos);
    return std::string(trim(first));
  }
  // Unquoted: runs to the next `, key:` boundary, a newline or the closing brace.
  const auto start = pos;
  while (pos < s.size()) {
    const char d = s[pos];
    if (d == '}' || d == '\n') break;
    if (d == ',' && next_key_starts(s, pos + 1)) break;
    ++pos;
  }
  auto raw = trim(s.substr(start, pos - start));
  while (!raw.empty() && raw.back() == ',') raw = trim(raw.substr(0, raw.size() - 1));
  if (raw.empty() || raw == "null") return std::nullopt;
  return std::string(raw);
}

void parse_object_body(std::string_view s, std::size_t& pos, std::vector<std::pair<std::string, std::string>>& out) {
  while (pos < s.size()) {
    while (pos < s.size() && (is_space(s[pos]) || s[pos] == ',')) ++pos;
    if (pos >= s.size()) return;
    if (s[pos] == '}') {
      ++pos;
      return;
    }

    std::string key;
    if (s[pos] == '"' || s[pos] == '\'') {
      auto [text, next] = read_quoted(s, pos);
      key = std::move(text);
      pos = next;
    } else {
      const auto start = pos;
      while (pos < s.size() && s[pos] != ':' && s[pos] != ',' && s[pos] != '}' && s[pos] != '\n') ++pos;
      key = std::string(trim(s.substr(start, pos - start)));
    }
    while (pos < s.size() && is_space(s[pos]) && s[pos] != '\n') ++pos;
    if (pos >= s.size() || s[pos] != ':' || key.empty()) {
      // Not a pair; resynchronise at the next separator.
      while (pos < s.size() && s[pos] != ',' && s[pos] != '\n' && s[pos] != '}') ++pos;
      continue;
    }
    ++pos;
    while (pos < s.size() && is_space(s[pos])) ++pos;
    if (auto value = parse_value(s, pos, out)) out.emplace_back(std::move(key), std::move(*value));
  }
}

std::vector<std::string> tokens_of(std::string_view s) {
  std::vector<std::string> out;
  std::string cur;
  char prev = 0;
  for (char c : s) {
    const auto uc = static_cast<unsigned char>(c);
    if (std::isalnum(uc) || uc >= 0x80) {
      // camelCase boundary
      if (!cur.empty() && std::isupper(uc) && std::islower(static_cast<unsigned char>(prev))) {
        out.push_back(std::move(cur));
        cur.clear();
      }
      cur += static_cast<char>(uc < 0x80 ? std::tolower(uc) : uc);
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
    prev = c;
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

std::string concat(const std::vector<std::string>& tokens) {
  std::string out;
  for (const auto& t : tokens) out += t;
  return out;
}

bool token_covers(const std::string& key_token, const std::string& name_token) {
  static constexpr std::array<std::string_view, 7> kSuffixes = {"price", "amount", "amt", "cnt",
                                                                "count", "value", "val"};
  if (key_token == name_token) return true;
  if (!key_token.starts_with(name_token)) return false;
  const auto rest = std::string_view(key_token).substr(name_token.size());
  return std::find(kSuffixes.begin(), kSuffixes.end(), rest) != kSuffixes.end();
}

bool contains_all(const std::vector<std::string>& key_tokens, const std::vector<std::string>& name_tokens) {
  if (name_tokens.empty()) return false;
  return std::all_of(name_tokens.begin(), name_tokens.end(), [&](const std::string& t) {
    return std::any_of(key_tokens.begin(), key_tokens.end(), [&](const std::string& k) { return token_covers(k, t); });
  });
}

const std::regex& prose_number_pattern() {
  static const std::regex kPattern(R"(\d(?:\d|[.,](?=\d))*(?!\d)(?![.,]?\d)(?!\s*%))");
  return kPattern;
}

std::optional<std::string> last_number(std::string_view text) {
  const std::string s(text);
  std::optional<std::string> last;
  for (auto it = std::sregex_iterator(s.begin(), s.end(), prose_number_pattern()); it != std::sregex_iterator(); ++it) {
    last = it->str();
  }
  return last;
}

std::optional<std::string> last_date(std::string_view text) {
  static const std::regex kDate(
      R"((\d{1,4}[-/.]\d{1,2}[-/.]\d{1,4})|(\d{1,2}(?:st|nd|rd|th)?[ \-]?(?:jan|feb|mar|apr|may|jun|jul|aug|sep|oct|nov|dec)[a-z]*\.?,?[ \-]?\d{2,4})|((?:jan|feb|mar|apr|may|jun|jul|aug|sep|oct|nov|dec)[a-z]*\.?[ \-]?\d{1,2}(?:st|nd|rd|th)?,?[ \-]?\d{2,4}))",
      std::regex::icase);
  const std::string s(text);
  std::optional<std::string> last;
  for (auto it = std::sregex_iterator(s.begin(), s.end(), kDate); it != std::sregex_iterator(); ++it) {
    last = it->str();
  }
  return last;
}

std::string strip_markdown(std::string_view line) {
  std::string out;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if ((line[i] == '*' || line[i] == '_') && i + 1 < line.size() && line[i + 1] == line[i]) {
      ++i;
      continue;
    }
    if (line[i] == '`') continue;
    out += line[i];
  }
  std::string_view v = trim(out);
  // Bullets and list numbering.
  for (bool changed = true; changed && !v.empty();) {
    changed = false;
    if (v.starts_with("\xE2\x80\xA2")) {
      v.remove_prefix(3);
      changed = true;
    } else if (v.front() == '-' || v.front() == '*' || v.front() == '#' || v.front() == '>') {
      v.remove_prefix(1);
      changed = true;
    } else {
      std::size_t d = 0;
      while (d < v.size() && std::isdigit(static_cast<unsigned char>(v[d]))) ++d;
      if (d > 0 && d < v.size() && (v[d] == '.' || v[d] == ')') && d + 1 < v.size() && v[d + 1] == ' ') {
        v.remove_prefix(d + 1);
        changed = true;
      }
    }
    v = trim(v);
  }
  return std::string(v);
}

std::string strip_value_decoration(std::string_view v) {
  v = trim(v);
  while (!v.empty() && v.back() == ',') v = trim(v.substr(0, v.size() - 1));
  if (v.size() >= 2 && (v.front() == '"' || v.front() == '\'') && v.back() == v.front()) {
    v = v.substr(1, v.size() - 2);
  }
  return std::string(v);
}

bool is_clean_number(std::string_view v, NumericProfile profile, const MatchRules& rules) {
  // A value is "clean" when its digits do not depend on picking a token.
  const auto parsed = normalize(v, FieldKind::kNumeric, profile, rules);
  if (!parsed.numeric_digits) return false;
  static const std::regex kClean(R"(^[+-]?[0-9.,]*[0-9][0-9.,]*$)");
  return std::regex_match(parsed.normalized, kClean);
}

// Value lifted from a "name: value" line, or nothing when the line's value
// does not fit the field kind.
std::optional<std::string> line_value(std::string_view value, const FieldSpec& field, NumericProfile profile,
                                      const MatchRules& rules) {
  auto v = strip_value_decoration(value);
  if (v.empty()) return std::nullopt;
  if (field.kind == FieldKind::kNumeric) {
    if (is_clean_number(v, profile, rules)) return v;
    return last_number(v);
  }
  return v;
}

std::optional<std::string> scan_keyvalue_lines(std::string_view text, const FieldSpec& field,
                                               NumericProfile profile, const MatchRules& rules) {
  std::optional<std::string> best;
  int best_score = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    const auto line = strip_markdown(text.substr(start, end - start));
    start = end + 1;

    auto sep = line.find(':');
    if (sep == std::string::npos) sep = line.find('=');
    if (sep == std::string::npos || sep == 0) continue;
    const auto key = strip_value_decoration(line.substr(0, sep));
    if (key.empty() || tokens_of(key).size() > 6) continue;
    const int score = key_alignment(key, field);
    if (score <= best_score) continue;
    if (auto v = line_value(std::string_view(line).substr(sep + 1), field, profile, rules)) {
      best = std::move(v);
      best_score = score;
    }
  }
  return best;
}

ParsedValue make_parsed(std::string raw, FieldKind kind, NumericProfile profile, const MatchRules& rules,
                        ValueSource source) {
  auto out = normalize(raw, kind, profile, rules);
  out.source = source;
  return out;
}

ParsedValue unparseable() { return ParsedValue{}; }

struct Candidate {
  int score;
  std::size_t extra_tokens;
  std::size_t field_index;
  std::size_t pair_index;
};

// Unique field<->key assignment over one block, best alignments first.
std::map<std::size_t, std::size_t> align_block(const StructuredBlock& block, std::span<const FieldSpec> fields) {
  std::vector<Candidate> candidates;
  for (std::size_t f = 0; f < fields.size(); ++f) {
    for (std::size_t p = 0; p < block.pairs.size(); ++p) {
      const int score = key_alignment(block.pairs[p].first, fields[f]);
      if (score == 0) continue;
      const auto key_tokens = tokens_of(block.pairs[p].first).size();
      const auto name_tokens = std::min(tokens_of(fields[f].id).size(), tokens_of(fields[f].display_name).size());
      candidates.push_back({score, key_tokens > name_tokens ? key_tokens - name_tokens : 0, f, p});
    }
  }
  std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
    return std::tie(b.score, a.extra_tokens, a.field_index, a.pair_index) <
           std::tie(a.score, b.extra_tokens, b.field_index, b.pair_index);
  });
  std::map<std::size_t, std::size_t> field_to_pair;
  std::vector<bool> used(block.pairs.size(), false);
  for (const auto& c : candidates) {
    if (field_to_pair.contains(c.field_index) || used[c.pair_index]) continue;
    field_to_pair.emplace(c.field_index, c.pair_index);
    used[c.pair_index] = true;
  }
  return field_to_pair;
}

std::vector<const StructuredBlock*> by_size(const std::vector<StructuredBlock>& blocks) {
  std::vector<const StructuredBlock*> out;
  for (const auto& b : blocks) out.push_back(&b);
  std::stable_sort(out.begin(), out.end(), [](const auto* a, const auto* b) {
    if (a->pairs.size() != b->pairs.size()) return a->pairs.size() > b->pairs.size();
    return (a->end - a->begin) > (b->end - b->begin);
  });
  return out;
}

}  // namespace

std::vector<StructuredBlock> scan_structured_blocks(std::string_view text) {
  std::vector<StructuredBlock> blocks;
  std::size_t i = 0;
  while (i < text.size()) {
    if (text[i] != '{') {
      ++i;
      continue;
    }
    bool closed = false;
    const auto end = match_bracket(text, i, &closed);
    const auto body_end = closed ? end - 1 : end;
    auto body = text.substr(i + 1, body_end - (i + 1));
    StructuredBlock block;
    block.begin = i;
    block.end = end;
    std::size_t pos = 0;
    parse_object_body(body, pos, block.pairs);
    if (!block.pairs.empty()) blocks.push_back(std::move(block));
    i = std::max(end, i + 1);
  }
  return blocks;
}

int key_alignment(std::string_view key, const FieldSpec& field) {
  const auto key_tokens = tokens_of(key);
  if (key_tokens.empty()) return 0;
  const auto id_tokens = tokens_of(field.id);
  const auto name_tokens = tokens_of(field.display_name);
  if (concat(key_tokens) == concat(id_tokens)) return 3;
  if (key_tokens == name_tokens || concat(key_tokens) == concat(name_tokens)) return 2;
  const std::size_t slack = 3;
  if (contains_all(key_tokens, id_tokens) && key_tokens.size() <= id_tokens.size() + slack) return 1;
  if (contains_all(key_tokens, name_tokens) && key_tokens.size() <= name_tokens.size() + slack) return 1;
  return 0;
}

ParsedValue parse_separate_response(std::string_view text, const FieldSpec& field, NumericProfile profile,
                                    const MatchRules& rules) {
  const auto blocks = scan_structured_blocks(text);
  for (const auto* block : by_size(blocks)) {
    const auto assignment = align_block(*block, std::span(&field, 1));
    if (auto it = assignment.find(0); it != assignment.end()) {
      return make_parsed(block->pairs[it->second].second, field.kind, profile, rules, ValueSource::kJsonBlock);
    }
  }
  if (auto v = scan_keyvalue_lines(text, field, profile, rules)) {
    return make_parsed(std::move(*v), field.kind, profile, rules, ValueSource::kKeyValueLine);
  }
  switch (field.kind) {
    case FieldKind::kNumeric:
      if (auto n = last_number(text)) return make_parsed(std::move(*n), field.kind, profile, rules, ValueSource::kProseTail);
      break;
    case FieldKind::kDate:
      if (auto d = last_date(text)) return make_parsed(std::move(*d), field.kind, profile, rules, ValueSource::kProseTail);
      break;
    case FieldKind::kText: {
      std::string last;
      std::size_t start = 0;
      while (start <= text.size()) {
        auto end = text.find('\n', start);
        if (end == std::string_view::npos) end = text.size();
        auto line = strip_markdown(text.substr(start, end - start));
        if (!line.empty()) last = std::move(line);
        start = end + 1;
      }
      if (!last.empty()) return make_parsed(std::move(last), field.kind, profile, rules, ValueSource::kProseTail);
      break;
    }
  }
  return unparseable();
}

std::map<std::string, ParsedValue> parse_joint_response(std::string_view text, std::span<const FieldSpec> fields,
                                                        NumericProfile profile, const MatchRules& rules) {
  std::map<std::string, ParsedValue> out;
  const auto blocks = scan_structured_blocks(text);
  const auto ordered = by_size(blocks);
  if (!ordered.empty()) {
    const auto& block = *ordered.front();
    for (const auto& [f, p] : align_block(block, fields)) {
      out.emplace(fields[f].id,
                  make_parsed(block.pairs[p].second, fields[f].kind, profile, rules, ValueSource::kJsonBlock));
    }
  }
  for (const auto& field : fields) {
    if (out.contains(field.id)) continue;
    if (auto v = scan_keyvalue_lines(text, field, profile, rules)) {
      out.emplace(field.id, make_parsed(std::move(*v), field.kind, profile, rules, ValueSource::kKeyValueLine));
    } else {
      out.emplace(field.id, unparseable());
    }
  }
  return out;
}

}  // namespace fieldvqa
