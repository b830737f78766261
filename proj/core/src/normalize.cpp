#include <array>
#include <cctype>
#include <regex>

#include <fmt/format.h>

#include "fieldvqa/matching.hpp"

namespace fieldvqa {

std::string_view to_string(ValueSource source) {
  switch (source) {
    case ValueSource::kJsonBlock: return "json_block";
    case ValueSource::kKeyValueLine: return "keyvalue_line";
    case ValueSource::kProseTail: return "prose_tail";
    case ValueSource::kNone: return "none";
  }
  return "none";
}

std::string_view to_string(MatchReason reason) {
  switch (reason) {
    case MatchReason::kExact: return "exact";
    case MatchReason::kNormalizedEqual: return "normalized_equal";
    case MatchReason::kDigitsEqual: return "digits_equal";
    case MatchReason::kMismatch: return "mismatch";
    case MatchReason::kUnparseable: return "unparseable";
  }
  return "mismatch";
}

std::string MatchRules::version() const {
  return fmt::format("match-v1;casefold={:d};currency={:d};group_pad={:d}", casefold_text, strip_currency,
                     pad_short_final_group);
}

namespace {

bool is_ascii_space(unsigned char c) { return c == ' ' || (c >= '\t' && c <= '\r'); }
bool is_ascii_punct(unsigned char c) { return c < 0x80 && std::ispunct(c); }

std::string collapse_whitespace(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  bool pending_space = false;
  for (unsigned char c : s) {
    if (is_ascii_space(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out += ' ';
    pending_space = false;
    out += static_cast<char>(c);
  }
  return out;
}

std::string lower_ascii(std::string s) {
  for (auto& c : s) {
    if (static_cast<unsigned char>(c) < 0x80) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  return s;
}

std::string text_form(std::string_view value, bool casefold) {
  auto s = collapse_whitespace(value);
  if (casefold) s = lower_ascii(std::move(s));
  std::size_t begin = 0;
  std::size_t end = s.size();
  auto trimmable = [&](unsigned char c) { return is_ascii_space(c) || is_ascii_punct(c); };
  while (begin < end && trimmable(static_cast<unsigned char>(s[begin]))) ++begin;
  while (end > begin && trimmable(static_cast<unsigned char>(s[end - 1]))) --end;
  return s.substr(begin, end - begin);
}

std::string strip_currency(std::string s) {
  static constexpr std::array<std::string_view, 10> kSymbols = {
      "$", "\xE2\x82\xAC", "\xC2\xA3", "\xC2\xA5", "\xE2\x82\xB9", "\xE2\x82\xA9", "\xE2\x82\xB1", "\xE0\xB8\xBF",
      "\xEF\xBC\x84", "\xEF\xBF\xA5"};
  for (auto sym : kSymbols) {
    for (auto pos = s.find(sym); pos != std::string::npos; pos = s.find(sym, pos)) s.erase(pos, sym.size());
  }
  static const std::regex kCodes(R"((^|[^A-Za-z])(rp\.?|rm|idr|usd|myr|sgd|eur|gbp|jpy|krw|inr|aud|cad)(?![A-Za-z]))",
                                 std::regex::icase);
  return std::regex_replace(s, kCodes, "$1");
}

const std::regex& clean_number_pattern() {
  static const std::regex kPattern(R"(^[+-]?[0-9.,]*[0-9][0-9.,]*$)");
  return kPattern;
}

const std::regex& number_token_pattern() {
  static const std::regex kPattern(R"(\d(?:\d|[.,](?=\d))*)");
  return kPattern;
}

std::string digits_of_clean(std::string_view clean, NumericProfile profile, const MatchRules& rules) {
  std::string sign;
  if (!clean.empty() && (clean.front() == '-' || clean.front() == '+')) {
    if (clean.front() == '-') sign = "-";
    clean.remove_prefix(1);
  }
  std::string digits;
  for (char c : clean) {
    if (c >= '0' && c <= '9') digits += c;
  }
  if (profile == NumericProfile::kGroupingDot && rules.pad_short_final_group) {
    const auto last_sep = clean.find_last_of(".,");
    if (last_sep != std::string_view::npos) {
      const auto tail = clean.size() - last_sep - 1;
      if (tail >= 1 && tail <= 2) digits.append(3 - tail, '0');
    }
  }
  const auto first_nonzero = digits.find_first_not_of('0');
  digits = first_nonzero == std::string::npos ? "0" : digits.substr(first_nonzero);
  if (digits == "0") sign.clear();
  return sign + digits;
}

std::string strip_trailing_periods(std::string s) {
  while (!s.empty() && s.back() == '.') s.pop_back();
  return s;
}

ParsedValue normalize_numeric(std::string_view value, NumericProfile profile, const MatchRules& rules) {
  ParsedValue out;
  out.raw = std::string(value);
  std::string s = rules.strip_currency ? strip_currency(std::string(value)) : std::string(value);
  std::string compact;
  for (unsigned char c : s) {
    if (!is_ascii_space(c)) compact += static_cast<char>(c);
  }
  compact = strip_trailing_periods(std::move(compact));
  out.normalized = lower_ascii(compact);

  if (std::regex_match(compact, clean_number_pattern())) {
    out.numeric_digits = digits_of_clean(compact, profile, rules);
    return out;
  }
  // Prose around a single amount ("about 48.000 total") still yields digits.
  auto begin = std::sregex_iterator(compact.begin(), compact.end(), number_token_pattern());
  const auto count = std::distance(begin, std::sregex_iterator());
  if (count == 1) {
    const auto& m = *begin;
    std::string token = m.str();
    if (m.position() > 0 && compact[static_cast<std::size_t>(m.position()) - 1] == '-') token = "-" + token;
    out.numeric_digits = digits_of_clean(token, profile, rules);
  }
  return out;
}

int month_index(std::string_view name) {
  static constexpr std::array<std::string_view, 12> kMonths = {"jan", "feb", "mar", "apr", "may", "jun",
                                                               "jul", "aug", "sep", "oct", "nov", "dec"};
  for (std::size_t i = 0; i < kMonths.size(); ++i) {
    if (name.substr(0, 3) == kMonths[i]) return static_cast<int>(i) + 1;
  }
  return 0;
}

std::optional<std::string> ymd(int y, int m, int d) {
  if (m < 1 || m > 12 || d < 1 || d > 31) return std::nullopt;
  return fmt::format("{:04d}-{:02d}-{:02d}", y, m, d);
}

std::optional<std::string> canonical_date(const std::string& s) {
  static const std::regex kYmd(R"(^(\d{4})[-/.](\d{1,2})[-/.](\d{1,2})$)");
  static const std::regex kNumericDmy(R"(^(\d{1,2})[-/.](\d{1,2})[-/.](\d{4})$)");
  static const std::regex kDayMonthName(R"(^(\d{1,2})(?:st|nd|rd|th)?[ \-.]?([a-z]{3,9})\.?[ ,\-.]*(\d{4})$)");
  static const std::regex kMonthNameDay(R"(^([a-z]{3,9})\.?[ \-.]?(\d{1,2})(?:st|nd|rd|th)?,?[ \-.]?(\d{4})$)");
  std::smatch m;
  if (std::regex_match(s, m, kYmd)) return ymd(std::stoi(m[1]), std::stoi(m[2]), std::stoi(m[3]));
  if (std::regex_match(s, m, kNumericDmy)) {
    const int a = std::stoi(m[1]);
    const int b = std::stoi(m[2]);
    const int y = std::stoi(m[3]);
    if (a == b) return ymd(y, a, b);
    if (a > 12 && b <= 12) return ymd(y, b, a);
    if (b > 12 && a <= 12) return ymd(y, a, b);
    return std::nullopt;
  }
  if (std::regex_match(s, m, kDayMonthName)) {
    if (int month = month_index(m[2].str())) return ymd(std::stoi(m[3]), month, std::stoi(m[1]));
  }
  if (std::regex_match(s, m, kMonthNameDay)) {
    if (int month = month_index(m[1].str())) return ymd(std::stoi(m[3]), month, std::stoi(m[2]));
  }
  return std::nullopt;
}

}  // namespace

ParsedValue normalize(std::string_view value, FieldKind kind, NumericProfile profile, const MatchRules& rules) {
  switch (kind) {
    case FieldKind::kNumeric:
      return normalize_numeric(value, profile, rules);
    case FieldKind::kDate: {
      ParsedValue out;
      out.raw = std::string(value);
      // Dates are always compared case-insensitively; month names vary in case.
      out.normalized = text_form(value, true);
      if (auto d = canonical_date(out.normalized)) out.normalized = *d;
      return out;
    }
    case FieldKind::kText:
      break;
  }
  ParsedValue out;
  out.raw = std::string(value);
  out.normalized = text_form(value, rules.casefold_text);
  return out;
}

MatchVerdict values_match(std::string_view pred, std::string_view gold, FieldKind kind, NumericProfile profile,
                          const MatchRules& rules) {
  if (pred == gold) return {true, MatchReason::kExact};
  const auto p = normalize(pred, kind, profile, rules);
  const auto g = normalize(gold, kind, profile, rules);
  if (kind == FieldKind::kNumeric) {
    if (p.numeric_digits && g.numeric_digits) {
      if (*p.numeric_digits == *g.numeric_digits) return {true, MatchReason::kDigitsEqual};
      return {false, MatchReason::kMismatch};
    }
    if (!p.normalized.empty() && p.normalized == g.normalized) return {true, MatchReason::kNormalizedEqual};
    return {false, MatchReason::kUnparseable};
  }
  if (p.normalized.empty() || g.normalized.empty()) return {false, MatchReason::kUnparseable};
  if (p.normalized == g.normalized) return {true, MatchReason::kNormalizedEqual};
  return {false, MatchReason::kMismatch};
}

std::optional<long long> numeric_magnitude(std::string_view value, NumericProfile profile, const MatchRules& rules) {
  const auto parsed = normalize(value, FieldKind::kNumeric, profile, rules);
  if (!parsed.numeric_digits) return std::nullopt;
  const auto& digits = *parsed.numeric_digits;
  const auto unsigned_len = digits.size() - (digits.front() == '-' ? 1 : 0);
  if (unsigned_len > 18) return std::nullopt;
  return std::stoll(digits);
}

}  // namespace fieldvqa
