#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "fieldvqa/dataset.hpp"

namespace fieldvqa {

enum class ValueSource { kJsonBlock, kKeyValueLine, kProseTail, kNone };

std::string_view to_string(ValueSource source);

struct ParsedValue {
  std::string raw;         // substring lifted from the model output (or the input value)
  std::string normalized;  // comparison form; a fixed point of normalize()
  std::optional<std::string> numeric_digits;  // "-"? digits, numeric kind only
  ValueSource source = ValueSource::kNone;

  // False when nothing usable was recovered from the model output.
  bool found() const { return source != ValueSource::kNone; }
  bool operator==(const ParsedValue&) const = default;
};

enum class MatchReason { kExact, kNormalizedEqual, kDigitsEqual, kMismatch, kUnparseable };

std::string_view to_string(MatchReason reason);

struct MatchVerdict {
  bool matched = false;
  MatchReason reason = MatchReason::kMismatch;

  bool operator==(const MatchVerdict&) const = default;
};

// Switches that together define the grading behaviour. The version string
// is archived with every run so a replay under different rules is flagged.
struct MatchRules {
  bool casefold_text = true;
  bool strip_currency = true;
  // grouping_dot only: a short final group ("2.00") is read as a thousands
  // group that lost trailing zeros ("2.000").
  bool pad_short_final_group = true;

  std::string version() const;
  bool operator==(const MatchRules&) const = default;
};

// Normal form for comparison. Never throws.
//   text:    case-folded, whitespace collapsed, outer punctuation trimmed
//   numeric: currency symbols/codes and whitespace removed, trailing periods
//            dropped; digits = sign + digits with every separator removed
//   date:    Y-M-D when the day/month order is unambiguous, otherwise the
//            text normal form
ParsedValue normalize(std::string_view value, FieldKind kind, NumericProfile profile,
                      const MatchRules& rules = {});

// Matched iff exact, normalized-equal, or (numeric) digits-equal. Symmetric.
MatchVerdict values_match(std::string_view pred, std::string_view gold, FieldKind kind, NumericProfile profile,
                          const MatchRules& rules = {});

// Integer magnitude of a numeric value under the profile, when it has one
// that fits in 64 bits.
std::optional<long long> numeric_magnitude(std::string_view value, NumericProfile profile,
                                           const MatchRules& rules = {});

}  // namespace fieldvqa
