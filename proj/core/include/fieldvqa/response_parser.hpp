#pragma once

#include <map>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "fieldvqa/dataset.hpp"
#include "fieldvqa/matching.hpp"

namespace fieldvqa {

// A brace-delimited key/value block lifted from model output. Values keep
// their original spelling: `{"total": 48.000}` yields "48.000", and unquoted
// amounts with commas (`1,346,000`) survive intact. Nested objects are
// flattened into their leaf keys.
struct StructuredBlock {
  std::vector<std::pair<std::string, std::string>> pairs;
  std::size_t begin = 0;  // offset of '{' in the source text
  std::size_t end = 0;    // one past the closing '}'
};

// Top-level blocks in order of appearance. A block truncated by the end of
// the text is still returned.
std::vector<StructuredBlock> scan_structured_blocks(std::string_view text);

// How well a response key names a field: 0 none, 1 token containment,
// 2 display-name equality, 3 id equality.
int key_alignment(std::string_view key, const FieldSpec& field);

// Separate-strategy answer: structured block, then "name: value" line, then
// the final number/date in the text (numeric/date kinds) or the final line
// (text kind).
ParsedValue parse_separate_response(std::string_view text, const FieldSpec& field, NumericProfile profile,
                                    const MatchRules& rules = {});

// Joint-strategy answer: keys of the largest block aligned to fields; fields
// missing from the block fall back to "name: value" lines.
std::map<std::string, ParsedValue> parse_joint_response(std::string_view text, std::span<const FieldSpec> fields,
                                                        NumericProfile profile, const MatchRules& rules = {});

}  // namespace fieldvqa
