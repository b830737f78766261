#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace fieldvqa {

enum class FieldKind { kNumeric, kText, kDate };

// How '.' and ',' inside amounts are read.
//   kGroupingDot: both are digit-group separators (CORD, IDR amounts like "48.000").
//   kDecimalDot:  ',' groups thousands, '.' is the decimal point (SROIE).
enum class NumericProfile { kGroupingDot, kDecimalDot };

std::string_view to_string(FieldKind kind);
std::string_view to_string(NumericProfile profile);
std::optional<FieldKind> parse_field_kind(std::string_view text);
std::optional<NumericProfile> parse_numeric_profile(std::string_view text);

struct FieldSpec {
  std::string id;
  std::string display_name;
  FieldKind kind = FieldKind::kText;
  std::string description;

  bool operator==(const FieldSpec&) const = default;
};

struct DocumentRecord {
  std::string id;
  // File path or a "data:" URI; never decoded here.
  std::string image;
  // Gold values, verbatim from the source annotation.
  std::map<std::string, std::string> truth;

  std::size_t labeled_field_count() const { return truth.size(); }
  bool has_field(const std::string& field_id) const { return truth.contains(field_id); }

  bool operator==(const DocumentRecord&) const = default;
};

struct DatasetBundle {
  std::string name;
  std::vector<FieldSpec> fields;
  std::vector<DocumentRecord> documents;
  NumericProfile numeric_profile = NumericProfile::kDecimalDot;
  // Noun used in prompts ("receipt", "document").
  std::string doc_kind = "document";

  const FieldSpec* find_field(std::string_view id) const;
  const FieldSpec& field(std::string_view id) const;  // throws DataError
  const DocumentRecord* find_document(std::string_view id) const;

  bool operator==(const DatasetBundle&) const = default;
};

// Checks id uniqueness and that every truth key names a declared field.
// Throws DataError on the first violation.
void validate(const DatasetBundle& bundle);

// Canonical line-delimited format. First line is the bundle header:
//   {"dataset": str, "numeric_profile": "grouping_dot"|"decimal_dot",
//    "doc_kind": str, "fields": [{"id","display_name","kind","description"}]}
// followed by one document per line:
//   {"id": str, "image": str, "fields": {field_id: {"value": str, "kind": str}}}
// "doc_kind" and "fields" in the header are optional; without a field list the
// fields are inferred from the records in first-seen order.
DatasetBundle load_canonical(const std::filesystem::path& path);
DatasetBundle parse_canonical(std::string_view text, const std::string& source = "<memory>");
void save_canonical(const DatasetBundle& bundle, const std::filesystem::path& path);
std::string to_canonical(const DatasetBundle& bundle);

// Importers for third-party annotation layouts.
//
// CORD: a directory with json/ and image/ subdirectories (the public release
// layout), or a flat directory of <stem>.json files next to <stem>.{png,jpg}.
// Both the "valid_line" word-level format and the "gt_parse" format are read.
DatasetBundle import_cord(const std::filesystem::path& dir);

// SROIE task 3: <stem>.txt (or .json) key files holding a JSON object with
// company/address/date/total, images under the same directory or img/.
DatasetBundle import_sroie(const std::filesystem::path& dir);

// FUNSD-VQA: JSON array or JSON lines of {"image", "question", "answer"}
// records (optional "id"/"document_id"). Pairs with an empty answer are
// dropped with a warning.
DatasetBundle import_funsd_vqa(const std::filesystem::path& file);

// Keyword heuristic used for FUNSD questions.
FieldKind classify_question_kind(std::string_view question);

// Index lookup for the CORD field set, exposed for tests and docs.
struct CordFieldMapping {
  std::string field_id;
  std::string display_name;
  std::string cord_group;  // "sub_total" or "total"
  std::string cord_key;    // e.g. "tax_price"
};
const std::vector<CordFieldMapping>& cord_field_mappings();

}  // namespace fieldvqa
