#include "fieldvqa/dataset.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "fieldvqa/errors.hpp"

namespace fieldvqa {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

std::string_view to_string(FieldKind kind) {
  switch (kind) {
    case FieldKind::kNumeric: return "numeric";
    case FieldKind::kText: return "text";
    case FieldKind::kDate: return "date";
  }
  return "text";
}

std::string_view to_string(NumericProfile profile) {
  return profile == NumericProfile::kGroupingDot ? "grouping_dot" : "decimal_dot";
}

std::optional<FieldKind> parse_field_kind(std::string_view text) {
  if (text == "numeric") return FieldKind::kNumeric;
  if (text == "text") return FieldKind::kText;
  if (text == "date") return FieldKind::kDate;
  return std::nullopt;
}

std::optional<NumericProfile> parse_numeric_profile(std::string_view text) {
  if (text == "grouping_dot") return NumericProfile::kGroupingDot;
  if (text == "decimal_dot") return NumericProfile::kDecimalDot;
  return std::nullopt;
}

const FieldSpec* DatasetBundle::find_field(std::string_view id) const {
  for (const auto& f : fields) {
    if (f.id == id) return &f;
  }
  return nullptr;
}

const FieldSpec& DatasetBundle::field(std::string_view id) const {
  if (const auto* f = find_field(id)) return *f;
  throw DataError(fmt::format("dataset '{}' declares no field '{}'", name, id));
}

const DocumentRecord* DatasetBundle::find_document(std::string_view id) const {
  for (const auto& d : documents) {
    if (d.id == id) return &d;
  }
  return nullptr;
}

void validate(const DatasetBundle& bundle) {
  std::set<std::string> field_ids;
  for (const auto& f : bundle.fields) {
    if (f.id.empty()) throw DataError("field with empty id");
    if (f.display_name.empty()) throw DataError(fmt::format("field '{}' has an empty display name", f.id));
    if (!field_ids.insert(f.id).second) throw DataError(fmt::format("duplicate field id '{}'", f.id));
  }
  std::set<std::string> doc_ids;
  for (const auto& d : bundle.documents) {
    if (d.id.empty()) throw DataError("document with empty id");
    if (!doc_ids.insert(d.id).second) throw DataError(fmt::format("duplicate document id '{}'", d.id));
    for (const auto& [key, value] : d.truth) {
      if (!field_ids.contains(key)) {
        throw DataError(fmt::format("document '{}' references undeclared field '{}'", d.id, key));
      }
    }
  }
}

namespace {

std::string require_string(const json& obj, const char* key, std::size_t line) {
  auto it = obj.find(key);
  if (it == obj.end() || !it->is_string()) {
    throw DataError(fmt::format("line {}: missing or non-string \"{}\"", line, key));
  }
  return it->get<std::string>();
}

FieldKind require_kind(const json& obj, std::size_t line) {
  auto text = require_string(obj, "kind", line);
  auto kind = parse_field_kind(text);
  if (!kind) throw DataError(fmt::format("line {}: unknown field kind '{}'", line, text));
  return *kind;
}

}  // namespace

DatasetBundle parse_canonical(std::string_view text, const std::string& source) {
  DatasetBundle bundle;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  bool declared_fields = false;
  std::set<std::string> doc_ids;

  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;

    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw DataError(fmt::format("{}: line {}: malformed record: {}", source, line_no, e.what()));
    }
    if (!obj.is_object()) {
      throw DataError(fmt::format("{}: line {}: malformed record: expected an object", source, line_no));
    }

    if (!have_header) {
      if (!obj.contains("dataset")) {
        throw DataError(fmt::format("{}: line {}: first record must be the bundle header", source, line_no));
      }
      bundle.name = require_string(obj, "dataset", line_no);
      auto profile_text = require_string(obj, "numeric_profile", line_no);
      auto profile = parse_numeric_profile(profile_text);
      if (!profile) {
        throw DataError(fmt::format("{}: line {}: unknown numeric_profile '{}'", source, line_no, profile_text));
      }
      bundle.numeric_profile = *profile;
      if (obj.contains("doc_kind")) bundle.doc_kind = require_string(obj, "doc_kind", line_no);
      if (auto it = obj.find("fields"); it != obj.end()) {
        if (!it->is_array()) throw DataError(fmt::format("{}: line {}: \"fields\" must be an array", source, line_no));
        declared_fields = true;
        for (const auto& f : *it) {
          FieldSpec spec;
          spec.id = require_string(f, "id", line_no);
          spec.display_name = f.contains("display_name") ? require_string(f, "display_name", line_no) : spec.id;
          spec.kind = require_kind(f, line_no);
          if (f.contains("description")) spec.description = require_string(f, "description", line_no);
          if (bundle.find_field(spec.id)) {
            throw DataError(fmt::format("{}: line {}: duplicate field id '{}'", source, line_no, spec.id));
          }
          bundle.fields.push_back(std::move(spec));
        }
      }
      have_header = true;
      continue;
    }

    DocumentRecord doc;
    doc.id = require_string(obj, "id", line_no);
    doc.image = require_string(obj, "image", line_no);
    if (!doc_ids.insert(doc.id).second) {
      throw DataError(fmt::format("{}: line {}: duplicate document id '{}'", source, line_no, doc.id));
    }
    auto fields_it = obj.find("fields");
    if (fields_it == obj.end() || !fields_it->is_object()) {
      throw DataError(fmt::format("{}: line {}: missing \"fields\" object", source, line_no));
    }
    for (const auto& [field_id, entry] : fields_it->items()) {
      if (!entry.is_object()) {
        throw DataError(fmt::format("{}: line {}: field '{}' must be an object", source, line_no, field_id));
      }
      auto kind = require_kind(entry, line_no);
      const FieldSpec* spec = bundle.find_field(field_id);
      if (!spec) {
        if (declared_fields) {
          throw DataError(fmt::format("{}: line {}: document '{}' references undeclared field '{}'", source,
                                      line_no, doc.id, field_id));
        }
        bundle.fields.push_back(FieldSpec{field_id, field_id, kind, {}});
        spec = &bundle.fields.back();
      }
      if (spec->kind != kind) {
        throw DataError(fmt::format("{}: line {}: field '{}' declared {} but record says {}", source, line_no,
                                    field_id, to_string(spec->kind), to_string(kind)));
      }
      doc.truth.emplace(field_id, require_string(entry, "value", line_no));
    }
    bundle.documents.push_back(std::move(doc));
  }

  if (!have_header) throw DataError(fmt::format("{}: empty dataset file", source));
  validate(bundle);
  return bundle;
}

DatasetBundle load_canonical(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(fmt::format("cannot read dataset '{}'", path.string()));
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_canonical(buf.str(), path.string());
}

std::string to_canonical(const DatasetBundle& bundle) {
  validate(bundle);
  std::string out;
  ordered_json header;
  header["dataset"] = bundle.name;
  header["numeric_profile"] = std::string(to_string(bundle.numeric_profile));
  header["doc_kind"] = bundle.doc_kind;
  header["fields"] = ordered_json::array();
  for (const auto& f : bundle.fields) {
    ordered_json spec;
    spec["id"] = f.id;
    spec["display_name"] = f.display_name;
    spec["kind"] = std::string(to_string(f.kind));
    if (!f.description.empty()) spec["description"] = f.description;
    header["fields"].push_back(std::move(spec));
  }
  out += header.dump();
  out += '\n';

  for (const auto& d : bundle.documents) {
    ordered_json rec;
    rec["id"] = d.id;
    rec["image"] = d.image;
    rec["fields"] = ordered_json::object();
    for (const auto& [key, value] : d.truth) {
      rec["fields"][key] = {{"value", value}, {"kind", std::string(to_string(bundle.field(key).kind))}};
    }
    out += rec.dump();
    out += '\n';
  }
  return out;
}

void save_canonical(const DatasetBundle& bundle, const std::filesystem::path& path) {
  auto text = to_canonical(bundle);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError(fmt::format("cannot write dataset '{}'", path.string()));
  out << text;
}

}  // namespace fieldvqa
