#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "fieldvqa/dataset.hpp"
#include "fieldvqa/errors.hpp"

namespace fieldvqa {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(fmt::format("unreadable annotation '{}'", path.string()));
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

json parse_json_file(const fs::path& path) {
  auto text = read_file(path);
  // SROIE key files are occasionally saved with a UTF-8 BOM.
  if (text.size() >= 3 && static_cast<unsigned char>(text[0]) == 0xEF &&
      static_cast<unsigned char>(text[1]) == 0xBB && static_cast<unsigned char>(text[2]) == 0xBF) {
    text.erase(0, 3);
  }
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw DataError(fmt::format("unreadable annotation '{}': {}", path.string(), e.what()));
  }
}

std::vector<fs::path> sorted_files(const fs::path& dir, std::initializer_list<std::string_view> extensions) {
  std::vector<fs::path> out;
  if (!fs::is_directory(dir)) return out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    auto ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (std::find(extensions.begin(), extensions.end(), ext) != extensions.end()) out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::optional<fs::path> find_image(const std::vector<fs::path>& dirs, const std::string& stem) {
  static constexpr std::string_view kExtensions[] = {".png", ".jpg", ".jpeg", ".PNG", ".JPG", ".JPEG"};
  for (const auto& dir : dirs) {
    for (auto ext : kExtensions) {
      auto candidate = dir / (stem + std::string(ext));
      if (fs::is_regular_file(candidate)) return candidate;
    }
  }
  return std::nullopt;
}

// Annotation values are usually strings; gt_parse occasionally stores a list
// when a key repeats on the receipt. The first entry is taken.
std::optional<std::string> scalar_string(const json& value) {
  if (value.is_string()) return value.get<std::string>();
  if (value.is_number()) return value.dump();
  if (value.is_array() && !value.empty()) return scalar_string(value.front());
  return std::nullopt;
}

std::string lowercase(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  return out;
}

}  // namespace

const std::vector<CordFieldMapping>& cord_field_mappings() {
  // Quantity and menu_count come from the receipt-level counters in the
  // "total" group, not from summing menu lines.
  static const std::vector<CordFieldMapping> kMappings = {
      {"subtotal", "Subtotal", "sub_total", "subtotal_price"},
      {"tax", "Tax", "sub_total", "tax_price"},
      {"service", "Service", "sub_total", "service_price"},
      {"total", "Total", "total", "total_price"},
      {"cash", "Cash", "total", "cashprice"},
      {"change", "Change", "total", "changeprice"},
      {"creditcard", "Credit Card", "total", "creditcardprice"},
      {"quantity", "Quantity", "total", "menuqty_cnt"},
      {"menu_count", "Count of Menu Items", "total", "menutype_cnt"},
  };
  return kMappings;
}

namespace {

// gt_parse layout: {"gt_parse": {"sub_total": {...}, "total": {...}}}, possibly
// wrapped as a JSON string under "ground_truth" (the hub export).
std::optional<json> cord_gt_parse(const json& annotation) {
  if (auto it = annotation.find("gt_parse"); it != annotation.end() && it->is_object()) return std::optional<json>(std::in_place, *it);
  if (auto it = annotation.find("ground_truth"); it != annotation.end()) {
    json gt = *it;
    if (gt.is_string()) {
      try {
        gt = json::parse(gt.get<std::string>());
      } catch (const json::parse_error&) {
        return std::nullopt;
      }
    }
    if (gt.is_object()) return cord_gt_parse(gt);
  }
  return std::nullopt;
}

std::map<std::string, std::string> cord_truth(const json& annotation) {
  std::map<std::string, std::string> truth;
  if (auto gt = cord_gt_parse(annotation)) {
    for (const auto& m : cord_field_mappings()) {
      auto group = gt->find(m.cord_group);
      if (group == gt->end()) continue;
      const json* container = &*group;
      // A group repeated on the receipt is stored as a list of objects.
      if (container->is_array() && !container->empty()) container = &container->front();
      if (!container->is_object()) continue;
      auto value = container->find(m.cord_key);
      if (value == container->end()) continue;
      if (auto s = scalar_string(*value)) truth.emplace(m.field_id, *s);
    }
    return truth;
  }

  auto lines = annotation.find("valid_line");
  if (lines == annotation.end() || !lines->is_array()) return truth;
  for (const auto& line : *lines) {
    if (!line.is_object() || !line.contains("category") || !line["category"].is_string()) continue;
    const auto category = line["category"].get<std::string>();
    for (const auto& m : cord_field_mappings()) {
      if (category != m.cord_group + "." + m.cord_key || truth.contains(m.field_id)) continue;
      std::string text;
      for (const auto& word : line.value("words", json::array())) {
        if (!word.contains("text") || !word["text"].is_string()) continue;
        if (!text.empty()) text += ' ';
        text += word["text"].get<std::string>();
      }
      if (!text.empty()) truth.emplace(m.field_id, std::move(text));
    }
  }
  return truth;
}

}  // namespace

DatasetBundle import_cord(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DataError(fmt::format("CORD directory '{}' not found", dir.string()));
  const bool split_layout = fs::is_directory(dir / "json");
  const fs::path json_dir = split_layout ? dir / "json" : dir;
  const std::vector<fs::path> image_dirs =
      split_layout ? std::vector<fs::path>{dir / "image", dir / "images", dir} : std::vector<fs::path>{dir};

  DatasetBundle bundle;
  bundle.name = "cord";
  bundle.numeric_profile = NumericProfile::kGroupingDot;
  bundle.doc_kind = "receipt";
  for (const auto& m : cord_field_mappings()) {
    bundle.fields.push_back(FieldSpec{m.field_id, m.display_name, FieldKind::kNumeric, {}});
  }

  for (const auto& path : sorted_files(json_dir, {".json"})) {
    const auto annotation = parse_json_file(path);
    if (!annotation.is_object()) throw DataError(fmt::format("unreadable annotation '{}'", path.string()));
    const auto stem = path.stem().string();
    auto image = find_image(image_dirs, stem);
    if (!image) {
      throw DataError(fmt::format("annotation '{}' is missing its image reference (document '{}')", path.string(),
                                  stem));
    }
    bundle.documents.push_back(DocumentRecord{stem, image->string(), cord_truth(annotation)});
  }
  validate(bundle);
  return bundle;
}

DatasetBundle import_sroie(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DataError(fmt::format("SROIE directory '{}' not found", dir.string()));
  fs::path key_dir = dir;
  for (const char* sub : {"key", "keys", "entities"}) {
    if (fs::is_directory(dir / sub)) key_dir = dir / sub;
  }
  const std::vector<fs::path> image_dirs = {dir / "img", dir / "image", dir / "images", key_dir, dir};

  DatasetBundle bundle;
  bundle.name = "sroie";
  bundle.numeric_profile = NumericProfile::kDecimalDot;
  bundle.doc_kind = "receipt";
  bundle.fields = {
      {"company", "Company Name", FieldKind::kText, {}},
      {"address", "Address", FieldKind::kText, {}},
      {"date", "Date", FieldKind::kDate, {}},
      {"total", "Total Amount", FieldKind::kNumeric, {}},
  };

  for (const auto& path : sorted_files(key_dir, {".txt", ".json"})) {
    const auto key = parse_json_file(path);
    if (!key.is_object()) throw DataError(fmt::format("unreadable annotation '{}'", path.string()));
    const auto stem = path.stem().string();
    auto image = find_image(image_dirs, stem);
    if (!image) throw DataError(fmt::format("missing image for SROIE document '{}'", stem));
    DocumentRecord doc{stem, image->string(), {}};
    for (const auto& f : bundle.fields) {
      auto it = key.find(f.id);
      if (it == key.end()) continue;
      if (auto s = scalar_string(*it)) doc.truth.emplace(f.id, *s);
    }
    bundle.documents.push_back(std::move(doc));
  }
  validate(bundle);
  return bundle;
}

FieldKind classify_question_kind(std::string_view question) {
  const auto q = lowercase(question);
  auto has_word = [&](std::string_view word) {
    std::size_t pos = 0;
    while ((pos = q.find(word, pos)) != std::string::npos) {
      const bool left = pos == 0 || !std::isalpha(static_cast<unsigned char>(q[pos - 1]));
      const std::size_t end = pos + word.size();
      // "dates" and "dated" still count.
      const bool right = end >= q.size() || !std::isalpha(static_cast<unsigned char>(q[end])) ||
                         q.compare(end, 1, "s") == 0 || q.compare(end, 1, "d") == 0;
      if (left && right) return true;
      pos = end;
    }
    return false;
  };
  if (has_word("date") || has_word("when") || has_word("day")) return FieldKind::kDate;
  return FieldKind::kText;
}

namespace {

std::string slug(std::string_view s) {
  std::string out;
  for (unsigned char c : s) {
    if (std::isalnum(c)) {
      out += static_cast<char>(std::tolower(c));
    } else if (!out.empty() && out.back() != '_') {
      out += '_';
    }
  }
  while (!out.empty() && out.back() == '_') out.pop_back();
  return out.empty() ? "doc" : out;
}

// "What is the date?" -> "date"; anything else keeps its wording minus '?'.
std::string question_display_name(std::string_view question) {
  std::string q(question);
  while (!q.empty() && (q.back() == '?' || std::isspace(static_cast<unsigned char>(q.back())))) q.pop_back();
  static constexpr std::string_view kPrefixes[] = {"what is the ", "what's the ", "who is the ", "what are the ",
                                                   "what is ",     "who is ",     "what are "};
  const auto lower = lowercase(q);
  for (auto prefix : kPrefixes) {
    if (lower.starts_with(prefix) && lower.size() > prefix.size()) return q.substr(prefix.size());
  }
  return q.empty() ? std::string(question) : q;
}

std::string image_ref(const json& rec) {
  auto it = rec.find("image");
  if (it == rec.end()) return {};
  if (it->is_string()) return it->get<std::string>();
  if (it->is_object() && it->contains("path") && (*it)["path"].is_string()) return (*it)["path"].get<std::string>();
  return {};
}

}  // namespace

DatasetBundle import_funsd_vqa(const fs::path& file) {
  const auto text = read_file(file);
  std::vector<json> records;
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '[') {
    try {
      for (auto& r : json::parse(text)) records.push_back(std::move(r));
    } catch (const json::parse_error& e) {
      throw DataError(fmt::format("unreadable FUNSD-VQA file '{}': {}", file.string(), e.what()));
    }
  } else {
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      try {
        records.push_back(json::parse(line));
      } catch (const json::parse_error& e) {
        throw DataError(fmt::format("{}: line {}: malformed record: {}", file.string(), line_no, e.what()));
      }
    }
  }

  DatasetBundle bundle;
  bundle.name = "funsd_vqa";
  bundle.numeric_profile = NumericProfile::kDecimalDot;
  bundle.doc_kind = "document";

  std::map<std::string, std::size_t> doc_index;
  std::size_t rejected = 0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& rec = records[i];
    if (!rec.is_object()) throw DataError(fmt::format("FUNSD-VQA record {} is not an object", i));
    const auto image = image_ref(rec);
    const auto question = rec.value("question", std::string{});
    std::optional<std::string> answer;
    if (auto it = rec.find("answer"); it != rec.end()) answer = scalar_string(*it);
    if (question.empty()) throw DataError(fmt::format("FUNSD-VQA record {} has no question", i));
    if (!answer) throw DataError(fmt::format("FUNSD-VQA record {} has no answer string", i));
    if (answer->find_first_not_of(" \t\r\n") == std::string::npos) {
      spdlog::warn("FUNSD-VQA record {} ('{}') has an empty answer; pair dropped", i, question);
      ++rejected;
      continue;
    }

    std::string doc_id;
    if (rec.contains("document_id") && rec["document_id"].is_string()) {
      doc_id = rec["document_id"].get<std::string>();
    } else if (!image.empty()) {
      doc_id = fs::path(image).stem().string();
    } else {
      throw DataError(fmt::format("FUNSD-VQA record {} has neither an image nor a document_id", i));
    }

    auto [it, inserted] = doc_index.emplace(doc_id, bundle.documents.size());
    if (inserted) bundle.documents.push_back(DocumentRecord{doc_id, image, {}});
    auto& doc = bundle.documents[it->second];
    if (doc.image.empty()) doc.image = image;

    FieldSpec spec;
    spec.id = fmt::format("{}_q{}", slug(doc_id), doc.truth.size() + 1);
    spec.display_name = question_display_name(question);
    spec.kind = classify_question_kind(question);
    spec.description = question;
    doc.truth.emplace(spec.id, *answer);
    bundle.fields.push_back(std::move(spec));
  }
  if (rejected > 0) spdlog::warn("FUNSD-VQA import dropped {} pair(s) with empty answers", rejected);
  for (const auto& d : bundle.documents) {
    if (d.image.empty()) throw DataError(fmt::format("FUNSD-VQA document '{}' has no image reference", d.id));
  }
  validate(bundle);
  return bundle;
}

}  // namespace fieldvqa
