#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "fieldvqa/backend.hpp"
#include "fieldvqa/matching.hpp"

namespace fieldvqa {

using json = nlohmann::json;

std::string_view to_string(CorruptionRule rule) {
  switch (rule) {
    case CorruptionRule::kSwapWithSiblingNumeric: return "swap_with_sibling_numeric";
    case CorruptionRule::kTruncate: return "truncate";
    case CorruptionRule::kGarble: return "garble";
  }
  return "garble";
}

std::optional<CorruptionRule> parse_corruption_rule(std::string_view text) {
  if (text == "swap_with_sibling_numeric") return CorruptionRule::kSwapWithSiblingNumeric;
  if (text == "truncate") return CorruptionRule::kTruncate;
  if (text == "garble") return CorruptionRule::kGarble;
  return std::nullopt;
}

double keyed_uniform(std::uint64_t seed, std::span<const std::string_view> parts) {
  // FNV-1a over the key; the digest seeds a fresh engine so each draw is
  // independent of request order and thread interleaving.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](std::string_view bytes) {
    for (unsigned char c : bytes) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
    h ^= 0x1f;
    h *= 0x100000001b3ULL;
  };
  mix(std::string_view(reinterpret_cast<const char*>(&seed), sizeof(seed)));
  for (auto p : parts) mix(p);
  std::seed_seq seq{static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(h >> 32)};
  std::mt19937_64 engine(seq);
  return static_cast<double>(engine() >> 11) * 0x1.0p-53;
}

MockScript MockScript::perfect_oracle(DatasetBundle bundle) {
  MockScript script;
  script.oracle = std::move(bundle);
  return script;
}

MockScript MockScript::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(fmt::format("cannot read mock script '{}'", path.string()));
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(fmt::format("mock script '{}' is not valid JSON: {}", path.string(), e.what()));
  }

  MockScript script;
  script.error_rate = doc.value("error_rate", 0.0);
  if (script.error_rate < 0.0 || script.error_rate > 1.0) {
    throw ConfigError(fmt::format("mock error_rate must be in [0,1], got {}", script.error_rate));
  }
  script.seed = doc.value("seed", std::uint64_t{0});
  if (doc.contains("corruption_rule")) {
    auto rule = parse_corruption_rule(doc["corruption_rule"].get<std::string>());
    if (!rule) throw ConfigError("unknown corruption_rule in mock script");
    script.corruption_rule = *rule;
  }
  if (doc.contains("apply_to")) {
    script.apply_to.clear();
    for (const auto& s : doc["apply_to"]) {
      auto strategy = parse_strategy(s.get<std::string>());
      if (!strategy) throw ConfigError("unknown strategy in mock apply_to");
      script.apply_to.insert(*strategy);
    }
  }
  if (doc.contains("oracle_dataset")) {
    std::filesystem::path dataset = doc["oracle_dataset"].get<std::string>();
    if (dataset.is_relative()) dataset = path.parent_path() / dataset;
    script.oracle = load_canonical(dataset);
  }
  for (const auto& e : doc.value("entries", json::array())) {
    auto strategy = parse_strategy(e.at("strategy").get<std::string>());
    if (!strategy) throw ConfigError("unknown strategy in mock entry");
    RequestKey key{e.at("document").get<std::string>(), *strategy, e.at("fields").get<std::vector<std::string>>()};
    std::sort(key.field_ids.begin(), key.field_ids.end());
    script.entries[std::move(key)] = e.at("response").get<std::string>();
  }
  return script;
}

MockBackend::MockBackend(MockScript script, std::string backend_id)
    : script_(std::move(script)), backend_id_(std::move(backend_id)) {}

bool MockBackend::should_corrupt(const std::string& doc_id, Strategy strategy, const std::string& field_id) const {
  if (script_.error_rate <= 0.0 || !script_.apply_to.contains(strategy)) return false;
  const std::array<std::string_view, 3> parts = {doc_id, to_string(strategy), field_id};
  return keyed_uniform(script_.seed, parts) < script_.error_rate;
}

namespace {

// Bumps the last digit, or prefixes letters when there is none; either way
// the result no longer matches the original under any kind.
std::string garble(const std::string& value) {
  std::string out = value;
  for (auto it = out.rbegin(); it != out.rend(); ++it) {
    if (*it >= '0' && *it <= '9') {
      *it = *it == '9' ? '0' : static_cast<char>(*it + 1);
      return out;
    }
  }
  return "zz" + out;
}

}  // namespace

std::string MockBackend::corrupt(const DocumentRecord& doc, const std::string& field_id) const {
  const auto& bundle = *script_.oracle;
  const auto& field = bundle.field(field_id);
  const auto& gold = doc.truth.at(field_id);
  const auto profile = bundle.numeric_profile;
  auto still_matches = [&](const std::string& candidate) {
    return values_match(candidate, gold, field.kind, profile).matched;
  };

  std::string out;
  switch (script_.corruption_rule) {
    case CorruptionRule::kSwapWithSiblingNumeric: {
      if (field.kind != FieldKind::kNumeric) break;
      // The sibling closest in magnitude is the one a confused reader picks.
      const auto own = numeric_magnitude(gold, profile);
      std::optional<std::pair<long double, std::string>> best;
      for (const auto& [other_id, other_value] : doc.truth) {
        if (other_id == field_id || bundle.field(other_id).kind != FieldKind::kNumeric) continue;
        if (still_matches(other_value)) continue;
        const auto other = numeric_magnitude(other_value, profile);
        const long double distance = (own && other) ? std::abs(static_cast<long double>(*own) - *other)
                                                    : std::numeric_limits<long double>::max();
        if (!best || distance < best->first) best.emplace(distance, other_value);
      }
      if (best) out = best->second;
      break;
    }
    case CorruptionRule::kTruncate:
      out = gold.substr(0, gold.size() / 2);
      break;
    case CorruptionRule::kGarble:
      out = garble(gold);
      break;
  }
  if (out.empty() && gold.empty()) return "zz";
  if (out.empty() || still_matches(out)) out = garble(gold);
  return out;
}

std::string MockBackend::answer_for(const DocumentRecord& doc, Strategy strategy, const std::string& field_id) const {
  if (should_corrupt(doc.id, strategy, field_id)) return corrupt(doc, field_id);
  return doc.truth.at(field_id);
}

ChatResponse MockBackend::send(const ChatRequest& request) {
  const auto key = RequestKey::of(request.prompt);
  if (auto it = script_.entries.find(key); it != script_.entries.end()) {
    return ChatResponse{it->second, std::chrono::milliseconds{0}, backend_id_, 1};
  }
  const DocumentRecord* doc = script_.oracle ? script_.oracle->find_document(key.document_id) : nullptr;
  const bool covered = doc && std::all_of(request.prompt.field_ids.begin(), request.prompt.field_ids.end(),
                                          [&](const std::string& f) { return doc->has_field(f); });
  if (!covered) {
    throw BackendError(BackendFailure::kMissingMockEntry, fmt::format("no mock entry for {}", key.to_string()));
  }
  nlohmann::ordered_json answer = nlohmann::ordered_json::object();
  for (const auto& f : request.prompt.field_ids) answer[f] = answer_for(*doc, request.prompt.strategy, f);
  return ChatResponse{answer.dump(), std::chrono::milliseconds{0}, backend_id_, 1};
}

}  // namespace fieldvqa
