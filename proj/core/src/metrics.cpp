#include "fieldvqa/metrics.hpp"

#include <cmath>
#include <tuple>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "fieldvqa/errors.hpp"

namespace fieldvqa {

namespace {

Ratio make_ratio(std::size_t correct, std::size_t n) {
  return Ratio{correct, n, n == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(n)};
}

// document -> field -> matched, for one strategy.
std::map<std::string, std::map<std::string, bool>> by_document(std::span<const ExtractionOutcome> outcomes,
                                                                Strategy strategy) {
  std::map<std::string, std::map<std::string, bool>> docs;
  for (const auto& o : outcomes) {
    if (o.strategy == strategy) docs[o.document_id][o.field_id] = o.verdict.matched;
  }
  return docs;
}

}  // namespace

void check_unique_outcomes(std::span<const ExtractionOutcome> outcomes) {
  std::set<std::tuple<std::string, std::string, Strategy>> seen;
  for (const auto& o : outcomes) {
    if (!seen.emplace(o.document_id, o.field_id, o.strategy).second) {
      throw DataError(fmt::format("duplicate outcome for ({}, {}, {})", o.document_id, o.field_id,
                                  to_string(o.strategy)));
    }
  }
}

std::map<std::string, Ratio> field_level_accuracy(std::span<const ExtractionOutcome> outcomes, Strategy strategy,
                                                  std::span<const std::string> expected) {
  std::map<std::string, std::pair<std::size_t, std::size_t>> counts;
  for (const auto& o : outcomes) {
    if (o.strategy != strategy) continue;
    auto& [correct, n] = counts[o.field_id];
    ++n;
    if (o.verdict.matched) ++correct;
  }
  if (counts.empty()) throw DataError(fmt::format("no {} outcomes to score", to_string(strategy)));
  for (const auto& f : expected) {
    if (!counts.contains(f)) spdlog::warn("field '{}' has no scored documents; omitted", f);
  }
  std::map<std::string, Ratio> out;
  for (const auto& [field, c] : counts) out.emplace(field, make_ratio(c.first, c.second));
  return out;
}

Ratio document_level_accuracy(std::span<const ExtractionOutcome> outcomes, Strategy strategy,
                              const std::optional<std::vector<std::string>>& queried_fields) {
  std::size_t correct = 0;
  std::size_t n = 0;
  for (const auto& [doc, fields] : by_document(outcomes, strategy)) {
    bool all = true;
    if (queried_fields) {
      const bool in_scope = std::all_of(queried_fields->begin(), queried_fields->end(),
                                        [&](const std::string& f) { return fields.contains(f); });
      if (!in_scope) continue;
      for (const auto& f : *queried_fields) all = all && fields.at(f);
    } else {
      for (const auto& [f, matched] : fields) all = all && matched;
    }
    ++n;
    if (all) ++correct;
  }
  if (n == 0) throw DataError(fmt::format("no documents in scope for {} document-level accuracy", to_string(strategy)));
  return make_ratio(correct, n);
}

std::vector<FieldCountPoint> accuracy_by_field_count(std::span<const ExtractionOutcome> outcomes, Strategy strategy,
                                                     std::size_t min_k, std::size_t max_k) {
  std::map<std::size_t, std::pair<std::size_t, std::size_t>> buckets;
  for (const auto& [doc, fields] : by_document(outcomes, strategy)) {
    const auto k = fields.size();
    if (k < min_k || k > max_k) continue;
    auto& [correct, n] = buckets[k];
    ++n;
    if (std::all_of(fields.begin(), fields.end(), [](const auto& kv) { return kv.second; })) ++correct;
  }
  std::vector<FieldCountPoint> series;
  for (const auto& [k, c] : buckets) series.push_back({k, make_ratio(c.first, c.second).accuracy, c.second});
  return series;
}

AccuracyTable accuracy_table(std::span<const ExtractionOutcome> outcomes, Strategy strategy) {
  AccuracyTable table;
  table.strategy = strategy;
  table.per_field = field_level_accuracy(outcomes, strategy);
  table.document_level = document_level_accuracy(outcomes, strategy);
  for (const auto& o : outcomes) {
    if (o.strategy == strategy) table.documents.insert(o.document_id);
  }
  return table;
}

std::map<std::string, double> delta_table(const AccuracyTable& separate, const AccuracyTable& joint) {
  if (separate.documents != joint.documents) {
    throw DataError("delta_table: strategies were scored over different document sets");
  }
  std::map<std::string, double> deltas;
  if (separate.per_field.size() != joint.per_field.size()) {
    throw DataError("delta_table: strategies were scored over different field sets");
  }
  for (const auto& [field, sep] : separate.per_field) {
    auto it = joint.per_field.find(field);
    if (it == joint.per_field.end() || it->second.n != sep.n) {
      throw DataError(fmt::format("delta_table: field '{}' is not scored identically under both strategies", field));
    }
    deltas.emplace(field, it->second.accuracy - sep.accuracy);
  }
  return deltas;
}

std::string format_delta(double delta) {
  const double rounded = std::round(delta * 100.0) / 100.0;
  if (rounded == 0.0) return "0.00";
  return fmt::format("{:+.2f}", rounded);
}

}  // namespace fieldvqa
