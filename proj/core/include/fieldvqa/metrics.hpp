#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "fieldvqa/matching.hpp"
#include "fieldvqa/prompting.hpp"

namespace fieldvqa {

struct ExtractionOutcome {
  std::string document_id;
  std::string field_id;
  Strategy strategy = Strategy::kSeparate;
  std::size_t response_index = 0;  // position in the run's raw-response archive
  std::string predicted;           // raw parsed value, empty when unparseable
  MatchVerdict verdict;
};

struct Ratio {
  std::size_t correct = 0;
  std::size_t n = 0;
  double accuracy = 0.0;

  bool operator==(const Ratio&) const = default;
};

struct AccuracyTable {
  Strategy strategy = Strategy::kSeparate;
  std::map<std::string, Ratio> per_field;
  Ratio document_level;
  std::set<std::string> documents;  // documents contributing to document_level
};

struct FieldCountPoint {
  std::size_t field_count = 0;
  double accuracy = 0.0;
  std::size_t n_docs = 0;

  bool operator==(const FieldCountPoint&) const = default;
};

// Throws DataError when one (document, field, strategy) appears twice.
void check_unique_outcomes(std::span<const ExtractionOutcome> outcomes);

// Matched / documents queried for the field. Fields in `expected` that
// never occur are omitted with a warning. Throws DataError when the strategy
// has no outcomes at all.
std::map<std::string, Ratio> field_level_accuracy(std::span<const ExtractionOutcome> outcomes, Strategy strategy,
                                                  std::span<const std::string> expected = {});

// A document is correct iff every queried field matched. With
// `queried_fields`, documents lacking any of them are left out of the
// denominator; without, each document is judged on the fields it was
// queried for. Throws DataError when no document is in scope.
Ratio document_level_accuracy(std::span<const ExtractionOutcome> outcomes, Strategy strategy,
                              const std::optional<std::vector<std::string>>& queried_fields = std::nullopt);

// Documents bucketed by how many fields they were queried for; one
// document-level accuracy per non-empty bucket in [min_k, max_k].
std::vector<FieldCountPoint> accuracy_by_field_count(std::span<const ExtractionOutcome> outcomes, Strategy strategy,
                                                     std::size_t min_k = 2, std::size_t max_k = 6);

AccuracyTable accuracy_table(std::span<const ExtractionOutcome> outcomes, Strategy strategy);

// joint - separate per field, exact. Throws DataError unless both tables
// cover the same documents and fields.
std::map<std::string, double> delta_table(const AccuracyTable& separate, const AccuracyTable& joint);

// Two-decimal signed display form: "+0.20", "-0.03", "0.00".
std::string format_delta(double delta);

}  // namespace fieldvqa
