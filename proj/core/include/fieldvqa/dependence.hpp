#pragma once

#include <compare>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fieldvqa/dataset.hpp"
#include "fieldvqa/errors.hpp"
#include "fieldvqa/matching.hpp"

namespace fieldvqa {

// Fewer than kMinRegressionSamples aligned samples cannot support a
// three-parameter fit.
inline constexpr std::size_t kMinRegressionSamples = 4;
inline constexpr double kHighDependence = 0.9;
inline constexpr double kLowDependence = 0.1;

class InsufficientDataError : public DataError {
 public:
  using DataError::DataError;
};

// Target field regressed on two predictor fields.
struct TripletSpec {
  std::string target;
  std::string predictor1;
  std::string predictor2;

  auto operator<=>(const TripletSpec&) const = default;
  bool operator==(const TripletSpec&) const = default;
};

enum class ConditionFlag { kOk, kRankDeficient, kZeroTargetVariance };
enum class DependenceClass { kHigh, kLow, kIntermediate };

std::string_view to_string(ConditionFlag flag);
std::string_view to_string(DependenceClass cls);

// target = c1 * predictor1 + c2 * predictor2 + b
struct RegressionFit {
  double c1 = 0.0;
  double c2 = 0.0;
  double b = 0.0;
  std::optional<double> r_squared;  // absent for zero target variance
  std::size_t n = 0;
  ConditionFlag condition = ConditionFlag::kOk;
};

struct NumericSeries {
  std::vector<double> xs;
  std::vector<double> ys;
  std::vector<double> zs;
  std::vector<std::string> document_ids;

  std::size_t n() const { return xs.size(); }
};

// Aligned integer magnitudes for documents carrying all three fields with a
// parseable amount. Throws DataError for non-numeric fields and
// InsufficientDataError when fewer than four documents qualify.
NumericSeries extract_numeric_series(const DatasetBundle& bundle, const TripletSpec& triplet,
                                     const MatchRules& rules = {});

// Ordinary least squares with intercept. Exactly invariant to sample order
// and to swapping the predictors (c1 and c2 swap with them).
RegressionFit fit_linear(std::span<const double> xs, std::span<const double> ys, std::span<const double> zs);

// High iff R^2 >= 0.9, low iff R^2 <= 0.1. Throws DataError for fits whose
// condition is not ok.
DependenceClass classify(const RegressionFit& fit);

struct DependenceEntry {
  TripletSpec triplet;
  std::optional<RegressionFit> fit;
  std::string skip_reason;  // set when fit is absent
};

// Every target against every unordered pair of the remaining fields, sorted
// by triplet. Empty `targets` means all numeric fields of the bundle.
std::vector<DependenceEntry> dependence_matrix(const DatasetBundle& bundle, std::span<const std::string> targets = {},
                                               const MatchRules& rules = {});

// Greedy grouping of fields whose triplets clear the threshold; groups are
// capped at max_group_size and leftovers become singletons.
std::vector<std::vector<std::string>> recommend_groups(std::span<const DependenceEntry> matrix,
                                                       double threshold = kHighDependence,
                                                       std::size_t max_group_size = 6);

// target,predictor1,predictor2,c1,c2,b,r_squared,n,class
std::string dependence_csv(std::span<const DependenceEntry> matrix);

}  // namespace fieldvqa
