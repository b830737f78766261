#include "fieldvqa/dependence.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <tuple>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "fieldvqa/least_squares.hpp"

namespace fieldvqa {

std::string_view to_string(ConditionFlag flag) {
  switch (flag) {
    case ConditionFlag::kOk: return "ok";
    case ConditionFlag::kRankDeficient: return "rank_deficient";
    case ConditionFlag::kZeroTargetVariance: return "zero_target_variance";
  }
  return "ok";
}

std::string_view to_string(DependenceClass cls) {
  switch (cls) {
    case DependenceClass::kHigh: return "high";
    case DependenceClass::kLow: return "low";
    case DependenceClass::kIntermediate: return "intermediate";
  }
  return "intermediate";
}

NumericSeries extract_numeric_series(const DatasetBundle& bundle, const TripletSpec& triplet,
                                     const MatchRules& rules) {
  for (const auto* id : {&triplet.target, &triplet.predictor1, &triplet.predictor2}) {
    if (bundle.field(*id).kind != FieldKind::kNumeric) {
      throw DataError(fmt::format("field '{}' is not numeric", *id));
    }
  }
  if (triplet.target == triplet.predictor1 || triplet.target == triplet.predictor2 ||
      triplet.predictor1 == triplet.predictor2) {
    throw DataError("triplet fields must be pairwise distinct");
  }
  NumericSeries series;
  for (const auto& doc : bundle.documents) {
    auto value = [&](const std::string& id) -> std::optional<long long> {
      auto it = doc.truth.find(id);
      if (it == doc.truth.end()) return std::nullopt;
      return numeric_magnitude(it->second, bundle.numeric_profile, rules);
    };
    auto x = value(triplet.target);
    auto y = value(triplet.predictor1);
    auto z = value(triplet.predictor2);
    if (!x || !y || !z) continue;
    series.xs.push_back(static_cast<double>(*x));
    series.ys.push_back(static_cast<double>(*y));
    series.zs.push_back(static_cast<double>(*z));
    series.document_ids.push_back(doc.id);
  }
  if (series.n() < kMinRegressionSamples) {
    throw InsufficientDataError(fmt::format("({} | {}, {}): only {} document(s) carry all three amounts, need {}",
                                            triplet.target, triplet.predictor1, triplet.predictor2, series.n(),
                                            kMinRegressionSamples));
  }
  return series;
}

namespace {

using Row = std::tuple<double, double, double>;

double mean(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace

RegressionFit fit_linear(std::span<const double> xs, std::span<const double> ys, std::span<const double> zs) {
  const std::size_t n = xs.size();
  if (ys.size() != n || zs.size() != n) throw DataError("fit_linear: series lengths differ");
  if (n < kMinRegressionSamples) {
    throw InsufficientDataError(fmt::format("fit_linear: {} sample(s), need {}", n, kMinRegressionSamples));
  }

  // Canonical sample order and predictor order make the result independent
  // of how the caller arranged the data.
  std::vector<Row> as_given(n);
  std::vector<Row> swapped(n);
  for (std::size_t i = 0; i < n; ++i) {
    as_given[i] = {xs[i], ys[i], zs[i]};
    swapped[i] = {xs[i], zs[i], ys[i]};
  }
  std::sort(as_given.begin(), as_given.end());
  std::sort(swapped.begin(), swapped.end());
  const bool swap_predictors = swapped < as_given;
  const auto& rows = swap_predictors ? swapped : as_given;

  std::vector<double> x(n);
  std::vector<double> y(n);
  std::vector<double> z(n);
  for (std::size_t i = 0; i < n; ++i) std::tie(x[i], y[i], z[i]) = rows[i];

  const double mx = mean(x);
  const double my = mean(y);
  const double mz = mean(z);
  std::vector<double> xc(n);
  std::vector<double> yc(n);
  std::vector<double> zc(n);
  double ss_tot = 0.0;
  double ss_y = 0.0;
  double ss_z = 0.0;
  double x_scale = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    xc[i] = x[i] - mx;
    yc[i] = y[i] - my;
    zc[i] = z[i] - mz;
    ss_tot += xc[i] * xc[i];
    ss_y += yc[i] * yc[i];
    ss_z += zc[i] * zc[i];
    x_scale = std::max(x_scale, std::abs(x[i]));
  }

  // Unit-norm centred predictors: the intercept drops out and the singular
  // value threshold becomes scale free.
  const double sy = std::sqrt(ss_y);
  const double sz = std::sqrt(ss_z);
  std::vector<std::vector<double>> columns(2, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    columns[0][i] = sy > 0.0 ? yc[i] / sy : 0.0;
    columns[1][i] = sz > 0.0 ? zc[i] / sz : 0.0;
  }
  const auto solution = linalg::solve_least_squares(columns, xc, 1e-10);

  RegressionFit fit;
  fit.n = n;
  double c1 = sy > 0.0 ? solution.coefficients[0] / sy : 0.0;
  double c2 = sz > 0.0 ? solution.coefficients[1] / sz : 0.0;
  fit.b = mx - c1 * my - c2 * mz;
  if (swap_predictors) std::swap(c1, c2);
  fit.c1 = c1;
  fit.c2 = c2;

  const double eps = std::numeric_limits<double>::epsilon();
  if (ss_tot <= static_cast<double>(n) * (16.0 * eps * x_scale) * (16.0 * eps * x_scale)) {
    fit.condition = ConditionFlag::kZeroTargetVariance;
    return fit;
  }
  if (solution.rank < 2) fit.condition = ConditionFlag::kRankDeficient;

  double ss_res = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = xc[i] - solution.coefficients[0] * columns[0][i] - solution.coefficients[1] * columns[1][i];
    ss_res += r * r;
  }
  double r2 = 1.0 - ss_res / ss_tot;
  if (r2 < 0.0) {
    if (r2 < -1e-12) spdlog::debug("R^2 {} below zero beyond tolerance; clamped", r2);
    r2 = 0.0;
  }
  fit.r_squared = std::min(r2, 1.0);
  return fit;
}

DependenceClass classify(const RegressionFit& fit) {
  if (fit.condition != ConditionFlag::kOk || !fit.r_squared) {
    throw DataError(fmt::format("cannot classify a {} fit", to_string(fit.condition)));
  }
  const double r2 = *fit.r_squared;
  if (r2 >= kHighDependence) return DependenceClass::kHigh;
  if (r2 <= kLowDependence) return DependenceClass::kLow;
  return DependenceClass::kIntermediate;
}

std::vector<DependenceEntry> dependence_matrix(const DatasetBundle& bundle, std::span<const std::string> targets,
                                               const MatchRules& rules) {
  std::vector<std::string> fields;
  if (targets.empty()) {
    for (const auto& f : bundle.fields) {
      if (f.kind == FieldKind::kNumeric) fields.push_back(f.id);
    }
  } else {
    for (const auto& id : targets) {
      if (bundle.field(id).kind != FieldKind::kNumeric) throw DataError(fmt::format("field '{}' is not numeric", id));
      fields.push_back(id);
    }
  }
  std::sort(fields.begin(), fields.end());
  fields.erase(std::unique(fields.begin(), fields.end()), fields.end());
  if (fields.size() < 3) {
    throw DataError(fmt::format("dependence analysis needs at least 3 numeric fields, got {}", fields.size()));
  }

  std::vector<DependenceEntry> out;
  for (const auto& target : fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (fields[i] == target) continue;
      for (std::size_t j = i + 1; j < fields.size(); ++j) {
        if (fields[j] == target) continue;
        DependenceEntry entry{TripletSpec{target, fields[i], fields[j]}, std::nullopt, {}};
        try {
          const auto series = extract_numeric_series(bundle, entry.triplet, rules);
          entry.fit = fit_linear(series.xs, series.ys, series.zs);
        } catch (const InsufficientDataError& e) {
          entry.skip_reason = e.what();
        }
        out.push_back(std::move(entry));
      }
    }
  }
  return out;
}

std::vector<std::vector<std::string>> recommend_groups(std::span<const DependenceEntry> matrix, double threshold,
                                                       std::size_t max_group_size) {
  std::set<std::string> universe;
  struct Strong {
    double r2;
    TripletSpec triplet;
  };
  std::vector<Strong> strong;
  for (const auto& e : matrix) {
    universe.insert({e.triplet.target, e.triplet.predictor1, e.triplet.predictor2});
    if (e.fit && e.fit->condition == ConditionFlag::kOk && e.fit->r_squared && *e.fit->r_squared >= threshold) {
      strong.push_back({*e.fit->r_squared, e.triplet});
    }
  }
  std::sort(strong.begin(), strong.end(), [](const Strong& a, const Strong& b) {
    if (a.r2 != b.r2) return a.r2 > b.r2;
    return a.triplet < b.triplet;
  });

  std::vector<std::set<std::string>> groups;
  std::map<std::string, std::size_t> group_of;
  for (const auto& s : strong) {
    const std::array<const std::string*, 3> members = {&s.triplet.target, &s.triplet.predictor1,
                                                       &s.triplet.predictor2};
    std::set<std::size_t> touched;
    std::vector<std::string> fresh;
    for (const auto* m : members) {
      if (auto it = group_of.find(*m); it != group_of.end()) {
        touched.insert(it->second);
      } else {
        fresh.push_back(*m);
      }
    }
    if (fresh.empty() || touched.size() > 1) continue;
    if (touched.empty()) {
      if (max_group_size < fresh.size()) continue;
      groups.emplace_back(fresh.begin(), fresh.end());
      for (const auto& f : fresh) group_of[f] = groups.size() - 1;
      continue;
    }
    const auto g = *touched.begin();
    if (groups[g].size() + fresh.size() > max_group_size) continue;
    for (const auto& f : fresh) {
      groups[g].insert(f);
      group_of[f] = g;
    }
  }

  std::vector<std::vector<std::string>> out;
  for (const auto& g : groups) out.emplace_back(g.begin(), g.end());
  for (const auto& f : universe) {
    if (!group_of.contains(f)) out.push_back({f});
  }
  return out;
}

std::string dependence_csv(std::span<const DependenceEntry> matrix) {
  std::string out = "target,predictor1,predictor2,c1,c2,b,r_squared,n,class\n";
  for (const auto& e : matrix) {
    const auto& t = e.triplet;
    if (!e.fit) {
      out += fmt::format("{},{},{},,,,,,insufficient_data\n", t.target, t.predictor1, t.predictor2);
      continue;
    }
    const auto& f = *e.fit;
    std::string cls;
    if (f.condition == ConditionFlag::kOk) {
      cls = std::string(to_string(classify(f)));
    } else {
      cls = std::string(to_string(f.condition));
    }
    out += fmt::format("{},{},{},{:.10g},{:.10g},{:.10g},{},{},{}\n", t.target, t.predictor1, t.predictor2, f.c1, f.c2,
                       f.b, f.r_squared ? fmt::format("{:.6f}", *f.r_squared) : std::string{}, f.n, cls);
  }
  return out;
}

}  // namespace fieldvqa
