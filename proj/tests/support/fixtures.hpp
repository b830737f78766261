#pragma once

// Shared fixtures and independent oracles for the unit and acceptance tests.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "fieldvqa/dataset.hpp"

namespace fieldvqa::testing {

inline FieldSpec numeric_field(std::string id, std::string name) {
  return FieldSpec{std::move(id), std::move(name), FieldKind::kNumeric, {}};
}

// Receipt fields in the order a CORD import produces.
inline std::vector<FieldSpec> receipt_fields() {
  return {numeric_field("subtotal", "Subtotal"), numeric_field("tax", "Tax"),
          numeric_field("service", "Service"),   numeric_field("total", "Total"),
          numeric_field("cash", "Cash"),         numeric_field("change", "Change"),
          numeric_field("creditcard", "Credit Card"), numeric_field("quantity", "Quantity"),
          numeric_field("menu_count", "Count of Menu Items")};
}

// "48.000" style grouping used by IDR receipts.
inline std::string group_dot(long long v) {
  std::string digits = std::to_string(v);
  std::string out;
  int n = static_cast<int>(digits.size());
  for (int i = 0; i < n; ++i) {
    out += digits[i];
    int rest = n - i - 1;
    if (rest > 0 && rest % 3 == 0) out += '.';
  }
  return out;
}

// Receipt-like documents with consistent arithmetic. Each document carries
// between min_fields and max_fields of the six core amounts (subtotal, tax,
// service, total, cash, change), chosen round-robin so every count in the
// range gets the same number of documents.
inline DatasetBundle synthetic_receipts(std::size_t n_docs, std::uint64_t seed, std::size_t min_fields = 3,
                                        std::size_t max_fields = 3) {
  static const std::vector<std::string> order = {"subtotal", "tax", "total", "cash", "change", "service"};
  DatasetBundle b;
  b.name = "synthetic-receipts";
  b.doc_kind = "receipt";
  b.numeric_profile = NumericProfile::kGroupingDot;
  for (const auto& f : receipt_fields()) {
    if (std::find(order.begin(), order.end(), f.id) != order.end()) b.fields.push_back(f);
  }
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<long long> base(5, 900);
  for (std::size_t i = 0; i < n_docs; ++i) {
    long long subtotal = base(rng) * 1000;
    long long tax = subtotal / 10;
    long long service = subtotal / 20 + 500;
    long long total = subtotal + tax + service;
    long long cash = ((total / 50000) + 1) * 50000;
    long long change = cash - total;
    std::map<std::string, long long> all = {{"subtotal", subtotal}, {"tax", tax},   {"service", service},
                                            {"total", total},       {"cash", cash}, {"change", change}};
    std::size_t k = min_fields + i % (max_fields - min_fields + 1);
    DocumentRecord d;
    d.id = fmt::format("r{:05d}", i);
    d.image = fmt::format("images/{}.png", d.id);
    for (std::size_t j = 0; j < k; ++j) d.truth[order[j]] = group_dot(all[order[j]]);
    b.documents.push_back(std::move(d));
  }
  return b;
}

// Closed-form two-predictor OLS on centered sums (normal equations solved by
// Cramer's rule) in long double.
struct OracleFit {
  long double c1 = 0, c2 = 0, b = 0, r2 = 0;
};

inline OracleFit ols_oracle(const std::vector<double>& x, const std::vector<double>& y, const std::vector<double>& z) {
  const std::size_t n = x.size();
  long double mx = 0, my = 0, mz = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
    mz += z[i];
  }
  mx /= n;
  my /= n;
  mz /= n;
  long double syy = 0, szz = 0, syz = 0, sxy = 0, sxz = 0, sxx = 0;
  for (std::size_t i = 0; i < n; ++i) {
    long double dx = x[i] - mx, dy = y[i] - my, dz = z[i] - mz;
    syy += dy * dy;
    szz += dz * dz;
    syz += dy * dz;
    sxy += dx * dy;
    sxz += dx * dz;
    sxx += dx * dx;
  }
  long double det = syy * szz - syz * syz;
  OracleFit f;
  f.c1 = (sxy * szz - sxz * syz) / det;
  f.c2 = (syy * sxz - syz * sxy) / det;
  f.b = mx - f.c1 * my - f.c2 * mz;
  long double sse = 0;
  for (std::size_t i = 0; i < n; ++i) {
    long double r = x[i] - (f.c1 * y[i] + f.c2 * z[i] + f.b);
    sse += r * r;
  }
  f.r2 = 1 - sse / sxx;
  return f;
}

inline bool rel_close(long double a, long double b, long double rel, long double abs_floor = 1e-12L) {
  return std::fabs(a - b) <= std::max(abs_floor, rel * std::max(std::fabs(a), std::fabs(b)));
}

// Two receipts from a reference sample of model outputs: gold values,
// per-field separate answers, and the joint answer.
struct GoldenSample {
  std::map<std::string, std::string> gold;          // field id -> value
  std::map<std::string, std::string> separate_raw;  // field id -> answer text
  std::map<std::string, std::string> key_of;        // field id -> key used in the model output
  std::string joint_text;
  std::set<std::string> expected_separate_mismatches;
};

inline std::vector<GoldenSample> golden_samples() {
  GoldenSample s1;
  s1.gold = {{"subtotal", "1,346,000"}, {"service", "100,950"}, {"tax", "144,695"}, {"total", "1,591,600"}};
  s1.key_of = {{"subtotal", "subtotal_price"}, {"service", "service_price"}, {"tax", "tax_price"},
               {"total", "total_price"}};
  s1.separate_raw = {{"subtotal", "1,346,000."}, {"service", "100,950."}, {"tax", "100,950."},
                     {"total", "1,591,600."}};
  s1.joint_text =
      R"({"subtotal_price": 1,346,000, "service_price": 100,950, "tax_price": 144,695, "total_price": 1,591,600})";
  s1.expected_separate_mismatches = {"tax"};

  GoldenSample s2;
  s2.gold = {{"subtotal", "43.636"}, {"tax", "4.364"}, {"total", "48.000"}, {"cash", "50.000"}, {"change", "2.000"}};
  s2.key_of = {{"subtotal", "subtotal_price"}, {"tax", "tax_price"}, {"total", "total_price"},
               {"cash", "cashprice"}, {"change", "changeprice"}};
  s2.separate_raw = {{"subtotal", "43.636."}, {"tax", "4.364."}, {"total", "43.636."}, {"cash", "43.636."},
                     {"change", "2.00."}};
  s2.joint_text =
      R"({"subtotal_price": 43.636, "tax_price": 4.364, "total_price": 48.000, "cashprice": 50.000, "changeprice": 2.000})";
  s2.expected_separate_mismatches = {"total", "cash"};
  return {s1, s2};
}

inline std::vector<FieldSpec> fields_of(const std::map<std::string, std::string>& gold) {
  std::vector<FieldSpec> out;
  for (const auto& f : receipt_fields()) {
    if (gold.contains(f.id)) out.push_back(f);
  }
  return out;
}

}  // namespace fieldvqa::testing
