#include <benchmark/benchmark.h>

#include <random>

#include "fieldvqa/dependence.hpp"
#include "fieldvqa/matching.hpp"
#include "fieldvqa/response_parser.hpp"

using namespace fieldvqa;

static void BM_FitLinear(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0, 1e6);
  std::vector<double> x(n), y(n), z(n);
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = u(rng);
    z[i] = u(rng);
    x[i] = y[i] + 0.1 * z[i] + u(rng) * 0.01;
  }
  for (auto _ : state) benchmark::DoNotOptimize(fit_linear(x, y, z));
  state.SetItemsProcessed(state.iterations() * static_cast<long>(n));
}
BENCHMARK(BM_FitLinear)->Arg(100)->Arg(1000)->Arg(10000);

static void BM_ValuesMatch(benchmark::State& state) {
  const std::vector<std::pair<std::string, std::string>> pairs = {
      {"1,346,000.", "1,346,000"}, {"Rp 48.000", "48.000"}, {"2.00.", "2.000"}, {"100,950.", "144,695"}};
  for (auto _ : state) {
    for (const auto& [a, b] : pairs) {
      benchmark::DoNotOptimize(values_match(a, b, FieldKind::kNumeric, NumericProfile::kGroupingDot));
    }
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(pairs.size()));
}
BENCHMARK(BM_ValuesMatch);

static void BM_ParseJoint(benchmark::State& state) {
  const std::string text =
      "Sure, here are the values.\n```json\n{\"subtotal_price\": 43.636, \"tax_price\": 4.364, \"total_price\": "
      "48.000, \"cashprice\": 50.000, \"changeprice\": 2.000}\n```";
  const std::vector<FieldSpec> fields = {{"subtotal", "Subtotal", FieldKind::kNumeric, {}},
                                         {"tax", "Tax", FieldKind::kNumeric, {}},
                                         {"total", "Total", FieldKind::kNumeric, {}},
                                         {"cash", "Cash", FieldKind::kNumeric, {}},
                                         {"change", "Change", FieldKind::kNumeric, {}}};
  for (auto _ : state) {
    benchmark::DoNotOptimize(parse_joint_response(text, fields, NumericProfile::kGroupingDot));
  }
}
BENCHMARK(BM_ParseJoint);
BENCHMARK_MAIN();
