// Acceptance gate: one PASS/FAIL/SKIP line per criterion. Exit status is
// non-zero iff any criterion fails.

#include <spdlog/spdlog.h>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>

#include "fieldvqa/dependence.hpp"
#include "fieldvqa/prompting.hpp"
#include "fieldvqa/response_parser.hpp"
#include "fieldvqa/runner.hpp"
#include "fixtures.hpp"

using namespace fieldvqa;
namespace fs = std::filesystem;
namespace ft = fieldvqa::testing;

namespace {

enum class Status { kPass, kFail, kSkip };

struct Outcome {
  Status status = Status::kPass;
  std::string detail;
};

// Collects failed sub-checks so the line shows the first few reasons.
struct Checks {
  std::vector<std::string> failures;
  std::vector<std::string> notes;

  void expect(bool ok, const std::string& what) {
    if (!ok) failures.push_back(what);
  }
  void note(std::string n) { notes.push_back(std::move(n)); }

  Outcome result() const {
    Outcome o;
    o.status = failures.empty() ? Status::kPass : Status::kFail;
    const auto& lines = failures.empty() ? notes : failures;
    for (std::size_t i = 0; i < lines.size() && i < 4; ++i) {
      if (i) o.detail += "; ";
      o.detail += lines[i];
    }
    if (lines.size() > 4) o.detail += fmt::format("; +{} more", lines.size() - 4);
    return o;
  }
};

class ScratchDir {
 public:
  explicit ScratchDir(const std::string& tag) {
    path_ = fs::temp_directory_path() / fmt::format("fieldvqa-acceptance-{}-{}", tag, std::random_device{}());
    fs::create_directories(path_);
  }
  ~ScratchDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ExperimentConfig mock_config(const fs::path& dir, const DatasetBundle& bundle, const std::string& out) {
  save_canonical(bundle, dir / "data.jsonl");
  ExperimentConfig c;
  c.dataset = dir / "data.jsonl";
  c.output_dir = dir / out;
  c.backend.model = "mock";
  c.parallelism = 1;
  return c;
}

// ---------------------------------------------------------------------------

Outcome ac1_prompts() {
  Checks c;
  const std::vector<FieldSpec> fields = {ft::numeric_field("subtotal", "Subtotal"), ft::numeric_field("tax", "Tax"),
                                         ft::numeric_field("total", "Total")};
  const DocumentRecord doc{"q", "q.png", {{"subtotal", "1"}, {"tax", "1"}, {"total", "1"}}};

  auto separate = build_separate_prompts(fields, doc, PromptPlan::zero_shot(Strategy::kSeparate, "receipt"));
  const std::vector<std::string> expected_sep = {"Given the following image of a receipt, extract the Subtotal.",
                                                 "Given the following image of a receipt, extract the Tax.",
                                                 "Given the following image of a receipt, extract the Total."};
  c.expect(separate.size() == 3, "separate: expected 3 prompts");
  for (std::size_t i = 0; i < separate.size() && i < 3; ++i) {
    c.expect(separate[i].text == expected_sep[i], "separate prompt " + std::to_string(i) + " differs");
  }

  const std::string expected_joint = "Given the following image of a receipt, extract the Subtotal, Tax, and Total.";
  auto plan = PromptPlan::zero_shot(Strategy::kJoint, "receipt");
  auto with_instruction = build_joint_prompt(fields, doc, plan);
  plan.output_instruction.reset();
  auto bare = build_joint_prompt(fields, doc, plan);
  c.expect(bare.text == expected_joint, "joint template differs: '" + bare.text + "'");
  c.expect(with_instruction.text == expected_joint + " " + std::string(kDefaultJointInstruction),
           "joint template is not the exact prefix of the instructed prompt");
  c.note("separate x3 and joint template byte-exact; default joint adds the configurable output instruction");
  return c.result();
}

Outcome ac2_golden_parsing() {
  Checks c;
  const auto profile = NumericProfile::kGroupingDot;
  int sample = 0;
  for (const auto& s : ft::golden_samples()) {
    ++sample;
    auto fields = ft::fields_of(s.gold);
    auto joint = parse_joint_response(s.joint_text, fields, profile);
    for (const auto& f : fields) {
      bool ok = joint.at(f.id).found() && values_match(joint.at(f.id).raw, s.gold.at(f.id), f.kind, profile).matched;
      c.expect(ok, fmt::format("sample {} joint {} = '{}'", sample, f.id, joint.at(f.id).raw));
    }
    std::set<std::string> mismatched;
    for (const auto& f : fields) {
      auto text = fmt::format(R"({{"{}": "{}"}})", s.key_of.at(f.id), s.separate_raw.at(f.id));
      auto p = parse_separate_response(text, f, profile);
      if (!values_match(p.raw, s.gold.at(f.id), f.kind, profile).matched) mismatched.insert(f.id);
    }
    c.expect(mismatched == s.expected_separate_mismatches,
             fmt::format("sample {} separate mismatches {{{}}}", sample, fmt::join(mismatched, ",")));
    c.note(fmt::format("sample {}: joint {}/{} ok, separate mismatches {{{}}}", sample, fields.size(), fields.size(),
                       fmt::join(mismatched, ",")));
  }
  return c.result();
}

Outcome ac3_matching() {
  Checks c;
  c.expect(values_match("$3.50", "3.50", FieldKind::kNumeric, NumericProfile::kDecimalDot).matched, "$3.50 vs 3.50");
  c.expect(values_match("43.636.", "43.636", FieldKind::kNumeric, NumericProfile::kGroupingDot).matched,
           "43.636. vs 43.636");
  c.expect(!values_match("100,950", "144,695", FieldKind::kNumeric, NumericProfile::kGroupingDot).matched,
           "100,950 vs 144,695 matched");

  std::mt19937_64 rng(8675309);
  static const std::vector<std::string> atoms = {"0", "3", "5", "9", ".", ",", " ", "$", "Rp", "-", "a", "B", "/"};
  std::uniform_int_distribution<int> len(0, 8);
  std::uniform_int_distribution<std::size_t> pick(0, atoms.size() - 1);
  auto draw = [&] {
    std::string s;
    for (int i = len(rng); i > 0; --i) s += atoms[pick(rng)];
    return s;
  };
  int asymmetric = 0;
  for (int i = 0; i < 1000; ++i) {
    auto a = draw();
    auto b = i % 3 == 0 ? a + "." : draw();
    for (auto kind : {FieldKind::kNumeric, FieldKind::kText, FieldKind::kDate}) {
      for (auto profile : {NumericProfile::kGroupingDot, NumericProfile::kDecimalDot}) {
        if (values_match(a, b, kind, profile) != values_match(b, a, kind, profile)) ++asymmetric;
      }
    }
  }
  c.expect(asymmetric == 0, fmt::format("{} asymmetric verdicts", asymmetric));
  c.note("3 fixed pairs ok; 1000 random pairs x 6 kind/profile combos symmetric");
  return c.result();
}

Outcome ac4_ols() {
  Checks c;
  {
    std::vector<double> y = {1, 2, 3, 4, 5, 8, 13}, z = {2, 7, 1, 8, 2, 8, 1}, x;
    for (std::size_t i = 0; i < y.size(); ++i) x.push_back(2 * y[i] + 3 * z[i] + 1);
    auto f = fit_linear(x, y, z);
    c.expect(std::abs(f.c1 - 2) <= 1e-9 && std::abs(f.c2 - 3) <= 1e-9 && std::abs(f.b - 1) <= 1e-9,
             fmt::format("exact relation gave ({}, {}, {})", f.c1, f.c2, f.b));
    c.expect(f.r_squared && std::abs(*f.r_squared - 1) <= 1e-9, "exact relation R^2 != 1");
  }
  std::mt19937_64 rng(31337);
  std::uniform_int_distribution<std::size_t> size(4, 500);
  std::uniform_real_distribution<double> u(-1e4, 1e4), coef(-10, 10), noise(0, 5e3);
  int oracle_misses = 0, affine_misses = 0, symmetry_misses = 0;
  for (int t = 0; t < 100; ++t) {
    const auto n = size(rng);
    const double a = coef(rng), b = coef(rng), k = coef(rng) * 1000, sd = noise(rng);
    std::normal_distribution<double> eps(0, sd);
    std::vector<double> x, y, z;
    for (std::size_t i = 0; i < n; ++i) {
      y.push_back(u(rng));
      z.push_back(u(rng));
      x.push_back(a * y.back() + b * z.back() + k + eps(rng));
    }
    auto f = fit_linear(x, y, z);
    auto o = ft::ols_oracle(x, y, z);
    if (!(f.condition == ConditionFlag::kOk && ft::rel_close(f.c1, o.c1, 1e-9L, 1e-9L) &&
          ft::rel_close(f.c2, o.c2, 1e-9L, 1e-9L) && ft::rel_close(f.b, o.b, 1e-9L, 1e-9L) &&
          ft::rel_close(*f.r_squared, o.r2, 1e-9L, 1e-9L))) {
      ++oracle_misses;
    }
    auto xa = x, ya = y, za = z;
    for (auto& v : xa) v = -0.25 * v + 17;
    for (auto& v : ya) v = 3 * v - 1000;
    for (auto& v : za) v = 1e-3 * v + 2;
    if (std::abs(*fit_linear(xa, ya, za).r_squared - *f.r_squared) > 1e-9) ++affine_misses;
    auto s = fit_linear(x, z, y);
    if (!(s.c1 == f.c2 && s.c2 == f.c1 && s.b == f.b && s.r_squared == f.r_squared)) ++symmetry_misses;
  }
  c.expect(oracle_misses == 0, fmt::format("{} of 100 instances disagree with the closed-form oracle", oracle_misses));
  c.expect(affine_misses == 0, fmt::format("{} affine-invariance violations", affine_misses));
  c.expect(symmetry_misses == 0, fmt::format("{} predictor-symmetry violations", symmetry_misses));
  c.note("exact relation recovered; 100/100 oracle matches; affine and symmetry suites clean");
  return c.result();
}

// Accepts a raw CORD directory (json/ + image/) or a canonical JSONL file.
Outcome ac5_cord_r2() {
  const char* env = std::getenv("FIELDVQA_CORD_TRAIN");
  if (env == nullptr || *env == '\0') {
    return {Status::kSkip, "CORDv2 train annotations absent; set FIELDVQA_CORD_TRAIN to a CORD directory or "
                           "canonical JSONL to run"};
  }
  fs::path src(env);
  DatasetBundle bundle = fs::is_directory(src) ? import_cord(src) : load_canonical(src);

  struct Expect {
    TripletSpec t;
    double lo, hi;
  };
  const std::vector<Expect> expects = {
      {{"tax", "subtotal", "total"}, 0.97, 1.0},        {{"cash", "change", "total"}, 0.93, 0.97},
      {{"change", "cash", "total"}, 0.96, 1.0},         {{"tax", "change", "menu_count"}, 0.0, 0.12},
      {{"cash", "change", "menu_count"}, 0.0, 0.12},    {{"change", "subtotal", "tax"}, 0.0, 0.12},
  };
  Checks c;
  for (const auto& e : expects) {
    try {
      auto s = extract_numeric_series(bundle, e.t);
      auto f = fit_linear(s.xs, s.ys, s.zs);
      double r2 = f.r_squared.value_or(std::nan(""));
      c.expect(r2 >= e.lo - 1e-12 && r2 <= e.hi + 1e-12,
               fmt::format("({} | {}, {}) R^2 {:.3f} outside [{:.2f}, {:.2f}] n={}", e.t.target, e.t.predictor1,
                           e.t.predictor2, r2, e.lo, e.hi, s.n()));
      c.note(fmt::format("({} | {}, {}) R^2 {:.3f} n={}", e.t.target, e.t.predictor1, e.t.predictor2, r2, s.n()));
    } catch (const DataError& err) {
      c.expect(false, err.what());
    }
  }
  return c.result();
}

Outcome ac6_oracle_end_to_end() {
  ScratchDir dir("ac6");
  auto bundle = ft::synthetic_receipts(200, 606, 2, 6);
  auto cfg = mock_config(dir.path(), bundle, "out");
  auto report = run_experiment(cfg);
  Checks c;
  for (auto s : {Strategy::kSeparate, Strategy::kJoint}) {
    const auto& d = report.tables.at(s).document_level;
    c.expect(d.n == 200 && d.correct == 200,
             fmt::format("{} document-level {}/{}", to_string(s), d.correct, d.n));
  }
  for (const auto& [f, delta] : report.deltas) c.expect(format_delta(delta) == "0.00", "delta " + f);
  c.expect(report.document_delta && format_delta(*report.document_delta) == "0.00", "document delta");
  c.note(fmt::format("200 docs, both strategies 1.0, {} field deltas all 0.00", report.deltas.size()));
  return c.result();
}

Outcome ac7_error_rate_recovery() {
  Checks c;
  for (double p : {0.1, 0.3}) {
    ScratchDir dir("ac7");
    auto bundle = ft::synthetic_receipts(2000, 7007, 3, 3);
    auto cfg = mock_config(dir.path(), bundle, "out");
    cfg.backend.error_rate = p;
    cfg.seed = 20250101;
    auto report = run_experiment(cfg);
    const double tol = 3 * std::sqrt(p * (1 - p) / 2000);
    const double doc_target = std::pow(1 - p, 3);
    for (auto s : {Strategy::kSeparate, Strategy::kJoint}) {
      const auto& table = report.tables.at(s);
      double worst = 0;
      for (const auto& [f, r] : table.per_field) {
        worst = std::max(worst, std::abs(r.accuracy - (1 - p)));
        c.expect(r.n == 2000 && std::abs(r.accuracy - (1 - p)) <= tol,
                 fmt::format("p={} {} {} acc {:.4f} (target {:.2f} +/- {:.4f})", p, to_string(s), f, r.accuracy,
                             1 - p, tol));
      }
      const auto& d = table.document_level;
      c.expect(std::abs(d.accuracy - doc_target) <= tol,
               fmt::format("p={} {} document acc {:.4f} (target {:.4f} +/- {:.4f})", p, to_string(s), d.accuracy,
                           doc_target, tol));
      c.note(fmt::format("p={} {}: max field dev {:.4f}, doc {:.4f} vs {:.4f} (tol {:.4f})", p, to_string(s), worst,
                         d.accuracy, doc_target, tol));
    }
  }
  return c.result();
}

Outcome ac8_field_count_shape() {
  ScratchDir dir("ac8");
  auto bundle = ft::synthetic_receipts(5000, 8008, 2, 6);
  auto cfg = mock_config(dir.path(), bundle, "out");
  cfg.backend.error_rate = 0.2;
  cfg.backend.corruption_rule = CorruptionRule::kSwapWithSiblingNumeric;
  cfg.backend.corrupt_strategies = std::set<Strategy>{Strategy::kSeparate};
  cfg.seed = 424242;
  auto report = run_experiment(cfg);
  auto csv = emit_plot_series(report);

  // Read the curves back from the emitted file, not the in-memory report.
  std::map<std::string, std::map<int, double>> curve;
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    std::istringstream row(line);
    std::string k, strategy, acc;
    std::getline(row, k, ',');
    std::getline(row, strategy, ',');
    std::getline(row, acc, ',');
    curve[strategy][std::stoi(k)] = std::stod(acc);
  }
  Checks c;
  for (int k = 2; k <= 6; ++k) {
    c.expect(curve["separate"].contains(k) && curve["joint"].contains(k), fmt::format("k={} missing", k));
    c.expect(curve["joint"][k] >= curve["separate"][k],
             fmt::format("k={} joint {:.4f} < separate {:.4f}", k, curve["joint"][k], curve["separate"][k]));
    if (k > 2) {
      c.expect(curve["separate"][k] <= curve["separate"][k - 1],
               fmt::format("separate rises from k={} to k={}", k - 1, k));
    }
  }
  std::string sep;
  for (const auto& [k, a] : curve["separate"]) sep += fmt::format("{}{:.3f}", sep.empty() ? "" : " ", a);
  c.note(fmt::format("separate k=2..6: {}; joint k=6: {:.3f}", sep, curve["joint"][6]));
  return c.result();
}

Outcome ac9_replay_equality() {
  ScratchDir dir("ac9");
  auto bundle = ft::synthetic_receipts(300, 909, 2, 6);
  auto cfg = mock_config(dir.path(), bundle, "run");
  cfg.backend.error_rate = 0.25;
  cfg.seed = 99;
  cfg.parallelism = 4;
  cfg.analyze_dependence = true;
  run_experiment(cfg);
  auto replay_cfg = cfg;
  replay_cfg.output_dir = dir.path() / "replay";
  replay(dir.path() / "run", replay_cfg);
  Checks c;
  int compared = 0;
  for (const char* name : {kAccuracyCsv, kPlotCsv, kOutcomesCsv, kDependenceCsv}) {
    auto a = slurp(dir.path() / "run" / name);
    auto b = slurp(dir.path() / "replay" / name);
    c.expect(!a.empty(), std::string(name) + " missing");
    c.expect(a == b, std::string(name) + " differs after replay");
    ++compared;
  }
  c.note(fmt::format("{} CSV files byte-identical after replay", compared));
  return c.result();
}

}  // namespace

int main() {
  spdlog::set_level(spdlog::level::err);
  struct Criterion {
    const char* id;
    const char* name;
    double budget_s;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria = {
      {"AC1", "prompt fidelity", 1, ac1_prompts},
      {"AC2", "golden parsing of reference outputs", 1, ac2_golden_parsing},
      {"AC3", "matching rules", 5, ac3_matching},
      {"AC4", "OLS correctness", 10, ac4_ols},
      {"AC5", "CORD R^2 reproduction", 30, ac5_cord_r2},
      {"AC6", "oracle end-to-end", 10, ac6_oracle_end_to_end},
      {"AC7", "error-rate recovery", 30, ac7_error_rate_recovery},
      {"AC8", "field-count curve shape", 30, ac8_field_count_shape},
      {"AC9", "replay equality", 10, ac9_replay_equality},
  };

  int failed = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {Status::kFail, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (o.status != Status::kSkip && secs > c.budget_s) {
      o.status = Status::kFail;
      o.detail = fmt::format("took {:.2f}s, budget {:.0f}s; {}", secs, c.budget_s, o.detail);
    }
    const char* label = o.status == Status::kPass ? "PASS" : o.status == Status::kFail ? "FAIL" : "SKIP";
    if (o.status == Status::kFail) ++failed;
    std::cout << fmt::format("{} {} {} ({:.2f}s) {}\n", c.id, label, c.name, secs, o.detail) << std::flush;
  }
  std::cout << fmt::format("{} criteria, {} failed\n", criteria.size(), failed);
  return failed == 0 ? 0 : 1;
}
