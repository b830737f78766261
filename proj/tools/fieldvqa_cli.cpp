// fieldvqa: import datasets, run and replay extraction experiments, and
// analyze numeric field dependence.

#include <fmt/format.h>
#include <fmt/ranges.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <CLI11.hpp>
#include <cstdio>
#include <fstream>
#include <iostream>

#include "fieldvqa/dataset.hpp"
#include "fieldvqa/dependence.hpp"
#include "fieldvqa/errors.hpp"
#include "fieldvqa/runner.hpp"

namespace fs = std::filesystem;
using namespace fieldvqa;

namespace {

void print_summary(const ExperimentReport& report) {
  for (auto strategy : report.config.strategies) {
    const auto& d = report.tables.at(strategy).document_level;
    fmt::print("{:<9} document-level {:.4f} ({}/{})\n", to_string(strategy), d.accuracy, d.correct, d.n);
  }
  if (report.document_delta) fmt::print("delta     {}\n", format_delta(*report.document_delta));
  if (report.provenance.rules_version_mismatch) {
    fmt::print("note: archive rules {} differ from current rules {}\n", *report.provenance.archived_rules_version,
               report.provenance.rules_version);
  }
}

void write_or_print(const std::string& text, const std::string& out) {
  if (out.empty()) {
    std::fwrite(text.data(), 1, text.size(), stdout);
    return;
  }
  std::ofstream f(out, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError(fmt::format("cannot write '{}'", out));
  f << text;
}

std::vector<DependenceEntry> matrix_for(const std::string& dataset, const std::vector<std::string>& targets) {
  auto bundle = load_canonical(dataset);
  return dependence_matrix(bundle, targets);
}

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_default_logger(spdlog::stderr_color_mt("fieldvqa"));
  spdlog::set_pattern("%^%l%$: %v");

  CLI::App app{"Multi-field document extraction through chat-style vision-language models"};
  app.require_subcommand(1);
  bool verbose = false;
  bool quiet = false;
  app.add_flag("-v,--verbose", verbose, "Debug logging");
  app.add_flag("-q,--quiet", quiet, "Warnings and errors only");

  std::string format, src, out;
  auto* import_cmd = app.add_subcommand("import", "Convert a public dataset into the canonical format");
  import_cmd->add_option("format", format, "cord | sroie | funsd-vqa | canonical")
      ->required()
      ->check(CLI::IsMember({"cord", "sroie", "funsd-vqa", "canonical"}));
  import_cmd->add_option("src", src, "Source directory or file")->required();
  import_cmd->add_option("-o,--output", out, "Canonical JSONL to write")->required();

  std::string config_path;
  auto* run_cmd = app.add_subcommand("run", "Run an experiment");
  run_cmd->add_option("-c,--config", config_path, "Experiment config (JSON)")->required();

  std::string archive;
  auto* replay_cmd = app.add_subcommand("replay", "Re-grade archived responses without backend traffic");
  replay_cmd->add_option("-a,--archive", archive, "Archive directory or archive.jsonl")->required();
  replay_cmd->add_option("-c,--config", config_path, "Experiment config (JSON)")->required();

  std::string dataset;
  double threshold = kHighDependence;
  std::vector<std::string> targets;
  auto* dep_cmd = app.add_subcommand("analyze-dependence", "Regress each numeric field on every pair of others");
  dep_cmd->add_option("-d,--dataset", dataset, "Canonical dataset")->required();
  dep_cmd->add_option("--threshold", threshold, "R^2 threshold for the high-dependence summary")
      ->check(CLI::Range(0.0, 1.0));
  dep_cmd->add_option("--targets", targets, "Restrict to these numeric fields");
  dep_cmd->add_option("-o,--output", out, "CSV file (default: stdout)");

  std::size_t max_group = 6;
  auto* groups_cmd = app.add_subcommand("recommend-groups", "Suggest fields to extract jointly");
  groups_cmd->add_option("-d,--dataset", dataset, "Canonical dataset")->required();
  groups_cmd->add_option("--threshold", threshold, "Minimum R^2 for grouping")->check(CLI::Range(0.0, 1.0));
  groups_cmd->add_option("--targets", targets, "Restrict to these numeric fields");
  groups_cmd->add_option("--max-size", max_group, "Largest group")->check(CLI::PositiveNumber);

  bool want_csv = false, want_plot = false;
  auto* report_cmd = app.add_subcommand("report", "Print report tables recomputed from an archive");
  report_cmd->add_option("-a,--archive", archive, "Archive directory")->required();
  report_cmd->add_option("-c,--config", config_path, "Config (default: the config.json beside the archive)");
  auto* csv_flag = report_cmd->add_flag("--csv", want_csv, "Accuracy CSV");
  report_cmd->add_flag("--plot", want_plot, "Field-count plot series CSV")->excludes(csv_flag);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(ErrorCategory::kConfig);
  }
  if (verbose) spdlog::set_level(spdlog::level::debug);
  if (quiet) spdlog::set_level(spdlog::level::warn);

  try {
    if (*import_cmd) {
      DatasetBundle bundle;
      if (format == "cord") {
        bundle = import_cord(src);
      } else if (format == "sroie") {
        bundle = import_sroie(src);
      } else if (format == "funsd-vqa") {
        bundle = import_funsd_vqa(src);
      } else {
        bundle = load_canonical(src);
      }
      save_canonical(bundle, out);
      spdlog::info("wrote {} document(s), {} field(s) to {}", bundle.documents.size(), bundle.fields.size(), out);
    } else if (*run_cmd) {
      auto report = run_experiment(ExperimentConfig::load(config_path));
      print_summary(report);
      fmt::print("outputs in {}\n", report.config.output_dir.string());
    } else if (*replay_cmd) {
      auto report = replay(archive, ExperimentConfig::load(config_path));
      print_summary(report);
      fmt::print("outputs in {}\n", report.config.output_dir.string());
    } else if (*dep_cmd) {
      auto matrix = matrix_for(dataset, targets);
      write_or_print(dependence_csv(matrix), out);
      for (const auto& e : matrix) {
        if (e.fit && e.fit->r_squared && *e.fit->r_squared >= threshold) {
          spdlog::info("{} | {}, {}: R^2 {:.4f} (n={})", e.triplet.target, e.triplet.predictor1,
                       e.triplet.predictor2, *e.fit->r_squared, e.fit->n);
        }
      }
    } else if (*groups_cmd) {
      auto matrix = matrix_for(dataset, targets);
      for (const auto& group : recommend_groups(matrix, threshold, max_group)) {
        fmt::print("{}\n", fmt::join(group, " "));
      }
    } else if (*report_cmd) {
      fs::path dir = fs::is_directory(archive) ? fs::path(archive) : fs::path(archive).parent_path();
      fs::path cfg = config_path.empty() ? dir / kConfigEcho : fs::path(config_path);
      auto report = replay(archive, ExperimentConfig::load(cfg), false);
      if (want_plot) {
        fmt::print("{}", emit_plot_series(report));
      } else {
        fmt::print("{}", accuracy_csv(report));
      }
    }
  } catch (const Error& e) {
    spdlog::error("{}", e.what());
    return e.exit_code();
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return static_cast<int>(ErrorCategory::kData);
  }
  return 0;
}
