#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "fieldvqa/backend.hpp"
#include "fieldvqa/dataset.hpp"
#include "fieldvqa/dependence.hpp"
#include "fieldvqa/matching.hpp"
#include "fieldvqa/metrics.hpp"
#include "fieldvqa/prompting.hpp"

namespace fieldvqa {

struct BackendConfig {
  enum class Kind { kMock, kHttp };
  Kind kind = Kind::kMock;
  std::string model = "mock";
  double temperature = 0.0;
  int max_tokens = 512;
  std::chrono::milliseconds timeout{60'000};

  // http
  std::string base_url;
  RetryPolicy retry;

  // mock: an optional script file plus inline overrides. Without a script
  // the dataset under test is the oracle.
  std::optional<std::filesystem::path> mock_script;
  std::optional<double> error_rate;
  std::optional<CorruptionRule> corruption_rule;
  std::optional<std::set<Strategy>> corrupt_strategies;
};

struct ExperimentConfig {
  std::filesystem::path dataset;
  BackendConfig backend;
  std::vector<Strategy> strategies = {Strategy::kSeparate, Strategy::kJoint};
  std::optional<std::vector<std::string>> fields;  // nullopt: every dataset field
  int shots = 0;
  std::optional<std::filesystem::path> exemplar_dataset;  // defaults to the dataset itself
  ExemplarMode exemplar_mode = ExemplarMode::kMultiImage;
  int parallelism = 1;
  std::optional<std::uint64_t> seed;  // overrides the mock script seed
  std::filesystem::path output_dir = "fieldvqa-out";
  std::optional<std::string> doc_kind_phrase;  // defaults to the dataset's doc_kind
  bool joint_output_instruction = true;
  bool separate_output_instruction = false;
  bool analyze_dependence = false;
  MatchRules matching;

  // Throws ConfigError.
  void validate() const;

  // Relative paths resolve against base_dir.
  static ExperimentConfig from_json_text(const std::string& text, const std::filesystem::path& base_dir = {});
  static ExperimentConfig load(const std::filesystem::path& path);
  std::string to_json_text() const;
};

struct ArchiveRecord {
  std::string document_id;
  Strategy strategy = Strategy::kSeparate;
  std::vector<std::string> field_ids;  // request order
  std::string prompt_text;
  std::optional<std::string> response;  // verbatim model output
  std::string backend_id;
  int attempt_count = 0;
  std::optional<std::string> error;

  bool operator==(const ArchiveRecord&) const = default;
};

struct Archive {
  std::string dataset;
  std::string model;
  std::string rules_version;
  std::vector<ArchiveRecord> records;
};

inline constexpr const char* kArchiveFile = "archive.jsonl";
inline constexpr const char* kConfigEcho = "config.json";
inline constexpr const char* kAccuracyCsv = "accuracy.csv";
inline constexpr const char* kPlotCsv = "plot.csv";
inline constexpr const char* kDependenceCsv = "dependence.csv";
inline constexpr const char* kOutcomesCsv = "outcomes.csv";
inline constexpr const char* kReportJson = "report.json";

void save_archive(const Archive& archive, const std::filesystem::path& path);
// Accepts the archive file itself or the directory holding it.
Archive load_archive(const std::filesystem::path& path);

struct Provenance {
  std::string started_at;
  std::string finished_at;
  std::string backend_id;
  std::string rules_version;
  std::optional<std::string> archived_rules_version;
  bool rules_version_mismatch = false;
  bool replayed = false;
  std::size_t requests = 0;
  std::size_t failed_requests = 0;
  std::size_t excluded_documents = 0;      // every request failed
  std::size_t out_of_scope_documents = 0;  // too few queried fields
  std::vector<std::string> assumptions;
};

struct ExperimentReport {
  ExperimentConfig config;
  std::string dataset_name;
  std::map<Strategy, AccuracyTable> tables;
  std::map<std::string, double> deltas;  // joint - separate, when both ran
  std::optional<double> document_delta;
  std::map<Strategy, std::vector<FieldCountPoint>> field_count_series;
  std::optional<std::vector<DependenceEntry>> dependence;
  std::vector<ExtractionOutcome> outcomes;
  Provenance provenance;
  std::filesystem::path archive_path;
};

// Builds the backend a config describes.
std::unique_ptr<Backend> make_backend(const ExperimentConfig& config, const DatasetBundle& bundle);

// Requests for every in-scope document, in a fixed order: documents in
// bundle order, strategies in config order, fields in dataset order.
std::vector<ChatRequest> plan_requests(const DatasetBundle& bundle, const ExperimentConfig& config,
                                       const DatasetBundle& exemplar_pool, std::size_t* out_of_scope = nullptr);

// Prompts, sends, archives (before any parsing), grades, aggregates, and
// writes every report file under config.output_dir.
ExperimentReport run_experiment(const ExperimentConfig& config, Backend* backend = nullptr);

// Recomputes the report from an archive without contacting any backend.
// Writes report files when write_outputs is set.
ExperimentReport replay(const std::filesystem::path& archive, const ExperimentConfig& config,
                        bool write_outputs = true);

// Grades archived responses for the bundle.
ExperimentReport evaluate(const DatasetBundle& bundle, const ExperimentConfig& config,
                          const std::vector<ArchiveRecord>& records);

// CSV renderings.
std::string accuracy_csv(const ExperimentReport& report);
std::string emit_plot_series(const ExperimentReport& report);  // k,strategy,accuracy,n_docs
std::string outcomes_csv(const ExperimentReport& report);
std::string report_json(const ExperimentReport& report);

void write_report_files(const ExperimentReport& report, const std::filesystem::path& dir);

}  // namespace fieldvqa
