#include "fieldvqa/runner.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>

#include "fieldvqa/response_parser.hpp"

namespace fieldvqa {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

namespace {

std::string read_file(const fs::path& path, ErrorCategory category) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    auto msg = fmt::format("cannot read '{}'", path.string());
    if (category == ErrorCategory::kConfig) throw ConfigError(msg);
    throw DataError(msg);
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError(fmt::format("cannot write '{}'", path.string()));
  out << content;
  if (!out) throw DataError(fmt::format("write to '{}' failed", path.string()));
}

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  if (path.is_relative() && !base.empty()) path = base / path;
  return path.lexically_normal();
}

std::string utc_now() {
  auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

template <typename T>
T required(const json& j, const char* key, const char* where) {
  if (!j.contains(key)) throw ConfigError(fmt::format("{}: missing '{}'", where, key));
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(fmt::format("{}: '{}' has the wrong type", where, key));
  }
}

template <typename T>
T optional_value(const json& j, const char* key, T fallback, const char* where) {
  if (!j.contains(key) || j.at(key).is_null()) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(fmt::format("{}: '{}' has the wrong type", where, key));
  }
}

Strategy strategy_or_throw(const std::string& s) {
  auto st = parse_strategy(s);
  if (!st) throw ConfigError(fmt::format("unknown strategy '{}'", s));
  return *st;
}

// Dataset fields the config asks for, in dataset order.
std::vector<const FieldSpec*> configured_fields(const DatasetBundle& bundle, const ExperimentConfig& config) {
  std::vector<const FieldSpec*> out;
  if (!config.fields) {
    for (const auto& f : bundle.fields) out.push_back(&f);
    return out;
  }
  std::set<std::string> wanted(config.fields->begin(), config.fields->end());
  for (const auto& id : wanted) {
    if (!bundle.find_field(id)) {
      throw ConfigError(fmt::format("field '{}' is not defined by dataset '{}'", id, bundle.name));
    }
  }
  for (const auto& f : bundle.fields) {
    if (wanted.contains(f.id)) out.push_back(&f);
  }
  return out;
}

std::size_t min_fields_in_scope(const ExperimentConfig& config) {
  bool joint = std::find(config.strategies.begin(), config.strategies.end(), Strategy::kJoint) !=
               config.strategies.end();
  return joint ? 2 : 1;
}

std::vector<FieldSpec> queried_fields(const DocumentRecord& doc, const std::vector<const FieldSpec*>& fields) {
  std::vector<FieldSpec> out;
  for (const auto* f : fields) {
    if (doc.has_field(f->id)) out.push_back(*f);
  }
  return out;
}

std::string phrase_for(const DatasetBundle& bundle, const ExperimentConfig& config) {
  return config.doc_kind_phrase.value_or(bundle.doc_kind);
}

json rules_json(const MatchRules& r) {
  return {{"casefold_text", r.casefold_text},
          {"strip_currency", r.strip_currency},
          {"pad_short_final_group", r.pad_short_final_group}};
}

std::string csv_cell(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

DatasetBundle load_exemplar_pool(const ExperimentConfig& config, const DatasetBundle& bundle) {
  if (config.shots == 0 || !config.exemplar_dataset) return bundle;
  return load_canonical(*config.exemplar_dataset);
}

std::vector<std::string> assumption_flags(const ExperimentConfig& config) {
  std::vector<std::string> flags;
  flags.push_back(fmt::format("decoding: temperature={}, max_tokens={}", config.backend.temperature,
                              config.backend.max_tokens));
  flags.push_back(fmt::format("grading: automated matcher, rules {}", config.matching.version()));
  flags.push_back(fmt::format("scope: documents with fewer than {} queried field(s) are skipped; "
                              "fields a document lacks are not queried",
                              min_fields_in_scope(config)));
  if (config.joint_output_instruction) {
    flags.push_back(fmt::format("joint prompts carry the output instruction \"{}\"", kDefaultJointInstruction));
  }
  if (config.shots > 0) {
    flags.push_back(fmt::format("exemplars: first {} pool documents in id order covering the queried fields ({})",
                                config.shots,
                                config.exemplar_mode == ExemplarMode::kMultiImage ? "multi_image" : "text_only"));
  }
  return flags;
}

}  // namespace

// ---------------------------------------------------------------------------
// Config

void ExperimentConfig::validate() const {
  if (dataset.empty()) throw ConfigError("config: 'dataset' is required");
  if (strategies.empty()) throw ConfigError("config: at least one strategy is required");
  std::set<Strategy> seen(strategies.begin(), strategies.end());
  if (seen.size() != strategies.size()) throw ConfigError("config: duplicate strategy");
  if (fields && fields->empty()) throw ConfigError("config: 'fields' list is empty");
  if (shots < 0) throw ConfigError("config: 'shots' must be >= 0");
  if (parallelism < 1) throw ConfigError("config: 'parallelism' must be >= 1");
  if (output_dir.empty()) throw ConfigError("config: 'output_dir' is required");
  if (backend.temperature < 0.0) throw ConfigError("config: temperature must be >= 0");
  if (backend.max_tokens < 1) throw ConfigError("config: max_tokens must be >= 1");
  if (backend.timeout.count() <= 0) throw ConfigError("config: timeout_ms must be > 0");
  if (backend.kind == BackendConfig::Kind::kHttp) {
    if (backend.base_url.empty()) throw ConfigError("config: http backend needs 'base_url'");
    if (backend.retry.max_retries < 0) throw ConfigError("config: max_retries must be >= 0");
  }
  if (backend.error_rate && (*backend.error_rate < 0.0 || *backend.error_rate > 1.0)) {
    throw ConfigError("config: error_rate must lie in [0, 1]");
  }
}

ExperimentConfig ExperimentConfig::from_json_text(const std::string& text, const fs::path& base_dir) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(fmt::format("config is not valid JSON: {}", e.what()));
  }
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  constexpr const char* where = "config";

  ExperimentConfig c;
  c.dataset = resolve(base_dir, required<std::string>(j, "dataset", where));

  if (j.contains("backend")) {
    const auto& b = j.at("backend");
    constexpr const char* bwhere = "config.backend";
    if (!b.is_object()) throw ConfigError("config: 'backend' must be an object");
    auto kind = optional_value<std::string>(b, "kind", "mock", bwhere);
    if (kind == "mock") {
      c.backend.kind = BackendConfig::Kind::kMock;
    } else if (kind == "http") {
      c.backend.kind = BackendConfig::Kind::kHttp;
    } else {
      throw ConfigError(fmt::format("config: unknown backend kind '{}'", kind));
    }
    c.backend.model = optional_value<std::string>(b, "model", c.backend.model, bwhere);
    c.backend.temperature = optional_value<double>(b, "temperature", c.backend.temperature, bwhere);
    c.backend.max_tokens = optional_value<int>(b, "max_tokens", c.backend.max_tokens, bwhere);
    c.backend.timeout =
        std::chrono::milliseconds(optional_value<long long>(b, "timeout_ms", c.backend.timeout.count(), bwhere));
    c.backend.base_url = optional_value<std::string>(b, "base_url", "", bwhere);
    c.backend.retry.max_retries = optional_value<int>(b, "max_retries", c.backend.retry.max_retries, bwhere);
    if (b.contains("script")) c.backend.mock_script = resolve(base_dir, required<std::string>(b, "script", bwhere));
    if (b.contains("error_rate")) c.backend.error_rate = required<double>(b, "error_rate", bwhere);
    if (b.contains("corruption_rule")) {
      auto rule = parse_corruption_rule(required<std::string>(b, "corruption_rule", bwhere));
      if (!rule) throw ConfigError("config: unknown corruption_rule");
      c.backend.corruption_rule = *rule;
    }
    if (b.contains("apply_to")) {
      std::set<Strategy> s;
      for (const auto& name : required<std::vector<std::string>>(b, "apply_to", bwhere)) {
        s.insert(strategy_or_throw(name));
      }
      c.backend.corrupt_strategies = std::move(s);
    }
  }

  if (j.contains("strategies")) {
    c.strategies.clear();
    for (const auto& s : required<std::vector<std::string>>(j, "strategies", where)) {
      c.strategies.push_back(strategy_or_throw(s));
    }
  }
  if (j.contains("fields")) {
    const auto& f = j.at("fields");
    if (f.is_string()) {
      if (f.get<std::string>() != "auto") throw ConfigError("config: 'fields' must be \"auto\" or a list");
    } else {
      c.fields = required<std::vector<std::string>>(j, "fields", where);
    }
  }
  c.shots = optional_value<int>(j, "shots", c.shots, where);
  if (j.contains("exemplar_dataset")) {
    c.exemplar_dataset = resolve(base_dir, required<std::string>(j, "exemplar_dataset", where));
  }
  auto mode = optional_value<std::string>(j, "exemplar_mode", "multi_image", where);
  if (mode == "multi_image") {
    c.exemplar_mode = ExemplarMode::kMultiImage;
  } else if (mode == "text_only") {
    c.exemplar_mode = ExemplarMode::kTextOnly;
  } else {
    throw ConfigError(fmt::format("config: unknown exemplar_mode '{}'", mode));
  }
  c.parallelism = optional_value<int>(j, "parallelism", c.parallelism, where);
  if (j.contains("seed")) c.seed = required<std::uint64_t>(j, "seed", where);
  c.output_dir = resolve(base_dir, optional_value<std::string>(j, "output_dir", c.output_dir.string(), where));
  if (j.contains("doc_kind_phrase")) c.doc_kind_phrase = required<std::string>(j, "doc_kind_phrase", where);
  c.joint_output_instruction = optional_value<bool>(j, "output_instruction", c.joint_output_instruction, where);
  c.analyze_dependence = optional_value<bool>(j, "dependence", c.analyze_dependence, where);
  if (j.contains("matching")) {
    const auto& m = j.at("matching");
    constexpr const char* mwhere = "config.matching";
    c.matching.casefold_text = optional_value<bool>(m, "casefold_text", c.matching.casefold_text, mwhere);
    c.matching.strip_currency = optional_value<bool>(m, "strip_currency", c.matching.strip_currency, mwhere);
    c.matching.pad_short_final_group =
        optional_value<bool>(m, "pad_short_final_group", c.matching.pad_short_final_group, mwhere);
  }
  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::load(const fs::path& path) {
  auto text = read_file(path, ErrorCategory::kConfig);
  return from_json_text(text, fs::absolute(path).parent_path());
}

std::string ExperimentConfig::to_json_text() const {
  json b;
  b["kind"] = backend.kind == BackendConfig::Kind::kMock ? "mock" : "http";
  b["model"] = backend.model;
  b["temperature"] = backend.temperature;
  b["max_tokens"] = backend.max_tokens;
  b["timeout_ms"] = backend.timeout.count();
  if (backend.kind == BackendConfig::Kind::kHttp) {
    b["base_url"] = backend.base_url;
    b["max_retries"] = backend.retry.max_retries;
  }
  if (backend.mock_script) b["script"] = fs::absolute(*backend.mock_script).string();
  if (backend.error_rate) b["error_rate"] = *backend.error_rate;
  if (backend.corruption_rule) b["corruption_rule"] = std::string(to_string(*backend.corruption_rule));
  if (backend.corrupt_strategies) {
    json a = json::array();
    for (auto s : *backend.corrupt_strategies) a.push_back(std::string(to_string(s)));
    b["apply_to"] = a;
  }

  json j;
  j["dataset"] = fs::absolute(dataset).string();
  j["backend"] = b;
  json strat = json::array();
  for (auto s : strategies) strat.push_back(std::string(to_string(s)));
  j["strategies"] = strat;
  if (fields) {
    j["fields"] = *fields;
  } else {
    j["fields"] = "auto";
  }
  j["shots"] = shots;
  if (exemplar_dataset) j["exemplar_dataset"] = fs::absolute(*exemplar_dataset).string();
  j["exemplar_mode"] = exemplar_mode == ExemplarMode::kMultiImage ? "multi_image" : "text_only";
  j["parallelism"] = parallelism;
  if (seed) j["seed"] = *seed;
  j["output_dir"] = fs::absolute(output_dir).string();
  if (doc_kind_phrase) j["doc_kind_phrase"] = *doc_kind_phrase;
  j["output_instruction"] = joint_output_instruction;
  j["dependence"] = analyze_dependence;
  j["matching"] = rules_json(matching);
  return j.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Archive

void save_archive(const Archive& archive, const fs::path& path) {
  std::string out;
  json header{{"archive_version", 1},
              {"dataset", archive.dataset},
              {"model", archive.model},
              {"rules_version", archive.rules_version}};
  out += header.dump() + "\n";
  for (const auto& r : archive.records) {
    json j;
    j["document"] = r.document_id;
    j["strategy"] = std::string(to_string(r.strategy));
    j["fields"] = r.field_ids;
    j["prompt"] = r.prompt_text;
    j["response"] = r.response ? json(*r.response) : json(nullptr);
    j["backend_id"] = r.backend_id;
    j["attempt_count"] = r.attempt_count;
    j["error"] = r.error ? json(*r.error) : json(nullptr);
    out += j.dump() + "\n";
  }
  write_file(path, out);
}

Archive load_archive(const fs::path& path) {
  fs::path file = fs::is_directory(path) ? path / kArchiveFile : path;
  std::ifstream in(file, std::ios::binary);
  if (!in) throw DataError(fmt::format("cannot read archive '{}'", file.string()));
  Archive archive;
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw DataError(fmt::format("{}:{}: invalid JSON: {}", file.string(), line_no, e.what()));
    }
    try {
      if (!header_seen) {
        if (!j.contains("archive_version")) {
          throw DataError(fmt::format("{}:{}: missing archive header", file.string(), line_no));
        }
        archive.dataset = j.value("dataset", "");
        archive.model = j.value("model", "");
        archive.rules_version = j.value("rules_version", "");
        header_seen = true;
        continue;
      }
      ArchiveRecord r;
      r.document_id = j.at("document").get<std::string>();
      auto strategy = parse_strategy(j.at("strategy").get<std::string>());
      if (!strategy) throw DataError(fmt::format("{}:{}: unknown strategy", file.string(), line_no));
      r.strategy = *strategy;
      r.field_ids = j.at("fields").get<std::vector<std::string>>();
      r.prompt_text = j.value("prompt", "");
      if (j.contains("response") && !j.at("response").is_null()) r.response = j.at("response").get<std::string>();
      r.backend_id = j.value("backend_id", "");
      r.attempt_count = j.value("attempt_count", 0);
      if (j.contains("error") && !j.at("error").is_null()) r.error = j.at("error").get<std::string>();
      archive.records.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw DataError(fmt::format("{}:{}: malformed archive record: {}", file.string(), line_no, e.what()));
    }
  }
  if (!header_seen) throw DataError(fmt::format("archive '{}' is empty", file.string()));
  return archive;
}

// ---------------------------------------------------------------------------
// Planning

std::unique_ptr<Backend> make_backend(const ExperimentConfig& config, const DatasetBundle& bundle) {
  const auto& b = config.backend;
  if (b.kind == BackendConfig::Kind::kHttp) {
    const char* key = std::getenv(kApiKeyEnvVar);
    if (key == nullptr || *key == '\0') {
      throw ConfigError(fmt::format("http backend needs an API key in {}", kApiKeyEnvVar));
    }
    HttpBackendConfig hc;
    hc.base_url = b.base_url;
    hc.api_key = key;
    hc.retry = b.retry;
    return std::make_unique<HttpBackend>(std::move(hc));
  }
  MockScript script = b.mock_script ? MockScript::load(*b.mock_script) : MockScript::perfect_oracle(bundle);
  if (!script.oracle && script.entries.empty()) script.oracle = bundle;
  if (config.seed) script.seed = *config.seed;
  if (b.error_rate) script.error_rate = *b.error_rate;
  if (b.corruption_rule) script.corruption_rule = *b.corruption_rule;
  if (b.corrupt_strategies) script.apply_to = *b.corrupt_strategies;
  return std::make_unique<MockBackend>(std::move(script), b.model.empty() ? "mock" : "mock:" + b.model);
}

std::vector<ChatRequest> plan_requests(const DatasetBundle& bundle, const ExperimentConfig& config,
                                       const DatasetBundle& exemplar_pool, std::size_t* out_of_scope) {
  const auto fields = configured_fields(bundle, config);
  const auto min_fields = min_fields_in_scope(config);
  const auto phrase = phrase_for(bundle, config);
  std::vector<ChatRequest> requests;
  std::size_t skipped = 0;

  for (const auto& doc : bundle.documents) {
    auto queried = queried_fields(doc, fields);
    if (queried.size() < min_fields) {
      ++skipped;
      continue;
    }
    std::vector<Exemplar> exemplars;
    if (config.shots > 0) {
      std::vector<std::string> ids;
      for (const auto& f : queried) ids.push_back(f.id);
      exemplars = select_exemplars(exemplar_pool, doc.id, ids, config.shots);
    }
    for (auto strategy : config.strategies) {
      PromptPlan plan = PromptPlan::zero_shot(strategy, phrase);
      if (strategy == Strategy::kJoint && !config.joint_output_instruction) plan.output_instruction.reset();
      plan.shots = config.shots;
      plan.exemplars = exemplars;
      plan.exemplar_mode = config.exemplar_mode;

      auto push = [&](RenderedPrompt prompt) {
        ChatRequest req;
        req.model = config.backend.model;
        req.prompt = std::move(prompt);
        req.temperature = config.backend.temperature;
        req.max_tokens = config.backend.max_tokens;
        req.timeout = config.backend.timeout;
        requests.push_back(std::move(req));
      };
      if (strategy == Strategy::kSeparate) {
        for (auto& p : build_separate_prompts(queried, doc, plan)) push(std::move(p));
      } else {
        push(build_joint_prompt(queried, doc, plan));
      }
    }
  }
  if (skipped > 0) {
    spdlog::warn("{} document(s) have fewer than {} queried field(s) and were skipped", skipped, min_fields);
  }
  if (out_of_scope) *out_of_scope = skipped;
  if (requests.empty()) throw DataError(fmt::format("no document of '{}' is in scope for this config", bundle.name));
  return requests;
}

// ---------------------------------------------------------------------------
// Evaluation

ExperimentReport evaluate(const DatasetBundle& bundle, const ExperimentConfig& config,
                          const std::vector<ArchiveRecord>& records) {
  ExperimentReport report;
  report.config = config;
  report.dataset_name = bundle.name;
  report.provenance.rules_version = config.matching.version();
  report.provenance.requests = records.size();
  report.provenance.assumptions = assumption_flags(config);

  // Documents where nothing came back are excluded outright.
  std::map<std::string, std::pair<std::size_t, std::size_t>> per_doc;  // failed, total
  for (const auto& r : records) {
    auto& [failed, total] = per_doc[r.document_id];
    ++total;
    if (!r.response) {
      ++failed;
      ++report.provenance.failed_requests;
    }
  }
  std::set<std::string> excluded;
  for (const auto& [doc, counts] : per_doc) {
    if (counts.first == counts.second) excluded.insert(doc);
  }
  report.provenance.excluded_documents = excluded.size();
  if (!records.empty() && excluded.size() == per_doc.size()) {
    throw BackendError(BackendFailure::kTransport,
                       fmt::format("all {} request(s) failed; backend unavailable", records.size()));
  }
  if (!excluded.empty()) {
    spdlog::warn("{} document(s) excluded because every request for them failed", excluded.size());
  }

  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    if (excluded.contains(r.document_id)) continue;
    const auto* doc = bundle.find_document(r.document_id);
    if (!doc) throw DataError(fmt::format("archived document '{}' is not in dataset '{}'", r.document_id, bundle.name));

    std::vector<FieldSpec> fields;
    for (const auto& id : r.field_ids) fields.push_back(bundle.field(id));

    std::map<std::string, ParsedValue> parsed;
    if (r.response) {
      if (r.strategy == Strategy::kSeparate) {
        for (const auto& f : fields) {
          parsed[f.id] = parse_separate_response(*r.response, f, bundle.numeric_profile, config.matching);
        }
      } else {
        parsed = parse_joint_response(*r.response, fields, bundle.numeric_profile, config.matching);
      }
    }

    for (const auto& f : fields) {
      auto gold = doc->truth.find(f.id);
      if (gold == doc->truth.end()) {
        throw DataError(fmt::format("document '{}' has no gold value for '{}'", doc->id, f.id));
      }
      ExtractionOutcome o;
      o.document_id = doc->id;
      o.field_id = f.id;
      o.strategy = r.strategy;
      o.response_index = i;
      auto it = parsed.find(f.id);
      if (it == parsed.end() || !it->second.found()) {
        o.verdict = {false, MatchReason::kUnparseable};
      } else {
        o.predicted = it->second.raw;
        o.verdict = values_match(o.predicted, gold->second, f.kind, bundle.numeric_profile, config.matching);
      }
      report.outcomes.push_back(std::move(o));
    }
  }
  check_unique_outcomes(report.outcomes);

  for (auto strategy : config.strategies) {
    auto table = accuracy_table(report.outcomes, strategy);
    report.field_count_series[strategy] = accuracy_by_field_count(report.outcomes, strategy);
    report.tables.emplace(strategy, std::move(table));
  }
  if (report.tables.contains(Strategy::kSeparate) && report.tables.contains(Strategy::kJoint)) {
    const auto& sep = report.tables.at(Strategy::kSeparate);
    const auto& joint = report.tables.at(Strategy::kJoint);
    report.deltas = delta_table(sep, joint);
    report.document_delta = joint.document_level.accuracy - sep.document_level.accuracy;
  }

  if (config.analyze_dependence) {
    std::vector<std::string> targets;
    for (const auto* f : configured_fields(bundle, config)) {
      if (f->kind == FieldKind::kNumeric) targets.push_back(f->id);
    }
    if (targets.size() < 3) {
      spdlog::warn("dependence analysis needs at least 3 numeric fields, found {}", targets.size());
    } else {
      report.dependence = dependence_matrix(bundle, targets, config.matching);
    }
  }
  return report;
}

ExperimentReport run_experiment(const ExperimentConfig& config, Backend* backend) {
  config.validate();
  const auto started = utc_now();
  auto bundle = load_canonical(config.dataset);
  auto pool = load_exemplar_pool(config, bundle);

  std::size_t out_of_scope = 0;
  auto requests = plan_requests(bundle, config, pool, &out_of_scope);

  std::unique_ptr<Backend> owned;
  if (!backend) {
    owned = make_backend(config, bundle);
    backend = owned.get();
  }
  spdlog::info("sending {} request(s) to {} with parallelism {}", requests.size(), backend->id(),
               config.parallelism);
  auto results = send_batch(*backend, requests, config.parallelism);

  Archive archive;
  archive.dataset = bundle.name;
  archive.model = config.backend.model;
  archive.rules_version = config.matching.version();
  for (std::size_t i = 0; i < requests.size(); ++i) {
    ArchiveRecord r;
    const auto& p = requests[i].prompt;
    r.document_id = p.document_id;
    r.strategy = p.strategy;
    r.field_ids = p.field_ids;
    r.prompt_text = p.text;
    if (results[i].response) {
      r.response = results[i].response->text;
      r.backend_id = results[i].response->backend_id;
      r.attempt_count = results[i].response->attempt_count;
    } else {
      r.backend_id = backend->id();
      r.attempt_count = results[i].error->attempts();
      r.error = fmt::format("{}: {}", to_string(results[i].error->failure()), results[i].error->what());
    }
    archive.records.push_back(std::move(r));
  }

  // Responses hit disk before any grading happens.
  fs::create_directories(config.output_dir);
  const auto archive_path = config.output_dir / kArchiveFile;
  save_archive(archive, archive_path);
  write_file(config.output_dir / kConfigEcho, config.to_json_text());

  auto report = evaluate(bundle, config, archive.records);
  report.archive_path = archive_path;
  report.provenance.started_at = started;
  report.provenance.finished_at = utc_now();
  report.provenance.backend_id = backend->id();
  report.provenance.out_of_scope_documents = out_of_scope;
  write_report_files(report, config.output_dir);
  return report;
}

ExperimentReport replay(const fs::path& archive_path, const ExperimentConfig& config, bool write_outputs) {
  config.validate();
  const auto started = utc_now();
  auto archive = load_archive(archive_path);
  auto bundle = load_canonical(config.dataset);
  auto pool = load_exemplar_pool(config, bundle);

  std::size_t out_of_scope = 0;
  auto requests = plan_requests(bundle, config, pool, &out_of_scope);

  std::map<RequestKey, const ArchiveRecord*> by_key;
  for (const auto& r : archive.records) {
    RenderedPrompt p;
    p.document_id = r.document_id;
    p.strategy = r.strategy;
    p.field_ids = r.field_ids;
    by_key[RequestKey::of(p)] = &r;
  }

  // Re-ordered to match the plan, so a replay grades exactly what a run would.
  std::vector<ArchiveRecord> records;
  records.reserve(requests.size());
  for (const auto& req : requests) {
    auto key = RequestKey::of(req.prompt);
    auto it = by_key.find(key);
    if (it == by_key.end()) {
      throw DataError(fmt::format("archive has no response for {}", key.to_string()));
    }
    ArchiveRecord r = *it->second;
    r.field_ids = req.prompt.field_ids;
    records.push_back(std::move(r));
  }

  auto report = evaluate(bundle, config, records);
  report.archive_path = fs::is_directory(archive_path) ? archive_path / kArchiveFile : archive_path;
  report.provenance.started_at = started;
  report.provenance.finished_at = utc_now();
  report.provenance.replayed = true;
  report.provenance.backend_id = records.empty() ? "" : records.front().backend_id;
  report.provenance.out_of_scope_documents = out_of_scope;
  report.provenance.archived_rules_version = archive.rules_version;
  if (archive.rules_version != config.matching.version()) {
    report.provenance.rules_version_mismatch = true;
    spdlog::warn("archive was graded under rules {} but replay uses {}", archive.rules_version,
                 config.matching.version());
  }
  if (write_outputs) {
    fs::create_directories(config.output_dir);
    write_report_files(report, config.output_dir);
  }
  return report;
}

// ---------------------------------------------------------------------------
// Rendering

std::string accuracy_csv(const ExperimentReport& report) {
  std::string out = "dataset,model,strategy,field,correct,n,accuracy,delta\n";
  const auto& model = report.config.backend.model;
  const bool paired = report.document_delta.has_value();
  for (auto strategy : report.config.strategies) {
    const auto& table = report.tables.at(strategy);
    const bool show_delta = paired && strategy == Strategy::kJoint;
    for (const auto& [field, ratio] : table.per_field) {
      std::string delta;
      if (show_delta) delta = format_delta(report.deltas.at(field));
      out += fmt::format("{},{},{},{},{},{},{:.4f},{}\n", csv_cell(report.dataset_name), csv_cell(model),
                         to_string(strategy), csv_cell(field), ratio.correct, ratio.n, ratio.accuracy, delta);
    }
    const auto& d = table.document_level;
    out += fmt::format("{},{},{},<document>,{},{},{:.4f},{}\n", csv_cell(report.dataset_name), csv_cell(model),
                       to_string(strategy), d.correct, d.n, d.accuracy,
                       show_delta ? format_delta(*report.document_delta) : "");
  }
  return out;
}

std::string emit_plot_series(const ExperimentReport& report) {
  std::string out = "k,strategy,accuracy,n_docs\n";
  std::size_t points = 0;
  for (auto strategy : report.config.strategies) {
    auto it = report.field_count_series.find(strategy);
    if (it == report.field_count_series.end()) continue;
    for (const auto& p : it->second) {
      out += fmt::format("{},{},{:.4f},{}\n", p.field_count, to_string(strategy), p.accuracy, p.n_docs);
      ++points;
    }
  }
  if (points == 0) throw DataError("no documents with 2 to 6 queried fields; nothing to plot");
  return out;
}

std::string outcomes_csv(const ExperimentReport& report) {
  std::string out = "document,strategy,field,response_index,predicted,matched,reason\n";
  for (const auto& o : report.outcomes) {
    out += fmt::format("{},{},{},{},{},{},{}\n", csv_cell(o.document_id), to_string(o.strategy),
                       csv_cell(o.field_id), o.response_index, csv_cell(o.predicted), o.verdict.matched ? 1 : 0,
                       to_string(o.verdict.reason));
  }
  return out;
}

std::string report_json(const ExperimentReport& report) {
  json j;
  j["dataset"] = report.dataset_name;
  j["model"] = report.config.backend.model;
  json tables = json::object();
  for (const auto& [strategy, table] : report.tables) {
    json t;
    json fields = json::object();
    for (const auto& [field, r] : table.per_field) {
      fields[field] = {{"correct", r.correct}, {"n", r.n}, {"accuracy", r.accuracy}};
    }
    t["fields"] = fields;
    t["document"] = {{"correct", table.document_level.correct},
                     {"n", table.document_level.n},
                     {"accuracy", table.document_level.accuracy}};
    tables[std::string(to_string(strategy))] = t;
  }
  j["accuracy"] = tables;
  if (report.document_delta) {
    json d = json::object();
    for (const auto& [field, v] : report.deltas) d[field] = v;
    d["<document>"] = *report.document_delta;
    j["delta"] = d;
  }
  const auto& p = report.provenance;
  json prov;
  prov["started_at"] = p.started_at;
  prov["finished_at"] = p.finished_at;
  prov["backend_id"] = p.backend_id;
  prov["rules_version"] = p.rules_version;
  prov["matching"] = rules_json(report.config.matching);
  if (p.archived_rules_version) prov["archived_rules_version"] = *p.archived_rules_version;
  prov["rules_version_mismatch"] = p.rules_version_mismatch;
  prov["replayed"] = p.replayed;
  prov["requests"] = p.requests;
  prov["failed_requests"] = p.failed_requests;
  prov["excluded_documents"] = p.excluded_documents;
  prov["out_of_scope_documents"] = p.out_of_scope_documents;
  prov["archive"] = report.archive_path.string();
  j["provenance"] = prov;
  j["assumptions"] = p.assumptions;
  return j.dump(2) + "\n";
}

void write_report_files(const ExperimentReport& report, const fs::path& dir) {
  write_file(dir / kAccuracyCsv, accuracy_csv(report));
  write_file(dir / kOutcomesCsv, outcomes_csv(report));
  try {
    write_file(dir / kPlotCsv, emit_plot_series(report));
  } catch (const DataError& e) {
    spdlog::warn("plot series skipped: {}", e.what());
  }
  if (report.dependence) write_file(dir / kDependenceCsv, dependence_csv(*report.dependence));
  write_file(dir / kReportJson, report_json(report));
}

}  // namespace fieldvqa
