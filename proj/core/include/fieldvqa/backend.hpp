#pragma once

#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "fieldvqa/dataset.hpp"
#include "fieldvqa/errors.hpp"
#include "fieldvqa/prompting.hpp"

namespace fieldvqa {

struct ChatRequest {
  std::string model;
  RenderedPrompt prompt;
  double temperature = 0.0;
  int max_tokens = 512;
  std::chrono::milliseconds timeout{60'000};

  // Throws ConfigError when temperature < 0 or max_tokens < 1.
  void validate() const;
};

struct ChatResponse {
  std::string text;  // verbatim, never trimmed
  std::chrono::milliseconds latency{0};
  std::string backend_id;
  int attempt_count = 1;
};

class Backend {
 public:
  virtual ~Backend() = default;
  virtual ChatResponse send(const ChatRequest& request) = 0;
  virtual std::string id() const = 0;
};

// Either a response or the error that ended its request.
struct BatchItem {
  std::optional<ChatResponse> response;
  std::optional<BackendError> error;

  bool ok() const { return response.has_value(); }
};

// Results come back in request order; at most `parallelism` requests are in
// flight at once. Per-request failures are reported in place.
std::vector<BatchItem> send_batch(Backend& backend, std::span<const ChatRequest> requests, int parallelism);

// Key identifying a request independent of prompt wording: document,
// strategy, sorted field ids.
struct RequestKey {
  std::string document_id;
  Strategy strategy = Strategy::kSeparate;
  std::vector<std::string> field_ids;  // sorted

  static RequestKey of(const RenderedPrompt& prompt);
  std::string to_string() const;
  auto operator<=>(const RequestKey&) const = default;
};

// ---------------------------------------------------------------------------
// Live chat-completions client.

struct RetryPolicy {
  int max_retries = 3;
  std::chrono::milliseconds initial_delay{500};
  double backoff_factor = 2.0;
  std::chrono::milliseconds max_delay{8'000};

  std::chrono::milliseconds delay_for(int retry_index) const;
};

struct HttpBackendConfig {
  std::string base_url;  // e.g. https://api.openai.com/v1
  std::string api_key;   // empty: read FIELDVQA_API_KEY
  RetryPolicy retry;
  // Injected in tests to avoid real sleeps.
  std::function<void(std::chrono::milliseconds)> sleep;
};

inline constexpr const char* kApiKeyEnvVar = "FIELDVQA_API_KEY";

class HttpBackend final : public Backend {
 public:
  explicit HttpBackend(HttpBackendConfig config);

  ChatResponse send(const ChatRequest& request) override;
  std::string id() const override;

 private:
  HttpBackendConfig config_;
  std::string scheme_host_port_;
  std::string path_prefix_;
};

// Request body for POST {base_url}/chat/completions. Image references that
// are not already data URIs are read from disk and base64-encoded.
std::string build_chat_body(const ChatRequest& request);

// Pulls choices[0].message.content out of a response body.
std::string parse_chat_content(const std::string& body);

std::string image_data_uri(const std::string& image_ref);
std::string base64_encode(std::string_view bytes);

// ---------------------------------------------------------------------------
// Scripted mock.

enum class CorruptionRule { kSwapWithSiblingNumeric, kTruncate, kGarble };

std::string_view to_string(CorruptionRule rule);
std::optional<CorruptionRule> parse_corruption_rule(std::string_view text);

struct MockScript {
  // Canned responses served verbatim.
  std::map<RequestKey, std::string> entries;
  // Documents answered from gold values when no canned entry exists.
  std::optional<DatasetBundle> oracle;
  double error_rate = 0.0;
  std::uint64_t seed = 0;
  CorruptionRule corruption_rule = CorruptionRule::kSwapWithSiblingNumeric;
  // Strategies whose oracle responses may be corrupted.
  std::set<Strategy> apply_to = {Strategy::kSeparate, Strategy::kJoint};

  static MockScript perfect_oracle(DatasetBundle bundle);

  // JSON file: {"error_rate", "seed", "corruption_rule", "apply_to",
  // "oracle_dataset" (path, relative to the script), "entries": [{"document",
  // "strategy", "fields", "response"}]}.
  static MockScript load(const std::filesystem::path& path);
};

class MockBackend final : public Backend {
 public:
  explicit MockBackend(MockScript script, std::string backend_id = "mock");

  ChatResponse send(const ChatRequest& request) override;
  std::string id() const override { return backend_id_; }

  // The value the oracle reports for one field, after any corruption.
  std::string answer_for(const DocumentRecord& doc, Strategy strategy, const std::string& field_id) const;

 private:
  bool should_corrupt(const std::string& doc_id, Strategy strategy, const std::string& field_id) const;
  std::string corrupt(const DocumentRecord& doc, const std::string& field_id) const;

  MockScript script_;
  std::string backend_id_;
};

// Serves previously archived response texts keyed by RequestKey.
class ArchiveBackend final : public Backend {
 public:
  ArchiveBackend(std::map<RequestKey, std::string> texts, std::string backend_id);

  ChatResponse send(const ChatRequest& request) override;
  std::string id() const override { return backend_id_; }

 private:
  std::map<RequestKey, std::string> texts_;
  std::string backend_id_;
};

// Uniform draw in [0, 1) derived only from the seed and the key parts.
double keyed_uniform(std::uint64_t seed, std::span<const std::string_view> parts);

}  // namespace fieldvqa
