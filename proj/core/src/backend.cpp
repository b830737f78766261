#include <algorithm>
#include <atomic>
#include <chrono>
#include <thread>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "fieldvqa/backend.hpp"

namespace fieldvqa {

void ChatRequest::validate() const {
  if (temperature < 0.0) throw ConfigError(fmt::format("temperature must be >= 0, got {}", temperature));
  if (max_tokens < 1) throw ConfigError(fmt::format("max_tokens must be >= 1, got {}", max_tokens));
  if (prompt.images.empty()) throw ConfigError("request carries no query image");
}

RequestKey RequestKey::of(const RenderedPrompt& prompt) {
  RequestKey key{prompt.document_id, prompt.strategy, prompt.field_ids};
  std::sort(key.field_ids.begin(), key.field_ids.end());
  return key;
}

std::string RequestKey::to_string() const {
  return fmt::format("({}, {}, {{{}}})", document_id, fieldvqa::to_string(strategy), fmt::join(field_ids, ","));
}

std::vector<BatchItem> send_batch(Backend& backend, std::span<const ChatRequest> requests, int parallelism) {
  if (parallelism < 1) throw ConfigError(fmt::format("parallelism must be >= 1, got {}", parallelism));
  std::vector<BatchItem> results(requests.size());
  std::atomic<std::size_t> next{0};

  auto worker = [&] {
    for (std::size_t i = next.fetch_add(1); i < requests.size(); i = next.fetch_add(1)) {
      try {
        requests[i].validate();
        results[i].response = backend.send(requests[i]);
      } catch (const BackendError& e) {
        results[i].error = e;
      } catch (const std::exception& e) {
        results[i].error = BackendError(BackendFailure::kTransport, e.what());
      }
    }
  };

  const auto workers = std::min<std::size_t>(static_cast<std::size_t>(parallelism), requests.size());
  if (workers <= 1) {
    worker();
    return results;
  }
  std::vector<std::jthread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
  pool.clear();  // joins
  return results;
}

ArchiveBackend::ArchiveBackend(std::map<RequestKey, std::string> texts, std::string backend_id)
    : texts_(std::move(texts)), backend_id_(std::move(backend_id)) {}

ChatResponse ArchiveBackend::send(const ChatRequest& request) {
  const auto key = RequestKey::of(request.prompt);
  auto it = texts_.find(key);
  if (it == texts_.end()) {
    throw BackendError(BackendFailure::kMissingMockEntry, fmt::format("no archived response for {}", key.to_string()));
  }
  return ChatResponse{it->second, std::chrono::milliseconds{0}, backend_id_, 1};
}

}  // namespace fieldvqa
