#include <cctype>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#include <fmt/format.h>
#include <httplib.h>
#include <nlohmann/json.hpp>

#include "fieldvqa/backend.hpp"

namespace fieldvqa {

using json = nlohmann::json;

std::chrono::milliseconds RetryPolicy::delay_for(int retry_index) const {
  double delay = static_cast<double>(initial_delay.count());
  for (int i = 0; i < retry_index; ++i) delay *= backoff_factor;
  const auto capped = std::min(delay, static_cast<double>(max_delay.count()));
  return std::chrono::milliseconds(static_cast<std::int64_t>(capped));
}

std::string base64_encode(std::string_view bytes) {
  static constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < bytes.size(); i += 3) {
    const auto n = (static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[i])) << 16) |
                   (static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[i + 1])) << 8) |
                   static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[i + 2]));
    out += kAlphabet[(n >> 18) & 63];
    out += kAlphabet[(n >> 12) & 63];
    out += kAlphabet[(n >> 6) & 63];
    out += kAlphabet[n & 63];
  }
  if (const auto rest = bytes.size() - i; rest > 0) {
    auto n = static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[i])) << 16;
    if (rest == 2) n |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[i + 1])) << 8;
    out += kAlphabet[(n >> 18) & 63];
    out += kAlphabet[(n >> 12) & 63];
    out += rest == 2 ? kAlphabet[(n >> 6) & 63] : '=';
    out += '=';
  }
  return out;
}

std::string image_data_uri(const std::string& image_ref) {
  if (image_ref.starts_with("data:")) return image_ref;
  std::ifstream in(image_ref, std::ios::binary);
  if (!in) throw DataError(fmt::format("cannot read image '{}'", image_ref));
  std::ostringstream buf;
  buf << in.rdbuf();

  auto ext = std::filesystem::path(image_ref).extension().string();
  for (auto& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  std::string mime = "image/png";
  if (ext == ".jpg" || ext == ".jpeg") mime = "image/jpeg";
  else if (ext == ".webp") mime = "image/webp";
  else if (ext == ".gif") mime = "image/gif";
  return fmt::format("data:{};base64,{}", mime, base64_encode(buf.str()));
}

std::string build_chat_body(const ChatRequest& request) {
  json content = json::array();
  for (const auto& part : request.prompt.parts()) {
    if (part.kind == PromptPart::Kind::kText) {
      content.push_back({{"type", "text"}, {"text", part.content}});
    } else {
      content.push_back({{"type", "image_url"}, {"image_url", {{"url", image_data_uri(part.content)}}}});
    }
  }
  json body = {
      {"model", request.model},
      {"temperature", request.temperature},
      {"max_tokens", request.max_tokens},
      {"messages", json::array({{{"role", "user"}, {"content", std::move(content)}}})},
  };
  return body.dump();
}

std::string parse_chat_content(const std::string& body) {
  json parsed;
  try {
    parsed = json::parse(body);
  } catch (const json::parse_error& e) {
    throw BackendError(BackendFailure::kMalformedResponse, fmt::format("response is not JSON: {}", e.what()));
  }
  const json* content = nullptr;
  if (parsed.contains("choices") && parsed["choices"].is_array() && !parsed["choices"].empty()) {
    const auto& choice = parsed["choices"][0];
    if (choice.contains("message") && choice["message"].contains("content")) content = &choice["message"]["content"];
  }
  if (content == nullptr) {
    throw BackendError(BackendFailure::kMalformedResponse, "response has no choices[0].message.content");
  }
  if (content->is_string()) return content->get<std::string>();
  // Some servers return content as a list of typed parts.
  if (content->is_array()) {
    std::string text;
    for (const auto& part : *content) {
      if (part.value("type", "") == "text" && part.contains("text")) text += part["text"].get<std::string>();
    }
    return text;
  }
  if (content->is_null()) return {};
  throw BackendError(BackendFailure::kMalformedResponse, "choices[0].message.content is not text");
}

namespace {

BackendFailure classify_status(int status) {
  if (status == 401 || status == 403) return BackendFailure::kAuthentication;
  if (status == 429) return BackendFailure::kRateLimited;
  if (status == 408) return BackendFailure::kTimeout;
  if (status >= 500) return BackendFailure::kServer;
  return BackendFailure::kBadRequest;
}

BackendFailure classify_transport(httplib::Error error) {
  switch (error) {
    case httplib::Error::ConnectionTimeout:
    case httplib::Error::Read:
    case httplib::Error::Write:
      return BackendFailure::kTimeout;
    default:
      return BackendFailure::kTransport;
  }
}

}  // namespace

HttpBackend::HttpBackend(HttpBackendConfig config) : config_(std::move(config)) {
  auto url = config_.base_url;
  while (!url.empty() && url.back() == '/') url.pop_back();
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw ConfigError(fmt::format("base_url '{}' has no scheme", url));
  const auto path_start = url.find('/', scheme_end + 3);
  scheme_host_port_ = url.substr(0, path_start);
  path_prefix_ = path_start == std::string::npos ? std::string{} : url.substr(path_start);
  if (config_.api_key.empty()) {
    if (const char* env = std::getenv(kApiKeyEnvVar)) config_.api_key = env;
  }
  if (!config_.sleep) config_.sleep = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
}

std::string HttpBackend::id() const { return "http:" + scheme_host_port_ + path_prefix_; }

ChatResponse HttpBackend::send(const ChatRequest& request) {
  request.validate();
  const auto body = build_chat_body(request);
  const auto path = path_prefix_ + "/chat/completions";
  const auto started = std::chrono::steady_clock::now();

  httplib::Client client(scheme_host_port_);
  const auto seconds = std::chrono::duration_cast<std::chrono::seconds>(request.timeout);
  const auto micros = std::chrono::duration_cast<std::chrono::microseconds>(request.timeout - seconds);
  client.set_connection_timeout(seconds.count(), micros.count());
  client.set_read_timeout(seconds.count(), micros.count());
  client.set_write_timeout(seconds.count(), micros.count());

  httplib::Headers headers;
  if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);

  const int max_attempts = std::max(1, config_.retry.max_retries + 1);
  for (int attempt = 1;; ++attempt) {
    BackendFailure failure;
    std::string detail;
    std::optional<std::chrono::milliseconds> retry_after;

    auto result = client.Post(path, headers, body, "application/json");
    if (!result) {
      failure = classify_transport(result.error());
      detail = httplib::to_string(result.error());
    } else if (result->status == 200) {
      auto text = parse_chat_content(result->body);
      const auto elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(
          std::chrono::steady_clock::now() - started);
      return ChatResponse{std::move(text), elapsed, id(), attempt};
    } else {
      failure = classify_status(result->status);
      detail = fmt::format("HTTP {}: {}", result->status, result->body.substr(0, 200));
      if (result->has_header("Retry-After")) {
        try {
          retry_after = std::chrono::seconds(std::stoi(result->get_header_value("Retry-After")));
        } catch (const std::exception&) {
        }
      }
    }

    if (!is_retryable(failure) || attempt >= max_attempts) {
      const auto message = is_retryable(failure)
                               ? fmt::format("{} after {} attempt(s): {}", to_string(failure), attempt, detail)
                               : fmt::format("{}: {}", to_string(failure), detail);
      throw BackendError(failure, message, attempt);
    }
    auto delay = config_.retry.delay_for(attempt - 1);
    if (retry_after) delay = std::min(std::max(delay, *retry_after), config_.retry.max_delay);
    config_.sleep(delay);
  }
}

}  // namespace fieldvqa
