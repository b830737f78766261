#include "fieldvqa/errors.hpp"

namespace fieldvqa {

const char* to_string(BackendFailure failure) {
  switch (failure) {
    case BackendFailure::kAuthentication: return "authentication";
    case BackendFailure::kRateLimited: return "rate_limited";
    case BackendFailure::kTimeout: return "timeout";
    case BackendFailure::kTransport: return "transport";
    case BackendFailure::kServer: return "server";
    case BackendFailure::kBadRequest: return "bad_request";
    case BackendFailure::kMalformedResponse: return "malformed_response";
    case BackendFailure::kMissingMockEntry: return "missing_mock_entry";
  }
  return "unknown";
}

bool is_retryable(BackendFailure failure) {
  switch (failure) {
    case BackendFailure::kRateLimited:
    case BackendFailure::kTimeout:
    case BackendFailure::kTransport:
    case BackendFailure::kServer:
      return true;
    default:
      return false;
  }
}

}  // namespace fieldvqa
