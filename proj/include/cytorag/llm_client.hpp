#pragma once

#include <cstddef>
#include <memory>
#include <string>

#include "cytorag/json_io.hpp"
#include "cytorag/prompt.hpp"

namespace cytorag {

struct LlmClientConfig {
  /// Full URL of a chat-completions style endpoint.
  std::string endpoint = "http://127.0.0.1:8000/v1/chat/completions";
  std::string model = "llama-3.2-11b-vision-instruct";
  double timeout_seconds = 60.0;
  int max_retries = 2;
  double temperature = 0.0;
  bool stub = true;
  std::size_t max_in_flight = 4;
  /// First retry delay; doubles on every further retry.
  double backoff_initial_seconds = 0.5;
  std::string api_key;

  /// Throws InvalidArgument.
  void validate() const;
};

LlmClientConfig llm_config_from_json(const Json& j);
Json to_json(const LlmClientConfig& config);  // api_key is never serialized

/// CYTORAG_LLM_ENDPOINT, CYTORAG_LLM_MODEL, CYTORAG_LLM_STUB (0/1),
/// CYTORAG_LLM_TIMEOUT, CYTORAG_LLM_API_KEY.
void apply_env_overrides(LlmClientConfig& config);

struct LlmResponse {
  std::string text;
  double latency_seconds = 0.0;
  int status = 0;
  std::size_t attempts = 0;
  std::string endpoint;
  bool stub = false;
};

Json to_json(const LlmResponse& response);

class LlmClient {
 public:
  virtual ~LlmClient() = default;
  /// Throws EndpointUnreachable, EndpointError or Timeout.
  virtual LlmResponse interpret(const PromptBundle& bundle) = 0;
};

/// Deterministic offline client; the reply embeds the template hash and a
/// digest of the rendered prompt.
class StubLlmClient final : public LlmClient {
 public:
  LlmResponse interpret(const PromptBundle& bundle) override;
};

std::string stub_response_text(const PromptBundle& bundle);

/// Stub or HTTP client according to `config.stub`. The HTTP client bounds
/// concurrent requests by `max_in_flight` and retries transient failures
/// (connection errors, timeouts, 429, 5xx) with exponential backoff.
std::unique_ptr<LlmClient> make_llm_client(const LlmClientConfig& config);

LlmResponse llm_interpret(const PromptBundle& bundle, const LlmClientConfig& config);

}  // namespace cytorag
