#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "cytorag/decisions.hpp"
#include "cytorag/errors.hpp"
#include "cytorag/llm_client.hpp"
#include "cytorag/store.hpp"

namespace cytorag {

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 picks a free port
  std::filesystem::path store_path;
  std::filesystem::path journal_path;
  std::filesystem::path templates_dir = "templates";
  LlmClientConfig llm;
  std::vector<std::string> cors_origins;
  /// When nonempty every route except /v1/health needs "Authorization: Bearer <token>".
  std::string api_token;
  double grace_period_seconds = 5.0;

  static ServiceConfig from_json(const Json& j);
};

/// Reads a JSON config file (empty path = defaults) and applies
/// CYTORAG_HOST, CYTORAG_PORT, CYTORAG_STORE, CYTORAG_JOURNAL,
/// CYTORAG_API_TOKEN plus the LLM overrides.
ServiceConfig load_service_config(const std::filesystem::path& path);

/// HTTP status used for an error code in API responses.
int http_status(ErrorCode code) noexcept;

/// {"error": {"code", "message"}}.
Json error_body(ErrorCode code, const std::string& message);

/// JSON-over-HTTP front end for the store, retrieval, prompting,
/// interpretation, decision journal and evaluation.
class Service {
 public:
  /// Opens the store file when it exists; throws StoreLoadError if it
  /// cannot be read.
  explicit Service(ServiceConfig config);
  ~Service();

  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Binds the listening socket and returns the port. Throws PortInUse.
  int bind();
  /// Serves until stop(); binds first if needed.
  void listen();
  /// bind() + listen() on a background thread.
  void start();
  /// Stops accepting requests, waits for in-flight handlers, flushes the store.
  void stop();

  /// Persists the store if it changed since the last flush.
  void flush();

  int port() const;
  Store& store();
  DecisionJournal& journal();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace cytorag
