#include "cytorag/llm_client.hpp"

#include <chrono>
#include <cstdlib>
#include <semaphore>
#include <thread>

#include "cytorag/errors.hpp"
#include "cytorag/hashing.hpp"
#include "httplib.h"

namespace cytorag {

namespace {

using Clock = std::chrono::steady_clock;

struct SplitUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

SplitUrl split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw Error(ErrorCode::InvalidArgument, "endpoint '" + url + "' lacks a scheme");
  }
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/v1/chat/completions"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

void set_timeout(httplib::Client& client, double seconds) {
  const auto total = std::chrono::duration_cast<std::chrono::microseconds>(
      std::chrono::duration<double>(seconds));
  const auto sec = static_cast<time_t>(total.count() / 1'000'000);
  const auto usec = static_cast<time_t>(total.count() % 1'000'000);
  client.set_connection_timeout(sec, usec);
  client.set_read_timeout(sec, usec);
  client.set_write_timeout(sec, usec);
}

class ChatCompletionsClient final : public LlmClient {
 public:
  explicit ChatCompletionsClient(LlmClientConfig config)
      : config_(std::move(config)),
        url_(split_url(config_.endpoint)),
        in_flight_(static_cast<std::ptrdiff_t>(config_.max_in_flight)) {}

  LlmResponse interpret(const PromptBundle& bundle) override {
    in_flight_.acquire();
    struct Release {
      std::counting_semaphore<>& s;
      ~Release() { s.release(); }
    } release{in_flight_};

    const Json request = {
        {"model", config_.model},
        {"temperature", config_.temperature},
        {"messages", Json::array({Json{{"role", "user"}, {"content", bundle.text}}})}};
    const std::string body = request.dump();

    httplib::Headers headers;
    if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);

    const auto start = Clock::now();
    auto backoff = std::chrono::duration<double>(config_.backoff_initial_seconds);
    ErrorCode last_code = ErrorCode::EndpointUnreachable;
    std::string last_message;
    const auto attempts = static_cast<std::size_t>(config_.max_retries) + 1;

    std::size_t made = 0;
    for (std::size_t attempt = 1; attempt <= attempts; ++attempt) {
      made = attempt;
      if (attempt > 1) {
        std::this_thread::sleep_for(backoff);
        backoff *= 2;
      }
      httplib::Client client(url_.origin);
      set_timeout(client, config_.timeout_seconds);
      const auto attempt_start = Clock::now();
      auto res = client.Post(url_.path, headers, body, "application/json");

      if (!res) {
        const double elapsed = std::chrono::duration<double>(Clock::now() - attempt_start).count();
        const auto err = res.error();
        if (err == httplib::Error::ConnectionTimeout ||
            (err == httplib::Error::Read && elapsed >= config_.timeout_seconds * 0.9)) {
          last_code = ErrorCode::Timeout;
          last_message = "no response from " + config_.endpoint + " within " +
                         std::to_string(config_.timeout_seconds) + " s";
        } else {
          last_code = ErrorCode::EndpointUnreachable;
          last_message = config_.endpoint + ": " + httplib::to_string(err);
        }
        continue;
      }

      if (res->status >= 200 && res->status < 300) {
        std::string text;
        try {
          const Json reply = Json::parse(res->body);
          text = reply.at("choices").at(0).at("message").at("content").get<std::string>();
        } catch (const std::exception& e) {
          throw Error(ErrorCode::EndpointError,
                      "malformed endpoint response (" + std::string(e.what()) + "): " + res->body);
        }
        LlmResponse out;
        out.text = std::move(text);
        out.latency_seconds = std::chrono::duration<double>(Clock::now() - start).count();
        out.status = res->status;
        out.attempts = attempt;
        out.endpoint = config_.endpoint;
        return out;
      }

      last_code = ErrorCode::EndpointError;
      last_message = "endpoint returned status " + std::to_string(res->status) + ": " + res->body;
      const bool transient = res->status == 429 || res->status >= 500;
      if (!transient) break;
    }
    throw Error(last_code, last_message + " (after " + std::to_string(made) + " attempt(s))");
  }

 private:
  LlmClientConfig config_;
  SplitUrl url_;
  std::counting_semaphore<> in_flight_;
};

bool env_flag(const char* value) {
  const std::string v(value);
  return v == "1" || v == "true" || v == "yes" || v == "on";
}

}  // namespace

void LlmClientConfig::validate() const {
  if (!(timeout_seconds > 0.0)) throw Error(ErrorCode::InvalidArgument, "llm timeout must be > 0");
  if (max_retries < 0) throw Error(ErrorCode::InvalidArgument, "llm max_retries must be >= 0");
  if (max_in_flight < 1) throw Error(ErrorCode::InvalidArgument, "llm max_in_flight must be >= 1");
  if (backoff_initial_seconds < 0.0) {
    throw Error(ErrorCode::InvalidArgument, "llm backoff must be >= 0");
  }
}

LlmClientConfig llm_config_from_json(const Json& j) {
  LlmClientConfig c;
  try {
    c.endpoint = j.value("endpoint", c.endpoint);
    c.model = j.value("model", c.model);
    c.timeout_seconds = j.value("timeout_seconds", c.timeout_seconds);
    c.max_retries = j.value("max_retries", c.max_retries);
    c.temperature = j.value("temperature", c.temperature);
    c.stub = j.value("stub", c.stub);
    c.max_in_flight = j.value("max_in_flight", c.max_in_flight);
    c.backoff_initial_seconds = j.value("backoff_initial_seconds", c.backoff_initial_seconds);
    c.api_key = j.value("api_key", c.api_key);
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("bad llm config: ") + e.what());
  }
  c.validate();
  return c;
}

Json to_json(const LlmClientConfig& c) {
  return Json{{"endpoint", c.endpoint},
              {"model", c.model},
              {"timeout_seconds", c.timeout_seconds},
              {"max_retries", c.max_retries},
              {"temperature", c.temperature},
              {"stub", c.stub},
              {"max_in_flight", c.max_in_flight},
              {"backoff_initial_seconds", c.backoff_initial_seconds}};
}

void apply_env_overrides(LlmClientConfig& c) {
  if (const char* v = std::getenv("CYTORAG_LLM_ENDPOINT")) c.endpoint = v;
  if (const char* v = std::getenv("CYTORAG_LLM_MODEL")) c.model = v;
  if (const char* v = std::getenv("CYTORAG_LLM_STUB")) c.stub = env_flag(v);
  if (const char* v = std::getenv("CYTORAG_LLM_TIMEOUT")) c.timeout_seconds = std::atof(v);
  if (const char* v = std::getenv("CYTORAG_LLM_API_KEY")) c.api_key = v;
  c.validate();
}

Json to_json(const LlmResponse& r) {
  return Json{{"text", r.text},
              {"latency_seconds", r.latency_seconds},
              {"status", r.status},
              {"attempts", r.attempts},
              {"endpoint", r.endpoint},
              {"stub", r.stub}};
}

std::string stub_response_text(const PromptBundle& bundle) {
  return "[stub] template=" + bundle.template_hash + " prompt_sha256=" + sha256_hex(bundle.text) +
         " examples=" + std::to_string(bundle.example_count) + " query=" + bundle.query_case_id;
}

LlmResponse StubLlmClient::interpret(const PromptBundle& bundle) {
  LlmResponse out;
  out.text = stub_response_text(bundle);
  out.status = 200;
  out.attempts = 1;
  out.endpoint = "stub";
  out.stub = true;
  return out;
}

std::unique_ptr<LlmClient> make_llm_client(const LlmClientConfig& config) {
  config.validate();
  if (config.stub) return std::make_unique<StubLlmClient>();
  return std::make_unique<ChatCompletionsClient>(config);
}

LlmResponse llm_interpret(const PromptBundle& bundle, const LlmClientConfig& config) {
  return make_llm_client(config)->interpret(bundle);
}

}  // namespace cytorag
