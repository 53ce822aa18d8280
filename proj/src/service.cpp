#include "cytorag/service.hpp"

#include <atomic>
#include <cstdlib>
#include <fstream>
#include <map>
#include <mutex>
#include <shared_mutex>
#include <thread>

#include "cytorag/evaluation.hpp"
#include "cytorag/pipeline.hpp"
#include "cytorag/report.hpp"
#include "cytorag/store_io.hpp"
#include "httplib.h"

namespace cytorag {

int http_status(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidArgument:
    case ErrorCode::InvalidDimension:
    case ErrorCode::InvalidMetadata:
    case ErrorCode::FormatError:
    case ErrorCode::VersionError:
    case ErrorCode::EmptyQuery:
    case ErrorCode::TemplateError: return 400;
    case ErrorCode::UnknownCase: return 404;
    case ErrorCode::DuplicateEncoder: return 409;
    case ErrorCode::UnknownEncoder:
    case ErrorCode::DimensionMismatch:
    case ErrorCode::NonFiniteVector:
    case ErrorCode::ZeroNormVector:
    case ErrorCode::MissingEmbedding:
    case ErrorCode::NoEligibleNeighbors:
    case ErrorCode::EmptyContext:
    case ErrorCode::EmptyEvaluationSet:
    case ErrorCode::DegenerateLabels: return 422;
    case ErrorCode::EndpointUnreachable:
    case ErrorCode::EndpointError: return 502;
    case ErrorCode::Unavailable: return 503;
    case ErrorCode::Timeout: return 504;
    case ErrorCode::IoError:
    case ErrorCode::StoreLoadError:
    case ErrorCode::PortInUse: return 500;
  }
  return 500;
}

Json error_body(ErrorCode code, const std::string& message) {
  return Json{{"error", {{"code", std::string(error_code_name(code))}, {"message", message}}}};
}

ServiceConfig ServiceConfig::from_json(const Json& j) {
  ServiceConfig c;
  try {
    c.host = j.value("host", c.host);
    c.port = j.value("port", c.port);
    c.store_path = j.value("store_path", std::string());
    c.journal_path = j.value("journal_path", std::string());
    c.templates_dir = j.value("templates_dir", c.templates_dir.string());
    c.cors_origins = j.value("cors_origins", c.cors_origins);
    c.api_token = j.value("api_token", c.api_token);
    c.grace_period_seconds = j.value("grace_period_seconds", c.grace_period_seconds);
    if (const auto it = j.find("llm"); it != j.end()) c.llm = llm_config_from_json(*it);
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("bad service config: ") + e.what());
  }
  if (c.port < 0 || c.port > 65535) throw Error(ErrorCode::InvalidArgument, "port out of range");
  return c;
}

ServiceConfig load_service_config(const std::filesystem::path& path) {
  ServiceConfig c;
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot open config '" + path.string() + "'");
    try {
      c = ServiceConfig::from_json(Json::parse(in));
    } catch (const Json::parse_error& e) {
      throw Error(ErrorCode::FormatError, std::string("config is not valid JSON: ") + e.what());
    }
  }
  if (const char* v = std::getenv("CYTORAG_HOST")) c.host = v;
  if (const char* v = std::getenv("CYTORAG_PORT")) c.port = std::atoi(v);
  if (const char* v = std::getenv("CYTORAG_STORE")) c.store_path = v;
  if (const char* v = std::getenv("CYTORAG_JOURNAL")) c.journal_path = v;
  if (const char* v = std::getenv("CYTORAG_API_TOKEN")) c.api_token = v;
  apply_env_overrides(c.llm);
  return c;
}

namespace {

Json parse_body(const httplib::Request& req) {
  try {
    return Json::parse(req.body);
  } catch (const Json::parse_error& e) {
    throw Error(ErrorCode::FormatError, std::string("request body is not valid JSON: ") + e.what());
  }
}

std::size_t size_param(const httplib::Request& req, const char* name, std::size_t fallback) {
  if (!req.has_param(name)) return fallback;
  const std::string v = req.get_param_value(name);
  try {
    std::size_t used = 0;
    const long long n = std::stoll(v, &used);
    if (used != v.size() || n < 0) throw std::invalid_argument(v);
    return static_cast<std::size_t>(n);
  } catch (const std::exception&) {
    throw Error(ErrorCode::InvalidArgument, std::string("query parameter '") + name + "' must be a non-negative integer");
  }
}

ExclusionMode exclusion_from(const std::string& text) {
  const auto mode = parse_exclusion_mode(text);
  if (!mode) throw Error(ErrorCode::InvalidArgument, "exclude must be none, same_case or same_patient");
  return *mode;
}

FusionMode fusion_from(const std::string& text) {
  const auto mode = parse_fusion_mode(text);
  if (!mode) throw Error(ErrorCode::InvalidArgument, "fusion must be raw or rrf");
  return *mode;
}

std::size_t json_size(const Json& j, const char* name, std::size_t fallback) {
  const auto it = j.find(name);
  if (it == j.end() || it->is_null()) return fallback;
  if (!it->is_number_unsigned()) {
    throw Error(ErrorCode::InvalidArgument, std::string("field '") + name + "' must be a non-negative integer");
  }
  return it->get<std::size_t>();
}

std::string json_string(const Json& j, const char* name, const std::string& fallback) {
  const auto it = j.find(name);
  if (it == j.end() || it->is_null()) return fallback;
  if (!it->is_string()) throw Error(ErrorCode::InvalidArgument, std::string("field '") + name + "' must be a string");
  return it->get<std::string>();
}

Model model_from(const std::string& encoder, const std::string& fusion) {
  if (encoder == "ensemble") return Model::ensemble(fusion_from(fusion));
  return Model::parse(encoder);
}

void send_json(httplib::Response& res, int status, const Json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

}  // namespace

struct Service::Impl {
  explicit Impl(ServiceConfig cfg)
      : config(std::move(cfg)), journal(config.journal_path), llm(make_llm_client(config.llm)) {
    if (!config.store_path.empty() && std::filesystem::exists(config.store_path)) {
      try {
        store.reset(open_store(config.store_path));
      } catch (const Error& e) {
        throw Error(ErrorCode::StoreLoadError,
                    "cannot load store '" + config.store_path.string() + "': " + e.what());
      }
    }
    flushed_version = store.version();
    routes();
  }

  using Handler = std::function<void(const httplib::Request&, httplib::Response&)>;

  // Maps library errors to ApiError bodies.
  httplib::Server::Handler wrap(Handler h) {
    return [h = std::move(h)](const httplib::Request& req, httplib::Response& res) {
      try {
        h(req, res);
      } catch (const Error& e) {
        send_json(res, http_status(e.code()), error_body(e.code(), e.what()));
      } catch (const std::exception& e) {
        send_json(res, 500, Json{{"error", {{"code", "internal"}, {"message", e.what()}}}});
      }
    };
  }

  void routes() {
    // SO_REUSEADDR only: httplib's default SO_REUSEPORT would let a second
    // instance share the port silently.
    server.set_socket_options([](socket_t sock) {
      int yes = 1;
      setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const void*>(&yes), sizeof(yes));
    });
    server.set_pre_routing_handler([this](const httplib::Request& req, httplib::Response& res) {
      apply_cors(req, res);
      if (req.method == "OPTIONS") {
        res.status = 204;
        return httplib::Server::HandlerResponse::Handled;
      }
      if (req.path == "/v1/health") return httplib::Server::HandlerResponse::Unhandled;
      if (!config.api_token.empty() &&
          req.get_header_value("Authorization") != "Bearer " + config.api_token) {
        send_json(res, 401, Json{{"error", {{"code", "unauthorized"}, {"message", "missing or invalid API token"}}}});
        return httplib::Server::HandlerResponse::Handled;
      }
      if (reloading.load()) {
        send_json(res, 503, error_body(ErrorCode::Unavailable, "store snapshot reload in progress"));
        return httplib::Server::HandlerResponse::Handled;
      }
      return httplib::Server::HandlerResponse::Unhandled;
    });

    server.Get("/v1/health", wrap([this](const auto&, auto& res) {
      send_json(res, 200, Json{{"status", "ok"}, {"store_version", store.version()}});
    }));

    server.Post("/v1/encoders", wrap([this](const auto& req, auto& res) {
      const Json body = parse_body(req);
      const std::string name = json_string(body, "name", "");
      if (name.empty()) throw Error(ErrorCode::InvalidArgument, "field 'name' is required");
      const auto it = body.find("dim");
      if (it == body.end() || !it->is_number_integer()) {
        throw Error(ErrorCode::InvalidDimension, "field 'dim' must be an integer");
      }
      const auto dim = it->get<long long>();
      if (dim < 1) throw Error(ErrorCode::InvalidDimension, "dim must be >= 1");
      store.register_encoder(name, static_cast<std::size_t>(dim));
      send_json(res, 201, Json{{"name", EncoderId(name).str()}, {"dim", dim},
                               {"store_version", store.version()}});
    }));

    server.Post("/v1/cases", wrap([this](const auto& req, auto& res) {
      CaseRecord record = metadata_from_json(parse_body(req));
      const std::string id = store.upsert_case(std::move(record));
      send_json(res, 201, Json{{"case_id", id}, {"store_version", store.version()}});
    }));

    server.Post("/v1/embeddings", wrap([this](const auto& req, auto& res) {
      const EmbeddingLine line = embedding_from_json(parse_body(req));
      store.attach_embedding(line.case_id, line.embedding);
      send_json(res, 201, Json{{"case_id", line.case_id},
                               {"encoder", line.embedding.encoder.str()},
                               {"store_version", store.version()}});
    }));

    server.Get("/v1/cases", wrap([this](const auto& req, auto& res) {
      const auto snap = store.snapshot();
      Json cases = Json::array();
      for (const auto& c : snap->cases()) {
        if (req.has_param("patient_id") && c.patient_id != req.get_param_value("patient_id")) continue;
        if (req.has_param("bethesda") &&
            parse_bethesda(req.get_param_value("bethesda")) != c.metadata.bethesda) continue;
        if (req.has_param("malignancy") &&
            parse_malignancy(req.get_param_value("malignancy")) != c.metadata.malignancy) continue;
        if (req.has_param("surgical_diagnosis") &&
            normalize_label(req.get_param_value("surgical_diagnosis")) !=
                normalize_label(c.metadata.surgical_diagnosis)) continue;
        cases.push_back(metadata_to_json(c));
      }
      send_json(res, 200, Json{{"store_version", snap->version()}, {"cases", std::move(cases)}});
    }));

    server.Get(R"(/v1/cases/([^/]+))", wrap([this](const auto& req, auto& res) {
      const auto snap = store.snapshot();
      const CaseRecord* c = snap->find(req.matches[1].str());
      if (!c) throw Error(ErrorCode::UnknownCase, "unknown case '" + req.matches[1].str() + "'");
      send_json(res, 200, case_to_json(*c));
    }));

    server.Get(R"(/v1/cases/([^/]+)/similar)", wrap([this](const auto& req, auto& res) {
      const auto snap = store.snapshot();
      const std::string id = req.matches[1].str();
      const CaseRecord* c = snap->find(id);
      if (!c) throw Error(ErrorCode::UnknownCase, "unknown case '" + id + "'");
      if (!req.has_param("encoder")) throw Error(ErrorCode::InvalidArgument, "query parameter 'encoder' is required");
      const std::string encoder = req.get_param_value("encoder");
      const std::size_t k = size_param(req, "k", 5);
      const std::string exclude_text = req.has_param("exclude") ? req.get_param_value("exclude") : "same_case";
      const ExclusionFilter filter = ExclusionFilter::for_case(exclusion_from(exclude_text), id);
      Json body{{"case_id", id}, {"encoder", encoder}, {"k", k}, {"exclude", exclude_text},
                {"store_version", snap->version()}};
      Json neighbors = Json::array();
      if (encoder == "ensemble") {
        const std::string fusion = req.has_param("fusion") ? req.get_param_value("fusion") : "raw";
        const std::size_t pool_k = size_param(req, "pool_k", 0);
        std::map<EncoderId, Vector> queries;
        for (const auto& [enc, vec] : c->embeddings) queries.emplace(enc, vec);
        for (const auto& n : ensemble_top_k(queries, k, fusion_from(fusion), filter, *snap, pool_k)) {
          neighbors.push_back(to_json(n));
        }
        body["fusion"] = fusion;
      } else {
        const EncoderId enc(encoder);
        const auto it = c->embeddings.find(enc);
        if (it == c->embeddings.end()) {
          if (!snap->registry().contains(enc)) {
            throw Error(ErrorCode::UnknownEncoder, "encoder '" + enc.str() + "' is not registered");
          }
          throw Error(ErrorCode::MissingEmbedding, "case '" + id + "' has no '" + enc.str() + "' embedding");
        }
        for (const auto& n : top_k(Embedding{enc, it->second}, k, filter, *snap)) {
          neighbors.push_back(to_json(n));
        }
      }
      body["neighbors"] = std::move(neighbors);
      send_json(res, 200, body);
    }));

    server.Post("/v1/prompt", wrap([this](const auto& req, auto& res) {
      const Json body = parse_body(req);
      const auto snap = store.snapshot();
      const CasePrompt prompt = prompt_from(body, *snap);
      send_json(res, 200, prompt_json(prompt));
    }));

    server.Post("/v1/interpret", wrap([this](const auto& req, auto& res) {
      const Json body = parse_body(req);
      PromptBundle bundle;
      if (const auto it = body.find("bundle"); it != body.end()) {
        bundle = bundle_from_json(*it);
      } else {
        const auto snap = store.snapshot();
        bundle = prompt_from(body, *snap).bundle;
      }
      const LlmResponse response = llm->interpret(bundle);
      send_json(res, 200, Json{{"bundle", to_json(bundle)}, {"response", to_json(response)}});
    }));

    server.Post("/v1/decisions", wrap([this](const auto& req, auto& res) {
      DecisionRecord draft = decision_from_json(parse_body(req));
      if (!store.snapshot()->find(draft.case_id)) {
        throw Error(ErrorCode::UnknownCase, "unknown case '" + draft.case_id + "'");
      }
      send_json(res, 201, to_json(journal.append(std::move(draft))));
    }));

    server.Get("/v1/decisions", wrap([this](const auto& req, auto& res) {
      std::optional<std::string> case_id;
      if (req.has_param("case_id")) case_id = req.get_param_value("case_id");
      Json out = Json::array();
      for (const auto& d : journal.list(case_id)) out.push_back(to_json(d));
      send_json(res, 200, Json{{"decisions", std::move(out)}});
    }));

    server.Post("/v1/eval/run", wrap([this](const auto& req, auto& res) {
      const Json body = req.body.empty() ? Json::object() : parse_body(req);
      const EvalConfig cfg = eval_config_from(body);
      const auto snap = store.snapshot();
      auto report = std::make_shared<const EvalReport>(evaluate_all(*snap, cfg));
      const std::string id = report->content_hash.substr(0, 16);
      {
        std::lock_guard lock(reports_mutex);
        reports[id] = report;
      }
      send_json(res, 201, Json{{"report_id", id}, {"content_hash", report->content_hash}});
    }));

    server.Get(R"(/v1/eval/reports/([^/]+))", wrap([this](const auto& req, auto& res) {
      send_json(res, 200, report_to_json(*find_report(req.matches[1].str())));
    }));

    server.Get(R"(/v1/eval/reports/([^/]+)/roc\.csv)", wrap([this](const auto& req, auto& res) {
      const auto report = find_report(req.matches[1].str());
      if (!req.has_param("model")) throw Error(ErrorCode::InvalidArgument, "query parameter 'model' is required");
      const std::string model = req.get_param_value("model");
      const std::size_t k = size_param(req, "k", report->config.ks.back());
      const ModelResult* m = report->find(model);
      if (!m) throw Error(ErrorCode::InvalidArgument, "model '" + model + "' is not in the report");
      const auto it = m->roc.find(k);
      if (it == m->roc.end()) throw Error(ErrorCode::InvalidArgument, "k=" + std::to_string(k) + " is not in the report");
      if (!it->second) throw Error(ErrorCode::DegenerateLabels, "ROC undefined: single malignancy class");
      res.status = 200;
      res.set_content(render_roc_csv(*it->second), "text/csv");
    }));

    server.Get(R"(/v1/eval/reports/([^/]+)/accuracy\.csv)", wrap([this](const auto& req, auto& res) {
      const auto report = find_report(req.matches[1].str());
      const std::string task_text = req.has_param("task") ? req.get_param_value("task") : "surgical_diagnosis";
      const auto task = parse_task(task_text);
      if (!task) throw Error(ErrorCode::InvalidArgument, "unknown task '" + task_text + "'");
      res.status = 200;
      res.set_content(render_accuracy_csv(*report, *task), "text/csv");
    }));

    server.Post("/v1/admin/flush", wrap([this](const auto&, auto& res) {
      flush();
      send_json(res, 200, Json{{"store_version", store.version()}});
    }));

    server.Post("/v1/admin/reload", wrap([this](const auto&, auto& res) {
      if (config.store_path.empty()) throw Error(ErrorCode::InvalidArgument, "service has no store_path");
      reloading.store(true);
      struct Clear {
        std::atomic<bool>& flag;
        ~Clear() { flag.store(false); }
      } clear{reloading};
      StoreSnapshot snap;
      try {
        snap = open_store(config.store_path);
      } catch (const Error& e) {
        throw Error(ErrorCode::StoreLoadError, e.what());
      }
      store.reset(std::move(snap));
      {
        std::lock_guard lock(flush_mutex);
        flushed_version = store.version();
      }
      send_json(res, 200, Json{{"store_version", store.version()}});
    }));
  }

  void apply_cors(const httplib::Request& req, httplib::Response& res) const {
    if (!req.has_header("Origin")) return;
    const std::string origin = req.get_header_value("Origin");
    for (const auto& allowed : config.cors_origins) {
      if (allowed == "*" || allowed == origin) {
        res.set_header("Access-Control-Allow-Origin", allowed == "*" ? "*" : origin);
        res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
        res.set_header("Access-Control-Allow-Headers", "Content-Type, Authorization");
        res.set_header("Vary", "Origin");
        return;
      }
    }
  }

  CasePrompt prompt_from(const Json& body, const StoreSnapshot& snap) const {
    if (!body.is_object()) throw Error(ErrorCode::InvalidArgument, "body must be a JSON object");
    const std::string case_id = json_string(body, "case_id", "");
    if (case_id.empty()) throw Error(ErrorCode::InvalidArgument, "field 'case_id' is required");
    const std::size_t k = json_size(body, "k", 5);
    const Model model = model_from(json_string(body, "encoder", "ensemble"), json_string(body, "fusion", "raw"));
    const ExclusionMode exclusion = exclusion_from(json_string(body, "exclude", "same_case"));
    const PromptTemplate tmpl = PromptTemplate::load(config.templates_dir, json_string(body, "template_id", "default"));
    return build_case_prompt(snap, case_id, model, k, exclusion, tmpl, json_size(body, "pool_k", 0));
  }

  static Json prompt_json(const CasePrompt& p) {
    Json j = to_json(p.bundle);
    Json neighbors = Json::array();
    for (const auto& n : p.neighbors) {
      neighbors.push_back(Json{{"rank", n.rank}, {"case_id", n.case_id}, {"score", n.score}});
    }
    j["neighbors"] = std::move(neighbors);
    return j;
  }

  static EvalConfig eval_config_from(const Json& body) {
    if (!body.is_object()) throw Error(ErrorCode::InvalidArgument, "body must be a JSON object");
    EvalConfig cfg;
    if (const auto it = body.find("ks"); it != body.end()) {
      if (!it->is_array()) throw Error(ErrorCode::InvalidArgument, "ks must be an array");
      cfg.ks.clear();
      for (const auto& k : *it) {
        if (!k.is_number_unsigned() || k.get<std::size_t>() == 0) {
          throw Error(ErrorCode::InvalidArgument, "ks must hold positive integers");
        }
        cfg.ks.push_back(k.get<std::size_t>());
      }
    }
    cfg.exclusion = exclusion_from(json_string(body, "exclusion", "same_case"));
    if (const auto it = body.find("fusion_modes"); it != body.end()) {
      if (!it->is_array()) throw Error(ErrorCode::InvalidArgument, "fusion_modes must be an array");
      cfg.fusion_modes.clear();
      for (const auto& f : *it) {
        if (!f.is_string()) throw Error(ErrorCode::InvalidArgument, "fusion_modes must hold strings");
        cfg.fusion_modes.push_back(fusion_from(f.get<std::string>()));
      }
    }
    cfg.pool_k = json_size(body, "pool_k", 0);
    cfg.seed = json_size(body, "seed", 0);
    return cfg;
  }

  std::shared_ptr<const EvalReport> find_report(const std::string& id) const {
    std::lock_guard lock(reports_mutex);
    const auto it = reports.find(id);
    if (it == reports.end()) throw Error(ErrorCode::UnknownCase, "unknown report '" + id + "'");
    return it->second;
  }

  void flush() {
    std::lock_guard lock(flush_mutex);
    if (config.store_path.empty()) return;
    const auto snap = store.snapshot();
    if (snap->version() == flushed_version && std::filesystem::exists(config.store_path)) return;
    save_store(*snap, config.store_path);
    flushed_version = snap->version();
  }

  ServiceConfig config;
  Store store;
  DecisionJournal journal;
  std::unique_ptr<LlmClient> llm;
  httplib::Server server;
  std::atomic<bool> reloading{false};
  mutable std::mutex reports_mutex;
  std::map<std::string, std::shared_ptr<const EvalReport>> reports;
  std::mutex flush_mutex;
  std::uint64_t flushed_version = 0;
  int bound_port = -1;
  std::thread thread;
};

Service::Service(ServiceConfig config) : impl_(std::make_unique<Impl>(std::move(config))) {}

Service::~Service() {
  try {
    stop();
  } catch (...) {
  }
}

int Service::bind() {
  if (impl_->bound_port >= 0) return impl_->bound_port;
  auto& cfg = impl_->config;
  int port = cfg.port;
  if (port == 0) {
    port = impl_->server.bind_to_any_port(cfg.host);
  } else if (!impl_->server.bind_to_port(cfg.host, port)) {
    port = -1;
  }
  if (port < 0) {
    throw Error(ErrorCode::PortInUse, "cannot bind " + cfg.host + ":" + std::to_string(cfg.port));
  }
  impl_->bound_port = port;
  return port;
}

void Service::listen() {
  bind();
  impl_->server.listen_after_bind();
}

void Service::start() {
  bind();
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
}

void Service::stop() {
  if (impl_->server.is_running()) impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
  impl_->flush();
}

void Service::flush() { impl_->flush(); }
int Service::port() const { return impl_->bound_port; }
Store& Service::store() { return impl_->store; }
DecisionJournal& Service::journal() { return impl_->journal; }

}  // namespace cytorag
