// cytorag command-line tool.

#include <atomic>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "cytorag/corpus.hpp"
#include "cytorag/evaluation.hpp"
#include "cytorag/llm_client.hpp"
#include "cytorag/pipeline.hpp"
#include "cytorag/report.hpp"
#include "cytorag/service.hpp"
#include "cytorag/store_io.hpp"
#include "cytorag/synth.hpp"

namespace fs = std::filesystem;
using namespace cytorag;

namespace {

constexpr int kUsageError = 2;
constexpr int kOperationalError = 1;

Store open_or_empty(const fs::path& path) {
  if (fs::exists(path)) return Store(open_store(path));
  return Store();
}

StoreSnapshot require_store(const fs::path& path) {
  if (!fs::exists(path)) throw Error(ErrorCode::IoError, "store '" + path.string() + "' does not exist");
  return open_store(path);
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write '" + path.string() + "'");
  out << text;
  if (!out.flush()) throw Error(ErrorCode::IoError, "write failed for '" + path.string() + "'");
}

std::vector<std::size_t> parse_ks(const std::string& text) {
  std::vector<std::size_t> ks;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    long long v = 0;
    try {
      v = std::stoll(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != item.size() || v < 1) {
      throw CLI::ValidationError("--k", "expected a comma-separated list of positive integers");
    }
    ks.push_back(static_cast<std::size_t>(v));
  }
  if (ks.empty()) throw CLI::ValidationError("--k", "empty list");
  return ks;
}

ExclusionMode exclusion_or_throw(const std::string& text) {
  auto m = parse_exclusion_mode(text);
  if (!m) throw CLI::ValidationError("--exclude", "must be none, same_case or same_patient");
  return *m;
}

std::string cell(std::string s, std::size_t width) {
  if (s.size() < width) s.append(width - s.size(), ' ');
  return s;
}

std::atomic<int> g_signal{0};
extern "C" void on_signal(int sig) { g_signal.store(sig); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Retrieval-augmented thyroid cytology toolkit"};
  app.require_subcommand(1);
  std::string store_path = "cytorag.store";
  app.add_option("--store", store_path, "Store file")->capture_default_str();

  std::function<void()> run;

  // register-encoder
  auto* reg = app.add_subcommand("register-encoder", "Register an embedding namespace");
  std::string reg_name;
  std::size_t reg_dim = 0;
  reg->add_option("name", reg_name, "Encoder name")->required();
  reg->add_option("--dim", reg_dim, "Vector dimension")->required();
  reg->callback([&] {
    run = [&] {
      Store store = open_or_empty(store_path);
      store.register_encoder(reg_name, reg_dim);
      save_store(*store.snapshot(), store_path);
      std::cout << "registered " << EncoderId(reg_name).str() << " dim=" << reg_dim << "\n";
    };
  });

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Load metadata and embedding JSONL files");
  std::string ingest_meta, ingest_emb;
  bool ingest_strict = false;
  ingest->add_option("--metadata", ingest_meta, "Metadata JSONL");
  ingest->add_option("--embeddings", ingest_emb, "Embeddings JSONL");
  ingest->add_flag("--strict", ingest_strict, "Abort on the first malformed line");
  ingest->callback([&] {
    if (ingest_meta.empty() && ingest_emb.empty()) {
      throw CLI::ValidationError("ingest", "give --metadata and/or --embeddings");
    }
    run = [&] {
      Store store = open_or_empty(store_path);
      LoadOptions opts;
      opts.strict = ingest_strict;
      const LoadResult r = load_corpus(store, ingest_emb, ingest_meta, opts);
      save_store(*store.snapshot(), store_path);
      for (const auto& rej : r.rejects) {
        std::cerr << Json{{"reject", rej.file}, {"line", rej.line},
                          {"error", std::string(error_code_name(rej.code))}, {"message", rej.message}}
                         .dump()
                  << "\n";
      }
      std::cout << Json{{"cases_ingested", r.cases_ingested},
                        {"embeddings_ingested", r.embeddings_ingested},
                        {"rejected", r.rejects.size()},
                        {"store_version", store.version()}}
                       .dump()
                << "\n";
    };
  });

  // query
  auto* query = app.add_subcommand("query", "Nearest stored cases of a stored case");
  std::string q_case, q_encoder = "uni", q_exclude = "same_case", q_fusion = "raw";
  std::size_t q_k = 5;
  bool q_json = false;
  query->add_option("--case", q_case, "Query case id")->required();
  query->add_option("--encoder", q_encoder, "Encoder name or 'ensemble'")->capture_default_str();
  query->add_option("--k", q_k, "Neighbors to return")->capture_default_str()->check(CLI::PositiveNumber);
  query->add_option("--exclude", q_exclude, "none|same_case|same_patient")->capture_default_str();
  query->add_option("--fusion", q_fusion, "raw|rrf (ensemble only)")->capture_default_str();
  query->add_flag("--json", q_json, "Emit JSON instead of a table");
  query->callback([&] {
    const ExclusionMode mode = exclusion_or_throw(q_exclude);
    if (!parse_fusion_mode(q_fusion)) throw CLI::ValidationError("--fusion", "must be raw or rrf");
    run = [&, mode] {
      const StoreSnapshot snap = require_store(store_path);
      const CaseRecord* c = snap.find(q_case);
      if (!c) throw Error(ErrorCode::UnknownCase, "unknown case '" + q_case + "'");
      const Model model = q_encoder == "ensemble" ? Model::ensemble(*parse_fusion_mode(q_fusion))
                                                  : Model::parse(q_encoder);
      const auto neighbors = retrieve_for_case(*c, model, q_k, snap, ExclusionFilter::for_case(mode, q_case));
      if (q_json) {
        Json out = Json::array();
        for (const auto& n : neighbors) out.push_back({{"rank", n.rank}, {"case_id", n.case_id}, {"score", n.score}});
        std::cout << out.dump() << "\n";
        return;
      }
      std::cout << cell("rank", 6) << cell("case_id", 12) << cell("score", 21) << cell("diagnosis", 32)
                << "bethesda\n";
      for (const auto& n : neighbors) {
        const CaseRecord* r = snap.find(n.case_id);
        std::cout << cell(std::to_string(n.rank), 6) << cell(n.case_id, 12)
                  << cell(format_double(n.score), 21) << cell(r->metadata.cytology_diagnosis, 32)
                  << to_string(r->metadata.bethesda) << "\n";
      }
    };
  });

  // prompt
  auto* prompt = app.add_subcommand("prompt", "Assemble the prompt for a stored case");
  std::string p_case, p_encoder = "ensemble", p_fusion = "raw", p_exclude = "same_case";
  std::string p_templates = "templates", p_template_id = "default";
  std::size_t p_k = 5;
  bool p_interpret = false;
  prompt->add_option("--case", p_case, "Query case id")->required();
  prompt->add_option("--encoder", p_encoder, "Encoder name or 'ensemble'")->capture_default_str();
  prompt->add_option("--fusion", p_fusion, "raw|rrf")->capture_default_str();
  prompt->add_option("--k", p_k, "Examples")->capture_default_str()->check(CLI::PositiveNumber);
  prompt->add_option("--exclude", p_exclude, "none|same_case|same_patient")->capture_default_str();
  prompt->add_option("--templates", p_templates, "Template directory")->capture_default_str();
  prompt->add_option("--template", p_template_id, "Template id")->capture_default_str();
  prompt->add_flag("--interpret", p_interpret, "Also send the prompt to the configured LLM client");
  prompt->callback([&] {
    const ExclusionMode mode = exclusion_or_throw(p_exclude);
    if (!parse_fusion_mode(p_fusion)) throw CLI::ValidationError("--fusion", "must be raw or rrf");
    run = [&, mode] {
      const StoreSnapshot snap = require_store(store_path);
      const Model model = p_encoder == "ensemble" ? Model::ensemble(*parse_fusion_mode(p_fusion))
                                                  : Model::parse(p_encoder);
      const PromptTemplate tmpl = PromptTemplate::load(p_templates, p_template_id);
      const CasePrompt cp = build_case_prompt(snap, p_case, model, p_k, mode, tmpl);
      if (!p_interpret) {
        std::cout << cp.bundle.text;
        return;
      }
      LlmClientConfig cfg;
      apply_env_overrides(cfg);
      const LlmResponse resp = llm_interpret(cp.bundle, cfg);
      std::cout << Json{{"bundle", to_json(cp.bundle)}, {"response", to_json(resp)}}.dump(2) << "\n";
    };
  });

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "Leave-one-out evaluation of every model");
  std::string e_task = "all", e_k = "1,3,5", e_exclude = "same_case", e_out = "report.json", e_csv_dir;
  std::string e_fusion = "raw,rrf";
  std::size_t e_pool_k = 0;
  evaluate->add_option("--task", e_task, "diagnosis|bethesda|malignancy|all")->capture_default_str();
  evaluate->add_option("--k", e_k, "Comma-separated Top-k values")->capture_default_str();
  evaluate->add_option("--exclude", e_exclude, "none|same_case|same_patient")->capture_default_str();
  evaluate->add_option("--fusion", e_fusion, "Ensemble fusion modes")->capture_default_str();
  evaluate->add_option("--pool-k", e_pool_k, "Per-encoder ensemble pool (0 = max k)")->capture_default_str();
  evaluate->add_option("--out", e_out, "Report JSON path")->capture_default_str();
  evaluate->add_option("--csv-dir", e_csv_dir, "Also write accuracy/AUC CSV tables here");
  evaluate->callback([&] {
    EvalConfig cfg;
    cfg.ks = parse_ks(e_k);
    cfg.exclusion = exclusion_or_throw(e_exclude);
    cfg.pool_k = e_pool_k;
    cfg.fusion_modes.clear();
    std::stringstream ss(e_fusion);
    for (std::string f; std::getline(ss, f, ',');) {
      auto m = parse_fusion_mode(f);
      if (!m) throw CLI::ValidationError("--fusion", "modes must be raw or rrf");
      cfg.fusion_modes.push_back(*m);
    }
    std::vector<PredictionTask> tasks;
    if (e_task == "all") {
      tasks = {PredictionTask::SurgicalDiagnosis, PredictionTask::BethesdaCategory, PredictionTask::Malignancy};
    } else if (auto t = parse_task(e_task)) {
      tasks = {*t};
    } else {
      throw CLI::ValidationError("--task", "must be diagnosis, bethesda, malignancy or all");
    }
    run = [&, cfg, tasks] {
      const StoreSnapshot snap = require_store(store_path);
      const EvalReport report = evaluate_all(snap, cfg);
      write_text(e_out, report_to_json(report).dump(2) + "\n");
      for (const auto t : tasks) std::cout << render_accuracy_text(report, t) << "\n";
      std::cout << render_auc_csv(report);
      if (!e_csv_dir.empty()) {
        for (const auto t : tasks) {
          write_text(fs::path(e_csv_dir) / ("accuracy_" + std::string(to_string(t)) + ".csv"),
                     render_accuracy_csv(report, t));
        }
        write_text(fs::path(e_csv_dir) / "auc.csv", render_auc_csv(report));
      }
      std::cerr << "report " << e_out << " content_hash=" << report.content_hash << "\n";
    };
  });

  // roc
  auto* roc = app.add_subcommand("roc", "Write the malignancy ROC curve of one model");
  std::string r_model, r_report, r_out, r_exclude = "same_case";
  std::size_t r_k = 5;
  roc->add_option("--model", r_model, "uni, ensemble_raw, ...")->required();
  roc->add_option("--k", r_k, "Neighbors in the vote")->capture_default_str()->check(CLI::PositiveNumber);
  roc->add_option("--report", r_report, "Read an existing report instead of evaluating");
  roc->add_option("--exclude", r_exclude, "none|same_case|same_patient")->capture_default_str();
  roc->add_option("--out", r_out, "CSV path (stdout when omitted)");
  roc->callback([&] {
    const ExclusionMode mode = exclusion_or_throw(r_exclude);
    run = [&, mode] {
      EvalReport report;
      if (!r_report.empty()) {
        std::ifstream in(r_report);
        if (!in) throw Error(ErrorCode::IoError, "cannot open '" + r_report + "'");
        Json j;
        try {
          j = Json::parse(in);
        } catch (const Json::parse_error& e) {
          throw Error(ErrorCode::FormatError, e.what());
        }
        report = report_from_json(j);
      } else {
        EvalConfig cfg;
        cfg.ks = {1, 3, 5};
        if (std::find(cfg.ks.begin(), cfg.ks.end(), r_k) == cfg.ks.end()) cfg.ks.push_back(r_k);
        cfg.exclusion = mode;
        report = evaluate_all(require_store(store_path), cfg);
      }
      const ModelResult* m = report.find(Model::parse(r_model).name());
      if (!m) throw Error(ErrorCode::InvalidArgument, "model '" + r_model + "' is not in the report");
      const auto it = m->roc.find(r_k);
      if (it == m->roc.end()) throw Error(ErrorCode::InvalidArgument, "k=" + std::to_string(r_k) + " not evaluated");
      if (!it->second) throw Error(ErrorCode::DegenerateLabels, "only one malignancy class among evaluated cases");
      const std::string csv = render_roc_csv(*it->second);
      if (r_out.empty()) {
        std::cout << csv;
      } else {
        write_text(r_out, csv);
      }
      std::cerr << "auc=" << format_double(it->second->auc) << "\n";
    };
  });

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a seeded synthetic corpus");
  SynthConfig s_cfg;
  std::optional<std::uint64_t> s_seed;
  std::string s_out_dir = ".";
  bool s_no_store = false;
  synth->add_option("--cases", s_cfg.n_cases, "Number of cases")->capture_default_str();
  synth->add_option("--classes", s_cfg.n_classes, "Number of classes")->capture_default_str();
  synth->add_option("--dim", s_cfg.dim, "Embedding dimension")->capture_default_str();
  synth->add_option("--separation", s_cfg.separation, "Centroid distance / cluster radius")->capture_default_str();
  synth->add_option("--patients-per-class", s_cfg.patients_per_class, "Patients per class")->capture_default_str();
  synth->add_option("--seed", s_seed, "PRNG seed (required)")->required();
  synth->add_flag("--shuffle-labels", s_cfg.shuffle_labels, "Permute embeddings across cases");
  synth->add_option("--out-dir", s_out_dir, "Directory for the JSONL files")->capture_default_str();
  synth->add_flag("--no-store", s_no_store, "Only write the JSONL files");
  synth->callback([&] {
    s_cfg.seed = *s_seed;
    try {
      s_cfg.validate();
    } catch (const Error& e) {
      throw CLI::ValidationError("synth", e.what());
    }
    run = [&] {
      const SynthCorpus corpus = generate_synthetic(s_cfg);
      fs::create_directories(s_out_dir);
      write_corpus(corpus, s_out_dir);
      if (!s_no_store) save_store(corpus.to_snapshot(), store_path);
      std::cout << Json{{"cases", corpus.cases.size()},
                        {"encoders", corpus.registry.size()},
                        {"out_dir", s_out_dir},
                        {"store", s_no_store ? "" : store_path}}
                       .dump()
                << "\n";
    };
  });

  // serve
  auto* serve = app.add_subcommand("serve", "Run the HTTP service");
  std::string v_config, v_host;
  std::optional<int> v_port;
  serve->add_option("--config", v_config, "Service config JSON");
  serve->add_option("--host", v_host, "Bind address");
  serve->add_option("--port", v_port, "Port (0 = any free port)");
  serve->callback([&] {
    run = [&] {
      ServiceConfig cfg = load_service_config(v_config);
      if (cfg.store_path.empty()) cfg.store_path = store_path;
      if (!v_host.empty()) cfg.host = v_host;
      if (v_port) cfg.port = *v_port;
      Service service(cfg);
      const int port = service.bind();
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      service.start();
      std::cout << Json{{"listening", cfg.host}, {"port", port}}.dump() << std::endl;
      while (g_signal.load() == 0) std::this_thread::sleep_for(std::chrono::milliseconds(100));
      service.stop();
      std::cerr << "stopped on signal " << g_signal.load() << "\n";
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsageError;
  }
  try {
    if (run) run();
  } catch (const Error& e) {
    std::cerr << Json{{"error", e.code_name()}, {"message", e.what()}}.dump() << "\n";
    return kOperationalError;
  } catch (const std::exception& e) {
    std::cerr << Json{{"error", "internal"}, {"message", e.what()}}.dump() << "\n";
    return kOperationalError;
  }
  return 0;
}
