// Acceptance suite: one PASS/FAIL line per criterion. Exit status is the
// number of failed criteria.

#include <chrono>
#include <cmath>
#include <cstring>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include "cytorag/corpus.hpp"
#include "cytorag/decisions.hpp"
#include "cytorag/ensemble.hpp"
#include "cytorag/errors.hpp"
#include "cytorag/evaluation.hpp"
#include "cytorag/hashing.hpp"
#include "cytorag/llm_client.hpp"
#include "cytorag/pipeline.hpp"
#include "cytorag/report.hpp"
#include "cytorag/service.hpp"
#include "cytorag/store_io.hpp"
#include "cytorag/synth.hpp"
#include "httplib.h"
#include "test_util.hpp"

using namespace cytorag;

namespace {

// Pinned tolerances and limits.
constexpr double kSymmetryTol = 1e-12;
constexpr double kScaleTol = 1e-9;
constexpr double kSelfTol = 1e-12;
constexpr double kAucOracleTol = 1e-9;
constexpr double kSeparableAucTol = 1e-9;
constexpr double kShuffledTop1Center = 0.33;
constexpr double kShuffledTop1Tol = 0.07;
constexpr double kShuffledAucCenter = 0.5;
constexpr double kShuffledAucTol = 0.07;
constexpr double kCosineSeconds = 1.0;
constexpr double kRetrievalSeconds = 30.0;
constexpr double kSyntheticSeconds = 60.0;

struct Failure {
  std::string what;
};

void require(bool ok, const std::string& what) {
  if (!ok) throw Failure{what};
}

std::string num(double v) { return format_double(v); }

int failures = 0;

void criterion(const std::string& name, double time_limit, const std::function<void()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  std::string detail;
  bool ok = true;
  try {
    body();
  } catch (const Failure& f) {
    ok = false;
    detail = f.what;
  } catch (const std::exception& e) {
    ok = false;
    detail = std::string("exception: ") + e.what();
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (ok && time_limit > 0 && secs >= time_limit) {
    ok = false;
    detail = "runtime " + num(secs) + " s exceeds " + num(time_limit) + " s";
  }
  char timing[32];
  std::snprintf(timing, sizeof timing, "%.2f s", secs);
  std::cout << (ok ? "PASS " : "FAIL ") << name << " (" << timing << ")";
  if (!detail.empty()) std::cout << ": " << detail;
  std::cout << std::endl;
  if (!ok) ++failures;
}

void cosine_correctness() {
  std::mt19937_64 rng(1001);
  std::normal_distribution<double> nd;
  std::uniform_real_distribution<double> alpha(0.0, 1e3);
  for (std::size_t dim : {8u, 512u}) {
    for (int t = 0; t < 1000; ++t) {
      std::vector<double> a(dim), b(dim);
      for (auto& x : a) x = nd(rng);
      for (auto& x : b) x = nd(rng);
      const double ab = cosine_similarity(a, b);
      const double ba = cosine_similarity(b, a);
      require(std::abs(ab - ba) <= kSymmetryTol, "symmetry violated at dim " + std::to_string(dim));
      require(ab >= -1.0 && ab <= 1.0, "out of [-1, 1]: " + num(ab));
      require(std::abs(cosine_similarity(a, a) - 1.0) <= kSelfTol, "cos(a,a) != 1");
      double s = 0;
      while (s == 0) s = alpha(rng);
      std::vector<double> sa(a);
      for (auto& x : sa) x *= s;
      require(std::abs(cosine_similarity(sa, b) - ab) <= kScaleTol, "scale invariance violated");
    }
  }
}

void retrieval_oracle() {
  testutil::RandomStoreOptions opt;
  opt.max_cases = 500;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const StoreSnapshot snap = testutil::random_store(seed * 7919 + 1, opt);
    std::mt19937_64 rng(seed);
    const auto& anchor = snap.cases()[rng() % snap.cases().size()];
    const auto filter = ExclusionFilter::for_case(
        seed % 3 == 0 ? ExclusionMode::None : seed % 3 == 1 ? ExclusionMode::SameCase : ExclusionMode::SamePatient,
        anchor.case_id);
    const EncoderId enc("alpha");
    const Vector q = anchor.embeddings.count(enc) ? anchor.embeddings.at(enc) : testutil::random_vector(rng, 8);
    // Exhaustive-sort oracle.
    std::vector<std::pair<double, std::string>> all;
    for (const auto& c : snap.cases()) {
      const auto it = c.embeddings.find(enc);
      if (it == c.embeddings.end()) continue;
      if (filter.mode != ExclusionMode::None && c.case_id == anchor.case_id) continue;
      if (filter.mode == ExclusionMode::SamePatient && c.patient_id == anchor.patient_id) continue;
      all.emplace_back(std::clamp(testutil::oracle_cosine(q, it->second), -1.0, 1.0), c.case_id);
    }
    std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
      return a.first != b.first ? a.first > b.first : a.second < b.second;
    });
    for (std::size_t k : {1u, 3u, 5u}) {
      const auto got = top_k({enc, q}, k, filter, snap);
      require(got.size() == std::min(k, all.size()), "wrong neighbor count, seed " + std::to_string(seed));
      for (std::size_t i = 0; i < got.size(); ++i) {
        require(got[i].case_id == all[i].second,
                "order differs at seed " + std::to_string(seed) + " k " + std::to_string(k));
      }
    }
  }
}

void auc_oracle() {
  std::mt19937_64 rng(4242);
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = 2 + rng() % 200;
    const auto levels = 2 + rng() % 10;
    std::vector<double> s(n);
    std::vector<int> l(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = static_cast<double>(rng() % levels) / static_cast<double>(levels);
      l[i] = static_cast<int>(rng() % 2);
    }
    l[0] = 1;
    l[1] = 0;
    const double got = roc_and_auc(s, l).auc;
    const double want = testutil::oracle_pairwise_auc(s, l);
    require(std::abs(got - want) <= kAucOracleTol, "trial " + std::to_string(t) + ": " + num(got) + " vs " + num(want));
  }
  const std::vector<double> perfect{0.9, 0.8, 0.2, 0.1}, ties{0.3, 0.3, 0.3, 0.3};
  const std::vector<int> labels{1, 1, 0, 0};
  require(roc_and_auc(perfect, labels).auc == 1.0, "perfect separation AUC != 1.0");
  require(roc_and_auc(ties, labels).auc == 0.5, "all-ties AUC != 0.5");
}

void synthetic_benchmark() {
  SynthConfig cfg;
  cfg.n_cases = 300;
  cfg.n_classes = 3;
  cfg.dim = 64;
  cfg.separation = 6;
  cfg.seed = 7;
  const EvalReport sep = evaluate_all(generate_synthetic(cfg).to_snapshot(), {});
  for (const auto& m : sep.models) {
    for (auto task : {PredictionTask::SurgicalDiagnosis, PredictionTask::BethesdaCategory}) {
      for (std::size_t k : {1u, 3u, 5u}) {
        require(m.accuracy.at(task).at(k) == 1.0, m.model + " " + std::string(to_string(task)) + " Top-" +
                                                       std::to_string(k) + " = " + num(m.accuracy.at(task).at(k)));
      }
    }
    for (const auto& [k, roc] : m.roc) {
      require(roc && std::abs(roc->auc - 1.0) <= kSeparableAucTol, m.model + " AUC@" + std::to_string(k) + " != 1");
    }
  }
  cfg.shuffle_labels = true;
  const EvalReport shuf = evaluate_all(generate_synthetic(cfg).to_snapshot(), {});
  std::vector<std::string> out;
  for (const auto& m : shuf.models) {
    const double top1 = m.accuracy.at(PredictionTask::SurgicalDiagnosis).at(1);
    if (std::abs(top1 - kShuffledTop1Center) > kShuffledTop1Tol) out.push_back(m.model + " shuffled Top-1 " + num(top1));
    for (const auto& [k, roc] : m.roc) {
      if (!roc || std::abs(roc->auc - kShuffledAucCenter) > kShuffledAucTol) {
        out.push_back(m.model + " shuffled AUC@" + std::to_string(k) + " " + (roc ? num(roc->auc) : "na"));
      }
    }
  }
  std::string joined;
  for (const auto& s : out) joined += (joined.empty() ? "" : "; ") + s;
  require(out.empty(), joined);
}

void report_invariants() {
  std::vector<StoreSnapshot> stores;
  for (std::uint64_t seed : {7u, 8u}) {
    SynthConfig cfg;
    cfg.seed = seed;
    cfg.shuffle_labels = seed == 8;
    stores.push_back(generate_synthetic(cfg).to_snapshot());
  }
  for (std::uint64_t seed = 0; seed < 10; ++seed) stores.push_back(testutil::random_store(seed + 900, {.max_cases = 150}));
  for (const auto& snap : stores) {
    for (auto mode : {ExclusionMode::SameCase, ExclusionMode::SamePatient}) {
      EvalConfig cfg;
      cfg.exclusion = mode;
      EvalReport a;
      try {
        a = evaluate_all(snap, cfg);
      } catch (const Error& e) {
        if (e.code() == ErrorCode::EmptyEvaluationSet) continue;
        throw;
      }
      for (const auto& m : a.models) {
        for (const auto& [task, row] : m.accuracy) {
          require(row.at(1) <= row.at(3) && row.at(3) <= row.at(5), m.model + " not monotone");
          for (const auto& [k, v] : row) require(v >= 0 && v <= 1, "accuracy outside [0,1]");
        }
        for (const auto& [k, roc] : m.roc) {
          if (roc) require(roc->auc >= 0 && roc->auc <= 1, "AUC outside [0,1]");
        }
      }
      check_report_invariants(a);
      require(evaluate_all(snap, cfg).content_hash == a.content_hash, "content hash not deterministic");
      require(report_content_hash(report_from_json(report_to_json(a))) == a.content_hash,
              "hash changes through JSON");
    }
  }
}

void ensemble_properties() {
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const StoreSnapshot snap = testutil::random_store(seed + 300, {.max_cases = 120, .dims = {8, 8}, .duplicate_rate = 0.3});
    std::mt19937_64 rng(seed);
    const Vector qa = testutil::random_vector(rng, 8), qb = testutil::random_vector(rng, 8);
    const auto f = ExclusionFilter::none();
    for (auto mode : {FusionMode::RawScorePool, FusionMode::ReciprocalRankFusion}) {
      for (std::size_t k : {1u, 3u, 5u}) {
        const auto single = ensemble_top_k({{EncoderId("alpha"), qa}}, k, mode, f, snap);
        const auto direct = top_k({EncoderId("alpha"), qa}, k, f, snap);
        require(single.size() == direct.size(), "single-encoder size differs");
        for (std::size_t i = 0; i < single.size(); ++i) {
          require(single[i].case_id == direct[i].case_id, "single-encoder order differs");
          if (mode == FusionMode::RawScorePool) require(single[i].fused_score == direct[i].score, "score differs");
        }
        const auto both = ensemble_top_k({{EncoderId("alpha"), qa}, {EncoderId("beta"), qb}}, k, mode, f, snap, k + 3);
        std::set<std::string> ids;
        for (const auto& n : both) require(ids.insert(n.case_id).second, "duplicate case_id " + n.case_id);
      }
    }
  }
  std::map<EncoderId, std::vector<Neighbor>> lists;
  lists[EncoderId("e1")] = {{"A", EncoderId("e1"), 0.9, 1}, {"B", EncoderId("e1"), 0.8, 2}};
  lists[EncoderId("e2")] = {{"B", EncoderId("e2"), 0.95, 1}, {"C", EncoderId("e2"), 0.7, 2}};
  const auto out = fuse(lists, 3, FusionMode::RawScorePool);
  require(out.size() == 3 && out[0].case_id == "B" && out[0].fused_score == 0.95 && out[1].case_id == "A" &&
              out[1].fused_score == 0.9 && out[2].case_id == "C" && out[2].fused_score == 0.7,
          "hand example not reproduced");
}

void persistence() {
  testutil::TempDir dir;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const StoreSnapshot snap = testutil::random_store(seed + 7000, {.max_cases = 80, .dims = {8, 32}});
    save_store(snap, dir / "p.store");
    const StoreSnapshot back = open_store(dir / "p.store");
    require(back == snap, "field mismatch at trial " + std::to_string(seed));
    for (std::size_t i = 0; i < snap.cases().size(); ++i) {
      for (const auto& [enc, vec] : snap.cases()[i].embeddings) {
        const auto& got = back.cases()[i].embeddings.at(enc);
        require(std::memcmp(got.data(), vec.data(), vec.size() * sizeof(float)) == 0, "vector bits differ");
      }
    }
  }
}

void pipeline_offline() {
  testutil::TempDir dir;
  Store store;
  const std::filesystem::path fixture = CYTORAG_FIXTURE_DIR "/corpus36";
  const LoadResult loaded = load_corpus(store, fixture / "embeddings.jsonl", fixture / "metadata.jsonl");
  require(loaded.cases_ingested == 36 && loaded.rejects.empty(), "fixture ingestion");
  const auto snap = store.snapshot();
  const PromptTemplate tmpl = PromptTemplate::load(CYTORAG_TEMPLATES_DIR, "default");
  const CasePrompt a = build_case_prompt(*snap, "c001", Model::parse("uni"), 5, ExclusionMode::SameCase, tmpl);
  const CasePrompt b = build_case_prompt(*snap, "c001", Model::parse("uni"), 5, ExclusionMode::SameCase, tmpl);
  require(a.neighbors.size() == 5, "expected 5 neighbors");
  require(a.bundle.example_count == 5, "example_count != 5");
  std::size_t blocks = 0;
  for (auto p = a.bundle.text.find("Reference case "); p != std::string::npos; p = a.bundle.text.find("Reference case ", p + 1)) ++blocks;
  require(blocks == 5, "expected 5 example blocks, found " + std::to_string(blocks));
  require(a.bundle == b.bundle, "prompt not byte-deterministic");
  LlmClientConfig llm;
  llm.stub = true;
  llm.endpoint = "http://192.0.2.1:9/unused";  // never contacted in stub mode
  const LlmResponse resp = llm_interpret(a.bundle, llm);
  require(resp.stub && resp.text.find(a.bundle.template_hash) != std::string::npos, "stub response");
  DecisionJournal journal(dir / "journal.jsonl");
  DecisionRecord d;
  d.case_id = "c001";
  d.reviewer_id = "acceptance";
  d.chosen_diagnosis = snap->find(a.neighbors[0].case_id)->metadata.cytology_diagnosis;
  d.chosen_bethesda = snap->find(a.neighbors[0].case_id)->metadata.bethesda;
  for (const auto& n : a.neighbors) d.neighbors_shown.push_back(n.case_id);
  d.llm_response_digest = sha256_hex(resp.text);
  const DecisionRecord saved = journal.append(d);
  require(DecisionJournal(dir / "journal.jsonl").list("c001").at(0) == saved, "decision not journaled");
}

void service_equivalence() {
  testutil::TempDir dir;
  SynthConfig s;
  s.n_cases = 60;
  s.dim = 16;
  s.seed = 21;
  s.separation = 2;
  save_store(generate_synthetic(s).to_snapshot(), dir / "svc.store");
  ServiceConfig cfg;
  cfg.port = 0;
  cfg.store_path = dir / "svc.store";
  cfg.templates_dir = CYTORAG_TEMPLATES_DIR;
  cfg.llm.stub = false;
  cfg.llm.endpoint = "http://127.0.0.1:1/v1/chat/completions";  // refused, maps to 502
  cfg.llm.max_retries = 0;
  cfg.llm.timeout_seconds = 1;
  Service svc(cfg);
  svc.start();
  httplib::Client http("127.0.0.1", svc.port());
  http.set_read_timeout(60, 0);
  const auto snap = svc.store().snapshot();
  for (std::size_t i = 0; i < snap->cases().size(); i += 7) {
    const CaseRecord& q = snap->cases()[i];
    auto r = http.Get("/v1/cases/" + q.case_id + "/similar?encoder=uni&k=5");
    require(r && r->status == 200, "similar status");
    Json want = Json::array();
    for (const auto& n : top_k({EncoderId("uni"), q.embeddings.at(EncoderId("uni"))}, 5,
                               ExclusionFilter::for_case(ExclusionMode::SameCase, q.case_id), *snap)) {
      want.push_back(to_json(n));
    }
    require(Json::parse(r->body)["neighbors"] == want, "/similar differs from top_k for " + q.case_id);
    r = http.Post("/v1/prompt", Json{{"case_id", q.case_id}, {"k", 5}, {"encoder", "ensemble"}}.dump(), "application/json");
    require(r && r->status == 200, "prompt status");
    const auto direct = build_case_prompt(*snap, q.case_id, Model::ensemble(FusionMode::RawScorePool), 5,
                                          ExclusionMode::SameCase, PromptTemplate::builtin());
    require(bundle_from_json(Json::parse(r->body)) == direct.bundle, "/prompt differs for " + q.case_id);
  }
  auto r = http.Post("/v1/eval/run", "{}", "application/json");
  require(r && r->status == 201, "eval run status");
  const EvalReport direct = evaluate_all(*snap, {});
  const Json ids = Json::parse(r->body);
  require(ids["content_hash"] == direct.content_hash, "eval hash differs");
  r = http.Get("/v1/eval/reports/" + ids["report_id"].get<std::string>());
  require(r && Json::parse(r->body) == report_to_json(direct), "eval report differs");

  const auto expect = [&](const httplib::Result& res, int status, const std::string& code) {
    require(res && res->status == status, "expected HTTP " + std::to_string(status) + " for " + code +
                                              (res ? ", got " + std::to_string(res->status) : ""));
    require(Json::parse(res->body)["error"]["code"] == code, "expected code " + code);
  };
  expect(http.Post("/v1/embeddings", R"({"case_id":"c001","encoder":"uni","dim":3,"vector":[1,2,3]})", "application/json"),
         422, "dimension_mismatch");
  expect(http.Get("/v1/cases/nope"), 404, "unknown_case");
  expect(http.Post("/v1/encoders", R"({"name":"uni","dim":16})", "application/json"), 409, "duplicate_encoder");
  expect(http.Post("/v1/interpret", R"({"case_id":"c001","encoder":"uni"})", "application/json"), 502,
         "endpoint_unreachable");
  svc.stop();
}

void table_renderer() {
  EvalReport r;
  r.config.ks = {1, 3, 5};
  r.pool_k = 5;
  ModelResult uni;
  uni.model = "uni";
  uni.evaluated_cases = 36;
  uni.accuracy[PredictionTask::SurgicalDiagnosis] = {{1, 0.69}, {3, 0.81}, {5, 0.92}};
  r.models.push_back(uni);
  r.content_hash = report_content_hash(r);
  const std::filesystem::path golden = CYTORAG_GOLDEN_DIR;
  require(render_accuracy_csv(r, PredictionTask::SurgicalDiagnosis) == testutil::read_file(golden / "uni_accuracy.csv"),
          "CSV differs from golden");
  require(report_to_json(r).dump(2) + "\n" == testutil::read_file(golden / "uni_report.json"), "JSON differs from golden");
  require(render_accuracy_text(r, PredictionTask::SurgicalDiagnosis) == testutil::read_file(golden / "uni_accuracy.txt"),
          "text table differs from golden");
}

}  // namespace

int main() {
  criterion("cosine_correctness", kCosineSeconds, cosine_correctness);
  criterion("retrieval_oracle_equivalence", kRetrievalSeconds, retrieval_oracle);
  criterion("auc_oracle_equivalence", 0, auc_oracle);
  criterion("synthetic_separable_benchmark", kSyntheticSeconds, synthetic_benchmark);
  criterion("report_invariants", 0, report_invariants);
  criterion("ensemble_properties", 0, ensemble_properties);
  criterion("persistence_round_trip", 0, persistence);
  criterion("pipeline_end_to_end_offline", 0, pipeline_offline);
  criterion("service_equivalence", 0, service_equivalence);
  criterion("table_renderer_golden", 0, table_renderer);
  std::cout << (failures == 0 ? "ALL PASS" : std::to_string(failures) + " FAILED") << std::endl;
  return failures;
}
