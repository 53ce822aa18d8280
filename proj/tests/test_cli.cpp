#include <gtest/gtest.h>

#include <sys/wait.h>

#include <charconv>
#include <cstdio>
#include <sstream>

#include "cytorag/evaluation.hpp"
#include "cytorag/json_io.hpp"
#include "cytorag/report.hpp"
#include "test_util.hpp"

using namespace cytorag;

namespace {

struct CliRun {
  int status;
  std::string out;
  std::string err;
};

CliRun cli(const testutil::TempDir& dir, const std::string& args) {
  const auto err_path = dir / "stderr.txt";
  const std::string cmd = "cd '" + dir.path().string() + "' && '" CYTORAG_CLI_PATH "' " + args + " 2>'" +
                          err_path.string() + "'";
  FILE* pipe = popen(cmd.c_str(), "r");
  std::string out;
  char buf[4096];
  while (std::size_t n = std::fread(buf, 1, sizeof buf, pipe)) out.append(buf, n);
  const int raw = pclose(pipe);
  return {WIFEXITED(raw) ? WEXITSTATUS(raw) : -1, out, testutil::read_file(err_path)};
}

double to_double(const std::string& s) {
  if (s == "inf") return std::numeric_limits<double>::infinity();
  double v = 0;
  std::from_chars(s.data(), s.data() + s.size(), v);
  return v;
}

}  // namespace

TEST(Cli, SeparableSynthEvaluatesPerfectly) {
  testutil::TempDir dir;
  ASSERT_EQ(cli(dir, "synth --cases 300 --classes 3 --dim 64 --separation 6 --seed 7").status, 0);
  const CliRun r = cli(dir, "evaluate --task diagnosis --k 1,3,5 --csv-dir tables");
  ASSERT_EQ(r.status, 0) << r.err;
  const Json report = Json::parse(testutil::read_file(dir / "report.json"));
  for (const auto& m : report["models"]) {
    for (const auto& [task, row] : m["accuracy"].items()) {
      for (const auto& [k, v] : row.items()) EXPECT_EQ(v.get<double>(), 1.0) << m["model"] << task << k;
    }
  }
  EXPECT_NE(r.out.find("Top-k accuracy: surgical diagnosis"), std::string::npos);
  // Tables on disk re-parse to the report JSON values.
  const EvalReport parsed = report_from_json(report);
  EXPECT_EQ(testutil::read_file(dir / "tables" / "accuracy_surgical_diagnosis.csv"),
            render_accuracy_csv(parsed, PredictionTask::SurgicalDiagnosis));
  EXPECT_EQ(testutil::read_file(dir / "tables" / "auc.csv"), render_auc_csv(parsed));
}

TEST(Cli, QueryPrintsFiveRowTable) {
  testutil::TempDir dir;
  ASSERT_EQ(cli(dir, "synth --cases 60 --seed 3").status, 0);
  const CliRun r = cli(dir, "query --case c001 --encoder uni --k 5");
  ASSERT_EQ(r.status, 0) << r.err;
  std::istringstream in(r.out);
  std::vector<std::string> lines;
  for (std::string l; std::getline(in, l);) lines.push_back(l);
  ASSERT_EQ(lines.size(), 6u);
  for (const char* col : {"rank", "case_id", "score", "diagnosis", "bethesda"}) {
    EXPECT_NE(lines[0].find(col), std::string::npos) << col;
  }
  EXPECT_EQ(lines[1].rfind("1 ", 0), 0u);

  const CliRun j = cli(dir, "query --case c001 --encoder uni --k 5 --json");
  const Json rows = Json::parse(j.out);
  ASSERT_EQ(rows.size(), 5u);
  std::istringstream row1(lines[1]);
  std::string rank, id, score;
  row1 >> rank >> id >> score;
  EXPECT_EQ(id, rows[0]["case_id"]);
  EXPECT_EQ(to_double(score), rows[0]["score"].get<double>());
}

TEST(Cli, RocCsvReproducesReportedAuc) {
  testutil::TempDir dir;
  ASSERT_EQ(cli(dir, "synth --cases 120 --seed 5 --separation 1.5").status, 0);
  ASSERT_EQ(cli(dir, "evaluate").status, 0);
  ASSERT_EQ(cli(dir, "roc --model uni --k 5 --out roc.csv").status, 0);
  const auto points = parse_roc_csv(testutil::read_file(dir / "roc.csv"));
  const EvalReport report = report_from_json(Json::parse(testutil::read_file(dir / "report.json")));
  EXPECT_EQ(trapezoid_auc(points), report.find("uni")->roc.at(5)->auc);
  ASSERT_EQ(cli(dir, "roc --model uni --k 5 --report report.json --out roc2.csv").status, 0);
  EXPECT_EQ(testutil::read_file(dir / "roc.csv"), testutil::read_file(dir / "roc2.csv"));
}

TEST(Cli, SynthIsByteReproducible) {
  testutil::TempDir a, b;
  ASSERT_EQ(cli(a, "synth --seed 11 --cases 50 --no-store").status, 0);
  ASSERT_EQ(cli(b, "synth --seed 11 --cases 50 --no-store").status, 0);
  EXPECT_EQ(testutil::read_file(a / "embeddings.jsonl"), testutil::read_file(b / "embeddings.jsonl"));
  EXPECT_EQ(testutil::read_file(a / "metadata.jsonl"), testutil::read_file(b / "metadata.jsonl"));
}

TEST(Cli, IngestRegisterAndPrompt) {
  testutil::TempDir dir;
  ASSERT_EQ(cli(dir, "synth --seed 2 --cases 30 --no-store --out-dir corpus").status, 0);
  ASSERT_EQ(cli(dir, "register-encoder extra --dim 8").status, 0);
  const CliRun in = cli(dir, "ingest --metadata corpus/metadata.jsonl --embeddings corpus/embeddings.jsonl");
  ASSERT_EQ(in.status, 0) << in.err;
  EXPECT_EQ(Json::parse(in.out)["cases_ingested"], 30);
  const CliRun p = cli(dir, "prompt --case c004 --k 5 --templates '" CYTORAG_TEMPLATES_DIR "'");
  ASSERT_EQ(p.status, 0) << p.err;
  std::size_t blocks = 0;
  for (auto pos = p.out.find("Reference case "); pos != std::string::npos; pos = p.out.find("Reference case ", pos + 1)) {
    ++blocks;
  }
  EXPECT_EQ(blocks, 5u);
  const CliRun i = cli(dir, "prompt --case c004 --interpret");
  ASSERT_EQ(i.status, 0) << i.err;
  EXPECT_TRUE(Json::parse(i.out)["response"]["stub"].get<bool>());
}

TEST(Cli, ExitCodes) {
  testutil::TempDir dir;
  EXPECT_EQ(cli(dir, "").status, 2);
  EXPECT_EQ(cli(dir, "synth").status, 2);  // --seed is required
  EXPECT_EQ(cli(dir, "evaluate --k 1,x").status, 2);
  EXPECT_EQ(cli(dir, "bogus-command").status, 2);
  const CliRun missing = cli(dir, "query --case c001");
  EXPECT_EQ(missing.status, 1);
  EXPECT_EQ(Json::parse(missing.err)["error"], "io_error");
  ASSERT_EQ(cli(dir, "synth --seed 1 --cases 20").status, 0);
  const CliRun unknown = cli(dir, "query --case nope");
  EXPECT_EQ(unknown.status, 1);
  EXPECT_EQ(Json::parse(unknown.err)["error"], "unknown_case");
  const CliRun dup = cli(dir, "register-encoder uni --dim 64");
  EXPECT_EQ(dup.status, 1);
  EXPECT_EQ(Json::parse(dup.err)["error"], "duplicate_encoder");
}
