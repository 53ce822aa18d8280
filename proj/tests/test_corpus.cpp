#include <gtest/gtest.h>

#include "cytorag/corpus.hpp"
#include "cytorag/errors.hpp"
#include "cytorag/json_io.hpp"
#include "test_util.hpp"

using namespace cytorag;

namespace {

const std::filesystem::path kFixture = CYTORAG_FIXTURE_DIR "/corpus36";

std::string meta_line(int i) {
  return metadata_to_json(testutil::make_case("c" + std::to_string(i), "p" + std::to_string(i % 3))).dump();
}

std::string emb_line(int i) {
  return embedding_jsonl_line("c" + std::to_string(i), EncoderId("uni"),
                              Vector{1.0f, static_cast<float>(i), 0.5f});
}

}  // namespace

TEST(LoadCorpus, ThirtySixCaseFixture) {
  Store store;
  const LoadResult r = load_corpus(store, kFixture / "embeddings.jsonl", kFixture / "metadata.jsonl");
  EXPECT_EQ(r.cases_ingested, 36u);
  EXPECT_EQ(r.embeddings_ingested, 144u);
  EXPECT_TRUE(r.rejects.empty());
  EXPECT_EQ(store.snapshot()->cases().size(), 36u);
  EXPECT_EQ(store.snapshot()->registry().size(), 4u);
  EXPECT_EQ(store.version(), 1u);  // one commit for the whole load
}

TEST(LoadCorpus, EmptyFilesIngestNothing) {
  testutil::TempDir dir;
  testutil::write_file(dir / "m.jsonl", "");
  testutil::write_file(dir / "e.jsonl", "\n\n");
  Store store;
  const LoadResult r = load_corpus(store, dir / "e.jsonl", dir / "m.jsonl");
  EXPECT_EQ(r.cases_ingested, 0u);
  EXPECT_EQ(r.embeddings_ingested, 0u);
  EXPECT_TRUE(r.rejects.empty());
  EXPECT_EQ(store.version(), 0u);
}

TEST(LoadCorpus, OneMalformedLineAmongTenLenient) {
  testutil::TempDir dir;
  std::string meta;
  for (int i = 0; i < 10; ++i) meta += (i == 6 ? std::string("{\"case_id\": \"c6\", oops") : meta_line(i)) + "\n";
  testutil::write_file(dir / "m.jsonl", meta);
  Store store;
  const LoadResult r = load_corpus(store, {}, dir / "m.jsonl");
  EXPECT_EQ(r.cases_ingested, 9u);
  ASSERT_EQ(r.rejects.size(), 1u);
  EXPECT_EQ(r.rejects[0].line, 7u);
  EXPECT_EQ(r.rejects[0].code, ErrorCode::FormatError);
  EXPECT_EQ(store.snapshot()->find("c6"), nullptr);
}

TEST(LoadCorpus, StrictModeAbortsWithoutCommitting) {
  testutil::TempDir dir;
  testutil::write_file(dir / "m.jsonl", meta_line(1) + "\nnot json\n" + meta_line(2) + "\n");
  Store store;
  LoadOptions opt;
  opt.strict = true;
  try {
    load_corpus(store, {}, dir / "m.jsonl", opt);
    FAIL() << "strict load accepted a malformed line";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::FormatError);
  }
  EXPECT_TRUE(store.snapshot()->cases().empty());
}

TEST(LoadCorpus, EmbeddingRejectsAreReportedPerLine) {
  testutil::TempDir dir;
  testutil::write_file(dir / "m.jsonl", meta_line(1) + "\n" + meta_line(2) + "\n");
  std::string emb = emb_line(1) + "\n";
  emb += R"({"case_id":"c2","encoder":"uni","dim":2,"vector":[1,2]})" "\n";       // wrong dim for uni
  emb += R"({"case_id":"c9","encoder":"uni","dim":3,"vector":[1,2,3]})" "\n";     // unknown case
  emb += R"({"case_id":"c2","encoder":"uni","dim":3,"vector":[0,0,0]})" "\n";     // zero norm
  emb += R"({"case_id":"c2","encoder":"uni","dim":4,"vector":[1,2,3]})" "\n";     // dim != length
  testutil::write_file(dir / "e.jsonl", emb);
  Store store;
  const LoadResult r = load_corpus(store, dir / "e.jsonl", dir / "m.jsonl");
  EXPECT_EQ(r.cases_ingested, 2u);
  EXPECT_EQ(r.embeddings_ingested, 1u);
  ASSERT_EQ(r.rejects.size(), 4u);
  EXPECT_EQ(r.rejects[0].code, ErrorCode::DimensionMismatch);
  EXPECT_EQ(r.rejects[1].code, ErrorCode::UnknownCase);
  EXPECT_EQ(r.rejects[2].code, ErrorCode::ZeroNormVector);
  EXPECT_EQ(r.rejects[3].code, ErrorCode::DimensionMismatch);
}

TEST(LoadCorpus, EmbeddingsMayTargetExistingCases) {
  testutil::TempDir dir;
  Store store;
  store.upsert_case(testutil::make_case("c1", "p1"));
  testutil::write_file(dir / "e.jsonl", emb_line(1) + "\n");
  const LoadResult r = load_corpus(store, dir / "e.jsonl", {});
  EXPECT_EQ(r.embeddings_ingested, 1u);
  EXPECT_EQ(store.snapshot()->find("c1")->embeddings.size(), 1u);
}

TEST(LoadCorpus, MissingFileIsIoError) {
  Store store;
  try {
    load_corpus(store, "/nonexistent/e.jsonl", {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::IoError);
  }
}
