#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "cytorag/errors.hpp"
#include "cytorag/retrieval.hpp"
#include "test_util.hpp"

using namespace cytorag;

namespace {

struct Expected {
  std::string id;
  double score;
};

// Exhaustive-sort oracle over eligible cases.
std::vector<Expected> oracle_top_k(const StoreSnapshot& snap, const EncoderId& enc, const Vector& q,
                                   std::size_t k, const ExclusionFilter& f) {
  const CaseRecord* anchor = f.anchor_case_id.empty() ? nullptr : snap.find(f.anchor_case_id);
  std::vector<Expected> all;
  for (const auto& c : snap.cases()) {
    const auto it = c.embeddings.find(enc);
    if (it == c.embeddings.end()) continue;
    if (f.excluded_case_ids.count(c.case_id)) continue;
    if (f.mode != ExclusionMode::None && c.case_id == f.anchor_case_id) continue;
    if (f.mode == ExclusionMode::SamePatient && anchor && c.patient_id == anchor->patient_id) continue;
    all.push_back({c.case_id, std::clamp(testutil::oracle_cosine(q, it->second), -1.0, 1.0)});
  }
  std::sort(all.begin(), all.end(), [](const Expected& a, const Expected& b) {
    return a.score != b.score ? a.score > b.score : a.id < b.id;
  });
  if (all.size() > k) all.resize(k);
  return all;
}

}  // namespace

TEST(Cosine, HandExamples) {
  const std::vector<float> e1{1, 0}, e2{0, 1};
  EXPECT_EQ(cosine_similarity(e1, e1), 1.0);
  EXPECT_EQ(cosine_similarity(e1, e2), 0.0);
  const std::vector<float> a{1, 2, 3}, b{4, 5, 6};
  EXPECT_NEAR(cosine_similarity(a, b), 32.0 / std::sqrt(1078.0), 1e-15);
  EXPECT_NEAR(cosine_similarity(a, b), 0.974632, 1e-6);
}

TEST(Cosine, Errors) {
  const std::vector<float> a{1, 2, 3}, b{1, 2}, z{0, 0, 0};
  EXPECT_THROW(cosine_similarity(a, b), Error);
  try {
    cosine_similarity(a, z);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ZeroNormVector);
  }
}

TEST(CosineProperty, SymmetryScaleSelfAndBounds) {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> alpha(1e-3, 1e3);
  std::normal_distribution<double> nd;
  for (std::size_t dim : {8u, 512u}) {
    for (int t = 0; t < 500; ++t) {
      std::vector<double> a(dim), b(dim);
      for (auto& x : a) x = nd(rng);
      for (auto& x : b) x = nd(rng);
      if (t % 50 == 0) b = a;  // exercise the clamp region
      if (t % 50 == 1) for (std::size_t i = 0; i < dim; ++i) b[i] = -a[i];
      const double ab = cosine_similarity(a, b);
      ASSERT_LE(std::abs(ab - cosine_similarity(b, a)), 1e-12);
      ASSERT_GE(ab, -1.0);
      ASSERT_LE(ab, 1.0);
      ASSERT_NEAR(cosine_similarity(a, a), 1.0, 1e-12);
      const double s = alpha(rng);
      std::vector<double> sa(a);
      for (auto& x : sa) x *= s;
      ASSERT_LE(std::abs(cosine_similarity(sa, b) - ab), 1e-9);
      ASSERT_NEAR(ab, std::clamp(testutil::oracle_cosine(a, b), -1.0, 1.0), 1e-12);
    }
  }
}

class ThreeCases : public ::testing::Test {
 protected:
  void SetUp() override {
    StoreBuilder b;
    b.register_encoder("uni", 2);
    auto add = [&](const char* id, const char* patient, Vector v) {
      auto c = testutil::make_case(id, patient);
      c.embeddings[EncoderId("uni")] = std::move(v);
      b.upsert_case(std::move(c));
    };
    add("A", "p1", {1.0f, 0.0f});
    add("B", "p1", {0.8f, 0.6f});
    add("C", "p2", {0.6f, 0.8f});
    snap = b.build(1);
  }
  StoreSnapshot snap;
  const EncoderId uni{"uni"};
};

TEST_F(ThreeCases, SameCaseExcludesQueryItself) {
  const auto n = top_k({uni, {1.0f, 0.0f}}, 1, ExclusionFilter::for_case(ExclusionMode::SameCase, "A"), snap);
  ASSERT_EQ(n.size(), 1u);
  EXPECT_EQ(n[0].case_id, "B");
  EXPECT_EQ(n[0].rank, 1u);
}

TEST_F(ThreeCases, SamePatientExcludesSiblings) {
  const auto n = top_k({uni, {1.0f, 0.0f}}, 5, ExclusionFilter::for_case(ExclusionMode::SamePatient, "A"), snap);
  ASSERT_EQ(n.size(), 1u);
  EXPECT_EQ(n[0].case_id, "C");
}

TEST_F(ThreeCases, KBeyondEligibleReturnsAll) {
  const auto n = top_k({uni, {1.0f, 0.0f}}, 10, ExclusionFilter::none(), snap);
  ASSERT_EQ(n.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(n[i].rank, i + 1);
  EXPECT_EQ(n[0].case_id, "A");
}

TEST_F(ThreeCases, ExplicitExclusions) {
  ExclusionFilter f;
  f.excluded_case_ids = {"A", "B"};
  const auto n = top_k({uni, {1.0f, 0.0f}}, 3, f, snap);
  ASSERT_EQ(n.size(), 1u);
  EXPECT_EQ(n[0].case_id, "C");
}

TEST_F(ThreeCases, QueryErrors) {
  auto code = [&](const Embedding& q, std::size_t k) {
    try {
      top_k(q, k, ExclusionFilter::none(), snap);
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::IoError;
  };
  EXPECT_EQ(code({uni, {1, 0}}, 0), ErrorCode::InvalidArgument);
  EXPECT_EQ(code({EncoderId("virchow"), {1, 0}}, 1), ErrorCode::UnknownEncoder);
  EXPECT_EQ(code({uni, {1, 0, 0}}, 1), ErrorCode::DimensionMismatch);
  EXPECT_EQ(code({uni, {0, 0}}, 1), ErrorCode::ZeroNormVector);
}

TEST(TopK, IdenticalVectorsTieBreakByCaseId) {
  StoreBuilder b;
  b.register_encoder("uni", 3);
  for (const char* id : {"c2", "c1"}) {
    auto c = testutil::make_case(id, id);
    c.embeddings[EncoderId("uni")] = {0.3f, 0.4f, 0.5f};
    b.upsert_case(c);
  }
  const StoreSnapshot snap = b.build(1);
  const auto n = top_k({EncoderId("uni"), {0.3f, 0.4f, 0.5f}}, 2, ExclusionFilter::none(), snap);
  ASSERT_EQ(n.size(), 2u);
  EXPECT_EQ(n[0].case_id, "c1");
  EXPECT_EQ(n[1].case_id, "c2");
  EXPECT_EQ(n[0].score, n[1].score);
}

TEST(TopKProperty, MatchesExhaustiveOracle) {
  testutil::RandomStoreOptions opt;
  opt.max_cases = 300;
  for (std::uint64_t seed = 0; seed < 60; ++seed) {
    const StoreSnapshot snap = testutil::random_store(seed, opt);
    std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
    const auto& anchor = snap.cases()[rng() % snap.cases().size()];
    const EncoderId enc(seed % 2 ? "alpha" : "beta");
    const std::size_t dim = *snap.registry().dimension(enc);
    const Vector q = anchor.embeddings.count(enc) ? anchor.embeddings.at(enc) : testutil::random_vector(rng, dim);
    for (auto mode : {ExclusionMode::None, ExclusionMode::SameCase, ExclusionMode::SamePatient}) {
      const auto f = ExclusionFilter::for_case(mode, anchor.case_id);
      for (std::size_t k : {1u, 3u, 5u, 1000u}) {
        const auto got = top_k({enc, q}, k, f, snap);
        const auto want = oracle_top_k(snap, enc, q, k, f);
        ASSERT_EQ(got.size(), want.size()) << "seed " << seed;
        for (std::size_t i = 0; i < got.size(); ++i) {
          ASSERT_EQ(got[i].case_id, want[i].id) << "seed " << seed << " k " << k << " i " << i;
          ASSERT_NEAR(got[i].score, want[i].score, 1e-12);
          ASSERT_EQ(got[i].rank, i + 1);
        }
      }
    }
  }
}

TEST(TopKProperty, ParallelEqualsSerialAndIsDeterministic) {
  testutil::RandomStoreOptions opt;
  opt.max_cases = 2000;
  opt.dims[0] = 64;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const StoreSnapshot snap = testutil::random_store(seed, opt);
    std::mt19937_64 rng(seed);
    const Vector q = testutil::random_vector(rng, 64);
    const auto f = ExclusionFilter::none();
    const auto serial = top_k({EncoderId("alpha"), q}, 25, f, snap, Execution::Serial);
    const auto parallel = top_k({EncoderId("alpha"), q}, 25, f, snap, Execution::Parallel);
    EXPECT_EQ(serial, parallel);
    EXPECT_EQ(parallel, top_k({EncoderId("alpha"), q}, 25, f, snap, Execution::Parallel));
  }
}
