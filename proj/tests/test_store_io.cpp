#include <gtest/gtest.h>

#include <cstring>
#include <random>

#include "cytorag/errors.hpp"
#include "cytorag/store_io.hpp"
#include "test_util.hpp"

using namespace cytorag;

namespace {

ErrorCode open_code(const std::filesystem::path& p) {
  try {
    open_store(p);
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "open_store accepted " << p;
  return ErrorCode::IoError;
}

bool bitwise_equal(const StoreSnapshot& a, const StoreSnapshot& b) {
  if (a.cases().size() != b.cases().size()) return false;
  for (std::size_t i = 0; i < a.cases().size(); ++i) {
    const auto& x = a.cases()[i].embeddings;
    const auto& y = b.cases()[i].embeddings;
    if (x.size() != y.size()) return false;
    for (auto ix = x.begin(), iy = y.begin(); ix != x.end(); ++ix, ++iy) {
      if (ix->first != iy->first || ix->second.size() != iy->second.size()) return false;
      if (std::memcmp(ix->second.data(), iy->second.data(), ix->second.size() * sizeof(float)) != 0) return false;
    }
  }
  return true;
}

}  // namespace

TEST(StoreIo, ThreeCaseRoundTrip) {
  testutil::TempDir dir;
  StoreBuilder b;
  b.register_encoder("uni", 3);
  for (int i = 0; i < 3; ++i) {
    auto c = testutil::make_case("c" + std::to_string(i), "p1");
    c.embeddings[EncoderId("uni")] = {0.1f * static_cast<float>(i + 1), -2.5f, 1e-30f};
    b.upsert_case(c);
  }
  const StoreSnapshot snap = b.build(7);
  save_store(snap, dir / "s.store");
  const StoreSnapshot back = open_store(dir / "s.store");
  EXPECT_EQ(back, snap);
  EXPECT_EQ(back.version(), 7u);
}

TEST(StoreIo, EmptyStoreKeepsRegistry) {
  testutil::TempDir dir;
  StoreBuilder b;
  b.register_encoder("uni", 1024);
  b.register_encoder("vit32", 768);
  save_store(b.build(2), dir / "e.store");
  const StoreSnapshot back = open_store(dir / "e.store");
  EXPECT_TRUE(back.cases().empty());
  EXPECT_EQ(back.registry().size(), 2u);
  EXPECT_EQ(*back.registry().dimension(EncoderId("vit32")), 768u);
}

TEST(StoreIo, UnknownMagicIsVersionError) {
  testutil::TempDir dir;
  testutil::write_file(dir / "bad.store", std::string("NOTAREALSTOREFILE...", 20));
  EXPECT_EQ(open_code(dir / "bad.store"), ErrorCode::VersionError);
}

TEST(StoreIo, TruncatedAndCorruptedAreFormatErrors) {
  testutil::TempDir dir;
  save_store(testutil::random_store(3), dir / "s.store");
  const std::string bytes = testutil::read_file(dir / "s.store");
  testutil::write_file(dir / "trunc.store", bytes.substr(0, bytes.size() - 9));
  EXPECT_EQ(open_code(dir / "trunc.store"), ErrorCode::FormatError);
  std::string flipped = bytes;
  flipped[flipped.size() / 2] ^= 0x5a;
  testutil::write_file(dir / "flip.store", flipped);
  EXPECT_EQ(open_code(dir / "flip.store"), ErrorCode::FormatError);
  EXPECT_EQ(open_code(dir / "missing.store"), ErrorCode::IoError);
}

TEST(StoreIo, FutureFormatVersionRejected) {
  testutil::TempDir dir;
  save_store(testutil::random_store(4), dir / "s.store");
  std::string bytes = testutil::read_file(dir / "s.store");
  bytes[8] = static_cast<char>(kStoreFormatVersion + 1);
  testutil::write_file(dir / "v.store", bytes);
  EXPECT_EQ(open_code(dir / "v.store"), ErrorCode::VersionError);
}

TEST(StoreIoProperty, RandomStoresRoundTripBitExact) {
  testutil::TempDir dir;
  for (std::uint64_t seed = 100; seed < 150; ++seed) {
    const StoreSnapshot snap = testutil::random_store(seed);
    save_store(snap, dir / "r.store");
    const StoreSnapshot back = open_store(dir / "r.store");
    ASSERT_EQ(back, snap) << "seed " << seed;
    ASSERT_TRUE(bitwise_equal(back, snap)) << "seed " << seed;
  }
}
