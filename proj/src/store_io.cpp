#include "cytorag/store_io.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "cytorag/errors.hpp"

namespace cytorag {

namespace {

class Writer {
 public:
  void bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    buf_.insert(buf_.end(), p, p + n);
  }
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<unsigned char>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<unsigned char>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  const std::vector<unsigned char>& buffer() const { return buf_; }

 private:
  std::vector<unsigned char> buf_;
};

class Reader {
 public:
  Reader(const unsigned char* data, std::size_t size) : data_(data), size_(size) {}

  void need(std::size_t n) const {
    if (size_ - pos_ < n) throw Error(ErrorCode::FormatError, "store file is truncated");
  }
  std::uint8_t u8() {
    need(1);
    return data_[pos_++];
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(data_[pos_++]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(data_[pos_++]) << (8 * i);
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string str() {
    const std::uint32_t n = u32();
    need(n);
    std::string s(reinterpret_cast<const char*>(data_ + pos_), n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == size_; }

 private:
  const unsigned char* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
};

std::uint32_t checksum(const unsigned char* data, std::size_t n) {
  return static_cast<std::uint32_t>(
      crc32(crc32(0L, Z_NULL, 0), data, static_cast<uInt>(n)));
}

}  // namespace

void save_store(const StoreSnapshot& snapshot, const std::filesystem::path& path) {
  Writer w;
  w.bytes(kStoreMagic, sizeof kStoreMagic);
  w.u32(kStoreFormatVersion);
  w.u64(snapshot.version());

  w.u32(static_cast<std::uint32_t>(snapshot.registry().size()));
  for (const auto& [encoder, dim] : snapshot.registry().entries()) {
    w.str(encoder.str());
    w.u32(static_cast<std::uint32_t>(dim));
  }

  w.u32(static_cast<std::uint32_t>(snapshot.cases().size()));
  for (const auto& c : snapshot.cases()) {
    w.str(c.case_id);
    w.str(c.patient_id);
    w.str(c.slide_id);
    w.str(c.roi_id);
    const auto& m = c.metadata;
    w.str(m.cytology_diagnosis);
    w.str(m.surgical_diagnosis);
    w.u8(static_cast<std::uint8_t>(m.bethesda));
    w.u8(static_cast<std::uint8_t>(m.malignancy));
    w.str(m.interpretation);
    w.str(m.stain);
    w.u32(m.magnification);
    w.u32(static_cast<std::uint32_t>(c.embeddings.size()));
    for (const auto& [encoder, vector] : c.embeddings) {
      w.str(encoder.str());
      w.u32(static_cast<std::uint32_t>(vector.size()));
      for (const float x : vector) w.f32(x);
    }
  }
  const auto& body = w.buffer();
  const std::uint32_t crc = checksum(body.data(), body.size());

  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot open '" + tmp.string() + "' for writing");
    out.write(reinterpret_cast<const char*>(body.data()),
              static_cast<std::streamsize>(body.size()));
    unsigned char trailer[4];
    for (int i = 0; i < 4; ++i) trailer[i] = static_cast<unsigned char>(crc >> (8 * i));
    out.write(reinterpret_cast<const char*>(trailer), 4);
    if (!out.flush()) throw Error(ErrorCode::IoError, "write to '" + tmp.string() + "' failed");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error(ErrorCode::IoError, "rename to '" + path.string() + "' failed: " + ec.message());
}

StoreSnapshot open_store(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open '" + path.string() + "'");
  const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                         std::istreambuf_iterator<char>());

  if (bytes.size() < sizeof kStoreMagic + 4 ||
      std::memcmp(bytes.data(), kStoreMagic, sizeof kStoreMagic) != 0) {
    throw Error(ErrorCode::VersionError, "'" + path.string() + "' is not a cytorag store");
  }
  Reader header(bytes.data() + sizeof kStoreMagic, 4);
  const std::uint32_t format = header.u32();
  if (format != kStoreFormatVersion) {
    throw Error(ErrorCode::VersionError,
                "unsupported store format version " + std::to_string(format));
  }
  if (bytes.size() < sizeof kStoreMagic + 4 + 4) {
    throw Error(ErrorCode::FormatError, "store file is truncated");
  }
  const std::size_t body_size = bytes.size() - 4;
  Reader trailer(bytes.data() + body_size, 4);
  if (trailer.u32() != checksum(bytes.data(), body_size)) {
    throw Error(ErrorCode::FormatError, "store checksum mismatch");
  }

  Reader r(bytes.data() + sizeof kStoreMagic + 4, body_size - sizeof kStoreMagic - 4);
  const std::uint64_t version = r.u64();

  StoreBuilder builder;
  const std::uint32_t n_encoders = r.u32();
  for (std::uint32_t i = 0; i < n_encoders; ++i) {
    std::string name = r.str();
    const std::uint32_t dim = r.u32();
    builder.register_encoder(name, dim);
  }

  const std::uint32_t n_cases = r.u32();
  for (std::uint32_t i = 0; i < n_cases; ++i) {
    CaseRecord c;
    c.case_id = r.str();
    c.patient_id = r.str();
    c.slide_id = r.str();
    c.roi_id = r.str();
    auto& m = c.metadata;
    m.cytology_diagnosis = r.str();
    m.surgical_diagnosis = r.str();
    const std::uint8_t bethesda = r.u8();
    const std::uint8_t malignancy = r.u8();
    if (bethesda < 1 || bethesda > 6 || malignancy > 2) {
      throw Error(ErrorCode::FormatError, "invalid label byte in case '" + c.case_id + "'");
    }
    m.bethesda = static_cast<Bethesda>(bethesda);
    m.malignancy = static_cast<Malignancy>(malignancy);
    m.interpretation = r.str();
    m.stain = r.str();
    m.magnification = r.u32();
    const std::uint32_t n_emb = r.u32();
    for (std::uint32_t e = 0; e < n_emb; ++e) {
      EncoderId encoder(r.str());
      const std::uint32_t dim = r.u32();
      r.need(static_cast<std::size_t>(dim) * 4);
      Vector v(dim);
      for (auto& x : v) x = r.f32();
      c.embeddings.emplace(std::move(encoder), std::move(v));
    }
    try {
      builder.upsert_case(std::move(c));
    } catch (const Error& e) {
      throw Error(ErrorCode::FormatError, std::string("corrupt store record: ") + e.what());
    }
  }
  if (!r.done()) throw Error(ErrorCode::FormatError, "trailing bytes in store file");
  return builder.build(version);
}

}  // namespace cytorag
