#include "cytorag/store.hpp"

#include <atomic>
#include <cmath>
#include <set>
#include <tuple>

#include "cytorag/errors.hpp"
#include "cytorag/kernels.hpp"

namespace cytorag {

void EncoderRegistry::add(const EncoderId& id, std::size_t dim) {
  if (dim < 1) {
    throw Error(ErrorCode::InvalidDimension,
                "encoder '" + id.str() + "': dimension must be >= 1");
  }
  if (!dims_.emplace(id, dim).second) {
    throw Error(ErrorCode::DuplicateEncoder, "encoder '" + id.str() + "' already registered");
  }
}

std::optional<std::size_t> EncoderRegistry::dimension(const EncoderId& id) const {
  const auto it = dims_.find(id);
  if (it == dims_.end()) return std::nullopt;
  return it->second;
}

StoreSnapshot::StoreSnapshot(EncoderRegistry registry, std::vector<CaseRecord> cases,
                             std::uint64_t version)
    : registry_(std::move(registry)), cases_(std::move(cases)), version_(version) {
  std::sort(cases_.begin(), cases_.end(),
            [](const CaseRecord& a, const CaseRecord& b) { return a.case_id < b.case_id; });
  by_id_.reserve(cases_.size());
  for (std::size_t i = 0; i < cases_.size(); ++i) by_id_.emplace(cases_[i].case_id, i);

  for (const auto& [encoder, dim] : registry_.entries()) {
    EncoderMatrix m;
    m.dim = dim;
    for (std::size_t i = 0; i < cases_.size(); ++i) {
      const auto it = cases_[i].embeddings.find(encoder);
      if (it == cases_[i].embeddings.end()) continue;
      m.case_index.push_back(static_cast<std::uint32_t>(i));
      m.data.insert(m.data.end(), it->second.begin(), it->second.end());
      m.norms.push_back(kernels::norm(std::span<const float>(it->second)));
    }
    matrices_.emplace(encoder, std::move(m));
  }
}

const CaseRecord* StoreSnapshot::find(std::string_view case_id) const {
  const auto idx = index_of(case_id);
  return idx ? &cases_[*idx] : nullptr;
}

std::optional<std::size_t> StoreSnapshot::index_of(std::string_view case_id) const {
  const auto it = by_id_.find(std::string(case_id));
  if (it == by_id_.end()) return std::nullopt;
  return it->second;
}

const EncoderMatrix* StoreSnapshot::matrix(const EncoderId& encoder) const {
  const auto it = matrices_.find(encoder);
  return it == matrices_.end() ? nullptr : &it->second;
}

bool StoreSnapshot::operator==(const StoreSnapshot& other) const {
  return version_ == other.version_ && registry_ == other.registry_ && cases_ == other.cases_;
}

void validate_vector(std::span<const float> vector) {
  for (const float x : vector) {
    if (!std::isfinite(x)) {
      throw Error(ErrorCode::NonFiniteVector, "vector contains a non-finite component");
    }
  }
  if (!(kernels::norm(vector) > 0.0)) {
    throw Error(ErrorCode::ZeroNormVector, "vector has zero norm");
  }
}

StoreBuilder::StoreBuilder(const StoreSnapshot& base) : registry_(base.registry()) {
  for (const auto& record : base.cases()) cases_.emplace(record.case_id, record);
}

void StoreBuilder::register_encoder(std::string_view name, std::size_t dim) {
  registry_.add(EncoderId(name), dim);
  dirty_ = true;
}

void StoreBuilder::validate_embedding(const EncoderId& encoder,
                                      std::span<const float> vector) const {
  const auto dim = registry_.dimension(encoder);
  if (!dim) {
    throw Error(ErrorCode::UnknownEncoder, "encoder '" + encoder.str() + "' is not registered");
  }
  if (vector.size() != *dim) {
    throw Error(ErrorCode::DimensionMismatch,
                "encoder '" + encoder.str() + "' expects " + std::to_string(*dim) +
                    " components, got " + std::to_string(vector.size()));
  }
  validate_vector(vector);
}

std::string StoreBuilder::upsert_case(CaseRecord record) {
  if (record.case_id.empty()) {
    throw Error(ErrorCode::InvalidMetadata, "case_id must be nonempty");
  }
  if (record.metadata.magnification == 0) {
    throw Error(ErrorCode::InvalidMetadata, "magnification must be > 0");
  }
  for (const auto& [encoder, vector] : record.embeddings) validate_embedding(encoder, vector);

  const auto key = std::tie(record.patient_id, record.slide_id, record.roi_id);
  for (const auto& [id, other] : cases_) {
    if (id != record.case_id && std::tie(other.patient_id, other.slide_id, other.roi_id) == key) {
      throw Error(ErrorCode::InvalidMetadata,
                  "(patient_id, slide_id, roi_id) already used by case '" + id + "'");
    }
  }
  std::string id = record.case_id;
  cases_.insert_or_assign(id, std::move(record));
  dirty_ = true;
  return id;
}

void StoreBuilder::attach_embedding(std::string_view case_id, const Embedding& embedding) {
  const auto it = cases_.find(case_id);
  if (it == cases_.end()) {
    throw Error(ErrorCode::UnknownCase, "unknown case '" + std::string(case_id) + "'");
  }
  validate_embedding(embedding.encoder, embedding.vector);
  it->second.embeddings.insert_or_assign(embedding.encoder, embedding.vector);
  dirty_ = true;
}

const CaseRecord* StoreBuilder::find(std::string_view case_id) const {
  const auto it = cases_.find(case_id);
  return it == cases_.end() ? nullptr : &it->second;
}

StoreSnapshot StoreBuilder::build(std::uint64_t version) const {
  std::vector<CaseRecord> cases;
  cases.reserve(cases_.size());
  for (const auto& [id, record] : cases_) cases.push_back(record);
  return StoreSnapshot(registry_, std::move(cases), version);
}

Store::Store() : current_(std::make_shared<const StoreSnapshot>()) {}

Store::Store(StoreSnapshot initial)
    : current_(std::make_shared<const StoreSnapshot>(std::move(initial))) {}

std::shared_ptr<const StoreSnapshot> Store::snapshot() const {
  return std::atomic_load_explicit(&current_, std::memory_order_acquire);
}

void Store::publish(std::shared_ptr<const StoreSnapshot> next) {
  std::atomic_store_explicit(&current_, std::move(next), std::memory_order_release);
}

void Store::batch(const std::function<void(StoreBuilder&)>& mutate) {
  std::lock_guard lock(write_mutex_);
  const auto base = snapshot();
  StoreBuilder builder(*base);
  mutate(builder);
  if (!builder.dirty()) return;
  publish(std::make_shared<const StoreSnapshot>(builder.build(base->version() + 1)));
}

void Store::register_encoder(std::string_view name, std::size_t dim) {
  batch([&](StoreBuilder& b) { b.register_encoder(name, dim); });
}

std::string Store::upsert_case(CaseRecord record) {
  std::string id;
  batch([&](StoreBuilder& b) { id = b.upsert_case(std::move(record)); });
  return id;
}

void Store::attach_embedding(std::string_view case_id, const Embedding& embedding) {
  batch([&](StoreBuilder& b) { b.attach_embedding(case_id, embedding); });
}

void Store::reset(StoreSnapshot snapshot) {
  std::lock_guard lock(write_mutex_);
  publish(std::make_shared<const StoreSnapshot>(std::move(snapshot)));
}

}  // namespace cytorag
