#include "cytorag/synth.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <utility>

#include "cytorag/errors.hpp"
#include "cytorag/json_io.hpp"

namespace cytorag {

double PortableRng::uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

std::uint64_t PortableRng::below(std::uint64_t bound) {
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
  std::uint64_t x = engine_();
  while (x >= limit) x = engine_();
  return x % bound;
}

double PortableRng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u, v, s;
  do {
    u = 2.0 * uniform() - 1.0;
    v = 2.0 * uniform() - 1.0;
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  const double m = std::sqrt(-2.0 * std::log(s) / s);
  spare_ = v * m;
  has_spare_ = true;
  return u * m;
}

void SynthConfig::validate() const {
  if (n_classes < 2) throw Error(ErrorCode::InvalidArgument, "synth: classes must be >= 2");
  if (n_cases < n_classes) throw Error(ErrorCode::InvalidArgument, "synth: cases must be >= classes");
  if (dim < 2) throw Error(ErrorCode::InvalidArgument, "synth: dim must be >= 2");
  if (!(separation > 0.0)) throw Error(ErrorCode::InvalidArgument, "synth: separation must be > 0");
  if (patients_per_class < 1) {
    throw Error(ErrorCode::InvalidArgument, "synth: patients per class must be >= 1");
  }
  if (encoders.empty()) throw Error(ErrorCode::InvalidArgument, "synth: at least one encoder");
}

namespace {

struct ClassProfile {
  const char* surgical;
  const char* cytology;
  Bethesda bethesda;
  Malignancy malignancy;
  const char* interpretation;
};

constexpr ClassProfile kProfiles[] = {
    {"papillary thyroid carcinoma", "papillary thyroid carcinoma", Bethesda::VI,
     Malignancy::Malignant, "Papillary fragments with nuclear grooves and pseudoinclusions."},
    {"follicular adenoma", "follicular neoplasm", Bethesda::IV, Malignancy::Benign,
     "Crowded microfollicles with scant colloid."},
    {"graves disease", "benign follicular nodule", Bethesda::II, Malignancy::Benign,
     "Flat sheets of follicular cells with flame cells and abundant colloid."},
    {"nodular hyperplasia", "atypia of undetermined significance", Bethesda::III,
     Malignancy::Benign, "Focal nuclear enlargement in otherwise bland follicular cells."},
    {"follicular carcinoma", "suspicious for malignancy", Bethesda::V, Malignancy::Malignant,
     "Microfollicles with nuclear atypia; invasion cannot be assessed on cytology."},
    {"lymphocytic thyroiditis", "benign follicular nodule", Bethesda::II, Malignancy::Benign,
     "Oncocytes within a polymorphous lymphoid background."},
    {"medullary thyroid carcinoma", "medullary thyroid carcinoma", Bethesda::VI,
     Malignancy::Malignant, "Discohesive plasmacytoid cells with salt-and-pepper chromatin."},
    {"colloid nodule", "nondiagnostic", Bethesda::I, Malignancy::Benign,
     "Watery colloid with too few follicular cells for adequacy."},
};

// Classes beyond the table reuse a profile under a distinct diagnosis name.
std::pair<ClassProfile, std::string> profile_for(std::size_t c) {
  constexpr std::size_t n = std::size(kProfiles);
  const ClassProfile& p = kProfiles[c % n];
  std::string surgical = p.surgical;
  if (c >= n) surgical += " variant " + std::to_string(c / n);
  return {p, std::move(surgical)};
}

std::string padded(char prefix, std::size_t value, std::size_t width) {
  std::string digits = std::to_string(value);
  if (digits.size() < width) digits.insert(0, width - digits.size(), '0');
  return prefix + digits;
}

// Orthonormal directions when possible, otherwise independent unit vectors.
std::vector<std::vector<double>> class_directions(PortableRng& rng, std::size_t classes,
                                                  std::size_t dim) {
  std::vector<std::vector<double>> dirs;
  for (std::size_t c = 0; c < classes; ++c) {
    std::vector<double> v(dim);
    for (auto& x : v) x = rng.normal();
    if (classes <= dim) {
      for (const auto& d : dirs) {
        double proj = 0.0;
        for (std::size_t i = 0; i < dim; ++i) proj += v[i] * d[i];
        for (std::size_t i = 0; i < dim; ++i) v[i] -= proj * d[i];
      }
    }
    double norm = 0.0;
    for (const double x : v) norm += x * x;
    norm = std::sqrt(norm);
    for (auto& x : v) x /= norm;
    dirs.push_back(std::move(v));
  }
  return dirs;
}

}  // namespace

SynthCorpus generate_synthetic(const SynthConfig& config) {
  config.validate();
  PortableRng rng(config.seed);
  SynthCorpus corpus;

  const std::size_t id_width = std::max<std::size_t>(3, std::to_string(config.n_cases).size());
  const std::size_t total_patients = config.n_classes * config.patients_per_class;
  const std::size_t patient_width = std::max<std::size_t>(3, std::to_string(total_patients).size());
  std::vector<std::size_t> slides_per_patient(total_patients, 0);

  corpus.cases.resize(config.n_cases);
  for (std::size_t i = 0; i < config.n_cases; ++i) {
    const std::size_t c = i % config.n_classes;
    const auto [p, surgical] = profile_for(c);
    const std::size_t patient = c * config.patients_per_class +
                                (i / config.n_classes) % config.patients_per_class;
    CaseRecord& r = corpus.cases[i];
    r.case_id = padded('c', i + 1, id_width);
    r.patient_id = padded('p', patient + 1, patient_width);
    r.slide_id = "s" + std::to_string(++slides_per_patient[patient]);
    r.roi_id = "r1";
    r.metadata.cytology_diagnosis = p.cytology;
    r.metadata.surgical_diagnosis = surgical;
    r.metadata.bethesda = p.bethesda;
    r.metadata.malignancy = p.malignancy;
    r.metadata.interpretation = p.interpretation;
    r.metadata.stain = "Diff-Quik";
    r.metadata.magnification = 40;
  }

  // Pairwise centroid distance = separation, within-cluster RMS radius = 1.
  const double radius = config.separation / std::sqrt(2.0);
  const double sigma = 1.0 / std::sqrt(static_cast<double>(config.dim));
  for (const auto& name : config.encoders) {
    const EncoderId encoder(name);
    corpus.registry.add(encoder, config.dim);
    const auto dirs = class_directions(rng, config.n_classes, config.dim);
    for (std::size_t i = 0; i < config.n_cases; ++i) {
      const auto& dir = dirs[i % config.n_classes];
      Vector v(config.dim);
      for (std::size_t d = 0; d < config.dim; ++d) {
        v[d] = static_cast<float>(radius * dir[d] + sigma * rng.normal());
      }
      corpus.cases[i].embeddings.emplace(encoder, std::move(v));
    }
  }

  if (config.shuffle_labels) {
    for (std::size_t i = config.n_cases - 1; i > 0; --i) {
      const auto j = static_cast<std::size_t>(rng.below(i + 1));
      std::swap(corpus.cases[i].embeddings, corpus.cases[j].embeddings);
    }
  }
  return corpus;
}

StoreSnapshot SynthCorpus::to_snapshot() const {
  StoreBuilder builder;
  for (const auto& [encoder, dim] : registry.entries()) builder.register_encoder(encoder.str(), dim);
  for (const auto& c : cases) builder.upsert_case(c);
  return builder.build(1);
}

void write_corpus(const SynthCorpus& corpus, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  std::ofstream meta(dir / "metadata.jsonl", std::ios::binary | std::ios::trunc);
  std::ofstream emb(dir / "embeddings.jsonl", std::ios::binary | std::ios::trunc);
  if (!meta || !emb) throw Error(ErrorCode::IoError, "cannot write corpus into '" + dir.string() + "'");
  for (const auto& c : corpus.cases) {
    meta << metadata_to_json(c).dump() << '\n';
    for (const auto& [encoder, vector] : c.embeddings) {
      emb << embedding_jsonl_line(c.case_id, encoder, vector) << '\n';
    }
  }
  if (!meta.flush() || !emb.flush()) {
    throw Error(ErrorCode::IoError, "write to '" + dir.string() + "' failed");
  }
}

}  // namespace cytorag
