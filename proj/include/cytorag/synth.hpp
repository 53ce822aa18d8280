#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "cytorag/store.hpp"

namespace cytorag {

/// Portable Gaussian source: std::mt19937_64 (bit-exact across standard
/// libraries), 53-bit uniforms, Marsaglia polar normals. Avoids the
/// implementation-defined std:: distributions.
class PortableRng {
 public:
  explicit PortableRng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform in [0, 1).
  double uniform();
  /// Uniform integer in [0, bound) by rejection; bound >= 1.
  std::uint64_t below(std::uint64_t bound);
  double normal();

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

struct SynthConfig {
  std::size_t n_cases = 300;
  std::size_t n_classes = 3;
  std::size_t dim = 64;
  /// Inter-centroid distance divided by the within-cluster RMS radius.
  double separation = 6.0;
  std::uint64_t seed = 0;
  std::size_t patients_per_class = 4;
  std::vector<std::string> encoders{"uni", "gigapath", "virchow", "vit32"};
  /// Permute embeddings across cases after generation so labels carry no
  /// geometric signal.
  bool shuffle_labels = false;

  /// Throws InvalidArgument.
  void validate() const;
};

struct SynthCorpus {
  EncoderRegistry registry;
  std::vector<CaseRecord> cases;

  StoreSnapshot to_snapshot() const;
};

/// Isotropic Gaussian clusters, one per class, under every encoder. Class c
/// gets a fixed diagnosis, Bethesda category and malignancy; cases are
/// assigned round-robin to classes and grouped into patients per class.
SynthCorpus generate_synthetic(const SynthConfig& config);

/// Writes metadata.jsonl and embeddings.jsonl into `dir`.
void write_corpus(const SynthCorpus& corpus, const std::filesystem::path& dir);

}  // namespace cytorag
