#include "cytorag/kernels.hpp"

#include <cstdint>

namespace cytorag::kernels {

void score_rows_serial(const EncoderMatrix& matrix, std::span<const float> query,
                       double query_norm, std::span<double> out) {
  const std::size_t rows = matrix.rows();
  for (std::size_t r = 0; r < rows; ++r) {
    out[r] = clamp_unit(dot(query, matrix.row(r)) / (query_norm * matrix.norms[r]));
  }
}

void score_rows_parallel(const EncoderMatrix& matrix, std::span<const float> query,
                         double query_norm, std::span<double> out) {
  const auto rows = static_cast<std::int64_t>(matrix.rows());
#pragma omp parallel for schedule(static) if (rows > 256)
  for (std::int64_t r = 0; r < rows; ++r) {
    const auto row = static_cast<std::size_t>(r);
    out[row] = clamp_unit(dot(query, matrix.row(row)) / (query_norm * matrix.norms[row]));
  }
}

}  // namespace cytorag::kernels
