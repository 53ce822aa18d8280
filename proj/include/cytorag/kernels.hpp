#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <span>

#include "cytorag/store.hpp"

namespace cytorag {

/// Selects between the OpenMP kernels and the serial reference path. Both
/// produce bit-identical scores; the serial path exists for testing and
/// benchmarking.
enum class Execution { Serial, Parallel };

namespace kernels {

/// Accumulates in double regardless of the component type.
template <std::floating_point T>
double dot(std::span<const T> a, std::span<const T> b) {
  double acc = 0.0;
  const std::size_t n = a.size();
  const T* pa = a.data();
  const T* pb = b.data();
#pragma omp simd reduction(+ : acc)
  for (std::size_t i = 0; i < n; ++i) {
    acc += static_cast<double>(pa[i]) * static_cast<double>(pb[i]);
  }
  return acc;
}

template <std::floating_point T>
double norm(std::span<const T> a) {
  return std::sqrt(dot(a, a));
}

inline double clamp_unit(double x) { return std::clamp(x, -1.0, 1.0); }

/// out[r] = clamp(dot(query, row r) / (query_norm * norm r)) for every row.
void score_rows_serial(const EncoderMatrix& matrix, std::span<const float> query,
                       double query_norm, std::span<double> out);
void score_rows_parallel(const EncoderMatrix& matrix, std::span<const float> query,
                         double query_norm, std::span<double> out);

inline void score_rows(Execution exec, const EncoderMatrix& matrix,
                       std::span<const float> query, double query_norm,
                       std::span<double> out) {
  if (exec == Execution::Parallel) {
    score_rows_parallel(matrix, query, query_norm, out);
  } else {
    score_rows_serial(matrix, query, query_norm, out);
  }
}

}  // namespace kernels
}  // namespace cytorag
