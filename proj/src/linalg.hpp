#pragma once

// Small dense kernels shared by the cell and layer implementations. Each one
// has a single fixed summation order, which the streaming path relies on to
// reproduce the batch path bit for bit.

#include <cstddef>
#include <span>

#include "spikedec/tensor.hpp"

namespace spikedec::detail {

/// out[j] += sum_i v[i] * m(i, j) for m of shape [n x k].
inline void add_vec_mat(std::span<const double> v, const Tensor& m, std::span<double> out) {
  const std::size_t n = m.dim(0), k = m.dim(1);
  const double* w = m.data();
  for (std::size_t i = 0; i < n; ++i) {
    const double vi = v[i];
    if (vi == 0.0) continue;
    const double* row = w + i * k;
    for (std::size_t j = 0; j < k; ++j) out[j] += vi * row[j];
  }
}

/// out[i] += sum_j m(i, j) * g[j] for m of shape [n x k].
inline void add_mat_vec(const Tensor& m, std::span<const double> g, std::span<double> out) {
  const std::size_t n = m.dim(0), k = m.dim(1);
  const double* w = m.data();
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = w + i * k;
    double acc = 0.0;
    for (std::size_t j = 0; j < k; ++j) acc += row[j] * g[j];
    out[i] += acc;
  }
}

/// grad(i, j) += v[i] * g[j].
inline void add_outer(std::span<const double> v, std::span<const double> g, Tensor& grad) {
  const std::size_t n = grad.dim(0), k = grad.dim(1);
  double* w = grad.data();
  for (std::size_t i = 0; i < n; ++i) {
    const double vi = v[i];
    if (vi == 0.0) continue;
    double* row = w + i * k;
    for (std::size_t j = 0; j < k; ++j) row[j] += vi * g[j];
  }
}

inline void add_into(std::span<const double> src, std::span<double> dst) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

}  // namespace spikedec::detail
