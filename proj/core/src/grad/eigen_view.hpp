#pragma once

// Zero-copy Eigen views over row-major tensor storage (internal).

#include <Eigen/Core>
#include <cstddef>

namespace textshield::grad {

using RowMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic>;

inline Eigen::Map<RowMatrix> as_matrix(double* data, std::size_t rows,
                                       std::size_t cols) {
  return {data, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols)};
}

inline Eigen::Map<const RowMatrix> as_matrix(const double* data,
                                             std::size_t rows,
                                             std::size_t cols) {
  return {data, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols)};
}

inline Eigen::Map<const RowVector> as_row(const double* data, std::size_t n) {
  return {data, static_cast<Eigen::Index>(n)};
}

inline Eigen::Map<RowVector> as_row(double* data, std::size_t n) {
  return {data, static_cast<Eigen::Index>(n)};
}

// Overlapping sliding windows of a [L, k] matrix: row t spans rows t..t+w-1,
// i.e. `window` = w*k contiguous values starting at t*k.
inline Eigen::Map<const RowMatrix, 0, Eigen::OuterStride<>> as_windows(
    const double* data, std::size_t steps, std::size_t window,
    std::size_t stride) {
  return {data, static_cast<Eigen::Index>(steps),
          static_cast<Eigen::Index>(window),
          Eigen::OuterStride<>(static_cast<Eigen::Index>(stride))};
}

}  // namespace textshield::grad
