#pragma once

// Row-major Eigen views over raw tensor storage. Eigen's single-threaded GEMM
// has a fixed accumulation order for a given problem size.

#include <Eigen/Core>

namespace biov::detail {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;
template <typename T>
using StridedMap = Eigen::Map<RowMat<T>, 0, Eigen::OuterStride<>>;
template <typename T>
using ConstStridedMap = Eigen::Map<const RowMat<T>, 0, Eigen::OuterStride<>>;

template <typename T>
ConstMatMap<T> cmat(const T* p, Eigen::Index rows, Eigen::Index cols) {
  return ConstMatMap<T>(p, rows, cols);
}
template <typename T>
MatMap<T> mmat(T* p, Eigen::Index rows, Eigen::Index cols) {
  return MatMap<T>(p, rows, cols);
}
/// Column block [col0, col0 + cols) of a row-major matrix with `stride` columns.
template <typename T>
ConstStridedMap<T> cblock(const T* p, Eigen::Index rows, Eigen::Index cols, Eigen::Index col0, Eigen::Index stride) {
  return ConstStridedMap<T>(p + col0, rows, cols, Eigen::OuterStride<>(stride));
}
template <typename T>
StridedMap<T> mblock(T* p, Eigen::Index rows, Eigen::Index cols, Eigen::Index col0, Eigen::Index stride) {
  return StridedMap<T>(p + col0, rows, cols, Eigen::OuterStride<>(stride));
}

}  // namespace biov::detail
