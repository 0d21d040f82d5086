#pragma once

#include <cstddef>
#include <span>

#include <Eigen/Dense>

namespace pathcv {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
/// Row-major so that each sample (row) is a contiguous span.
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline std::span<const double> row_span(const RowMatrix& m, Eigen::Index r) {
  return {m.data() + r * m.cols(), static_cast<std::size_t>(m.cols())};
}
inline std::span<double> row_span(RowMatrix& m, Eigen::Index r) {
  return {m.data() + r * m.cols(), static_cast<std::size_t>(m.cols())};
}
inline std::span<const double> as_span(const Vector& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}
inline Eigen::Map<const Vector> as_vector(std::span<const double> s) {
  return {s.data(), static_cast<Eigen::Index>(s.size())};
}

}  // namespace pathcv
