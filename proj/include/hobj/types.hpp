#pragma once

#include <Eigen/Core>

namespace hobj {

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Single-channel image, row-major so that (row, col) matches on-disk raster order.
template <typename Scalar>
using Image = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using RowMatrixXd = RowMatrix<double>;
using RowMatrixXf = RowMatrix<float>;
using ImageD = Image<double>;
using LabelImage = Image<int>;

using Index = Eigen::Index;

} // namespace hobj
