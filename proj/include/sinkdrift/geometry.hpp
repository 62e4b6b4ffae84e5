#pragma once

// Point clouds, pairwise costs and Gibbs kernels.
//
// A point cloud is an N x d matrix holding one point per row; it stands for
// the uniform empirical measure (1/N) sum_i delta_{x_i}.

#include <cmath>
#include <limits>
#include <string>

#include <Eigen/Dense>

#include "sinkdrift/error.hpp"

namespace sinkdrift {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

/// One point per row.
template <typename Scalar>
using PointCloud = Matrix<Scalar>;

using Index = Eigen::Index;

enum class CostKind {
  SqEuclideanHalf,  // 0.5 * |x - y|^2
  SqEuclidean,      // |x - y|^2
  Euclidean,        // |x - y|
};

inline const char* to_string(CostKind kind) {
  switch (kind) {
    case CostKind::SqEuclideanHalf: return "sq_euclidean_half";
    case CostKind::SqEuclidean: return "sq_euclidean";
    case CostKind::Euclidean: return "euclidean";
  }
  return "unknown";
}

template <typename Scalar>
struct CostMatrix {
  Matrix<Scalar> values;
  CostKind kind = CostKind::SqEuclideanHalf;

  Index rows() const { return values.rows(); }
  Index cols() const { return values.cols(); }
};

/// Throws InvalidArgument unless the cloud is non-empty and finite.
template <typename Derived>
void validate_cloud(const Eigen::MatrixBase<Derived>& points, const char* name = "point cloud") {
  if (points.rows() < 1 || points.cols() < 1) {
    throw InvalidArgument(std::string(name) + " must have at least one point and one dimension");
  }
  if (!points.allFinite()) throw InvalidArgument(std::string(name) + " has non-finite coordinates");
}

template <typename Scalar>
Scalar point_cost(const Eigen::Ref<const RowVector<Scalar>>& x,
                  const Eigen::Ref<const RowVector<Scalar>>& y, CostKind kind) {
  const Scalar sq = (x - y).squaredNorm();
  switch (kind) {
    case CostKind::SqEuclideanHalf: return Scalar(0.5) * sq;
    case CostKind::SqEuclidean: return sq;
    case CostKind::Euclidean: return std::sqrt(sq);
  }
  return sq;
}

/// values(i, j) = cost(x_i, y_j). Evaluated per pair from coordinate
/// differences so that identical points give an exact zero.
template <typename DerivedX, typename DerivedY>
CostMatrix<typename DerivedX::Scalar> pairwise_cost(const Eigen::MatrixBase<DerivedX>& x,
                                                    const Eigen::MatrixBase<DerivedY>& y,
                                                    CostKind kind) {
  using Scalar = typename DerivedX::Scalar;
  validate_cloud(x, "X");
  validate_cloud(y, "Y");
  if (x.cols() != y.cols()) {
    throw InvalidArgument("pairwise_cost: dimension mismatch (" + std::to_string(x.cols()) +
                          " vs " + std::to_string(y.cols()) + ")");
  }
  CostMatrix<Scalar> cost{Matrix<Scalar>(x.rows(), y.rows()), kind};
  for (Index j = 0; j < y.rows(); ++j) {
    for (Index i = 0; i < x.rows(); ++i) {
      Scalar sq(0);
      for (Index k = 0; k < x.cols(); ++k) {
        const Scalar diff = x(i, k) - y(j, k);
        sq += diff * diff;
      }
      switch (kind) {
        case CostKind::SqEuclideanHalf: cost.values(i, j) = Scalar(0.5) * sq; break;
        case CostKind::SqEuclidean: cost.values(i, j) = sq; break;
        case CostKind::Euclidean: cost.values(i, j) = std::sqrt(sq); break;
      }
    }
  }
  return cost;
}

/// Adds `penalty` to each diagonal entry (self-distance masking).
template <typename Scalar>
CostMatrix<Scalar> mask_self_distances(CostMatrix<Scalar> cost, Scalar penalty) {
  if (cost.rows() != cost.cols()) {
    throw InvalidArgument("mask_self_distances: cost matrix must be square");
  }
  cost.values.diagonal().array() += penalty;
  return cost;
}

}  // namespace sinkdrift
