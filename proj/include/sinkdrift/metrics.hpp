#pragma once

// Evaluation metrics: exact empirical W2^2 via linear assignment, debiased
// Sinkhorn divergence and mode coverage.

#include <algorithm>
#include <limits>
#include <optional>
#include <vector>

#include "sinkdrift/coupling.hpp"
#include "sinkdrift/geometry.hpp"

namespace sinkdrift {

struct AssignmentResult {
  /// permutation[i] is the column assigned to row i.
  std::vector<Index> permutation;
  double total_cost = 0;
};

/// Minimum-cost perfect matching on a square cost matrix (shortest augmenting
/// paths with row/column potentials, O(n^3)). total_cost is the plain sum of
/// the matched entries, accumulated in row order.
template <typename Scalar>
AssignmentResult solve_assignment(const Matrix<Scalar>& cost) {
  const Index n = cost.rows();
  if (n != cost.cols()) throw InvalidArgument("solve_assignment: cost matrix must be square");
  if (!cost.allFinite()) throw InvalidArgument("solve_assignment: cost matrix must be finite");
  AssignmentResult result;
  if (n == 0) return result;

  const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> a = cost;
  const Scalar inf = std::numeric_limits<Scalar>::infinity();
  // 1-based bookkeeping; column 0 is a virtual source.
  std::vector<Scalar> u(n + 1, Scalar(0)), v(n + 1, Scalar(0)), minv(n + 1);
  std::vector<Index> match(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (Index row = 1; row <= n; ++row) {
    match[0] = row;
    Index j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const Index i0 = match[j0];
      Scalar delta = inf;
      Index j1 = 0;
      const Scalar* arow = a.data() + (i0 - 1) * n;
      for (Index j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const Scalar cur = arow[j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (Index j = 0; j <= n; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const Index j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  result.permutation.assign(n, 0);
  for (Index j = 1; j <= n; ++j) result.permutation[match[j] - 1] = j - 1;
  Scalar total(0);
  for (Index i = 0; i < n; ++i) total += cost(i, result.permutation[i]);
  result.total_cost = static_cast<double>(total);
  return result;
}

/// Empirical squared 2-Wasserstein distance between two equal-size uniform
/// clouds: min over bijections sigma of (1/N) sum_i |x_i - y_sigma(i)|^2.
template <typename Scalar>
AssignmentResult exact_w2sq(const Matrix<Scalar>& x, const Matrix<Scalar>& y, Index cap = 2000) {
  if (x.rows() != y.rows()) throw InvalidArgument("exact_w2sq: clouds must have equal sizes");
  if (x.rows() > cap) {
    throw InvalidArgument("exact_w2sq: " + std::to_string(x.rows()) + " points exceeds the cap of " +
                          std::to_string(cap));
  }
  const Scalar n = static_cast<Scalar>(x.rows());
  const Matrix<Scalar> cost = pairwise_cost(x, y, CostKind::SqEuclidean).values / n;
  return solve_assignment(cost);
}

struct DivergenceValue {
  double s = 0;
  double ot_xy = 0;
  double ot_xx = 0;
  double ot_yy = 0;
  int iterations = 0;
};

template <typename Scalar>
struct DivergenceOptions {
  /// Fixed number of Sinkhorn half-steps; converged plans when empty.
  std::optional<int> level;
  Scalar tol = Scalar(1e-9);
  int max_half_steps = 100000;
  CostKind cost = CostKind::SqEuclidean;
};

/// Transport cost <C, pi> of the uniform-marginal Sinkhorn plan.
template <typename Scalar>
std::pair<double, int> transport_cost(const Matrix<Scalar>& x, const Matrix<Scalar>& y, Scalar tau,
                                      const DivergenceOptions<Scalar>& opts) {
  const CostMatrix<Scalar> cost = pairwise_cost(x, y, opts.cost);
  const SinkhornOptions<Scalar> sk = opts.level
                                         ? SinkhornOptions<Scalar>::fixed(*opts.level)
                                         : SinkhornOptions<Scalar>::converged(opts.tol, opts.max_half_steps);
  const Coupling<Scalar> plan = sinkhorn(gibbs_kernel(cost, tau), sk);
  return {static_cast<double>(cost.values.cwiseProduct(plan.linear()).sum()), plan.iterations_used};
}

/// S = OT(X, Y) - OT(X, X) / 2 - OT(Y, Y) / 2 with cost-only OT terms
/// evaluated at the level-l or converged Sinkhorn plans.
template <typename Scalar>
DivergenceValue sinkhorn_divergence(const Matrix<Scalar>& x, const Matrix<Scalar>& y, Scalar tau,
                                    const DivergenceOptions<Scalar>& opts = {}) {
  if (!(tau > Scalar(0))) throw InvalidArgument("sinkhorn_divergence: tau must be positive");
  const auto [xy, it_xy] = transport_cost(x, y, tau, opts);
  const auto [xx, it_xx] = transport_cost(x, x, tau, opts);
  const auto [yy, it_yy] = transport_cost(y, y, tau, opts);
  DivergenceValue out;
  out.ot_xy = xy;
  out.ot_xx = xx;
  out.ot_yy = yy;
  out.s = xy - 0.5 * xx - 0.5 * yy;
  out.iterations = std::max({it_xy, it_xx, it_yy});
  return out;
}

/// Number of centers with at least max(1, N / (4 K)) points within `radius`.
template <typename Scalar>
int mode_coverage(const Matrix<Scalar>& x, const Matrix<Scalar>& centers, Scalar radius) {
  if (!(radius > Scalar(0))) throw InvalidArgument("mode_coverage: radius must be positive");
  if (centers.rows() == 0) return 0;
  if (x.cols() != centers.cols()) throw InvalidArgument("mode_coverage: dimension mismatch");
  const double threshold =
      std::max(1.0, static_cast<double>(x.rows()) / (4.0 * static_cast<double>(centers.rows())));
  int covered = 0;
  for (Index k = 0; k < centers.rows(); ++k) {
    Index hits = 0;
    for (Index i = 0; i < x.rows(); ++i) {
      if ((x.row(i) - centers.row(k)).norm() <= radius) ++hits;
    }
    if (static_cast<double>(hits) >= threshold) ++covered;
  }
  return covered;
}

}  // namespace sinkdrift
