#pragma once

// Cross-minus-self drift fields.
//
//   V = P_pos * Y_pos - P_neg * Y_neg
//
// where P_pos and P_neg are row-stochastic barycentric weights built from the
// Gibbs kernels of the positive and negative cost matrices. The scheme picks
// how the kernels are normalized: one-sided (row softmax), two-sided
// (geometric mean of row and column softmax), or Sinkhorn followed by a row
// normalization. With a single Sinkhorn half-step the last one reduces to the
// one-sided scheme.

#include <string>
#include <vector>

#include "sinkdrift/coupling.hpp"
#include "sinkdrift/geometry.hpp"

namespace sinkdrift {

enum class Scheme { OneSided, TwoSided, Sinkhorn };

inline const char* to_string(Scheme scheme) {
  switch (scheme) {
    case Scheme::OneSided: return "one-sided";
    case Scheme::TwoSided: return "two-sided";
    case Scheme::Sinkhorn: return "sinkhorn";
  }
  return "unknown";
}

/// Masking of self-distances in the negative cost when Y_neg is X.
/// Default masks for the one- and two-sided schemes and not for Sinkhorn.
enum class MaskPolicy { Default, On, Off };

/// How the negative set relates to the query points.
enum class NegativeTerm { External, Self };

template <typename Scalar>
struct DriftConfig {
  Scheme scheme = Scheme::Sinkhorn;
  Scalar tau = Scalar(1);
  /// Sinkhorn half-steps (odd). Ignored when sinkhorn_tol is set.
  int sinkhorn_half_steps = 61;
  std::optional<Scalar> sinkhorn_tol;
  int sinkhorn_max_half_steps = 10000;
  MaskPolicy mask = MaskPolicy::Default;
  Scalar mask_penalty = Scalar(1e6);
  CostKind cost = CostKind::SqEuclideanHalf;

  bool masks_self() const {
    switch (mask) {
      case MaskPolicy::On: return true;
      case MaskPolicy::Off: return false;
      case MaskPolicy::Default: return scheme != Scheme::Sinkhorn;
    }
    return false;
  }

  SinkhornOptions<Scalar> sinkhorn_options() const {
    if (sinkhorn_tol) return SinkhornOptions<Scalar>::converged(*sinkhorn_tol, sinkhorn_max_half_steps);
    return SinkhornOptions<Scalar>::fixed(sinkhorn_half_steps);
  }

  void validate() const {
    if (!(tau > Scalar(0))) throw InvalidArgument("drift config: tau must be positive");
    if (scheme == Scheme::Sinkhorn && !sinkhorn_tol &&
        (sinkhorn_half_steps < 1 || sinkhorn_half_steps % 2 == 0)) {
      throw InvalidArgument("drift config: sinkhorn half-steps must be odd and >= 1, got " +
                            std::to_string(sinkhorn_half_steps));
    }
  }
};

template <typename Scalar>
struct DriftField {
  Matrix<Scalar> velocities;
  Scheme scheme = Scheme::Sinkhorn;
  bool masked_self = false;
  Scalar tau = Scalar(1);
  /// Row-stochastic weights actually used.
  Coupling<Scalar> p_pos;
  Coupling<Scalar> p_neg;
  std::vector<std::string> warnings;
};

namespace detail {

template <typename Scalar>
Coupling<Scalar> barycentric_weights(const CostMatrix<Scalar>& cost, const DriftConfig<Scalar>& cfg,
                                     const char* term) {
  const Coupling<Scalar> kernel = gibbs_kernel(cost, cfg.tau);
  const std::string context = std::string(to_string(cfg.scheme)) + " " + term + " coupling";
  try {
    switch (cfg.scheme) {
      case Scheme::OneSided: return row_normalize(kernel);
      case Scheme::TwoSided: return two_sided_normalize(kernel);
      case Scheme::Sinkhorn: return row_normalize(sinkhorn(kernel, cfg.sinkhorn_options()));
    }
  } catch (const DegenerateRow& e) {
    throw DegenerateRow(e.index(), e.is_column(), context);
  }
  return row_normalize(kernel);
}

template <typename Derived>
bool has_duplicate_rows(const Eigen::MatrixBase<Derived>& x) {
  for (Index i = 0; i < x.rows(); ++i)
    for (Index k = i + 1; k < x.rows(); ++k)
      if (x.row(i) == x.row(k)) return true;
  return false;
}

}  // namespace detail

/// Drift at the points of X toward Y_pos and away from Y_neg.
///
/// With NegativeTerm::Self, Y_neg must be X itself; the negative cost matrix
/// then gets its diagonal penalized when the config asks for masking.
template <typename Scalar>
DriftField<Scalar> drift_field(const Matrix<Scalar>& x, const Matrix<Scalar>& y_pos,
                               const Matrix<Scalar>& y_neg, const DriftConfig<Scalar>& cfg,
                               NegativeTerm negative = NegativeTerm::External) {
  cfg.validate();
  if (negative == NegativeTerm::Self && (y_neg.rows() != x.rows() || y_neg.cols() != x.cols())) {
    throw InvalidArgument("drift_field: self negative term must have the shape of X");
  }
  DriftField<Scalar> field;
  field.scheme = cfg.scheme;
  field.tau = cfg.tau;
  field.masked_self = negative == NegativeTerm::Self && cfg.masks_self();

  CostMatrix<Scalar> neg_cost = pairwise_cost(x, y_neg, cfg.cost);
  if (field.masked_self) neg_cost = mask_self_distances(std::move(neg_cost), cfg.mask_penalty);

  field.p_pos = detail::barycentric_weights(pairwise_cost(x, y_pos, cfg.cost), cfg, "positive");
  field.p_neg = detail::barycentric_weights(neg_cost, cfg, "negative");
  field.velocities = field.p_pos.linear() * y_pos - field.p_neg.linear() * y_neg;

  if (negative == NegativeTerm::Self && cfg.scheme == Scheme::Sinkhorn && detail::has_duplicate_rows(x)) {
    field.warnings.emplace_back(
        "X contains coincident points; the self transport plan is not identifiable");
  }
  if (!field.velocities.allFinite()) {
    throw NumericalError(std::string("drift_field: non-finite velocity under scheme ") +
                         to_string(cfg.scheme));
  }
  return field;
}

/// Self-driven drift: Y_neg is the current cloud X.
template <typename Scalar>
DriftField<Scalar> drift_field(const Matrix<Scalar>& x, const Matrix<Scalar>& y_pos,
                               const DriftConfig<Scalar>& cfg) {
  return drift_field(x, y_pos, x, cfg, NegativeTerm::Self);
}

/// Level-l Sinkhorn drift in displacement form,
///
///   V_i = sum_j (n pi_XY)_ij (y_j - x_i) - sum_j (n pi_XX)_ij (x_j - x_i),
///
/// with pi the plan after l half-steps (or the converged plan when opts is in
/// tolerance mode). No row renormalization is applied, so even l gives a
/// field whose weights are not row-stochastic.
template <typename Scalar>
DriftField<Scalar> level_l_drift(const Matrix<Scalar>& x, const Matrix<Scalar>& y,
                                 const SinkhornOptions<Scalar>& opts, Scalar tau,
                                 CostKind cost = CostKind::SqEuclideanHalf) {
  if (!opts.tol && opts.half_steps < 1) throw InvalidArgument("level_l_drift: l must be >= 1");
  const Scalar n = static_cast<Scalar>(x.rows());
  DriftField<Scalar> field;
  field.scheme = Scheme::Sinkhorn;
  field.tau = tau;
  field.p_pos = sinkhorn(gibbs_kernel(pairwise_cost(x, y, cost), tau), opts);
  field.p_neg = sinkhorn(gibbs_kernel(pairwise_cost(x, x, cost), tau), opts);
  const Matrix<Scalar> w_pos = n * field.p_pos.linear();
  const Matrix<Scalar> w_neg = n * field.p_neg.linear();
  const Vector<Scalar> mass_pos = w_pos.rowwise().sum();
  const Vector<Scalar> mass_neg = w_neg.rowwise().sum();
  field.velocities = w_pos * y - mass_pos.asDiagonal() * x - (w_neg * x - mass_neg.asDiagonal() * x);
  return field;
}

template <typename Scalar>
DriftField<Scalar> level_l_drift(const Matrix<Scalar>& x, const Matrix<Scalar>& y, int l, Scalar tau,
                                 CostKind cost = CostKind::SqEuclideanHalf) {
  return level_l_drift(x, y, SinkhornOptions<Scalar>::fixed(l), tau, cost);
}

/// (1/N) sum_i V_i.
template <typename Scalar>
RowVector<Scalar> mean_of_drift(const DriftField<Scalar>& field) {
  return field.velocities.colwise().mean();
}

}  // namespace sinkdrift
