#pragma once

// Couplings between two point clouds, stored in the natural-log domain.
//
// Three ways of turning a Gibbs kernel K = exp(-C / tau) into barycentric
// weights are provided: one-sided row normalization, the geometric mean of
// row- and column-softmax, and Sinkhorn scaling toward prescribed marginals.
// Exact zeros are represented by -inf.

#include <cassert>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "sinkdrift/error.hpp"
#include "sinkdrift/geometry.hpp"

namespace sinkdrift {

enum class MarginalStatus { Raw, RowStochastic, SinkhornScaled };

template <typename Scalar>
struct Coupling {
  Matrix<Scalar> log_values;
  MarginalStatus status = MarginalStatus::Raw;
  int iterations_used = 0;
  bool converged = false;

  Index rows() const { return log_values.rows(); }
  Index cols() const { return log_values.cols(); }

  /// exp(log_values); entries below the representable range become 0.
  Matrix<Scalar> linear() const { return log_values.array().exp().matrix(); }

  /// Wraps a nonnegative linear-domain matrix. Zeros map to -inf.
  static Coupling from_linear(const Matrix<Scalar>& values,
                              MarginalStatus status = MarginalStatus::Raw) {
    if ((values.array() < Scalar(0)).any() || !values.allFinite()) {
      throw InvalidArgument("coupling entries must be finite and nonnegative");
    }
    return Coupling{values.array().log().matrix(), status, 0, false};
  }
};

template <typename Scalar>
struct Marginals {
  Vector<Scalar> r;
  Vector<Scalar> c;

  static Marginals uniform(Index n, Index m) {
    return Marginals{Vector<Scalar>::Constant(n, Scalar(1) / Scalar(n)),
                     Vector<Scalar>::Constant(m, Scalar(1) / Scalar(m))};
  }

  void validate(Index n, Index m) const {
    if (r.size() != n || c.size() != m) throw InvalidArgument("marginals: shape mismatch");
    if ((r.array() < Scalar(0)).any() || (c.array() < Scalar(0)).any()) {
      throw InvalidArgument("marginals must be nonnegative");
    }
    using std::abs;
    if (abs(r.sum() - Scalar(1)) > Scalar(1e-12) || abs(c.sum() - Scalar(1)) > Scalar(1e-12)) {
      throw InvalidArgument("marginals must each sum to 1");
    }
  }
};

/// Entrywise exp(-C / tau), kept in the log domain.
template <typename Scalar>
Coupling<Scalar> gibbs_kernel(const CostMatrix<Scalar>& cost, Scalar tau) {
  if (!(tau > Scalar(0))) throw InvalidArgument("gibbs_kernel: tau must be positive");
  return Coupling<Scalar>{(-cost.values / tau).eval(), MarginalStatus::Raw, 0, false};
}

namespace detail {

template <typename Scalar>
Scalar finite_or_zero(Scalar v) {
  return std::isfinite(v) ? v : Scalar(0);
}

/// out_i = log sum_j exp(m_ij + shift_j), with the row max factored out.
/// Rows that are entirely -inf give -inf.
template <typename Scalar>
Vector<Scalar> row_logsumexp(const Matrix<Scalar>& m, const RowVector<Scalar>* shift = nullptr) {
  Matrix<Scalar> shifted = shift ? Matrix<Scalar>(m.rowwise() + *shift) : m;
  Vector<Scalar> mx = shifted.rowwise().maxCoeff();
  mx = mx.unaryExpr(&finite_or_zero<Scalar>);
  shifted.colwise() -= mx;
  return mx.array() + shifted.array().exp().rowwise().sum().log();
}

/// out_j = log sum_i exp(m_ij + shift_i).
template <typename Scalar>
RowVector<Scalar> col_logsumexp(const Matrix<Scalar>& m, const Vector<Scalar>* shift = nullptr) {
  Matrix<Scalar> shifted = shift ? Matrix<Scalar>(m.colwise() + *shift) : m;
  RowVector<Scalar> mx = shifted.colwise().maxCoeff();
  mx = mx.unaryExpr(&finite_or_zero<Scalar>);
  shifted.rowwise() -= mx;
  return mx.array() + shifted.array().exp().colwise().sum().log();
}

template <typename Scalar>
void require_row_support(const Matrix<Scalar>& log_values, const std::string& context) {
  const Scalar ninf = -std::numeric_limits<Scalar>::infinity();
  for (Index i = 0; i < log_values.rows(); ++i) {
    if (log_values.rows() > 0 && log_values.cols() > 0 && log_values.row(i).maxCoeff() == ninf) {
      throw DegenerateRow(i, false, context);
    }
  }
}

template <typename Scalar>
void require_col_support(const Matrix<Scalar>& log_values, const std::string& context) {
  const Scalar ninf = -std::numeric_limits<Scalar>::infinity();
  for (Index j = 0; j < log_values.cols(); ++j) {
    if (log_values.rows() > 0 && log_values.col(j).maxCoeff() == ninf) {
      throw DegenerateRow(j, true, context);
    }
  }
}

}  // namespace detail

/// Log-softmax of every row: each row of exp(result) sums to 1.
template <typename Scalar>
Coupling<Scalar> row_normalize(const Coupling<Scalar>& kernel) {
  if (kernel.rows() == 0 || kernel.cols() == 0) throw InvalidArgument("row_normalize: empty kernel");
  detail::require_row_support(kernel.log_values, "row_normalize");
  const Vector<Scalar> lse = detail::row_logsumexp(kernel.log_values);
  Coupling<Scalar> out{kernel.log_values.colwise() - lse, MarginalStatus::RowStochastic,
                       kernel.iterations_used, kernel.converged};
  assert(!out.log_values.hasNaN());
  return out;
}

/// Row normalization of sqrt(A_row .* A_col), where A_row and A_col are the
/// row- and column-softmax of the kernel.
template <typename Scalar>
Coupling<Scalar> two_sided_normalize(const Coupling<Scalar>& kernel) {
  if (kernel.rows() == 0 || kernel.cols() == 0) {
    throw InvalidArgument("two_sided_normalize: empty kernel");
  }
  detail::require_row_support(kernel.log_values, "two_sided_normalize");
  detail::require_col_support(kernel.log_values, "two_sided_normalize");
  const Vector<Scalar> row_lse = detail::row_logsumexp(kernel.log_values);
  const RowVector<Scalar> col_lse = detail::col_logsumexp(kernel.log_values);
  // 0.5 * (log A_row + log A_col)
  Matrix<Scalar> log_mean = kernel.log_values;
  log_mean.colwise() -= Scalar(0.5) * row_lse;
  log_mean.rowwise() -= Scalar(0.5) * col_lse;
  return row_normalize(Coupling<Scalar>{std::move(log_mean), MarginalStatus::Raw, 0, false});
}

struct MarginalError {
  double row = 0;
  double col = 0;
  double max() const { return row > col ? row : col; }
};

/// Max-norm deviation of the row and column sums from the target marginals.
template <typename Scalar>
MarginalError marginal_violation(const Coupling<Scalar>& plan, const Marginals<Scalar>& m) {
  if (m.r.size() != plan.rows() || m.c.size() != plan.cols()) {
    throw InvalidArgument("marginal_violation: shape mismatch");
  }
  const Matrix<Scalar> p = plan.linear();
  const Vector<Scalar> rows = p.rowwise().sum();
  const RowVector<Scalar> cols = p.colwise().sum();
  return MarginalError{static_cast<double>((rows - m.r).cwiseAbs().maxCoeff()),
                       static_cast<double>((cols - m.c.transpose()).cwiseAbs().maxCoeff())};
}

template <typename Scalar>
struct SinkhornOptions {
  /// Number of half-steps (row or column scalings) in fixed mode. Odd counts
  /// end on a row scaling.
  int half_steps = 1;
  /// When set, iterate until the max marginal violation drops below tol.
  /// The run always stops right after a row scaling.
  std::optional<Scalar> tol;
  int max_half_steps = 10000;

  static SinkhornOptions fixed(int t) { return SinkhornOptions{t, std::nullopt, 10000}; }
  static SinkhornOptions converged(Scalar tolerance = Scalar(1e-9), int cap = 10000) {
    return SinkhornOptions{1, tolerance, cap};
  }
};

/// Marginal violations recorded after every half-step.
struct SinkhornTrace {
  std::vector<MarginalError> after_step;
};

/// Alternating row / column scaling of the kernel toward marginals (r, c).
///
/// pi^(0) = K; odd half-steps rescale rows to r, even ones rescale columns to
/// c. The plan is kept as log K + f 1^T + 1 g^T with dual potentials f, g so
/// that no linear-domain kernel is ever formed.
template <typename Scalar>
Coupling<Scalar> sinkhorn(const Coupling<Scalar>& kernel, const Marginals<Scalar>& marginals,
                          const SinkhornOptions<Scalar>& opts, SinkhornTrace* trace = nullptr) {
  const Index n = kernel.rows();
  const Index m = kernel.cols();
  if (n == 0 || m == 0) throw InvalidArgument("sinkhorn: empty kernel");
  marginals.validate(n, m);
  if (!opts.tol && opts.half_steps < 1) throw InvalidArgument("sinkhorn: need at least one half-step");
  if (opts.tol && !(*opts.tol > Scalar(0))) throw InvalidArgument("sinkhorn: tol must be positive");
  detail::require_row_support(kernel.log_values, "sinkhorn");
  detail::require_col_support(kernel.log_values, "sinkhorn");

  const Matrix<Scalar>& log_k = kernel.log_values;
  const Vector<Scalar> log_r = marginals.r.array().log();
  const RowVector<Scalar> log_c = marginals.c.transpose().array().log();
  Vector<Scalar> f = Vector<Scalar>::Zero(n);
  RowVector<Scalar> g = RowVector<Scalar>::Zero(m);

  auto assemble = [&] {
    Matrix<Scalar> out = log_k;
    out.colwise() += f;
    out.rowwise() += g;
    return out;
  };

  const int limit = opts.tol ? opts.max_half_steps : opts.half_steps;
  int step = 0;
  bool converged = false;
  double last_violation = std::numeric_limits<double>::infinity();
  while (step < limit) {
    const int next = step + 1;
    if (next % 2 == 1) {
      const Vector<Scalar> lse = detail::row_logsumexp(log_k, &g);
      f = log_r - lse;
    } else {
      const RowVector<Scalar> lse = detail::col_logsumexp(log_k, &f);
      if (opts.tol) {
        // Column sums of the current (row-scaled) plan are exp(g + lse).
        const RowVector<Scalar> sums = (g + lse).array().exp();
        last_violation = static_cast<double>((sums - marginals.c.transpose()).cwiseAbs().maxCoeff());
        if (last_violation < static_cast<double>(*opts.tol)) {
          const Coupling<Scalar> plan{assemble(), MarginalStatus::SinkhornScaled, step, false};
          last_violation = marginal_violation(plan, marginals).max();
          if (last_violation < static_cast<double>(*opts.tol)) {
            converged = true;
            break;
          }
        }
      }
      g = log_c - lse;
    }
    step = next;
    if (trace) {
      trace->after_step.push_back(
          marginal_violation(Coupling<Scalar>{assemble(), MarginalStatus::SinkhornScaled, step, false},
                             marginals));
    }
  }

  Coupling<Scalar> out{assemble(), MarginalStatus::SinkhornScaled, step, false};
  assert(!out.log_values.hasNaN());
  if (opts.tol) {
    if (!converged) {
      // Cap reached; report the violation of the final plan.
      throw SinkhornNotConverged(marginal_violation(out, marginals).max(), step);
    }
    const MarginalError err = marginal_violation(out, marginals);
    out.converged = err.max() < static_cast<double>(*opts.tol);
    if (!out.converged) throw SinkhornNotConverged(err.max(), step);
  }
  return out;
}

/// Uniform-marginal convenience overload.
template <typename Scalar>
Coupling<Scalar> sinkhorn(const Coupling<Scalar>& kernel, const SinkhornOptions<Scalar>& opts,
                          SinkhornTrace* trace = nullptr) {
  return sinkhorn(kernel, Marginals<Scalar>::uniform(kernel.rows(), kernel.cols()), opts, trace);
}

}  // namespace sinkdrift
