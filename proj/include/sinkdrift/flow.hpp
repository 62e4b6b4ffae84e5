#pragma once

// Forward-Euler particle flows driven by drift fields.

#include <optional>
#include <sstream>
#include <vector>

#include "sinkdrift/drift.hpp"

namespace sinkdrift {

/// Raised when a particle coordinate becomes non-finite during a flow.
class FlowDiverged : public NumericalError {
 public:
  FlowDiverged(int step, Index particle, Scheme scheme, double tau)
      : NumericalError(format(step, particle, scheme, tau)), step_(step), particle_(particle) {}

  int step() const { return step_; }
  Index particle() const { return particle_; }

 private:
  static std::string format(int step, Index particle, Scheme scheme, double tau) {
    std::ostringstream os;
    os << "flow diverged at step " << step << ", particle " << particle << " (scheme "
       << to_string(scheme) << ", tau " << tau << ")";
    return os.str();
  }
  int step_;
  Index particle_;
};

template <typename Scalar>
struct Snapshot {
  int step = 0;
  Matrix<Scalar> points;
};

template <typename Scalar>
struct FlowTrajectory {
  std::vector<Snapshot<Scalar>> snapshots;
  Scalar step_size = Scalar(0.1);
  int steps = 0;
  DriftConfig<Scalar> cfg;
};

/// x <- x + eta * V(x) with V recomputed from the current cloud every step
/// (the negative set is the current cloud). Records step 0, every
/// `snapshot_every`-th step and the last step.
template <typename Scalar>
FlowTrajectory<Scalar> simulate(const Matrix<Scalar>& x0, const Matrix<Scalar>& target,
                                const DriftConfig<Scalar>& cfg, Scalar step_size, int steps,
                                int snapshot_every = 10) {
  if (!(step_size > Scalar(0))) throw InvalidArgument("simulate: step size must be positive");
  if (steps < 1) throw InvalidArgument("simulate: steps must be >= 1");
  if (snapshot_every < 1) throw InvalidArgument("simulate: snapshot stride must be >= 1");
  validate_cloud(x0, "X0");
  validate_cloud(target, "Y");
  cfg.validate();

  FlowTrajectory<Scalar> traj{{}, step_size, steps, cfg};
  traj.snapshots.push_back({0, x0});
  Matrix<Scalar> x = x0;
  for (int step = 1; step <= steps; ++step) {
    const DriftField<Scalar> field = drift_field(x, target, cfg);
    x += step_size * field.velocities;
    for (Index i = 0; i < x.rows(); ++i) {
      if (!x.row(i).allFinite()) throw FlowDiverged(step, i, cfg.scheme, static_cast<double>(cfg.tau));
    }
    if (step % snapshot_every == 0 || step == steps) traj.snapshots.push_back({step, x});
  }
  return traj;
}

/// One q-weighted gradient step on L = 1/2 sum_i q_i |x_i - sg(x_i + V_i)|^2:
/// grad_i = q_i (x_i - (x_i + V_i)), x_i <- x_i - eta grad_i / q_i.
/// Uniform weights when q is not given.
template <typename Scalar>
Matrix<Scalar> stop_gradient_euler_step(const Matrix<Scalar>& x, const Matrix<Scalar>& velocity,
                                        Scalar step_size,
                                        const std::optional<Vector<Scalar>>& weights = std::nullopt) {
  if (x.rows() != velocity.rows() || x.cols() != velocity.cols()) {
    throw InvalidArgument("stop_gradient_euler_step: shape mismatch");
  }
  const Vector<Scalar> q =
      weights ? *weights : Vector<Scalar>::Constant(x.rows(), Scalar(1) / Scalar(x.rows()));
  if (q.size() != x.rows() || (q.array() <= Scalar(0)).any()) {
    throw InvalidArgument("stop_gradient_euler_step: weights must be positive, one per particle");
  }
  const Matrix<Scalar> target = x + velocity;  // detached
  Matrix<Scalar> out(x.rows(), x.cols());
  for (Index i = 0; i < x.rows(); ++i) {
    for (Index k = 0; k < x.cols(); ++k) {
      const Scalar grad = q(i) * (x(i, k) - target(i, k));
      out(i, k) = x(i, k) - step_size * (grad / q(i));
    }
  }
  return out;
}

}  // namespace sinkdrift
