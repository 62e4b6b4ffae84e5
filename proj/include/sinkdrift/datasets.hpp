#pragma once

// Seeded samplers for 2-D toy targets and the Gaussian prior.

#include <optional>
#include <string>

#include <Eigen/Dense>

#include "sinkdrift/rng.hpp"

namespace sinkdrift {

enum class ToyKind { EightGaussians, Checkerboard, TwoMoons, Spiral };

const char* to_string(ToyKind kind);
std::optional<ToyKind> parse_toy_kind(const std::string& name);

struct ToyTarget {
  ToyKind kind = ToyKind::EightGaussians;
  /// EightGaussians: circle radius and per-component standard deviation.
  double radius = 2.0;
  double component_std = 0.2;
  /// Checkerboard: the square [-half_extent, half_extent]^2 cut into
  /// cells x cells squares; squares with (row + col) even are filled.
  double half_extent = 2.0;
  int cells = 4;
  /// TwoMoons / Spiral additive Gaussian noise.
  double noise = 0.05;

  static ToyTarget make(ToyKind kind) {
    ToyTarget t;
    t.kind = kind;
    return t;
  }

  /// Mode centers (EightGaussians only; empty otherwise).
  Eigen::MatrixXd centers() const;
};

/// n i.i.d. draws, one per row.
Eigen::MatrixXd sample(const ToyTarget& target, Eigen::Index n, Rng& rng);

/// Standard normal n x d.
Eigen::MatrixXd sample_prior(Eigen::Index n, Eigen::Index d, Rng& rng);

/// Noise-free spiral arm at parameter t in [0, 1] (before the arm sign flip).
Eigen::RowVector2d spiral_curve(double t);

}  // namespace sinkdrift
