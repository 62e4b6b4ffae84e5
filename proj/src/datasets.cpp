#include "sinkdrift/datasets.hpp"

#include <cmath>
#include <numbers>

#include "sinkdrift/error.hpp"

namespace sinkdrift {

const char* to_string(ToyKind kind) {
  switch (kind) {
    case ToyKind::EightGaussians: return "eight-gaussians";
    case ToyKind::Checkerboard: return "checkerboard";
    case ToyKind::TwoMoons: return "two-moons";
    case ToyKind::Spiral: return "spiral";
  }
  return "unknown";
}

std::optional<ToyKind> parse_toy_kind(const std::string& name) {
  if (name == "eight-gaussians" || name == "8gaussians") return ToyKind::EightGaussians;
  if (name == "checkerboard") return ToyKind::Checkerboard;
  if (name == "two-moons" || name == "moons") return ToyKind::TwoMoons;
  if (name == "spiral") return ToyKind::Spiral;
  return std::nullopt;
}

Eigen::MatrixXd ToyTarget::centers() const {
  if (kind != ToyKind::EightGaussians) return Eigen::MatrixXd(0, 2);
  Eigen::MatrixXd c(8, 2);
  for (int k = 0; k < 8; ++k) {
    const double angle = 2.0 * std::numbers::pi * k / 8.0;
    c(k, 0) = radius * std::cos(angle);
    c(k, 1) = radius * std::sin(angle);
  }
  return c;
}

Eigen::RowVector2d spiral_curve(double t) {
  // Radius grows linearly with the winding angle.
  const double angle = 0.5 * std::numbers::pi + 3.0 * std::numbers::pi * t;
  const double r = 0.25 + 1.75 * t;
  return {r * std::cos(angle), r * std::sin(angle)};
}

Eigen::MatrixXd sample(const ToyTarget& target, Eigen::Index n, Rng& rng) {
  if (n < 1) throw InvalidArgument("sample: n must be >= 1");
  Eigen::MatrixXd out(n, 2);
  switch (target.kind) {
    case ToyKind::EightGaussians: {
      const Eigen::MatrixXd c = target.centers();
      for (Eigen::Index i = 0; i < n; ++i) {
        const auto k = static_cast<Eigen::Index>(rng.below(8));
        out(i, 0) = c(k, 0) + target.component_std * rng.normal();
        out(i, 1) = c(k, 1) + target.component_std * rng.normal();
      }
      break;
    }
    case ToyKind::Checkerboard: {
      const int cells = target.cells;
      if (cells < 2 || cells % 2 != 0) throw InvalidArgument("checkerboard: cells must be even");
      const double side = 2.0 * target.half_extent / cells;
      // Filled squares are those with (row + col) even; half of the board.
      const auto filled = static_cast<std::uint64_t>(cells * cells / 2);
      for (Eigen::Index i = 0; i < n; ++i) {
        const auto pick = static_cast<int>(rng.below(filled));
        const int row = (2 * pick) / cells;
        const int col = (2 * pick) % cells + (row % 2);
        out(i, 0) = -target.half_extent + (col + rng.uniform()) * side;
        out(i, 1) = -target.half_extent + (row + rng.uniform()) * side;
      }
      break;
    }
    case ToyKind::TwoMoons: {
      for (Eigen::Index i = 0; i < n; ++i) {
        const double t = std::numbers::pi * rng.uniform();
        double px, py;
        if (rng.below(2) == 0) {
          px = std::cos(t);
          py = std::sin(t);
        } else {
          px = 1.0 - std::cos(t);
          py = 0.5 - std::sin(t);
        }
        // Centered on the origin and scaled to roughly [-2, 2].
        out(i, 0) = 1.5 * (px - 0.5) + target.noise * rng.normal();
        out(i, 1) = 1.5 * (py - 0.25) + target.noise * rng.normal();
      }
      break;
    }
    case ToyKind::Spiral: {
      for (Eigen::Index i = 0; i < n; ++i) {
        const double t = rng.uniform();
        const double arm = rng.below(2) == 0 ? 1.0 : -1.0;
        const Eigen::RowVector2d p = arm * spiral_curve(t);
        out(i, 0) = p(0) + target.noise * rng.normal();
        out(i, 1) = p(1) + target.noise * rng.normal();
      }
      break;
    }
  }
  return out;
}

Eigen::MatrixXd sample_prior(Eigen::Index n, Eigen::Index d, Rng& rng) {
  if (n < 1 || d < 1) throw InvalidArgument("sample_prior: n and d must be >= 1");
  return rng.normal_matrix(n, d);
}

}  // namespace sinkdrift
