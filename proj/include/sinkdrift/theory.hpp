#pragma once

// Numerical checks of the identifiability results: the one-sided drift
// counterexample, the n = 2 Sinkhorn identity, and the tau = 0 permutation
// identity, plus a suite runner that reports every check as JSON.

#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "sinkdrift/geometry.hpp"

namespace sinkdrift::theory {

/// A theory check whose preconditions or conclusion failed.
class TheoryCheckFailed : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct F1F2 {
  double f1 = 0;
  double f2 = 0;
};

/// One-sided drift of q = (delta_a + delta_b)/2 toward p = (delta_0 + delta_1)/2
/// at x = 0 (F1) and x = 1 (F2), kernel exp(-(x - y)^2), scaled by a positive
/// factor that clears the normalizers.
F1F2 eval_f1f2(double a, double b);

using F1F2Function = std::function<F1F2(double, double)>;

struct Rectangle {
  double a_lo = -1.5;
  double a_hi = -1.2;
  double b_lo = 0.6;
  double b_hi = 0.9;

  bool contains_strictly(double a, double b) const {
    return a > a_lo && a < a_hi && b > b_lo && b < b_hi;
  }
};

/// Boundary sign samples: F1 < 0 on a = a_lo, F1 > 0 on a = a_hi,
/// F2 > 0 on b = b_lo, F2 < 0 on b = b_hi.
struct SignCertificate {
  int points_per_edge = 0;
  int f1_left_violations = 0;
  int f1_right_violations = 0;
  int f2_bottom_violations = 0;
  int f2_top_violations = 0;

  bool holds() const {
    return points_per_edge > 0 && f1_left_violations == 0 && f1_right_violations == 0 &&
           f2_bottom_violations == 0 && f2_top_violations == 0;
  }
};

SignCertificate certify_miranda_signs(const Rectangle& box, int points_per_edge,
                                      const F1F2Function& f = eval_f1f2);

struct CounterexampleInstance {
  Rectangle box;
  double a = 0;
  double b = 0;
  F1F2 residual;
  SignCertificate certificate;
  int refinement_iters = 0;
  /// max |V| of the one-sided drift at the support {0, 1} of p.
  double one_sided_drift_inf = 0;
  /// max |V| of the converged Sinkhorn drift of q = {a, b} toward p.
  double sinkhorn_drift_inf = 0;
};

/// Certifies the boundary signs, then locates a common zero of (F1, F2) by
/// nested bisection inside the box: for each b, F1(., b) changes sign across
/// [a_lo, a_hi]; the resulting curve a(b) carries F2 from positive at b_lo to
/// negative at b_hi. Throws TheoryCheckFailed if the signs do not hold.
CounterexampleInstance find_counterexample(const Rectangle& box = {}, int points_per_edge = 64,
                                           int refinement_iters = 200,
                                           const F1F2Function& f = eval_f1f2);

struct N2Result {
  double r = 0;
  double s = 0;
  double theta = 0;
  double tau = 0;
  double v_inf = 0;
  bool sets_equal = false;
  bool degenerate = false;
};

/// x = -+r a_hat, y = -+s b_hat with a_hat = (1, 0), b_hat = (cos theta, sin theta);
/// evaluates the converged Sinkhorn drift of x toward y.
N2Result verify_n2_identifiability(double r, double s, double theta, double tau,
                                   CostKind cost = CostKind::SqEuclideanHalf);

struct N2Grid {
  std::vector<N2Result> cells;
  /// Smallest drift over configurations whose point sets differ.
  double min_v_inf_distinct = 0;
  /// Largest drift over configurations whose point sets coincide.
  double max_v_inf_equal = 0;
  bool pass = false;
};

/// Grid r, s in {0.5, 1, 2}, theta in {0, pi/6, ..., pi}, tau in {0.1, 1};
/// passes when |V| < 1e-8 exactly on the cells whose sets coincide.
N2Grid n2_identifiability_grid();

struct Tau0Result {
  std::vector<Eigen::Index> permutation;
  Eigen::MatrixXd residual;  // n pi Y - X under the optimal assignment plan
  double max_residual = 0;
  bool is_permutation = false;  // Y is a reordering of X
};

Tau0Result verify_tau0_identity(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y);

struct CheckReport {
  std::string name;
  nlohmann::json parameters = nlohmann::json::object();
  nlohmann::json residuals = nlohmann::json::object();
  bool pass = false;
  std::string detail;
};

nlohmann::json to_json(const CheckReport& report);

struct SuiteOptions {
  std::optional<std::string> only;
  /// Test hook: flips the sign of F1 before certification.
  bool inject_wrong_sign_f1 = false;
  std::uint64_t seed = 0;
};

const std::vector<std::string>& check_names();

/// Runs every check (or only the named one). Failures are reported, not thrown.
std::vector<CheckReport> run_suite(const SuiteOptions& opts = {});

}  // namespace sinkdrift::theory
