#include "sinkdrift/theory.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "sinkdrift/coupling.hpp"
#include "sinkdrift/drift.hpp"
#include "sinkdrift/flow.hpp"
#include "sinkdrift/metrics.hpp"
#include "sinkdrift/rng.hpp"

namespace sinkdrift::theory {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;

constexpr double kConvergedTol = 1e-13;
constexpr int kConvergedCap = 200000;

DriftConfig<double> converged_sinkhorn(double tau, CostKind cost) {
  DriftConfig<double> cfg;
  cfg.scheme = Scheme::Sinkhorn;
  cfg.tau = tau;
  cfg.sinkhorn_tol = kConvergedTol;
  cfg.sinkhorn_max_half_steps = kConvergedCap;
  cfg.cost = cost;
  return cfg;
}

bool same_multiset(const MatrixXd& x, const MatrixXd& y, double tol) {
  if (x.rows() != y.rows() || x.cols() != y.cols()) return false;
  std::vector<char> taken(y.rows(), 0);
  for (Index i = 0; i < x.rows(); ++i) {
    bool found = false;
    for (Index j = 0; j < y.rows() && !found; ++j) {
      if (!taken[j] && (x.row(i) - y.row(j)).cwiseAbs().maxCoeff() <= tol) {
        taken[j] = 1;
        found = true;
      }
    }
    if (!found) return false;
  }
  return true;
}

}  // namespace

F1F2 eval_f1f2(double a, double b) {
  const double ea = std::exp(-a * a);
  const double eb = std::exp(-b * b);
  const double f1 = (-a) * ea + (-b) * eb + (1 - a) * std::exp(-a * a - 1) + (1 - b) * std::exp(-b * b - 1);
  const double ga = std::exp(-(1 - a) * (1 - a));
  const double gb = std::exp(-(1 - b) * (1 - b));
  const double f2 = (-a) * std::exp(-1 - (1 - a) * (1 - a)) + (-b) * std::exp(-1 - (1 - b) * (1 - b)) +
                    (1 - a) * ga + (1 - b) * gb;
  return {f1, f2};
}

SignCertificate certify_miranda_signs(const Rectangle& box, int points_per_edge, const F1F2Function& f) {
  if (points_per_edge < 2) throw InvalidArgument("certify_miranda_signs: need >= 2 points per edge");
  SignCertificate cert;
  cert.points_per_edge = points_per_edge;
  for (int k = 0; k < points_per_edge; ++k) {
    const double t = static_cast<double>(k) / (points_per_edge - 1);
    const double b = box.b_lo + t * (box.b_hi - box.b_lo);
    const double a = box.a_lo + t * (box.a_hi - box.a_lo);
    if (!(f(box.a_lo, b).f1 < 0)) ++cert.f1_left_violations;
    if (!(f(box.a_hi, b).f1 > 0)) ++cert.f1_right_violations;
    if (!(f(a, box.b_lo).f2 > 0)) ++cert.f2_bottom_violations;
    if (!(f(a, box.b_hi).f2 < 0)) ++cert.f2_top_violations;
  }
  return cert;
}

namespace {

// Zero of F1(., b) on [lo, hi] given F1(lo, b) < 0 < F1(hi, b).
double bisect_f1(const F1F2Function& f, double lo, double hi, double b, int iters) {
  for (int k = 0; k < iters; ++k) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (f(mid, b).f1 < 0) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

}  // namespace

CounterexampleInstance find_counterexample(const Rectangle& box, int points_per_edge, int refinement_iters,
                                           const F1F2Function& f) {
  CounterexampleInstance out;
  out.box = box;
  out.refinement_iters = refinement_iters;
  out.certificate = certify_miranda_signs(box, points_per_edge, f);
  if (!out.certificate.holds()) {
    throw TheoryCheckFailed("counterexample: boundary sign conditions violated on the box [" +
                            std::to_string(box.a_lo) + ", " + std::to_string(box.a_hi) + "] x [" +
                            std::to_string(box.b_lo) + ", " + std::to_string(box.b_hi) + "]");
  }
  double b_lo = box.b_lo;
  double b_hi = box.b_hi;
  auto f2_on_curve = [&](double b) {
    const double a = bisect_f1(f, box.a_lo, box.a_hi, b, refinement_iters);
    return std::pair{a, f(a, b).f2};
  };
  for (int k = 0; k < refinement_iters; ++k) {
    const double mid = 0.5 * (b_lo + b_hi);
    if (mid <= b_lo || mid >= b_hi) break;
    if (f2_on_curve(mid).second > 0) {
      b_lo = mid;
    } else {
      b_hi = mid;
    }
  }
  out.b = 0.5 * (b_lo + b_hi);
  out.a = f2_on_curve(out.b).first;
  out.residual = f(out.a, out.b);

  // Drift at the support of p = {0, 1} with model q = {a, b}: one-sided,
  // unmasked, kernel exp(-(x - y)^2).
  MatrixXd p(2, 1), q(2, 1);
  p << 0.0, 1.0;
  q << out.a, out.b;
  DriftConfig<double> one_sided;
  one_sided.scheme = Scheme::OneSided;
  one_sided.tau = 1.0;
  one_sided.cost = CostKind::SqEuclidean;
  one_sided.mask = MaskPolicy::Off;
  out.one_sided_drift_inf =
      drift_field(p, p, q, one_sided, NegativeTerm::External).velocities.cwiseAbs().maxCoeff();
  out.sinkhorn_drift_inf =
      drift_field(q, p, converged_sinkhorn(1.0, CostKind::SqEuclidean)).velocities.cwiseAbs().maxCoeff();
  return out;
}

N2Result verify_n2_identifiability(double r, double s, double theta, double tau, CostKind cost) {
  N2Result res{r, s, theta, tau, 0, false, false};
  if (!(r > 0) || !(s > 0)) {
    res.degenerate = true;
    return res;
  }
  MatrixXd x(2, 2), y(2, 2);
  x << -r, 0, r, 0;
  const double c = std::cos(theta);
  const double sn = std::sin(theta);
  y << -s * c, -s * sn, s * c, s * sn;
  res.v_inf = drift_field(x, y, converged_sinkhorn(tau, cost)).velocities.cwiseAbs().maxCoeff();
  res.sets_equal = same_multiset(x, y, 1e-6);
  return res;
}

N2Grid n2_identifiability_grid() {
  N2Grid grid;
  grid.min_v_inf_distinct = std::numeric_limits<double>::infinity();
  grid.max_v_inf_equal = 0;
  grid.pass = true;
  const double radii[] = {0.5, 1.0, 2.0};
  const double taus[] = {0.1, 1.0};
  for (double tau : taus)
    for (double r : radii)
      for (double s : radii)
        for (int k = 0; k <= 6; ++k) {
          const N2Result cell = verify_n2_identifiability(r, s, k * std::numbers::pi / 6.0, tau);
          grid.cells.push_back(cell);
          if (cell.degenerate) continue;
          if (cell.sets_equal) {
            grid.max_v_inf_equal = std::max(grid.max_v_inf_equal, cell.v_inf);
          } else {
            grid.min_v_inf_distinct = std::min(grid.min_v_inf_distinct, cell.v_inf);
          }
          if ((cell.v_inf < 1e-8) != cell.sets_equal) grid.pass = false;
        }
  return grid;
}

Tau0Result verify_tau0_identity(const MatrixXd& x, const MatrixXd& y) {
  Tau0Result out;
  const AssignmentResult assignment = exact_w2sq(x, y);
  out.permutation = assignment.permutation;
  // n * pi has a single unit entry per row, at the assigned column.
  out.residual.resize(x.rows(), x.cols());
  for (Index i = 0; i < x.rows(); ++i) out.residual.row(i) = y.row(out.permutation[i]) - x.row(i);
  out.max_residual = out.residual.size() ? out.residual.cwiseAbs().maxCoeff() : 0.0;
  out.is_permutation = same_multiset(x, y, 0.0);
  return out;
}

nlohmann::json to_json(const CheckReport& report) {
  nlohmann::json j;
  j["name"] = report.name;
  j["parameters"] = report.parameters;
  j["residuals"] = report.residuals;
  j["pass"] = report.pass;
  if (!report.detail.empty()) j["detail"] = report.detail;
  return j;
}

const std::vector<std::string>& check_names() {
  static const std::vector<std::string> names = {
      "counterexample",   "n2_identifiability", "tau0_identity",  "zero_drift_identity",
      "equal_means",      "symmetric_scaling",  "t1_reduction",   "stop_gradient_euler",
  };
  return names;
}

namespace {

MatrixXd random_cloud(Rng& rng, Index n, Index d, double scale = 1.0) {
  return scale * rng.normal_matrix(n, d);
}

MatrixXd unit_square_cloud(Rng& rng, Index n, Index d) {
  MatrixXd out(n, d);
  for (Index i = 0; i < n; ++i)
    for (Index k = 0; k < d; ++k) out(i, k) = rng.uniform();
  return out;
}

MatrixXd permute_rows(const MatrixXd& x, Rng& rng) {
  std::vector<Index> order(x.rows());
  std::iota(order.begin(), order.end(), Index{0});
  for (Index i = x.rows() - 1; i > 0; --i) {
    std::swap(order[i], order[static_cast<Index>(rng.below(static_cast<std::uint64_t>(i + 1)))]);
  }
  MatrixXd out(x.rows(), x.cols());
  for (Index i = 0; i < x.rows(); ++i) out.row(i) = x.row(order[i]);
  return out;
}

CheckReport check_counterexample(const SuiteOptions& opts) {
  CheckReport rep;
  rep.name = "counterexample";
  const Rectangle box;
  rep.parameters = {{"a_lo", box.a_lo}, {"a_hi", box.a_hi}, {"b_lo", box.b_lo}, {"b_hi", box.b_hi},
                    {"points_per_edge", 64}, {"tau", 1.0}};
  F1F2Function f = eval_f1f2;
  if (opts.inject_wrong_sign_f1) {
    f = [](double a, double b) {
      F1F2 v = eval_f1f2(a, b);
      v.f1 = -v.f1;
      return v;
    };
  }
  try {
    const CounterexampleInstance inst = find_counterexample(box, 64, 200, f);
    const CounterexampleInstance coarse = find_counterexample(box, 64, 40, f);
    const double stability = std::max(std::abs(inst.a - coarse.a), std::abs(inst.b - coarse.b));
    rep.residuals = {{"a_star", inst.a},
                     {"b_star", inst.b},
                     {"f1", inst.residual.f1},
                     {"f2", inst.residual.f2},
                     {"root_stability", stability},
                     {"one_sided_drift_inf", inst.one_sided_drift_inf},
                     {"sinkhorn_drift_inf", inst.sinkhorn_drift_inf}};
    rep.pass = inst.certificate.holds() && box.contains_strictly(inst.a, inst.b) &&
               std::abs(inst.residual.f1) < 1e-10 && std::abs(inst.residual.f2) < 1e-10 &&
               stability < 1e-8 && inst.one_sided_drift_inf < 1e-10 && inst.sinkhorn_drift_inf > 1e-3;
  } catch (const TheoryCheckFailed& e) {
    rep.pass = false;
    rep.detail = e.what();
  }
  return rep;
}

CheckReport check_n2() {
  CheckReport rep;
  rep.name = "n2_identifiability";
  const N2Grid grid = n2_identifiability_grid();
  rep.parameters = {{"r_s", {0.5, 1.0, 2.0}}, {"theta_steps", 7}, {"tau", {0.1, 1.0}}};
  rep.residuals = {{"cells", grid.cells.size()},
                   {"max_v_inf_equal_sets", grid.max_v_inf_equal},
                   {"min_v_inf_distinct_sets", grid.min_v_inf_distinct}};
  rep.pass = grid.pass;
  return rep;
}

CheckReport check_tau0(Rng& rng) {
  CheckReport rep;
  rep.name = "tau0_identity";
  const MatrixXd x = random_cloud(rng, 12, 2);
  const Tau0Result shuffled = verify_tau0_identity(x, permute_rows(x, rng));
  RowVector<double> shift(2);
  shift << 0.3, -0.2;
  const MatrixXd moved = x.rowwise() + shift;
  const Tau0Result shifted = verify_tau0_identity(x, moved);
  const double shift_error = (shifted.residual.rowwise() - shift).cwiseAbs().maxCoeff();
  const Tau0Result other = verify_tau0_identity(x, random_cloud(rng, 12, 2));
  rep.parameters = {{"n", 12}, {"d", 2}};
  rep.residuals = {{"shuffled_max_residual", shuffled.max_residual},
                   {"shift_residual_error", shift_error},
                   {"random_max_residual", other.max_residual}};
  rep.pass = shuffled.is_permutation && shuffled.max_residual == 0.0 && shift_error < 1e-12 &&
             !other.is_permutation && other.max_residual > 0.0;
  return rep;
}

CheckReport check_zero_drift(Rng& rng) {
  CheckReport rep;
  rep.name = "zero_drift_identity";
  double worst = 0;
  for (double tau : {0.01, 0.1, 1.0}) {
    const MatrixXd y = unit_square_cloud(rng, 64, 2);
    const MatrixXd x = permute_rows(y, rng);
    const auto field = drift_field(x, y, converged_sinkhorn(tau, CostKind::SqEuclideanHalf));
    worst = std::max(worst, field.velocities.cwiseAbs().maxCoeff());
  }
  rep.parameters = {{"n", 64}, {"d", 2}, {"support", "unit square"}, {"tau", {0.01, 0.1, 1.0}}};
  rep.residuals = {{"max_v_inf", worst}};
  rep.pass = worst < 1e-8;
  return rep;
}

CheckReport check_equal_means(Rng& rng) {
  CheckReport rep;
  rep.name = "equal_means";
  double worst = 0;
  for (int k = 0; k < 20; ++k) {
    const MatrixXd x = random_cloud(rng, 16, 2);
    const MatrixXd y = random_cloud(rng, 16, 2, 1.5).rowwise() + RowVector<double>::Constant(2, 0.5);
    const double tau = k % 2 == 0 ? 0.5 : 1.0;
    const auto field = drift_field(x, y, converged_sinkhorn(tau, CostKind::SqEuclideanHalf));
    const RowVector<double> expected = y.colwise().mean() - x.colwise().mean();
    worst = std::max(worst, (mean_of_drift(field) - expected).cwiseAbs().maxCoeff());
  }
  rep.parameters = {{"instances", 20}, {"n", 16}};
  rep.residuals = {{"max_mean_error", worst}};
  rep.pass = worst < 1e-10;
  return rep;
}

CheckReport check_symmetric_scaling(Rng& rng) {
  CheckReport rep;
  rep.name = "symmetric_scaling";
  double worst = 0;
  for (int k = 0; k < 20; ++k) {
    const double k1 = 0.05 + rng.uniform();
    const double k2 = 0.05 + rng.uniform();
    Matrix<double> kernel(2, 2);
    kernel << k1, k2, k2, k1;
    const auto plan =
        sinkhorn(Coupling<double>::from_linear(kernel), SinkhornOptions<double>::converged(1e-15)).linear();
    worst = std::max({worst, std::abs(plan(0, 0) - plan(1, 1)), std::abs(plan(0, 1) - plan(1, 0))});
  }
  rep.parameters = {{"instances", 20}};
  rep.residuals = {{"max_asymmetry", worst}};
  rep.pass = worst < 1e-12;
  return rep;
}

CheckReport check_t1(Rng& rng) {
  CheckReport rep;
  rep.name = "t1_reduction";
  double worst = 0;
  for (int k = 0; k < 50; ++k) {
    const Index n = k % 2 == 0 ? 5 : 50;
    const double tau = std::array{0.05, 0.5, 5.0}[k % 3];
    const auto kernel =
        gibbs_kernel(pairwise_cost(random_cloud(rng, n, 2), random_cloud(rng, n, 2), CostKind::SqEuclideanHalf), tau);
    const MatrixXd one_step = static_cast<double>(n) * sinkhorn(kernel, SinkhornOptions<double>::fixed(1)).linear();
    worst = std::max(worst, (one_step - row_normalize(kernel).linear()).cwiseAbs().maxCoeff());
  }
  rep.parameters = {{"instances", 50}};
  rep.residuals = {{"max_entry_error", worst}};
  rep.pass = worst < 1e-12;
  return rep;
}

CheckReport check_euler(Rng& rng) {
  CheckReport rep;
  rep.name = "stop_gradient_euler";
  const MatrixXd x = rng.normal_matrix(10, 2).cwiseMin(1.0).cwiseMax(-1.0);
  const MatrixXd v = rng.normal_matrix(10, 2).cwiseMin(1.0).cwiseMax(-1.0);
  const double eta = 0.1;
  const MatrixXd stepped = stop_gradient_euler_step(x, v, eta);
  const double err = (stepped - (x + eta * v)).cwiseAbs().maxCoeff();
  rep.parameters = {{"n", 10}, {"eta", eta}};
  rep.residuals = {{"max_coordinate_error", err}};
  rep.pass = err <= 1e-15;
  return rep;
}

}  // namespace

std::vector<CheckReport> run_suite(const SuiteOptions& opts) {
  if (opts.only && std::find(check_names().begin(), check_names().end(), *opts.only) == check_names().end()) {
    throw InvalidArgument("unknown theory check '" + *opts.only + "'");
  }
  std::vector<CheckReport> reports;
  const Rng root(opts.seed);
  auto want = [&](const char* name) { return !opts.only || *opts.only == name; };
  auto guarded = [&](const char* name, auto&& fn) {
    if (!want(name)) return;
    try {
      reports.push_back(fn());
    } catch (const std::exception& e) {
      CheckReport rep;
      rep.name = name;
      rep.pass = false;
      rep.detail = e.what();
      reports.push_back(rep);
    }
  };
  guarded("counterexample", [&] { return check_counterexample(opts); });
  guarded("n2_identifiability", [&] { return check_n2(); });
  guarded("tau0_identity", [&] {
    Rng rng = root.split(3);
    return check_tau0(rng);
  });
  guarded("zero_drift_identity", [&] {
    Rng rng = root.split(4);
    return check_zero_drift(rng);
  });
  guarded("equal_means", [&] {
    Rng rng = root.split(5);
    return check_equal_means(rng);
  });
  guarded("symmetric_scaling", [&] {
    Rng rng = root.split(6);
    return check_symmetric_scaling(rng);
  });
  guarded("t1_reduction", [&] {
    Rng rng = root.split(7);
    return check_t1(rng);
  });
  guarded("stop_gradient_euler", [&] {
    Rng rng = root.split(8);
    return check_euler(rng);
  });
  return reports;
}

}  // namespace sinkdrift::theory
