// Acceptance suite: one PASS/FAIL line per criterion.
//
//   sinkdrift_acceptance [outdir] [--only name]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "gradcheck.hpp"
#include "json.hpp"
#include "oracles.hpp"
#include "sinkdrift/cli.hpp"
#include "sinkdrift/datasets.hpp"
#include "sinkdrift/flow.hpp"
#include "sinkdrift/metrics.hpp"
#include "sinkdrift/nnet.hpp"
#include "sinkdrift/theory.hpp"

using namespace sinkdrift;
using Eigen::Index;
using Eigen::MatrixXd;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string sci(double v) { return format_sci(v); }

MatrixXd unit_square(Rng& rng, Index n) {
  MatrixXd out(n, 2);
  for (Index i = 0; i < n; ++i) out.row(i) << rng.uniform(), rng.uniform();
  return out;
}

MatrixXd shuffled(const MatrixXd& x, Rng& rng) {
  std::vector<Index> order(x.rows());
  std::iota(order.begin(), order.end(), Index{0});
  for (Index i = x.rows() - 1; i > 0; --i)
    std::swap(order[i], order[static_cast<Index>(rng.below(static_cast<std::uint64_t>(i + 1)))]);
  MatrixXd out(x.rows(), x.cols());
  for (Index i = 0; i < x.rows(); ++i) out.row(i) = x.row(order[i]);
  return out;
}

DriftConfig<double> converged(double tau) {
  DriftConfig<double> cfg;
  cfg.scheme = Scheme::Sinkhorn;
  cfg.tau = tau;
  cfg.sinkhorn_tol = 1e-13;
  cfg.sinkhorn_max_half_steps = 1000000;
  return cfg;
}

MatrixXd half_sq_cost(const MatrixXd& x, const MatrixXd& y) {
  MatrixXd c(x.rows(), y.rows());
  for (Index i = 0; i < x.rows(); ++i)
    for (Index j = 0; j < y.rows(); ++j) c(i, j) = 0.5 * oracle::sq_dist(x, i, y, j);
  return c;
}

Outcome t1_reduction() {
  Rng rng(101);
  double worst = 0;
  for (int k = 0; k < 50; ++k) {
    const Index n = k % 2 == 0 ? 5 : 50;
    const double tau = std::array{0.05, 0.5, 5.0}[k % 3];
    const MatrixXd x = rng.normal_matrix(n, 2);
    const MatrixXd y = rng.normal_matrix(n, 2);
    const auto kernel = gibbs_kernel(pairwise_cost(x, y, CostKind::SqEuclideanHalf), tau);
    const MatrixXd plan = static_cast<double>(n) * sinkhorn(kernel, SinkhornOptions<double>::fixed(1)).linear();
    const MatrixXd expected = oracle::row_softmax_linear((-half_sq_cost(x, y) / tau).array().exp().matrix());
    worst = std::max(worst, (plan - expected).cwiseAbs().maxCoeff());
  }
  return {worst < 1e-12, "50 instances, max entry error " + sci(worst)};
}

Outcome doubly_stochastic() {
  Rng rng(102);
  double worst = 0;
  int max_steps = 0;
  int instances = 0;
  bool all_converged = true;
  auto check = [&](const MatrixXd& cost, double tau) {
    const CostMatrix<double> c{cost, CostKind::SqEuclideanHalf};
    const auto plan = sinkhorn(gibbs_kernel(c, tau), SinkhornOptions<double>::converged(1e-9, 1000000));
    const MatrixXd p = plan.linear();
    all_converged = all_converged && plan.converged;
    max_steps = std::max(max_steps, plan.iterations_used);
    for (Index i = 0; i < p.rows(); ++i) {
      double row = 0;
      double col = 0;
      for (Index j = 0; j < p.cols(); ++j) {
        row += p(i, j);
        col += p(j, i);
      }
      worst = std::max({worst, std::abs(row - 0.01), std::abs(col - 0.01)});
    }
    ++instances;
  };
  for (double tau : {0.01, 0.1, 1.0}) {
    for (int k = 0; k < 5; ++k) {
      MatrixXd cost(100, 100);
      for (Index i = 0; i < 100; ++i)
        for (Index j = 0; j < 100; ++j) cost(i, j) = rng.uniform();
      check(cost, tau);
      const MatrixXd x = unit_square(rng, 100);
      const MatrixXd y = unit_square(rng, 100);
      check(half_sq_cost(x, y), tau);
    }
  }
  return {all_converged && worst < 1e-9, std::to_string(instances) + " kernels, tau in {0.01, 0.1, 1}, max violation " +
                                             sci(worst) + ", max half-steps " + std::to_string(max_steps)};
}

Outcome zero_drift() {
  Rng rng(103);
  double worst = 0;
  for (double tau : {0.01, 0.1, 1.0}) {
    const MatrixXd y = unit_square(rng, 64);
    const MatrixXd x = shuffled(y, rng);
    worst = std::max(worst, drift_field(x, y, converged(tau)).velocities.cwiseAbs().maxCoeff());
  }
  return {worst < 1e-8, "N=64, d=2, tau in {0.01, 0.1, 1}, max |V| " + sci(worst)};
}

Outcome equal_means() {
  Rng rng(104);
  double worst = 0;
  for (int k = 0; k < 20; ++k) {
    const Index n = 8 + static_cast<Index>(rng.below(25));
    const MatrixXd x = rng.normal_matrix(n, 2);
    MatrixXd y = 1.5 * rng.normal_matrix(n, 2);
    y.col(0).array() += 1.0;
    const double tau = std::array{0.5, 1.0, 2.0}[k % 3];
    const MatrixXd v = drift_field(x, y, converged(tau)).velocities;
    for (Index d = 0; d < 2; ++d) {
      double mv = 0, mx = 0, my = 0;
      for (Index i = 0; i < n; ++i) {
        mv += v(i, d);
        mx += x(i, d);
        my += y(i, d);
      }
      worst = std::max(worst, std::abs(mv / n - (my / n - mx / n)));
    }
  }
  return {worst < 1e-10, "20 instances, max mean error " + sci(worst)};
}

Outcome symmetric_scaling() {
  Rng rng(105);
  double worst = 0;
  for (int k = 0; k < 20; ++k) {
    const double a = 0.01 + rng.uniform();
    const double b = 0.01 + rng.uniform();
    MatrixXd kernel(2, 2);
    kernel << a, b, b, a;
    const MatrixXd p =
        sinkhorn(Coupling<double>::from_linear(kernel), SinkhornOptions<double>::converged(1e-15)).linear();
    worst = std::max({worst, std::abs(p(0, 0) - p(1, 1)), std::abs(p(0, 1) - p(1, 0))});
  }
  return {worst < 1e-12, "20 symmetric kernels, max asymmetry " + sci(worst)};
}

Outcome stop_gradient_euler() {
  Rng rng(106);
  double worst = 0;
  for (int k = 0; k < 100; ++k) {
    const Index n = 1 + static_cast<Index>(rng.below(20));
    MatrixXd x(n, 2), v(n, 2);
    for (Index i = 0; i < n; ++i) {
      x.row(i) << rng.uniform(-1, 1), rng.uniform(-1, 1);
      v.row(i) << rng.uniform(-1, 1), rng.uniform(-1, 1);
    }
    const double eta = rng.uniform(0.01, 1.0);
    Eigen::VectorXd q(n);
    for (Index i = 0; i < n; ++i) q(i) = 0.1 + rng.uniform();
    q /= q.sum();
    const MatrixXd stepped = stop_gradient_euler_step(x, v, eta, std::optional<Eigen::VectorXd>(q));
    for (Index i = 0; i < n; ++i)
      for (Index d = 0; d < 2; ++d) worst = std::max(worst, std::abs(stepped(i, d) - (x(i, d) + eta * v(i, d))));
  }
  return {worst <= 1e-15, "100 q-weighted steps, max coordinate error " + sci(worst)};
}

double plain_one_sided(double x, double a, double b) {
  const double p[2] = {0.0, 1.0};
  const double q[2] = {a, b};
  double wp = 0, mp = 0, wq = 0, mq = 0;
  for (int j = 0; j < 2; ++j) {
    const double kp = std::exp(-(x - p[j]) * (x - p[j]));
    const double kq = std::exp(-(x - q[j]) * (x - q[j]));
    wp += kp;
    mp += kp * p[j];
    wq += kq;
    mq += kq * q[j];
  }
  return mp / wp - mq / wq;
}

Outcome counterexample() {
  const theory::Rectangle box;
  const theory::CounterexampleInstance inst = theory::find_counterexample(box, 64);
  const double direct = std::max(std::abs(plain_one_sided(0.0, inst.a, inst.b)),
                                 std::abs(plain_one_sided(1.0, inst.a, inst.b)));
  const bool pass = inst.certificate.holds() && inst.certificate.points_per_edge == 64 &&
                    box.contains_strictly(inst.a, inst.b) && std::abs(inst.residual.f1) < 1e-10 &&
                    std::abs(inst.residual.f2) < 1e-10 && inst.one_sided_drift_inf < 1e-10 && direct < 1e-10 &&
                    inst.sinkhorn_drift_inf > 1e-3;
  std::ostringstream os;
  os.precision(16);
  os << "root (" << inst.a << ", " << inst.b << "), |F1| " << sci(std::abs(inst.residual.f1)) << ", |F2| "
     << sci(std::abs(inst.residual.f2)) << ", one-sided |V| " << sci(std::max(direct, inst.one_sided_drift_inf))
     << ", sinkhorn |V| " << sci(inst.sinkhorn_drift_inf);
  return {pass, os.str()};
}

Outcome gradient() {
  double worst = 0;
  int coords = 0;
  for (auto act : {nn::Activation::ReLU, nn::Activation::Tanh}) {
    Rng rng(107);
    const std::vector<int> widths{2, 64, 2};
    const nn::GeneratorParams params = nn::make_generator(widths, act, rng);
    const MatrixXd noise = sample_prior(32, 2, rng);
    const MatrixXd data = sample(ToyTarget::make(ToyKind::EightGaussians), 32, rng);
    DriftConfig<double> cfg;
    cfg.tau = 0.1;
    cfg.sinkhorn_half_steps = 11;
    const nn::LossAndGrad lg = nn::drifting_loss_and_grad(params, noise, data, cfg);
    const auto report = gradcheck::compare(params, lg.grads, noise, lg.samples + lg.drift, 20, rng);
    worst = std::max(worst, report.worst_relative);
    coords += report.coordinates;
  }
  return {coords == 80 && worst < 1e-5,
          "2-layer relu and tanh, " + std::to_string(coords) + " coordinates, max relative error " + sci(worst)};
}

Outcome emd() {
  Rng rng(108);
  int mismatches = 0;
  for (int k = 0; k < 100; ++k) {
    const Index n = 1 + static_cast<Index>(rng.below(7));
    const MatrixXd x = rng.normal_matrix(n, 2);
    const MatrixXd y = rng.normal_matrix(n, 2);
    MatrixXd cost(n, n);
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < n; ++j) cost(i, j) = oracle::sq_dist(x, i, y, j) / static_cast<double>(n);
    if (solve_assignment(cost).total_cost != oracle::brute_force_assignment(cost)) ++mismatches;
  }
  return {mismatches == 0, "100 instances with N <= 7, " + std::to_string(mismatches) + " mismatches"};
}

MatrixXd separated_cloud(Rng& rng, Index n, double side, double spacing) {
  MatrixXd out(n, 2);
  Index filled = 0;
  while (filled < n) {
    const Eigen::RowVector2d c(side * rng.uniform(), side * rng.uniform());
    bool ok = true;
    for (Index i = 0; i < filled && ok; ++i) ok = (out.row(i) - c).norm() >= spacing;
    if (ok) out.row(filled++) = c;
  }
  return out;
}

Outcome repulsion_collapse() {
  Rng rng(109);
  const MatrixXd x = separated_cloud(rng, 100, 20.0, 1.0);
  const MatrixXd y = rng.normal_matrix(100, 2);
  DriftConfig<double> cfg;
  cfg.scheme = Scheme::OneSided;
  cfg.tau = 0.01;
  cfg.mask = MaskPolicy::Off;
  const auto field = drift_field(x, y, cfg);
  const double neg = (field.p_neg.linear() * x - x).cwiseAbs().maxCoeff();
  return {neg < 1e-8, "100 points, tau 0.01, unmasked negative term max-norm " + sci(neg)};
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

int run_cli(const std::vector<std::string>& args) {
  std::vector<const char*> argv{"sinkdrift"};
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out;
  return cli::run(static_cast<int>(argv.size()), argv.data(), out, std::cerr);
}

Outcome toy_reproduction(const fs::path& outdir) {
  const std::vector<std::string> common{"--tau", "0.1", "--seeds", "3", "--iters", "5000", "--batch", "500",
                                        "--lr", "0.001"};
  auto with = [&](std::vector<std::string> head, const fs::path& dir) {
    head.insert(head.end(), common.begin(), common.end());
    head.push_back("--outdir");
    head.push_back(dir.string());
    return head;
  };
  const fs::path eight_dir = outdir / "eight";
  const fs::path board_dir = outdir / "board";
  const int c1 =
      run_cli(with({"train-toy", "--target", "eight-gaussians", "--scheme", "sinkhorn,one-sided"}, eight_dir));
  const int c2 = run_cli(
      with({"train-toy", "--target", "checkerboard", "--scheme", "sinkhorn,one-sided,two-sided"}, board_dir));

  std::map<std::string, std::vector<double>> w2, cov;
  for (const fs::path& dir : {eight_dir, board_dir}) {
    std::ifstream in(dir / "train-toy" / "summary.json");
    if (!in) return {false, "missing summary in " + dir.string()};
    const auto summary = nlohmann::json::parse(in);
    for (const auto& cell : summary["cells"]) {
      if (cell["status"] != "ok") return {false, "cell failed: " + cell.dump()};
      const std::string key = cell["target"].get<std::string>() + "/" + cell["scheme"].get<std::string>();
      w2[key].push_back(cell["final_w2sq"].get<double>());
      if (cell.contains("coverage")) cov[key].push_back(cell["coverage"].get<double>());
    }
  }
  const double sk = median(w2["eight-gaussians/sinkhorn"]);
  const double one = median(w2["eight-gaussians/one-sided"]);
  const double sk_cov = median(cov["eight-gaussians/sinkhorn"]);
  const double one_cov = median(cov["eight-gaussians/one-sided"]);
  const double b1 = median(w2["checkerboard/sinkhorn"]);
  const double b2 = median(w2["checkerboard/one-sided"]);
  const double b3 = median(w2["checkerboard/two-sided"]);
  const double spread = std::max({b1, b2, b3}) / std::min({b1, b2, b3});
  const bool pass = c1 == 0 && c2 == 0 && sk < 1.0 && sk_cov == 8 && one >= 3.0 * sk && one_cov < 8 && spread <= 2.0;
  std::ostringstream os;
  os.precision(4);
  os << "median over 3 seeds: 8-gaussians sinkhorn w2sq " << sk << " coverage " << sk_cov << ", one-sided w2sq "
     << one << " coverage " << one_cov << " (ratio " << one / sk << "); checkerboard sinkhorn " << b1
     << ", one-sided " << b2 << ", two-sided " << b3 << " (spread " << spread << ")";
  return {pass, os.str()};
}

}  // namespace

int main(int argc, char** argv) {
  fs::path outdir = "acceptance_out";
  std::string only;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--only" && i + 1 < argc) {
      only = argv[++i];
    } else {
      outdir = a;
    }
  }

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"t1_reduction", t1_reduction},
      {"doubly_stochastic_convergence", doubly_stochastic},
      {"zero_drift_identity", zero_drift},
      {"equal_means_identity", equal_means},
      {"symmetric_scaling", symmetric_scaling},
      {"stop_gradient_euler", stop_gradient_euler},
      {"counterexample", counterexample},
      {"gradient_correctness", gradient},
      {"exact_emd_oracle", emd},
      {"low_tau_repulsion_collapse", repulsion_collapse},
      {"toy_reproduction", [&] { return toy_reproduction(outdir); }},
  };

  int failures = 0;
  int ran = 0;
  nlohmann::json record = nlohmann::json::array();
  for (const auto& [name, fn] : criteria) {
    if (!only.empty() && only != name) continue;
    ++ran;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << " [" << secs << " s]" << std::endl;
    record.push_back({{"criterion", name}, {"pass", o.pass}, {"detail", o.detail}, {"seconds", secs}});
    if (!o.pass) ++failures;
  }
  if (ran == 0) {
    std::cerr << "no criterion named '" << only << "'\n";
    return 2;
  }
  fs::create_directories(outdir);
  std::ofstream(outdir / "acceptance.json") << record.dump(2) << '\n';
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
