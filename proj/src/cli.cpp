#include "sinkdrift/cli.hpp"

#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"
#include "sinkdrift/datasets.hpp"
#include "sinkdrift/flow.hpp"
#include "sinkdrift/io.hpp"
#include "sinkdrift/metrics.hpp"
#include "sinkdrift/nnet.hpp"
#include "sinkdrift/theory.hpp"

namespace sinkdrift::cli {

namespace fs = std::filesystem;
using nlohmann::json;

std::optional<Scheme> parse_scheme(const std::string& name) {
  if (name == "one-sided") return Scheme::OneSided;
  if (name == "two-sided") return Scheme::TwoSided;
  if (name == "sinkhorn") return Scheme::Sinkhorn;
  return std::nullopt;
}

std::optional<CostKind> parse_kernel(const std::string& name) {
  if (name == "gaussian") return CostKind::SqEuclidean;
  if (name == "laplacian") return CostKind::Euclidean;
  return std::nullopt;
}

std::string cell_slug(Scheme scheme, bool mask, double tau, std::uint64_t seed) {
  return std::string(to_string(scheme)) + (mask ? "_mask_" : "_nomask_") + io::tau_slug(tau) + "_seed" +
         std::to_string(seed);
}

namespace {

// Settings shared by every grid subcommand.
struct Common {
  std::string outdir = "out";
  std::uint64_t seed = 0;
  int jobs = 1;
};

struct TrajectoriesConfig {
  Common common;
  std::vector<std::string> schemes = {"one-sided", "two-sided", "sinkhorn"};
  std::vector<double> taus = {0.01, 0.1, 1.0, 10.0};
  std::string mask = "default";
  int sinkhorn_iters = 61;
  std::string kernel = "gaussian";
  int n = 100;
  double eta = 0.1;
  int steps = 500;
  int snapshot_every = 10;
  std::vector<double> source_mean = {-2.0, 0.0};
  double source_std = 0.5;
  std::vector<std::vector<double>> target_modes = {{2.0, 1.0}, {2.0, -1.0}};
  double target_std = 0.25;
};

struct TrainToyConfig {
  Common common;
  std::vector<std::string> targets = {"eight-gaussians", "checkerboard"};
  std::vector<std::string> schemes = {"one-sided", "two-sided", "sinkhorn"};
  std::vector<double> taus = {0.01, 0.05, 0.1};
  std::string mask = "default";
  int sinkhorn_iters = 11;
  std::string kernel = "gaussian";
  int seeds = 1;
  int iters = 5000;
  int batch = 500;
  double lr = 1e-3;
  int eval_every = 100;
  int eval_size = 500;
  int final_samples = 2000;
  std::vector<int> hidden = {128, 128};
  std::string activation = "relu";
  double coverage_radius = 0.6;
};

struct EvalConfig {
  Common common;
  std::string generated;
  std::string target;
  std::string target_kind;
  std::string centers;
  std::vector<double> taus = {0.1};
  double radius = 0.6;
  int cap = 2000;
  std::string kernel = "gaussian";
  double divergence_tol = 1e-6;
  int divergence_max_half_steps = 100000;
};

void to_json(json& j, const TrajectoriesConfig& c) {
  j = json{{"outdir", c.common.outdir},
           {"seed", c.common.seed},
           {"jobs", c.common.jobs},
           {"scheme", c.schemes},
           {"tau", c.taus},
           {"mask", c.mask},
           {"sinkhorn_iters", c.sinkhorn_iters},
           {"kernel", c.kernel},
           {"n", c.n},
           {"eta", c.eta},
           {"steps", c.steps},
           {"snapshot_every", c.snapshot_every},
           {"source_mean", c.source_mean},
           {"source_std", c.source_std},
           {"target_modes", c.target_modes},
           {"target_std", c.target_std}};
}

void to_json(json& j, const TrainToyConfig& c) {
  j = json{{"outdir", c.common.outdir},
           {"seed", c.common.seed},
           {"jobs", c.common.jobs},
           {"target", c.targets},
           {"scheme", c.schemes},
           {"tau", c.taus},
           {"mask", c.mask},
           {"sinkhorn_iters", c.sinkhorn_iters},
           {"kernel", c.kernel},
           {"seeds", c.seeds},
           {"iters", c.iters},
           {"batch", c.batch},
           {"lr", c.lr},
           {"eval_every", c.eval_every},
           {"eval_size", c.eval_size},
           {"final_samples", c.final_samples},
           {"hidden", c.hidden},
           {"activation", c.activation},
           {"coverage_radius", c.coverage_radius}};
}

void to_json(json& j, const EvalConfig& c) {
  j = json{{"outdir", c.common.outdir}, {"seed", c.common.seed}, {"generated", c.generated},
           {"target", c.target},        {"target_kind", c.target_kind}, {"centers", c.centers},
           {"tau", c.taus},             {"radius", c.radius},     {"cap", c.cap},
           {"kernel", c.kernel},        {"divergence_tol", c.divergence_tol},
           {"divergence_max_half_steps", c.divergence_max_half_steps}};
}

// Reads `key` from a config object into `field` if present.
template <typename T>
void take(json& obj, const char* key, T& field) {
  auto it = obj.find(key);
  if (it == obj.end()) return;
  try {
    field = it->get<T>();
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("config key '") + key + "': " + e.what());
  }
  obj.erase(it);
}

// A scalar where a list is expected is accepted as a one-element list.
template <typename T>
void take_list(json& obj, const char* key, std::vector<T>& field) {
  auto it = obj.find(key);
  if (it == obj.end()) return;
  if (!it->is_array()) *it = json::array({*it});
  take(obj, key, field);
}

void reject_leftovers(const json& obj) {
  if (!obj.empty()) throw InvalidArgument("unknown config key '" + obj.begin().key() + "'");
}

json load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open config " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw InvalidArgument("config " + path + ": " + e.what());
  }
  if (!j.is_object()) throw InvalidArgument("config " + path + ": top level must be an object");
  return j;
}

void apply_common(json& j, Common& c) {
  take(j, "outdir", c.outdir);
  take(j, "seed", c.seed);
  take(j, "jobs", c.jobs);
}

void apply(json j, TrajectoriesConfig& c) {
  apply_common(j, c.common);
  take_list(j, "scheme", c.schemes);
  take_list(j, "tau", c.taus);
  take(j, "mask", c.mask);
  take(j, "sinkhorn_iters", c.sinkhorn_iters);
  take(j, "kernel", c.kernel);
  take(j, "n", c.n);
  take(j, "eta", c.eta);
  take(j, "steps", c.steps);
  take(j, "snapshot_every", c.snapshot_every);
  take(j, "source_mean", c.source_mean);
  take(j, "source_std", c.source_std);
  take(j, "target_modes", c.target_modes);
  take(j, "target_std", c.target_std);
  reject_leftovers(j);
}

void apply(json j, TrainToyConfig& c) {
  apply_common(j, c.common);
  take_list(j, "target", c.targets);
  take_list(j, "scheme", c.schemes);
  take_list(j, "tau", c.taus);
  take(j, "mask", c.mask);
  take(j, "sinkhorn_iters", c.sinkhorn_iters);
  take(j, "kernel", c.kernel);
  take(j, "seeds", c.seeds);
  take(j, "iters", c.iters);
  take(j, "batch", c.batch);
  take(j, "lr", c.lr);
  take(j, "eval_every", c.eval_every);
  take(j, "eval_size", c.eval_size);
  take(j, "final_samples", c.final_samples);
  take_list(j, "hidden", c.hidden);
  take(j, "activation", c.activation);
  take(j, "coverage_radius", c.coverage_radius);
  reject_leftovers(j);
}

void apply(json j, EvalConfig& c) {
  apply_common(j, c.common);
  take(j, "generated", c.generated);
  take(j, "target", c.target);
  take(j, "target_kind", c.target_kind);
  take(j, "centers", c.centers);
  take_list(j, "tau", c.taus);
  take(j, "radius", c.radius);
  take(j, "cap", c.cap);
  take(j, "divergence_tol", c.divergence_tol);
  take(j, "divergence_max_half_steps", c.divergence_max_half_steps);
  take(j, "kernel", c.kernel);
  reject_leftovers(j);
}

void require(bool ok, const std::string& what) {
  if (!ok) throw InvalidArgument(what);
}

std::vector<Scheme> resolve_schemes(const std::vector<std::string>& names) {
  require(!names.empty(), "at least one scheme is required");
  std::vector<Scheme> out;
  for (const auto& n : names) {
    const auto s = parse_scheme(n);
    require(s.has_value(), "unknown scheme '" + n + "' (expected one-sided, two-sided or sinkhorn)");
    out.push_back(*s);
  }
  return out;
}

CostKind resolve_kernel(const std::string& name) {
  const auto k = parse_kernel(name);
  require(k.has_value(), "unknown kernel '" + name + "' (expected gaussian or laplacian)");
  return *k;
}

void validate_taus(const std::vector<double>& taus) {
  require(!taus.empty(), "at least one tau is required");
  for (double t : taus) require(t > 0 && std::isfinite(t), "tau must be positive, got " + io::format_double(t));
}

void validate_common(const Common& c) {
  require(c.jobs >= 1, "jobs must be >= 1");
  require(!c.outdir.empty(), "outdir must not be empty");
}

void validate_sinkhorn_iters(int t) {
  require(t >= 1 && t % 2 == 1, "sinkhorn-iters must be odd and >= 1, got " + std::to_string(t));
}

// Mask variants run for one scheme.
std::vector<bool> mask_variants(const std::string& mask, Scheme scheme, bool default_both) {
  if (mask == "on") return {true};
  if (mask == "off") return {false};
  if (mask == "both") return {true, false};
  require(mask == "default", "mask must be on, off, both or default, got '" + mask + "'");
  if (scheme == Scheme::Sinkhorn) return {false};
  if (default_both) return {true, false};
  return {true};
}

void ensure_writable_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw InvalidArgument("cannot create output directory " + dir.string());
  const fs::path probe = dir / ".write-probe";
  {
    std::ofstream p(probe);
    if (!p) throw InvalidArgument("output directory is not writable: " + dir.string());
  }
  fs::remove(probe, ec);
}

// Runs fn(0..count-1) on up to `jobs` threads.
void run_pool(std::size_t count, int jobs, const std::function<void(std::size_t)>& fn) {
  const auto workers = std::min<std::size_t>(count, static_cast<std::size_t>(std::max(jobs, 1)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> threads;
  for (std::size_t w = 0; w < workers; ++w) {
    threads.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) fn(i);
    });
  }
  for (auto& t : threads) t.join();
}

struct Logger {
  std::ostream& err;
  std::mutex mu;
  void line(const std::string& s) {
    std::lock_guard lock(mu);
    err << s << '\n' << std::flush;
  }
};

struct CellOutcome {
  json summary;
  bool ok = true;
};

// Trajectories -------------------------------------------------------------

Eigen::MatrixXd gaussian_cloud(Rng& rng, int n, const std::vector<double>& mean, double std_dev) {
  Eigen::MatrixXd out(n, static_cast<Eigen::Index>(mean.size()));
  for (int i = 0; i < n; ++i)
    for (std::size_t k = 0; k < mean.size(); ++k) out(i, k) = mean[k] + std_dev * rng.normal();
  return out;
}

Eigen::MatrixXd mixture_cloud(Rng& rng, int n, const std::vector<std::vector<double>>& modes, double std_dev) {
  const auto d = static_cast<Eigen::Index>(modes.front().size());
  Eigen::MatrixXd out(n, d);
  for (int i = 0; i < n; ++i) {
    const auto& m = modes[rng.below(modes.size())];
    for (Eigen::Index k = 0; k < d; ++k) out(i, k) = m[k] + std_dev * rng.normal();
  }
  return out;
}

int cmd_trajectories(const TrajectoriesConfig& c, std::ostream& out, Logger& log) {
  validate_common(c.common);
  const auto schemes = resolve_schemes(c.schemes);
  validate_taus(c.taus);
  validate_sinkhorn_iters(c.sinkhorn_iters);
  const CostKind cost = resolve_kernel(c.kernel);
  require(c.n >= 1, "n must be >= 1");
  require(c.eta > 0, "eta must be positive");
  require(c.steps >= 1, "steps must be >= 1");
  require(c.snapshot_every >= 1, "snapshot_every must be >= 1");
  require(!c.source_mean.empty() && c.source_std >= 0, "invalid source distribution");
  require(!c.target_modes.empty() && c.target_std >= 0, "invalid target distribution");
  for (const auto& m : c.target_modes) {
    require(m.size() == c.source_mean.size(), "target modes and source mean must share a dimension");
  }

  struct Cell {
    Scheme scheme;
    bool mask;
    double tau;
  };
  std::vector<Cell> cells;
  for (Scheme s : schemes)
    for (double tau : c.taus)
      for (bool m : mask_variants(c.mask, s, true)) cells.push_back({s, m, tau});

  const fs::path root = fs::path(c.common.outdir) / "trajectories";
  ensure_writable_dir(root);

  const Rng base(c.common.seed);
  Rng source_rng = base.split(1);
  Rng target_rng = base.split(2);
  const Eigen::MatrixXd x0 = gaussian_cloud(source_rng, c.n, c.source_mean, c.source_std);
  const Eigen::MatrixXd y = mixture_cloud(target_rng, c.n, c.target_modes, c.target_std);

  std::vector<CellOutcome> outcomes(cells.size());
  run_pool(cells.size(), c.common.jobs, [&](std::size_t idx) {
    const Cell& cell = cells[idx];
    const std::string slug = cell_slug(cell.scheme, cell.mask, cell.tau, c.common.seed);
    json s{{"slug", slug},
           {"scheme", to_string(cell.scheme)},
           {"mask", cell.mask},
           {"tau", cell.tau},
           {"file", slug + "/trajectory.csv"}};
    DriftConfig<double> cfg;
    cfg.scheme = cell.scheme;
    cfg.tau = cell.tau;
    cfg.sinkhorn_half_steps = c.sinkhorn_iters;
    cfg.mask = cell.mask ? MaskPolicy::On : MaskPolicy::Off;
    cfg.cost = cost;
    CellOutcome& oc = outcomes[idx];
    try {
      const auto traj = simulate(x0, y, cfg, c.eta, c.steps, c.snapshot_every);
      std::ostringstream csv;
      io::write_trajectory_csv(csv, traj);
      io::write_text_file(root / slug / "trajectory.csv", csv.str());
      json w2 = json::array();
      for (const auto& snap : traj.snapshots) {
        w2.push_back({{"step", snap.step}, {"w2sq", exact_w2sq(snap.points, y).total_cost}});
      }
      s["status"] = "ok";
      s["final_w2sq"] = w2.back()["w2sq"];
      s["w2sq_by_snapshot"] = w2;
      log.line("trajectories " + slug + ": final w2sq " + io::format_double(s["final_w2sq"].get<double>()));
    } catch (const NumericalError& e) {
      oc.ok = false;
      s["status"] = "failed";
      s["error"] = e.what();
      log.line("trajectories " + slug + ": failed: " + e.what());
    }
    oc.summary = std::move(s);
  });

  std::ostringstream target_csv;
  io::write_points_csv(target_csv, y);
  io::write_text_file(root / "target.csv", target_csv.str());
  std::ostringstream source_csv;
  io::write_points_csv(source_csv, x0);
  io::write_text_file(root / "source.csv", source_csv.str());

  json summary{{"subcommand", "trajectories"}, {"config", c}, {"cells", json::array()}};
  bool all_ok = true;
  for (auto& oc : outcomes) {
    all_ok = all_ok && oc.ok;
    summary["cells"].push_back(std::move(oc.summary));
  }
  summary["conventions"] = {{"w2sq", "exact assignment, uniform weights 1/N"}};
  io::write_text_file(root / "summary.json", io::dump_json(summary));
  out << "wrote " << cells.size() << " trajectory cells to " << root.string() << '\n';
  return all_ok ? kSuccess : kNumericalFailure;
}

// Toy training -----------------------------------------------------------

int cmd_train_toy(const TrainToyConfig& c, std::ostream& out, Logger& log) {
  validate_common(c.common);
  const auto schemes = resolve_schemes(c.schemes);
  validate_taus(c.taus);
  validate_sinkhorn_iters(c.sinkhorn_iters);
  const CostKind cost = resolve_kernel(c.kernel);
  require(!c.targets.empty(), "at least one target is required");
  std::vector<ToyKind> targets;
  for (const auto& t : c.targets) {
    const auto k = parse_toy_kind(t);
    require(k.has_value(), "unknown target '" + t + "'");
    targets.push_back(*k);
  }
  require(c.seeds >= 1, "seeds must be >= 1");
  require(c.iters >= 0, "iters must be >= 0");
  require(c.batch >= 1 && c.eval_size >= 1 && c.eval_every >= 1 && c.final_samples >= 1,
          "batch, eval_size, eval_every and final_samples must be >= 1");
  require(c.lr > 0, "lr must be positive");
  require(c.coverage_radius > 0, "coverage_radius must be positive");
  for (int h : c.hidden) require(h >= 1, "hidden widths must be >= 1");
  nn::Activation act;
  if (c.activation == "relu") {
    act = nn::Activation::ReLU;
  } else if (c.activation == "tanh") {
    act = nn::Activation::Tanh;
  } else {
    throw InvalidArgument("activation must be relu or tanh, got '" + c.activation + "'");
  }

  struct Cell {
    ToyKind target;
    Scheme scheme;
    bool mask;
    double tau;
    std::uint64_t seed;
  };
  std::vector<Cell> cells;
  for (ToyKind t : targets)
    for (Scheme s : schemes)
      for (double tau : c.taus)
        for (bool m : mask_variants(c.mask, s, false))
          for (int k = 0; k < c.seeds; ++k) cells.push_back({t, s, m, tau, c.common.seed + k});

  const fs::path root = fs::path(c.common.outdir) / "train-toy";
  ensure_writable_dir(root);

  std::vector<int> widths = {2};
  widths.insert(widths.end(), c.hidden.begin(), c.hidden.end());
  widths.push_back(2);

  std::vector<CellOutcome> outcomes(cells.size());
  run_pool(cells.size(), c.common.jobs, [&](std::size_t idx) {
    const Cell& cell = cells[idx];
    const std::string slug = std::string(to_string(cell.target)) + "/" +
                             cell_slug(cell.scheme, cell.mask, cell.tau, cell.seed);
    json s{{"slug", slug},
           {"target", to_string(cell.target)},
           {"scheme", to_string(cell.scheme)},
           {"mask", cell.mask},
           {"tau", cell.tau},
           {"seed", cell.seed}};
    CellOutcome& oc = outcomes[idx];
    ToyTarget target;
    target.kind = cell.target;
    DriftConfig<double> cfg;
    cfg.scheme = cell.scheme;
    cfg.tau = cell.tau;
    cfg.sinkhorn_half_steps = c.sinkhorn_iters;
    cfg.mask = cell.mask ? MaskPolicy::On : MaskPolicy::Off;
    cfg.cost = cost;
    const Rng base(cell.seed);
    Rng init_rng = base.split(0);
    nn::TrainOptions opts;
    opts.iters = c.iters;
    opts.batch = c.batch;
    opts.lr = c.lr;
    opts.eval_every = c.eval_every;
    opts.eval_size = c.eval_size;
    opts.seed = cell.seed;
    try {
      nn::GeneratorParams params = nn::make_generator(widths, act, init_rng);
      const auto sampler = [&](Eigen::Index n, Rng& rng) { return sample(target, n, rng); };
      nn::TrainResult result = nn::train(std::move(params), sampler, cfg, opts);
      Rng final_rng = base.split(4);
      Rng target_rng = base.split(5);
      const Eigen::MatrixXd generated = nn::forward(result.params, sample_prior(c.final_samples, 2, final_rng));
      const Eigen::MatrixXd reference = sample(target, c.final_samples, target_rng);

      std::ostringstream train_csv, samples_csv, target_csv, ckpt;
      io::write_train_csv(train_csv, result.records);
      io::write_points_csv(samples_csv, generated);
      io::write_points_csv(target_csv, reference);
      nn::save_checkpoint(result.params, ckpt);
      io::write_text_file(root / slug / "train.csv", train_csv.str());
      io::write_text_file(root / slug / "samples.csv", samples_csv.str());
      io::write_text_file(root / slug / "target.csv", target_csv.str());
      io::write_text_file(root / slug / "checkpoint.txt", ckpt.str());

      s["status"] = "ok";
      s["final_w2sq"] = result.records.empty() ? json(nullptr) : json(result.records.back().w2sq);
      s["final_loss"] = result.records.empty() ? json(nullptr) : json(result.records.back().loss);
      if (cell.target == ToyKind::EightGaussians) {
        s["coverage"] = mode_coverage(generated, target.centers(), c.coverage_radius);
        s["modes"] = target.centers().rows();
      }
      log.line("train-toy " + slug + ": final w2sq " +
               (result.records.empty() ? std::string("n/a") : io::format_double(result.records.back().w2sq)));
    } catch (const NumericalError& e) {
      oc.ok = false;
      s["status"] = "failed";
      s["error"] = e.what();
      if (const auto* d = dynamic_cast<const nn::TrainingDiverged*>(&e)) s["failed_iteration"] = d->iteration();
      log.line("train-toy " + slug + ": failed: " + e.what());
    }
    oc.summary = std::move(s);
  });

  json summary{{"subcommand", "train-toy"}, {"config", c}, {"cells", json::array()}};
  bool all_ok = true;
  for (auto& oc : outcomes) {
    all_ok = all_ok && oc.ok;
    summary["cells"].push_back(std::move(oc.summary));
  }
  summary["conventions"] = {{"w2sq", "exact assignment on the held-out evaluation batch, uniform weights 1/N"},
                            {"coverage", "modes with at least max(1, N/(4K)) samples within coverage_radius"}};
  io::write_text_file(root / "summary.json", io::dump_json(summary));
  out << "wrote " << cells.size() << " training cells to " << root.string() << '\n';
  return all_ok ? kSuccess : kNumericalFailure;
}

// Theory -------------------------------------------------------------------

int cmd_theory(const theory::SuiteOptions& opts, const std::string& outdir, std::ostream& out) {
  const auto reports = theory::run_suite(opts);
  json j{{"subcommand", "theory"}, {"seed", opts.seed}, {"checks", json::array()}};
  bool all = true;
  for (const auto& r : reports) {
    all = all && r.pass;
    j["checks"].push_back(theory::to_json(r));
    out << (r.pass ? "PASS " : "FAIL ") << r.name;
    if (!r.detail.empty()) out << ": " << r.detail;
    out << '\n';
  }
  j["pass"] = all;
  const fs::path root = fs::path(outdir) / "theory";
  ensure_writable_dir(root);
  io::write_text_file(root / "report.json", io::dump_json(j));
  return all ? kSuccess : kTheoryFailure;
}

// Eval -----------------------------------------------------------------------

int cmd_eval(const EvalConfig& c, std::ostream& out) {
  require(!c.generated.empty(), "eval needs --generated");
  require(c.target.empty() != c.target_kind.empty(), "eval needs exactly one of --target and --target-kind");
  validate_taus(c.taus);
  require(c.radius > 0, "radius must be positive");
  require(c.cap >= 1, "cap must be >= 1");
  require(c.divergence_tol > 0, "divergence_tol must be positive");
  require(c.divergence_max_half_steps >= 2, "divergence_max_half_steps must be >= 2");
  const CostKind cost = resolve_kernel(c.kernel);

  Eigen::MatrixXd x = io::read_points_csv(fs::path(c.generated));
  Eigen::MatrixXd y;
  Eigen::MatrixXd centers;
  if (!c.target.empty()) {
    y = io::read_points_csv(fs::path(c.target));
  } else {
    const auto kind = parse_toy_kind(c.target_kind);
    require(kind.has_value(), "unknown target kind '" + c.target_kind + "'");
    ToyTarget t;
    t.kind = *kind;
    Rng rng = Rng(c.common.seed).split(5);
    y = sample(t, x.rows(), rng);
    centers = t.centers();
  }
  if (!c.centers.empty()) centers = io::read_points_csv(fs::path(c.centers));
  require(x.cols() == y.cols(), "generated and target dimensions differ");
  const Eigen::Index n = std::min<Eigen::Index>({x.rows(), y.rows(), static_cast<Eigen::Index>(c.cap)});
  const Eigen::MatrixXd xs = x.topRows(n);
  const Eigen::MatrixXd ys = y.topRows(n);

  json j{{"subcommand", "eval"}, {"config", c}, {"n", n}};
  j["w2sq"] = exact_w2sq(xs, ys, static_cast<Eigen::Index>(c.cap)).total_cost;
  json div = json::array();
  DivergenceOptions<double> dopts;
  dopts.cost = cost;
  dopts.tol = c.divergence_tol;
  dopts.max_half_steps = c.divergence_max_half_steps;
  for (double tau : c.taus) {
    const DivergenceValue v = sinkhorn_divergence(xs, ys, tau, dopts);
    div.push_back({{"tau", tau},
                   {"s", v.s},
                   {"ot_xy", v.ot_xy},
                   {"ot_xx", v.ot_xx},
                   {"ot_yy", v.ot_yy},
                   {"iterations", v.iterations}});
  }
  j["sinkhorn_divergence"] = div;
  if (centers.rows() > 0) {
    require(centers.cols() == x.cols(), "centers dimension differs from generated points");
    j["coverage"] = mode_coverage(x, centers, c.radius);
    j["modes"] = centers.rows();
  }
  j["conventions"] = {{"w2sq", "exact assignment, uniform weights 1/N"}};
  const fs::path root = fs::path(c.common.outdir) / "eval";
  ensure_writable_dir(root);
  io::write_text_file(root / "metrics.json", io::dump_json(j));
  out << io::dump_json(j);
  return kSuccess;
}

// Flag plumbing ---------------------------------------------------------------

struct CommonFlags {
  std::string config;
  std::optional<std::string> outdir;
  std::optional<std::uint64_t> seed;
  std::optional<int> jobs;

  void add(CLI::App* app, bool with_jobs = true) {
    app->add_option("--config", config, "JSON config file; flags override its values")->check(CLI::ExistingFile);
    app->add_option("--outdir", outdir, "Output root directory (default: out)");
    app->add_option("--seed", seed, "Base random seed (default: 0)");
    if (with_jobs) app->add_option("--jobs", jobs, "Concurrent grid cells (default: 1)");
  }

  void apply(Common& c) const {
    if (outdir) c.outdir = *outdir;
    if (seed) c.seed = *seed;
    if (jobs) c.jobs = *jobs;
  }
};

template <typename T>
void override_if(const std::optional<T>& flag, T& field) {
  if (flag) field = *flag;
}

template <typename T>
void override_if(const std::vector<T>& flag, std::vector<T>& field) {
  if (!flag.empty()) field = flag;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Drift-field dynamics with one-sided, two-sided and Sinkhorn normalization", "sinkdrift"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "sinkdrift 1.0.0");

  // trajectories
  CommonFlags traj_common;
  std::vector<std::string> traj_schemes;
  std::vector<double> traj_taus;
  std::optional<std::string> traj_mask, traj_kernel;
  std::optional<int> traj_iters, traj_n, traj_steps, traj_snap;
  std::optional<double> traj_eta;
  auto* traj = app.add_subcommand("trajectories", "Euler particle flows over a (scheme, tau, mask) grid");
  traj_common.add(traj);
  traj->add_option("--scheme", traj_schemes, "one-sided, two-sided, sinkhorn (comma separated)")->delimiter(',');
  traj->add_option("--tau", traj_taus, "Temperatures (comma separated)")->delimiter(',');
  traj->add_option("--mask", traj_mask, "Self-distance masking: on, off or both");
  traj->add_option("--sinkhorn-iters", traj_iters, "Sinkhorn half-steps (odd)");
  traj->add_option("--kernel", traj_kernel, "gaussian or laplacian");
  traj->add_option("--n", traj_n, "Particles");
  traj->add_option("--eta", traj_eta, "Euler step size");
  traj->add_option("--steps", traj_steps, "Euler steps");
  traj->add_option("--snapshot-every", traj_snap, "Snapshot stride");

  // train-toy
  CommonFlags train_common;
  std::vector<std::string> train_targets, train_schemes;
  std::vector<double> train_taus;
  std::vector<int> train_hidden;
  std::optional<std::string> train_mask, train_kernel, train_act;
  std::optional<int> train_iters_t, train_seeds, train_iters, train_batch, train_eval_every, train_eval_size,
      train_final;
  std::optional<double> train_lr, train_radius;
  auto* train = app.add_subcommand("train-toy", "Train generators on 2-D toy targets");
  train_common.add(train);
  train->add_option("--target", train_targets, "eight-gaussians, checkerboard, two-moons, spiral")->delimiter(',');
  train->add_option("--scheme", train_schemes, "one-sided, two-sided, sinkhorn (comma separated)")->delimiter(',');
  train->add_option("--tau", train_taus, "Temperatures (comma separated)")->delimiter(',');
  train->add_option("--mask", train_mask, "Self-distance masking: on, off or both");
  train->add_option("--sinkhorn-iters", train_iters_t, "Sinkhorn half-steps (odd)");
  train->add_option("--kernel", train_kernel, "gaussian or laplacian");
  train->add_option("--seeds", train_seeds, "Seeds per cell, counting up from --seed");
  train->add_option("--iters", train_iters, "Training iterations");
  train->add_option("--batch", train_batch, "Batch size");
  train->add_option("--lr", train_lr, "Adam learning rate");
  train->add_option("--eval-every", train_eval_every, "Evaluation stride");
  train->add_option("--eval-size", train_eval_size, "Held-out evaluation batch size");
  train->add_option("--final-samples", train_final, "Generated samples written after training");
  train->add_option("--hidden", train_hidden, "Hidden widths (comma separated)")->delimiter(',');
  train->add_option("--activation", train_act, "relu or tanh");
  train->add_option("--coverage-radius", train_radius, "Radius for mode coverage");

  // theory
  std::string theory_config;
  std::optional<std::string> theory_only, theory_outdir;
  std::optional<std::uint64_t> theory_seed;
  bool theory_wrong_sign = false;
  auto* theory_cmd = app.add_subcommand("theory", "Run the identifiability checks");
  theory_cmd->add_option("--config", theory_config, "JSON config file")->check(CLI::ExistingFile);
  theory_cmd->add_option("--outdir", theory_outdir, "Output root directory (default: out)");
  theory_cmd->add_option("--seed", theory_seed, "Seed for the randomized checks");
  theory_cmd->add_option("--only", theory_only, "Run a single check");
  theory_cmd->add_flag("--inject-wrong-sign-f1", theory_wrong_sign)->group("");

  // eval
  CommonFlags eval_common;
  std::optional<std::string> eval_generated, eval_target, eval_kind, eval_centers, eval_kernel;
  std::vector<double> eval_taus;
  std::optional<double> eval_radius, eval_div_tol;
  std::optional<int> eval_cap, eval_div_cap;
  auto* eval = app.add_subcommand("eval", "W2^2, Sinkhorn divergence and mode coverage of a sample file");
  eval_common.add(eval, false);
  eval->add_option("--generated", eval_generated, "Generated points CSV");
  eval->add_option("--target", eval_target, "Target points CSV");
  eval->add_option("--target-kind", eval_kind, "Sample the target from a toy distribution instead");
  eval->add_option("--centers", eval_centers, "Mode centers CSV for coverage");
  eval->add_option("--tau", eval_taus, "Divergence temperatures (comma separated)")->delimiter(',');
  eval->add_option("--radius", eval_radius, "Coverage radius");
  eval->add_option("--cap", eval_cap, "Maximum points per side");
  eval->add_option("--kernel", eval_kernel, "gaussian or laplacian");
  eval->add_option("--divergence-tol", eval_div_tol, "Marginal tolerance of the divergence plans");
  eval->add_option("--divergence-max-half-steps", eval_div_cap, "Half-step cap of the divergence plans");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kSuccess : kConfigError;
  }

  Logger log{err, {}};
  try {
    if (*traj) {
      TrajectoriesConfig c;
      if (!traj_common.config.empty()) apply(load_config(traj_common.config), c);
      traj_common.apply(c.common);
      override_if(traj_schemes, c.schemes);
      override_if(traj_taus, c.taus);
      override_if(traj_mask, c.mask);
      override_if(traj_iters, c.sinkhorn_iters);
      override_if(traj_kernel, c.kernel);
      override_if(traj_n, c.n);
      override_if(traj_eta, c.eta);
      override_if(traj_steps, c.steps);
      override_if(traj_snap, c.snapshot_every);
      return cmd_trajectories(c, out, log);
    }
    if (*train) {
      TrainToyConfig c;
      if (!train_common.config.empty()) apply(load_config(train_common.config), c);
      train_common.apply(c.common);
      override_if(train_targets, c.targets);
      override_if(train_schemes, c.schemes);
      override_if(train_taus, c.taus);
      override_if(train_mask, c.mask);
      override_if(train_iters_t, c.sinkhorn_iters);
      override_if(train_kernel, c.kernel);
      override_if(train_seeds, c.seeds);
      override_if(train_iters, c.iters);
      override_if(train_batch, c.batch);
      override_if(train_lr, c.lr);
      override_if(train_eval_every, c.eval_every);
      override_if(train_eval_size, c.eval_size);
      override_if(train_final, c.final_samples);
      override_if(train_hidden, c.hidden);
      override_if(train_act, c.activation);
      override_if(train_radius, c.coverage_radius);
      return cmd_train_toy(c, out, log);
    }
    if (*theory_cmd) {
      theory::SuiteOptions opts;
      std::string outdir = "out";
      if (!theory_config.empty()) {
        json j = load_config(theory_config);
        std::string only;
        take(j, "outdir", outdir);
        take(j, "seed", opts.seed);
        take(j, "only", only);
        reject_leftovers(j);
        if (!only.empty()) opts.only = only;
      }
      if (theory_outdir) outdir = *theory_outdir;
      if (theory_seed) opts.seed = *theory_seed;
      if (theory_only) opts.only = *theory_only;
      opts.inject_wrong_sign_f1 = theory_wrong_sign;
      return cmd_theory(opts, outdir, out);
    }
    if (*eval) {
      EvalConfig c;
      if (!eval_common.config.empty()) apply(load_config(eval_common.config), c);
      eval_common.apply(c.common);
      if (eval_generated) c.generated = *eval_generated;
      if (eval_target) c.target = *eval_target;
      if (eval_kind) c.target_kind = *eval_kind;
      if (eval_centers) c.centers = *eval_centers;
      override_if(eval_taus, c.taus);
      override_if(eval_radius, c.radius);
      override_if(eval_cap, c.cap);
      override_if(eval_kernel, c.kernel);
      override_if(eval_div_tol, c.divergence_tol);
      override_if(eval_div_cap, c.divergence_max_half_steps);
      return cmd_eval(c, out);
    }
  } catch (const InvalidArgument& e) {
    err << "error: " << e.what() << '\n';
    return kConfigError;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << '\n';
    return kNumericalFailure;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kConfigError;
  }
  return kConfigError;
}

}  // namespace sinkdrift::cli
