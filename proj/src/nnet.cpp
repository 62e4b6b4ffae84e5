#include "sinkdrift/nnet.hpp"

#include <chrono>
#include <cmath>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "sinkdrift/datasets.hpp"
#include "sinkdrift/metrics.hpp"

namespace sinkdrift::nn {

const char* to_string(Activation act) {
  return act == Activation::ReLU ? "relu" : "tanh";
}

Eigen::Index GeneratorParams::parameter_count() const {
  Eigen::Index count = 0;
  for (const auto& layer : layers) count += layer.weight.size() + layer.bias.size();
  return count;
}

bool GeneratorParams::all_finite() const {
  for (const auto& layer : layers) {
    if (!layer.weight.allFinite() || !layer.bias.allFinite()) return false;
  }
  return true;
}

void GeneratorParams::validate() const {
  if (layers.empty()) throw InvalidArgument("generator has no layers");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (layers[l].bias.size() != layers[l].weight.rows()) {
      throw InvalidArgument("generator layer " + std::to_string(l) + ": bias/weight mismatch");
    }
    if (l > 0 && layers[l].weight.cols() != layers[l - 1].weight.rows()) {
      throw InvalidArgument("generator layer " + std::to_string(l) + ": shapes do not chain");
    }
  }
  if (!all_finite()) throw InvalidArgument("generator parameters must be finite");
}

GeneratorParams make_generator(std::span<const int> widths, Activation act, Rng& rng) {
  if (widths.size() < 2) throw InvalidArgument("make_generator: need input and output widths");
  GeneratorParams params;
  params.activation = act;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const int fan_in = widths[l];
    const int fan_out = widths[l + 1];
    if (fan_in < 1 || fan_out < 1) throw InvalidArgument("make_generator: widths must be positive");
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    DenseLayer layer{Eigen::MatrixXd(fan_out, fan_in), Eigen::VectorXd(fan_out)};
    for (int i = 0; i < fan_out; ++i)
      for (int j = 0; j < fan_in; ++j) layer.weight(i, j) = rng.uniform(-bound, bound);
    for (int i = 0; i < fan_out; ++i) layer.bias(i) = rng.uniform(-bound, bound);
    params.layers.push_back(std::move(layer));
  }
  return params;
}

namespace {

Eigen::MatrixXd activate(const Eigen::MatrixXd& z, Activation act) {
  if (act == Activation::ReLU) return z.cwiseMax(0.0);
  return z.array().tanh().matrix();
}

// Multiplies the incoming gradient by the activation derivative at z.
void activation_backward(Eigen::MatrixXd& grad, const Eigen::MatrixXd& z, Activation act) {
  if (act == Activation::ReLU) {
    grad = (z.array() > 0.0).select(grad, 0.0);
  } else {
    grad.array() *= 1.0 - z.array().tanh().square();
  }
}

Gradients zeros_like(const GeneratorParams& params) {
  Gradients g;
  for (const auto& layer : params.layers) {
    g.push_back({Eigen::MatrixXd::Zero(layer.weight.rows(), layer.weight.cols()),
                 Eigen::VectorXd::Zero(layer.bias.size())});
  }
  return g;
}

}  // namespace

Eigen::MatrixXd forward(const GeneratorParams& params, const Eigen::MatrixXd& noise, ForwardTrace* trace) {
  if (params.layers.empty()) throw InvalidArgument("forward: generator has no layers");
  if (noise.cols() != params.input_dim()) {
    throw InvalidArgument("forward: noise has dimension " + std::to_string(noise.cols()) +
                          ", generator expects " + std::to_string(params.input_dim()));
  }
  if (trace) {
    trace->inputs.clear();
    trace->preactivation.clear();
  }
  Eigen::MatrixXd h = noise;
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const DenseLayer& layer = params.layers[l];
    Eigen::MatrixXd z = h * layer.weight.transpose();
    z.rowwise() += layer.bias.transpose();
    if (trace) {
      trace->inputs.push_back(h);
      trace->preactivation.push_back(z);
    }
    h = l + 1 < params.layers.size() ? activate(z, params.activation) : std::move(z);
  }
  return h;
}

Gradients backward(const GeneratorParams& params, const ForwardTrace& trace,
                   const Eigen::MatrixXd& output_grad) {
  const std::size_t depth = params.layers.size();
  if (trace.inputs.size() != depth) throw InvalidArgument("backward: trace does not match generator");
  Gradients grads = zeros_like(params);
  Eigen::MatrixXd g = output_grad;
  for (std::size_t l = depth; l-- > 0;) {
    grads[l].weight = g.transpose() * trace.inputs[l];
    grads[l].bias = g.colwise().sum().transpose();
    if (l > 0) {
      g = g * params.layers[l].weight;
      activation_backward(g, trace.preactivation[l - 1], params.activation);
    }
  }
  return grads;
}

LossAndGrad stop_gradient_loss(const GeneratorParams& params, const Eigen::MatrixXd& noise,
                               const Eigen::MatrixXd& drift) {
  ForwardTrace trace;
  LossAndGrad out;
  out.samples = forward(params, noise, &trace);
  if (drift.rows() != out.samples.rows() || drift.cols() != out.samples.cols()) {
    throw InvalidArgument("stop_gradient_loss: drift shape does not match generator output");
  }
  out.drift = drift;
  const double n = static_cast<double>(noise.rows());
  const Eigen::MatrixXd residual = -drift;
  out.loss = 0.5 * residual.squaredNorm() / n;
  out.grads = backward(params, trace, residual / n);
  return out;
}

LossAndGrad drifting_loss_and_grad(const GeneratorParams& params, const Eigen::MatrixXd& noise,
                                   const Eigen::MatrixXd& data, const DriftConfig<double>& cfg) {
  if (noise.rows() != data.rows()) {
    throw InvalidArgument("drifting_loss_and_grad: noise and data batches must have equal sizes");
  }
  const Eigen::MatrixXd x = forward(params, noise);
  const DriftField<double> field = drift_field(x, data, cfg);
  return stop_gradient_loss(params, noise, field.velocities);
}

Adam::Adam(const GeneratorParams& params, AdamOptions opts)
    : opts_(opts), first_(zeros_like(params)), second_(zeros_like(params)) {}

void Adam::step(GeneratorParams& params, const Gradients& grads) {
  if (grads.size() != params.layers.size()) throw InvalidArgument("adam: gradient layout mismatch");
  ++steps_;
  const double b1 = opts_.beta1;
  const double b2 = opts_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  auto update = [&](auto& param, auto& m, auto& v, const auto& g) {
    m = b1 * m + (1.0 - b1) * g;
    v = b2 * v + (1.0 - b2) * g.cwiseProduct(g);
    param.array() -= opts_.lr * (m.array() / c1) / ((v.array() / c2).sqrt() + opts_.eps);
  };
  for (std::size_t l = 0; l < grads.size(); ++l) {
    update(params.layers[l].weight, first_[l].weight, second_[l].weight, grads[l].weight);
    update(params.layers[l].bias, first_[l].bias, second_[l].bias, grads[l].bias);
  }
}

namespace {

bool grads_finite(const Gradients& grads) {
  for (const auto& g : grads) {
    if (!g.weight.allFinite() || !g.bias.allFinite()) return false;
  }
  return true;
}

}  // namespace

TrainResult train(GeneratorParams params, const TargetSampler& target, const DriftConfig<double>& cfg,
                  const TrainOptions& opts, const std::function<void(const TrainRecord&)>& on_record) {
  params.validate();
  cfg.validate();
  if (opts.iters < 0) throw InvalidArgument("train: iters must be >= 0");
  if (opts.batch < 1 || opts.eval_size < 1 || opts.eval_every < 1) {
    throw InvalidArgument("train: batch, eval_size and eval_every must be positive");
  }
  TrainResult result;
  const Rng root(opts.seed);
  Rng noise_rng = root.split(1);
  Rng data_rng = root.split(2);
  Rng eval_rng = root.split(3);
  const Eigen::Index d_in = params.input_dim();
  const Eigen::MatrixXd eval_noise = sample_prior(opts.eval_size, d_in, eval_rng);
  const Eigen::MatrixXd eval_target = target(opts.eval_size, eval_rng);

  Adam adam(params, AdamOptions{opts.lr});
  const auto start = std::chrono::steady_clock::now();
  for (int it = 1; it <= opts.iters; ++it) {
    const Eigen::MatrixXd noise = sample_prior(opts.batch, d_in, noise_rng);
    const Eigen::MatrixXd data = target(opts.batch, data_rng);
    const LossAndGrad lg = drifting_loss_and_grad(params, noise, data, cfg);
    if (!std::isfinite(lg.loss) || !grads_finite(lg.grads)) {
      std::ostringstream os;
      os << "training diverged at iteration " << it << " (scheme " << to_string(cfg.scheme)
         << ", tau " << cfg.tau << ", loss " << lg.loss << ")";
      throw TrainingDiverged(it, os.str());
    }
    adam.step(params, lg.grads);
    if (it % opts.eval_every == 0 || it == opts.iters) {
      TrainRecord rec;
      rec.iteration = it;
      rec.loss = lg.loss;
      rec.w2sq = exact_w2sq(Eigen::MatrixXd(forward(params, eval_noise)), eval_target).total_cost;
      rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      result.records.push_back(rec);
      if (on_record) on_record(rec);
    }
  }
  result.params = std::move(params);
  return result;
}

void save_checkpoint(const GeneratorParams& params, std::ostream& os) {
  os << "format sinkdrift-generator-v1\n";
  os << "activation " << to_string(params.activation) << "\n";
  os << "layers " << params.layers.size() << "\n";
  os << std::setprecision(17);
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const DenseLayer& layer = params.layers[l];
    os << "layer " << l << " out " << layer.weight.rows() << " in " << layer.weight.cols() << "\n";
    os << "weight";
    for (Eigen::Index i = 0; i < layer.weight.rows(); ++i)
      for (Eigen::Index j = 0; j < layer.weight.cols(); ++j) os << ' ' << layer.weight(i, j);
    os << "\nbias";
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) os << ' ' << layer.bias(i);
    os << "\n";
  }
}

namespace {

void expect_key(std::istream& is, const std::string& key) {
  std::string got;
  if (!(is >> got) || got != key) {
    throw InvalidArgument("checkpoint: expected '" + key + "', got '" + got + "'");
  }
}

}  // namespace

GeneratorParams load_checkpoint(std::istream& is) {
  GeneratorParams params;
  std::string value;
  expect_key(is, "format");
  if (!(is >> value) || value != "sinkdrift-generator-v1") {
    throw InvalidArgument("checkpoint: unsupported format '" + value + "'");
  }
  expect_key(is, "activation");
  is >> value;
  if (value == "relu") {
    params.activation = Activation::ReLU;
  } else if (value == "tanh") {
    params.activation = Activation::Tanh;
  } else {
    throw InvalidArgument("checkpoint: unknown activation '" + value + "'");
  }
  std::size_t count = 0;
  expect_key(is, "layers");
  if (!(is >> count)) throw InvalidArgument("checkpoint: bad layer count");
  for (std::size_t l = 0; l < count; ++l) {
    std::size_t index = 0;
    Eigen::Index rows = 0, cols = 0;
    expect_key(is, "layer");
    is >> index;
    expect_key(is, "out");
    is >> rows;
    expect_key(is, "in");
    is >> cols;
    if (!is || index != l || rows < 1 || cols < 1) throw InvalidArgument("checkpoint: bad layer header");
    DenseLayer layer{Eigen::MatrixXd(rows, cols), Eigen::VectorXd(rows)};
    expect_key(is, "weight");
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < cols; ++j) is >> layer.weight(i, j);
    expect_key(is, "bias");
    for (Eigen::Index i = 0; i < rows; ++i) is >> layer.bias(i);
    if (!is) throw InvalidArgument("checkpoint: truncated values in layer " + std::to_string(l));
    params.layers.push_back(std::move(layer));
  }
  params.validate();
  return params;
}

}  // namespace sinkdrift::nn
