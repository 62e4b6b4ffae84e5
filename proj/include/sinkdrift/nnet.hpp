#pragma once

// Small fully connected generator with hand-written backpropagation, Adam,
// and the stop-gradient drifting objective.

#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "sinkdrift/drift.hpp"
#include "sinkdrift/rng.hpp"

namespace sinkdrift::nn {

enum class Activation { ReLU, Tanh };

const char* to_string(Activation act);

struct DenseLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;    // out
};

/// Affine layers chained with an activation between them; the last layer is
/// purely affine.
struct GeneratorParams {
  std::vector<DenseLayer> layers;
  Activation activation = Activation::ReLU;

  Eigen::Index input_dim() const { return layers.front().weight.cols(); }
  Eigen::Index output_dim() const { return layers.back().weight.rows(); }
  Eigen::Index parameter_count() const;
  bool all_finite() const;
  void validate() const;
};

/// Gradients share the layout of the parameters.
using Gradients = std::vector<DenseLayer>;

/// widths = {d_in, hidden..., d_out}. Weights and biases are drawn from
/// U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
GeneratorParams make_generator(std::span<const int> widths, Activation act, Rng& rng);

/// Intermediate values kept for the backward pass.
struct ForwardTrace {
  std::vector<Eigen::MatrixXd> inputs;       // input to each layer (n x in)
  std::vector<Eigen::MatrixXd> preactivation;  // n x out
};

/// Maps each noise row through the network.
Eigen::MatrixXd forward(const GeneratorParams& params, const Eigen::MatrixXd& noise,
                        ForwardTrace* trace = nullptr);

/// Parameter gradients given dL/d(output) (n x d_out).
Gradients backward(const GeneratorParams& params, const ForwardTrace& trace,
                   const Eigen::MatrixXd& output_grad);

struct LossAndGrad {
  double loss = 0;
  Gradients grads;
  Eigen::MatrixXd samples;  // generator outputs x_i
  Eigen::MatrixXd drift;    // detached V_i
};

/// L = (1/n) sum_i 1/2 |x_i - sg(x_i + V_i)|^2 for a given (detached) drift.
/// The residual x_i - sg(x_i + V_i) has forward value -V_i, so
/// L = |V|^2 / (2n) and dL/dtheta = -(1/n) sum_i J_i^T V_i.
LossAndGrad stop_gradient_loss(const GeneratorParams& params, const Eigen::MatrixXd& noise,
                               const Eigen::MatrixXd& drift);

/// Drifting objective with V = drift_field(x, data, x, cfg) computed from the
/// current generator outputs.
LossAndGrad drifting_loss_and_grad(const GeneratorParams& params, const Eigen::MatrixXd& noise,
                                   const Eigen::MatrixXd& data, const DriftConfig<double>& cfg);

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  Adam(const GeneratorParams& params, AdamOptions opts);

  void step(GeneratorParams& params, const Gradients& grads);
  long steps() const { return steps_; }
  const AdamOptions& options() const { return opts_; }

 private:
  AdamOptions opts_;
  Gradients first_;
  Gradients second_;
  long steps_ = 0;
};

struct TrainRecord {
  int iteration = 0;
  double loss = 0;
  double w2sq = 0;
  double seconds = 0;
};

struct TrainOptions {
  int iters = 5000;
  Eigen::Index batch = 500;
  double lr = 1e-3;
  int eval_every = 100;
  Eigen::Index eval_size = 500;
  std::uint64_t seed = 0;
};

/// Draws n target samples.
using TargetSampler = std::function<Eigen::MatrixXd(Eigen::Index, Rng&)>;

struct TrainResult {
  GeneratorParams params;
  std::vector<TrainRecord> records;
};

/// Raised when the loss or a gradient becomes non-finite.
class TrainingDiverged : public NumericalError {
 public:
  TrainingDiverged(int iteration, const std::string& what)
      : NumericalError(what), iteration_(iteration) {}
  int iteration() const { return iteration_; }

 private:
  int iteration_;
};

/// Stop-gradient drifting training with fresh noise and target batches every
/// iteration and Adam updates. W2^2 is measured every eval_every iterations
/// (and at the last one) on a held-out batch drawn once from the seed.
TrainResult train(GeneratorParams params, const TargetSampler& target, const DriftConfig<double>& cfg,
                  const TrainOptions& opts,
                  const std::function<void(const TrainRecord&)>& on_record = {});

/// Textual key/value checkpoint with row-major parameter values.
void save_checkpoint(const GeneratorParams& params, std::ostream& os);
GeneratorParams load_checkpoint(std::istream& is);

}  // namespace sinkdrift::nn
