// Dense and residual MLPs on top of the tape, the adaptive-moment optimizer
// and finite-difference gradient checking.
#pragma once

#include <functional>

#include "specrl/tape.hpp"

namespace specrl {

// layer_widths = {in, h1, ..., out}. When residual is set, any consecutive
// equal-width pair becomes a block x + W2 * act(W1 x + b1); other pairs stay
// plain affine layers. The final layer is never activated.
struct MlpSpec {
  std::vector<int> layer_widths;
  Act act = Act::elu;
  bool residual = false;

  void validate() const;
  int in_width() const { return layer_widths.front(); }
  int out_width() const { return layer_widths.back(); }
};

// Declares "<prefix>.W<i>" / "<prefix>.b<i>" (and ".U<i>" for the residual
// second matrix) with uniform fan-in initialization.
void mlp_init(ParamSet& ps, const std::string& prefix, const MlpSpec& spec, std::mt19937_64& rng);

// Forward with gradients flowing into ps.
Tape::Val mlp_forward(Tape& tape, ParamSet& ps, const std::string& prefix, const MlpSpec& spec,
                      Tape::Val input);
// Forward with the weights recorded as constants: differentiable w.r.t. the
// input but never touching ps grads (used for actor updates through critics).
Tape::Val mlp_forward_const(Tape& tape, const ParamSet& ps, const std::string& prefix,
                            const MlpSpec& spec, Tape::Val input);
// Plain evaluation, no tape (targets, rollouts).
Mat mlp_eval(const ParamSet& ps, const std::string& prefix, const MlpSpec& spec, const Mat& input);

// ---------------------------------------------------------------------------

// Adaptive-moment optimizer state paired with one ParamSet.
class Adam {
 public:
  Adam(const ParamSet& ps, double learning_rate, double beta1 = 0.9, double beta2 = 0.999,
       double eps = 1e-8);

  // Applies one bias-corrected update from ps grads, then zeroes the grads.
  // Throws NumericalError naming the parameter on a non-finite gradient.
  void step(ParamSet& ps);

  int step_count() const { return step_; }
  double learning_rate() const { return lr_; }
  void set_learning_rate(double lr) { lr_ = lr; }

 private:
  int step_ = 0;
  double lr_, beta1_, beta2_, eps_;
  std::vector<Mat> m_, v_;
};

// ---------------------------------------------------------------------------

// loss_fn must zero grads, run forward+backward, and return the loss value.
// Returns the max relative error |analytic - central difference| /
// (|analytic| + |fd| + 1e-8) over at most 64 sampled coordinates per array.
double grad_check(const std::function<double(ParamSet&)>& loss_fn, ParamSet& params, double h,
                  std::mt19937_64& rng);

}  // namespace specrl
