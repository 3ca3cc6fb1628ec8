#include "specrl/nn.hpp"

#include <algorithm>
#include <cmath>

namespace specrl {

void MlpSpec::validate() const {
  if (layer_widths.size() < 2) throw std::invalid_argument("mlp: need at least input and output widths");
  for (int w : layer_widths)
    if (w <= 0) throw std::invalid_argument("mlp: widths must be positive");
}

namespace {

std::string wname(const std::string& prefix, int i) { return prefix + ".W" + std::to_string(i); }
std::string uname(const std::string& prefix, int i) { return prefix + ".U" + std::to_string(i); }
std::string bname(const std::string& prefix, int i) { return prefix + ".b" + std::to_string(i); }

Mat fan_in_uniform(int rows, int cols, std::mt19937_64& rng) {
  double bound = 1.0 / std::sqrt(static_cast<double>(cols));
  std::uniform_real_distribution<double> unif(-bound, bound);
  Mat m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = unif(rng);
  return m;
}

bool is_residual_layer(const MlpSpec& spec, std::size_t i) {
  bool last = (i + 2 == spec.layer_widths.size());
  return spec.residual && !last && spec.layer_widths[i] == spec.layer_widths[i + 1];
}

}  // namespace

void mlp_init(ParamSet& ps, const std::string& prefix, const MlpSpec& spec, std::mt19937_64& rng) {
  spec.validate();
  for (std::size_t i = 0; i + 1 < spec.layer_widths.size(); ++i) {
    int in = spec.layer_widths[i];
    int out = spec.layer_widths[i + 1];
    if (is_residual_layer(spec, i)) {
      ps.add(wname(prefix, static_cast<int>(i)), fan_in_uniform(out, in, rng));
      ps.add(bname(prefix, static_cast<int>(i)), Mat::Zero(1, out));
      ps.add(uname(prefix, static_cast<int>(i)), fan_in_uniform(out, in, rng));
    } else {
      ps.add(wname(prefix, static_cast<int>(i)), fan_in_uniform(out, in, rng));
      ps.add(bname(prefix, static_cast<int>(i)), Mat::Zero(1, out));
    }
  }
}

namespace {

// Shared builder: `leaf` injects either trainable params or constants.
Tape::Val mlp_build(Tape& tape, const MlpSpec& spec, Tape::Val input,
                    const std::function<Tape::Val(const std::string&)>& leaf,
                    const std::string& prefix) {
  spec.validate();
  Tape::Val x = input;
  for (std::size_t i = 0; i + 1 < spec.layer_widths.size(); ++i) {
    bool last = (i + 2 == spec.layer_widths.size());
    Tape::Val w = leaf(wname(prefix, static_cast<int>(i)));
    Tape::Val b = leaf(bname(prefix, static_cast<int>(i)));
    if (is_residual_layer(spec, i)) {
      Tape::Val u = leaf(uname(prefix, static_cast<int>(i)));
      Tape::Val h = tape.activation(tape.add_rowvec(tape.matmul_nt(x, w), b), spec.act);
      x = tape.add(x, tape.matmul_nt(h, u));
    } else {
      Tape::Val h = tape.add_rowvec(tape.matmul_nt(x, w), b);
      x = last ? h : tape.activation(h, spec.act);
    }
  }
  return x;
}

}  // namespace

Tape::Val mlp_forward(Tape& tape, ParamSet& ps, const std::string& prefix, const MlpSpec& spec,
                      Tape::Val input) {
  const Mat& in = tape.value(input);
  if (in.cols() != spec.in_width()) throw std::invalid_argument("mlp: input width mismatch");
  return mlp_build(tape, spec, input,
                   [&](const std::string& name) { return tape.param(ps, name); }, prefix);
}

Tape::Val mlp_forward_const(Tape& tape, const ParamSet& ps, const std::string& prefix,
                            const MlpSpec& spec, Tape::Val input) {
  const Mat& in = tape.value(input);
  if (in.cols() != spec.in_width()) throw std::invalid_argument("mlp: input width mismatch");
  return mlp_build(tape, spec, input,
                   [&](const std::string& name) { return tape.constant(ps.value(name)); }, prefix);
}

Mat mlp_eval(const ParamSet& ps, const std::string& prefix, const MlpSpec& spec, const Mat& input) {
  spec.validate();
  if (input.cols() != spec.in_width()) throw std::invalid_argument("mlp: input width mismatch");
  Mat x = input;
  for (std::size_t i = 0; i + 1 < spec.layer_widths.size(); ++i) {
    bool last = (i + 2 == spec.layer_widths.size());
    const Mat& w = ps.value(wname(prefix, static_cast<int>(i)));
    const Mat& b = ps.value(bname(prefix, static_cast<int>(i)));
    if (is_residual_layer(spec, i)) {
      const Mat& u = ps.value(uname(prefix, static_cast<int>(i)));
      Mat h = apply_act(spec.act, (x * w.transpose()).rowwise() + b.row(0));
      x = x + h * u.transpose();
    } else {
      Mat h = (x * w.transpose()).rowwise() + b.row(0);
      x = last ? h : apply_act(spec.act, h);
    }
  }
  return x;
}

// --- Adam -------------------------------------------------------------------

Adam::Adam(const ParamSet& ps, double learning_rate, double beta1, double beta2, double eps)
    : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (std::size_t i = 0; i < ps.size(); ++i) {
    const Mat& v = ps.value_at(static_cast<int>(i));
    m_.push_back(Mat::Zero(v.rows(), v.cols()));
    v_.push_back(Mat::Zero(v.rows(), v.cols()));
  }
}

void Adam::step(ParamSet& ps) {
  if (ps.size() != m_.size()) throw std::invalid_argument("adam: param set changed shape");
  ++step_;
  double bc1 = 1.0 - std::pow(beta1_, step_);
  double bc2 = 1.0 - std::pow(beta2_, step_);
  for (std::size_t i = 0; i < ps.size(); ++i) {
    Mat& g = ps.grad_at(static_cast<int>(i));
    if (!g.allFinite())
      throw NumericalError("adam: non-finite gradient in parameter " + ps.names()[i]);
    Mat& m = m_[i];
    Mat& v = v_[i];
    m = beta1_ * m + (1.0 - beta1_) * g;
    v = beta2_ * v + (1.0 - beta2_) * g.cwiseProduct(g);
    Mat mhat = m / bc1;
    Mat vhat = v / bc2;
    ps.value_at(static_cast<int>(i)).array() -=
        lr_ * mhat.array() / (vhat.array().sqrt() + eps_);
    g.setZero();
  }
}

// --- gradient checking ------------------------------------------------------

double grad_check(const std::function<double(ParamSet&)>& loss_fn, ParamSet& params, double h,
                  std::mt19937_64& rng) {
  if (!(h > 0.0)) throw std::invalid_argument("grad_check: h must be positive");
  double base = loss_fn(params);
  if (!std::isfinite(base)) throw NumericalError("grad_check: non-finite loss");

  // Snapshot analytic grads before finite differencing disturbs them.
  std::vector<Mat> analytic;
  analytic.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) analytic.push_back(params.grad_at(static_cast<int>(i)));

  double max_err = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    Mat& value = params.value_at(static_cast<int>(i));
    const int n = static_cast<int>(value.size());
    const int samples = std::min(n, 64);
    std::vector<int> coords(n);
    for (int k = 0; k < n; ++k) coords[k] = k;
    std::shuffle(coords.begin(), coords.end(), rng);
    for (int k = 0; k < samples; ++k) {
      int c = coords[k];
      double saved = value.data()[c];
      value.data()[c] = saved + h;
      double up = loss_fn(params);
      value.data()[c] = saved - h;
      double down = loss_fn(params);
      value.data()[c] = saved;
      if (!std::isfinite(up) || !std::isfinite(down))
        throw NumericalError("grad_check: non-finite loss during finite differences");
      double fd = (up - down) / (2.0 * h);
      double an = analytic[i].data()[c];
      double err = std::abs(an - fd) / (std::abs(an) + std::abs(fd) + 1e-8);
      max_err = std::max(max_err, err);
    }
  }
  // Leave analytic grads in place for callers that inspect them afterwards.
  for (std::size_t i = 0; i < params.size(); ++i) params.grad_at(static_cast<int>(i)) = analytic[i];
  return max_err;
}

}  // namespace specrl
