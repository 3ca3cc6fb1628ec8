#include "specrl/tape.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <ostream>

namespace specrl {

// --- ParamSet ---------------------------------------------------------------

Mat& ParamSet::add(const std::string& name, Mat init) {
  if (has(name)) throw std::invalid_argument("param set: duplicate name " + name);
  index_[name] = static_cast<int>(names_.size());
  names_.push_back(name);
  grads_.push_back(Mat::Zero(init.rows(), init.cols()));
  values_.push_back(std::move(init));
  return values_.back();
}

int ParamSet::index_of(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::invalid_argument("param set: unknown name " + name);
  return it->second;
}

Mat& ParamSet::value(const std::string& name) { return values_[index_of(name)]; }
const Mat& ParamSet::value(const std::string& name) const { return values_[index_of(name)]; }
Mat& ParamSet::grad(const std::string& name) { return grads_[index_of(name)]; }
const Mat& ParamSet::grad(const std::string& name) const { return grads_[index_of(name)]; }

void ParamSet::zero_grads() {
  for (auto& g : grads_) g.setZero();
}

std::size_t ParamSet::num_scalars() const {
  std::size_t n = 0;
  for (const auto& v : values_) n += static_cast<std::size_t>(v.size());
  return n;
}

namespace {
void write_u64(std::ostream& out, std::uint64_t v) {
  unsigned char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(buf), 8);
}
std::uint64_t read_u64(std::istream& in) {
  unsigned char buf[8];
  in.read(reinterpret_cast<char*>(buf), 8);
  if (!in) throw std::runtime_error("checkpoint: truncated stream");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  return v;
}
void write_f64(std::ostream& out, double d) {
  std::uint64_t bits;
  std::memcpy(&bits, &d, 8);
  write_u64(out, bits);
}
double read_f64(std::istream& in) {
  std::uint64_t bits = read_u64(in);
  double d;
  std::memcpy(&d, &bits, 8);
  return d;
}
}  // namespace

void ParamSet::save(std::ostream& out) const {
  write_u64(out, names_.size());
  for (std::size_t i = 0; i < names_.size(); ++i) {
    write_u64(out, names_[i].size());
    out.write(names_[i].data(), static_cast<std::streamsize>(names_[i].size()));
    const Mat& m = values_[i];
    write_u64(out, static_cast<std::uint64_t>(m.rows()));
    write_u64(out, static_cast<std::uint64_t>(m.cols()));
    for (int r = 0; r < m.rows(); ++r)
      for (int c = 0; c < m.cols(); ++c) write_f64(out, m(r, c));
  }
}

void ParamSet::load(std::istream& in) {
  names_.clear();
  index_.clear();
  values_.clear();
  grads_.clear();
  std::uint64_t count = read_u64(in);
  for (std::uint64_t i = 0; i < count; ++i) {
    std::uint64_t len = read_u64(in);
    std::string name(len, '\0');
    in.read(name.data(), static_cast<std::streamsize>(len));
    if (!in) throw std::runtime_error("checkpoint: truncated name");
    auto rows = static_cast<Eigen::Index>(read_u64(in));
    auto cols = static_cast<Eigen::Index>(read_u64(in));
    Mat m(rows, cols);
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) m(r, c) = read_f64(in);
    add(name, std::move(m));
  }
}

void ParamSet::save_file(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("checkpoint: cannot open " + path);
  save(out);
}

void ParamSet::load_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
  load(in);
}

// --- activations ------------------------------------------------------------

Mat apply_act(Act act, const Mat& x) {
  switch (act) {
    case Act::relu: return x.cwiseMax(0.0);
    case Act::tanh_: return x.array().tanh().matrix();
    case Act::elu: return x.unaryExpr([](double v) { return v > 0.0 ? v : std::expm1(v); });
    case Act::sinusoidal: return x.array().sin().matrix();
    case Act::softplus:
      return x.unaryExpr([](double v) { return v > 30.0 ? v : std::log1p(std::exp(v)); });
    case Act::identity: return x;
  }
  throw std::logic_error("unknown activation");
}

Mat act_grad_from_input(Act act, const Mat& x) {
  switch (act) {
    case Act::relu: return x.unaryExpr([](double v) { return v > 0.0 ? 1.0 : 0.0; });
    case Act::tanh_: {
      Mat t = x.array().tanh().matrix();
      return (1.0 - t.array().square()).matrix();
    }
    case Act::elu: return x.unaryExpr([](double v) { return v > 0.0 ? 1.0 : std::exp(v); });
    case Act::sinusoidal: return x.array().cos().matrix();
    case Act::softplus: return x.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
    case Act::identity: return Mat::Ones(x.rows(), x.cols());
  }
  throw std::logic_error("unknown activation");
}

// --- Tape -------------------------------------------------------------------

Tape::Val Tape::push(Mat val, std::function<void(Tape&, Node&)> back) {
  Node node;
  node.val = std::move(val);
  node.back = std::move(back);
  nodes_.push_back(std::move(node));
  return Val{static_cast<int>(nodes_.size()) - 1};
}

void Tape::accum(int idx, const Mat& g) {
  Mat& grad = nodes_[idx].grad;
  if (grad.size() == 0)
    grad = g;
  else
    grad += g;
}

Mat& Tape::grad_of(int idx) { return nodes_[idx].grad; }

double Tape::scalar(Val v) const {
  const Mat& m = nodes_[v.i].val;
  if (m.size() != 1) throw std::logic_error("tape: scalar() on non-scalar node");
  return m(0, 0);
}

Tape::Val Tape::constant(Mat m) { return push(std::move(m), nullptr); }

Tape::Val Tape::param(ParamSet& ps, const std::string& name) {
  int pi = ps.index_of(name);
  Val v = push(ps.value_at(pi), nullptr);
  nodes_[v.i].ps = &ps;
  nodes_[v.i].ps_index = pi;
  return v;
}

Tape::Val Tape::add(Val a, Val b) {
  return push(nodes_[a.i].val + nodes_[b.i].val, [a, b](Tape& t, Node& self) {
    t.accum(a.i, self.grad);
    t.accum(b.i, self.grad);
  });
}

Tape::Val Tape::sub(Val a, Val b) {
  return push(nodes_[a.i].val - nodes_[b.i].val, [a, b](Tape& t, Node& self) {
    t.accum(a.i, self.grad);
    t.accum(b.i, -self.grad);
  });
}

Tape::Val Tape::mul(Val a, Val b) {
  return push(nodes_[a.i].val.cwiseProduct(nodes_[b.i].val), [a, b](Tape& t, Node& self) {
    t.accum(a.i, self.grad.cwiseProduct(t.nodes_[b.i].val));
    t.accum(b.i, self.grad.cwiseProduct(t.nodes_[a.i].val));
  });
}

Tape::Val Tape::scale(Val a, double c) {
  return push(c * nodes_[a.i].val,
              [a, c](Tape& t, Node& self) { t.accum(a.i, c * self.grad); });
}

Tape::Val Tape::add_scalar(Val a, double c) {
  return push((nodes_[a.i].val.array() + c).matrix(),
              [a](Tape& t, Node& self) { t.accum(a.i, self.grad); });
}

Tape::Val Tape::matmul(Val a, Val b) {
  return push(nodes_[a.i].val * nodes_[b.i].val, [a, b](Tape& t, Node& self) {
    t.accum(a.i, self.grad * t.nodes_[b.i].val.transpose());
    t.accum(b.i, t.nodes_[a.i].val.transpose() * self.grad);
  });
}

Tape::Val Tape::matmul_nt(Val a, Val b) {
  return push(nodes_[a.i].val * nodes_[b.i].val.transpose(), [a, b](Tape& t, Node& self) {
    t.accum(a.i, self.grad * t.nodes_[b.i].val);
    t.accum(b.i, self.grad.transpose() * t.nodes_[a.i].val);
  });
}

Tape::Val Tape::add_rowvec(Val x, Val rowvec) {
  const Mat& r = nodes_[rowvec.i].val;
  return push(nodes_[x.i].val.rowwise() + r.row(0), [x, rowvec](Tape& t, Node& self) {
    t.accum(x.i, self.grad);
    t.accum(rowvec.i, self.grad.colwise().sum());
  });
}

Tape::Val Tape::activation(Val a, Act act) {
  return push(apply_act(act, nodes_[a.i].val), [a, act](Tape& t, Node& self) {
    t.accum(a.i, self.grad.cwiseProduct(act_grad_from_input(act, t.nodes_[a.i].val)));
  });
}

Tape::Val Tape::square(Val a) {
  return push(nodes_[a.i].val.array().square().matrix(), [a](Tape& t, Node& self) {
    t.accum(a.i, (2.0 * self.grad.array() * t.nodes_[a.i].val.array()).matrix());
  });
}

Tape::Val Tape::exp_(Val a) {
  Mat out = nodes_[a.i].val.array().exp().matrix();
  Mat out_copy = out;
  return push(std::move(out), [a, out_copy = std::move(out_copy)](Tape& t, Node& self) {
    t.accum(a.i, self.grad.cwiseProduct(out_copy));
  });
}

Tape::Val Tape::log_(Val a) {
  return push(nodes_[a.i].val.array().log().matrix(), [a](Tape& t, Node& self) {
    t.accum(a.i, self.grad.cwiseQuotient(t.nodes_[a.i].val));
  });
}

Tape::Val Tape::sin_(Val a) {
  return push(nodes_[a.i].val.array().sin().matrix(), [a](Tape& t, Node& self) {
    t.accum(a.i, self.grad.cwiseProduct(t.nodes_[a.i].val.array().cos().matrix()));
  });
}

Tape::Val Tape::cos_(Val a) {
  return push(nodes_[a.i].val.array().cos().matrix(), [a](Tape& t, Node& self) {
    t.accum(a.i, -self.grad.cwiseProduct(t.nodes_[a.i].val.array().sin().matrix()));
  });
}

Tape::Val Tape::clamp(Val a, double lo, double hi) {
  return push(nodes_[a.i].val.cwiseMax(lo).cwiseMin(hi), [a, lo, hi](Tape& t, Node& self) {
    const Mat& x = t.nodes_[a.i].val;
    Mat mask = x.unaryExpr([lo, hi](double v) { return (v >= lo && v <= hi) ? 1.0 : 0.0; });
    t.accum(a.i, self.grad.cwiseProduct(mask));
  });
}

Tape::Val Tape::sum(Val a) {
  Mat out(1, 1);
  out(0, 0) = nodes_[a.i].val.sum();
  return push(std::move(out), [a](Tape& t, Node& self) {
    const Mat& x = t.nodes_[a.i].val;
    t.accum(a.i, Mat::Constant(x.rows(), x.cols(), self.grad(0, 0)));
  });
}

Tape::Val Tape::mean(Val a) {
  const Mat& x = nodes_[a.i].val;
  if (x.size() == 0) throw std::invalid_argument("tape: mean of empty matrix");
  Mat out(1, 1);
  out(0, 0) = x.mean();
  double inv = 1.0 / static_cast<double>(x.size());
  return push(std::move(out), [a, inv](Tape& t, Node& self) {
    const Mat& x2 = t.nodes_[a.i].val;
    t.accum(a.i, Mat::Constant(x2.rows(), x2.cols(), self.grad(0, 0) * inv));
  });
}

Tape::Val Tape::row_sum(Val a) {
  return push(nodes_[a.i].val.rowwise().sum(), [a](Tape& t, Node& self) {
    const Mat& x = t.nodes_[a.i].val;
    t.accum(a.i, self.grad * Eigen::RowVectorXd::Ones(x.cols()));
  });
}

Tape::Val Tape::row_dot(Val a, Val b) { return row_sum(mul(a, b)); }

Tape::Val Tape::logsumexp_rows(Val a) {
  const Mat& x = nodes_[a.i].val;
  Vec mx = x.rowwise().maxCoeff();
  Mat shifted = x.colwise() - mx;
  Vec lse = shifted.array().exp().rowwise().sum().log().matrix();
  Mat out = (lse + mx);
  Mat softmax = shifted.array().exp().matrix();
  softmax.array().colwise() /= softmax.rowwise().sum().array();
  return push(std::move(out), [a, softmax](Tape& t, Node& self) {
    Mat g = (softmax.array().colwise() * self.grad.col(0).array()).matrix();
    t.accum(a.i, g);
  });
}

Tape::Val Tape::concat_cols(Val a, Val b) {
  const Mat& x = nodes_[a.i].val;
  const Mat& y = nodes_[b.i].val;
  if (x.rows() != y.rows()) throw std::invalid_argument("tape: concat_cols row mismatch");
  Mat out(x.rows(), x.cols() + y.cols());
  out << x, y;
  int nx = static_cast<int>(x.cols());
  return push(std::move(out), [a, b, nx](Tape& t, Node& self) {
    t.accum(a.i, self.grad.leftCols(nx));
    t.accum(b.i, self.grad.rightCols(self.grad.cols() - nx));
  });
}

Tape::Val Tape::slice_cols(Val a, int start, int n) {
  const Mat& x = nodes_[a.i].val;
  if (start < 0 || n < 0 || start + n > x.cols())
    throw std::invalid_argument("tape: slice_cols out of range");
  return push(x.middleCols(start, n), [a, start, n](Tape& t, Node& self) {
    const Mat& x2 = t.nodes_[a.i].val;
    Mat g = Mat::Zero(x2.rows(), x2.cols());
    g.middleCols(start, n) = self.grad;
    t.accum(a.i, g);
  });
}

Tape::Val Tape::gather_rows(Val a, std::vector<int> rows) {
  const Mat& x = nodes_[a.i].val;
  Mat out(static_cast<int>(rows.size()), x.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] < 0 || rows[r] >= x.rows()) throw std::invalid_argument("tape: gather_rows index");
    out.row(static_cast<int>(r)) = x.row(rows[r]);
  }
  return push(std::move(out), [a, rows = std::move(rows)](Tape& t, Node& self) {
    const Mat& x2 = t.nodes_[a.i].val;
    Mat g = Mat::Zero(x2.rows(), x2.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) g.row(rows[r]) += self.grad.row(static_cast<int>(r));
    t.accum(a.i, g);
  });
}

Tape::Val Tape::reshape(Val a, int rows, int cols) {
  const Mat& x = nodes_[a.i].val;
  if (x.size() != rows * cols) throw std::invalid_argument("tape: reshape size mismatch");
  Mat out(rows, cols);
  int k = 0;
  for (int r = 0; r < x.rows(); ++r)
    for (int c = 0; c < x.cols(); ++c, ++k) out(k / cols, k % cols) = x(r, c);
  return push(std::move(out), [a](Tape& t, Node& self) {
    const Mat& x2 = t.nodes_[a.i].val;
    Mat g(x2.rows(), x2.cols());
    int k2 = 0;
    int cols2 = static_cast<int>(self.grad.cols());
    for (int r = 0; r < x2.rows(); ++r)
      for (int c = 0; c < x2.cols(); ++c, ++k2) g(r, c) = self.grad(k2 / cols2, k2 % cols2);
    t.accum(a.i, g);
  });
}

Tape::Val Tape::min_elem(Val a, Val b) {
  const Mat& x = nodes_[a.i].val;
  const Mat& y = nodes_[b.i].val;
  Mat take_a = (x.array() <= y.array()).cast<double>().matrix();
  return push(x.cwiseMin(y), [a, b, take_a](Tape& t, Node& self) {
    t.accum(a.i, self.grad.cwiseProduct(take_a));
    t.accum(b.i, self.grad.cwiseProduct((1.0 - take_a.array()).matrix()));
  });
}

Tape::Val Tape::batched_vecmat(Val phi, Val packed, int m) {
  const Mat& f = nodes_[phi.i].val;
  const Mat& k = nodes_[packed.i].val;
  const int batch = static_cast<int>(f.rows());
  const int d = static_cast<int>(f.cols());
  if (k.rows() != batch || k.cols() != static_cast<Eigen::Index>(d) * m)
    throw std::invalid_argument("tape: batched_vecmat shape mismatch");
  Mat out = Mat::Zero(batch, m);
  for (int b = 0; b < batch; ++b)
    for (int i = 0; i < d; ++i) out.row(b) += f(b, i) * k.row(b).segment(i * m, m);
  return push(std::move(out), [phi, packed, m, d](Tape& t, Node& self) {
    const Mat& f2 = t.nodes_[phi.i].val;
    const Mat& k2 = t.nodes_[packed.i].val;
    Mat gf = Mat::Zero(f2.rows(), f2.cols());
    Mat gk = Mat::Zero(k2.rows(), k2.cols());
    for (int b = 0; b < f2.rows(); ++b) {
      for (int i = 0; i < d; ++i) {
        gf(b, i) = self.grad.row(b).dot(k2.row(b).segment(i * m, m));
        gk.row(b).segment(i * m, m) = f2(b, i) * self.grad.row(b);
      }
    }
    t.accum(phi.i, gf);
    t.accum(packed.i, gk);
  });
}

void Tape::backward(Val out) {
  if (!out.ok() || nodes_.empty()) throw std::logic_error("tape: backward without a forward pass");
  if (nodes_[out.i].val.size() != 1) throw std::logic_error("tape: backward target must be scalar");
  nodes_[out.i].grad = Mat::Ones(1, 1);
  for (int i = out.i; i >= 0; --i) {
    Node& node = nodes_[i];
    if (node.grad.size() == 0) continue;
    if (node.back) node.back(*this, node);
    if (node.ps != nullptr) node.ps->grad_at(node.ps_index) += node.grad;
  }
}

}  // namespace specrl
