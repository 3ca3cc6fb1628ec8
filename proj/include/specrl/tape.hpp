// Minimal reverse-mode autodiff over dense Eigen matrices. Rows are batch
// entries. A Tape owns the recorded nodes of one forward pass; backward()
// accumulates gradients into the ParamSets referenced by leaf nodes.
#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "specrl/common.hpp"

namespace specrl {

// Named collection of dense parameter arrays with paired gradient storage.
// Iteration order is declaration order.
class ParamSet {
 public:
  Mat& add(const std::string& name, Mat init);
  bool has(const std::string& name) const { return index_.count(name) > 0; }
  Mat& value(const std::string& name);
  const Mat& value(const std::string& name) const;
  Mat& grad(const std::string& name);
  const Mat& grad(const std::string& name) const;
  int index_of(const std::string& name) const;

  std::size_t size() const { return names_.size(); }
  const std::vector<std::string>& names() const { return names_; }
  Mat& value_at(int i) { return values_[i]; }
  const Mat& value_at(int i) const { return values_[i]; }
  Mat& grad_at(int i) { return grads_[i]; }
  const Mat& grad_at(int i) const { return grads_[i]; }

  void zero_grads();
  std::size_t num_scalars() const;

  // Flat binary checkpoint: per entry, u64 name length, name bytes, u64 rows,
  // u64 cols, row-major little-endian f64 payload, in declaration order.
  void save(std::ostream& out) const;
  void load(std::istream& in);  // replaces contents
  void save_file(const std::string& path) const;
  void load_file(const std::string& path);

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, int> index_;
  std::vector<Mat> values_;
  std::vector<Mat> grads_;
};

enum class Act { relu, tanh_, elu, sinusoidal, softplus, identity };

Mat apply_act(Act act, const Mat& x);
Mat act_grad_from_input(Act act, const Mat& x);  // d act(x) / d x, elementwise

class Tape {
 public:
  struct Val {
    int i = -1;
    bool ok() const { return i >= 0; }
  };

  Val constant(Mat m);
  // Differentiable leaf bound to ps[name]; backward adds into its grad.
  Val param(ParamSet& ps, const std::string& name);

  const Mat& value(Val v) const { return nodes_[v.i].val; }
  double scalar(Val v) const;

  Val add(Val a, Val b);
  Val sub(Val a, Val b);
  Val mul(Val a, Val b);  // elementwise
  Val scale(Val a, double c);
  Val add_scalar(Val a, double c);
  Val matmul(Val a, Val b);
  Val matmul_nt(Val a, Val b);         // a * b^T
  Val add_rowvec(Val x, Val rowvec);   // broadcast 1 x n over rows
  Val activation(Val a, Act act);
  Val square(Val a);
  Val exp_(Val a);
  Val log_(Val a);
  Val sin_(Val a);
  Val cos_(Val a);
  Val clamp(Val a, double lo, double hi);  // subgradient zero outside
  Val sum(Val a);       // 1x1
  Val mean(Val a);      // 1x1
  Val row_sum(Val a);   // B x 1
  Val row_dot(Val a, Val b);        // B x 1
  Val logsumexp_rows(Val a);        // B x 1, stable
  Val concat_cols(Val a, Val b);
  Val slice_cols(Val a, int start, int n);
  Val gather_rows(Val a, std::vector<int> rows);  // backward scatter-adds
  Val reshape(Val a, int rows, int cols);         // row-major reindexing
  Val min_elem(Val a, Val b);                     // ties route to a
  // out(b, j) = sum_i phi(b, i) * packed(b, i*m + j); packed is B x (d*m).
  Val batched_vecmat(Val phi, Val packed, int m);

  // Seeds d(out)=1 for a 1x1 node and accumulates into ParamSet grads.
  // Throws std::logic_error when out is not scalar or tape is empty.
  void backward(Val out);

  std::size_t num_nodes() const { return nodes_.size(); }

 private:
  struct Node {
    Mat val;
    Mat grad;
    std::function<void(Tape&, Node&)> back;
    ParamSet* ps = nullptr;
    int ps_index = -1;
  };

  Val push(Mat val, std::function<void(Tape&, Node&)> back);
  void accum(int idx, const Mat& g);
  Mat& grad_of(int idx);

  std::vector<Node> nodes_;
  friend struct TapeTestPeer;
};

}  // namespace specrl
