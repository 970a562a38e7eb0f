#pragma once

#include <Eigen/Dense>

#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace motctl::nn {
class ParameterStore;
}

namespace motctl::ad {

using Mat = Eigen::MatrixXd;

class Tape;

// Handle to a node on a tape. Cheap to copy; only valid for the tape that
// created it and only while that tape is alive.
struct Val {
  Tape* tape = nullptr;
  int id = -1;
};

// Reverse-mode autodiff over dense f64 matrices. One tape records one forward
// computation; backward() may be called once and accumulates parameter
// gradients into the bound ParameterStore(s). Row dimension is the batch.
class Tape {
 public:
  Tape() { nodes_.reserve(512); }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Val constant(Mat v);
  Val zeros(int rows, int cols) { return constant(Mat::Zero(rows, cols)); }

  // Differentiable leaf whose gradient stays on the tape (read it back with
  // grad()); used for latent codes and gradient checks.
  Val leaf(Mat v);

  // Parameter node backed by a ParameterStore entry. Calls with the same
  // (store, name, trainable) reuse one node, so weights shared across time
  // steps accumulate their gradient once. trainable=false gives a cached
  // constant (frozen network).
  Val use_param(nn::ParameterStore& store, const std::string& name,
                bool trainable = true);

  const Mat& val(Val v) const;
  double scalar(Val v) const;  // value of a 1x1 node
  const Mat& grad(Val v) const;  // after backward(); zero-sized if untouched

  // Seeds d(loss)/d(loss) = 1, runs the reverse sweep, then adds parameter
  // gradients into their stores' grad buffers. loss must be 1x1.
  void backward(Val loss);

  std::size_t node_count() const { return nodes_.size(); }

  // --- internals used by the op free functions ---
  int add_node(Mat value, bool requires_grad, std::function<void()> back);
  void set_back(int id, std::function<void()> back);
  const Mat& value_of(int id) const { return nodes_[id].val; }
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }
  // accumulate into a node's gradient buffer (no-op if it doesn't need grad)
  void accum_grad(int id, const Mat& delta);
  const Mat& grad_of(int id) const { return nodes_[id].grad; }

 private:
  struct Node {
    Mat val;
    Mat grad;  // allocated lazily during backward
    bool requires_grad = false;
    std::function<void()> back;
  };

  std::vector<Node> nodes_;
  struct Binding {
    int id;
    nn::ParameterStore* store;
    std::string name;
  };
  std::vector<Binding> bindings_;
  // (store, name, trainable) -> node id
  std::map<std::tuple<const void*, std::string, bool>, int> param_cache_;
  bool backward_done_ = false;
};

// ---- ops ----
// All ops compute values eagerly and record a pullback closure when any input
// requires gradient.

Val add(Val a, Val b);          // same shape
Val sub(Val a, Val b);          // same shape
Val cmul(Val a, Val b);         // elementwise, same shape
Val add_rowvec(Val a, Val b);   // [B x n] + broadcast [1 x n]
Val scale(Val a, double s);
Val add_const(Val a, double c);
Val matmul(Val a, Val b);
Val transpose(Val a);
Val sigmoid(Val a);
Val tanhv(Val a);
Val expv(Val a);
Val logv(Val a);                       // inputs must be positive
Val clampv(Val a, double lo, double hi);  // pass-through gradient inside range
Val prelu(Val x, Val slope);           // slope is a 1x1 node
Val abs_floor(Val a, double floor);    // max(|a|, floor)
Val sum(Val a);                        // -> 1x1
Val sum_sq(Val a);                     // -> 1x1
Val row_sum_sq(Val a);                 // [B x n] -> [B x 1]
Val mean_all(Val a);                   // -> 1x1
Val concat_cols(const std::vector<Val>& parts);
Val concat_rows(const std::vector<Val>& parts);
Val slice_cols(Val a, int c0, int n);
Val slice_rows(Val a, int r0, int n);
Val select_cols(Val a, const std::vector<int>& idx);
Val div_by(Val a, Val denom);          // denom is a 1x1 node
Val min_scalar(const std::vector<Val>& xs);  // 1x1 nodes; grad to first argmin

// Rows of a [B x 3] matrix scaled to unit length. Rows with norm < eps map to
// (0, 0, 1) and receive zero gradient; their indices are appended to
// degenerate_rows when given.
Val normalize_rows3(Val a, double eps, std::vector<int>* degenerate_rows = nullptr);

// Upper-triangular m x m matrix: strict upper part from a [1 x m(m-1)/2] node
// (row-major over i<j), diagonal = exp(log_diag) with log_diag [1 x m].
Val upper_triangular(Val strict_upper, Val log_diag, int m);

// Per-row log|det| contribution of a PReLU layer: (number of negative
// pre-activations in the row) * log_slope. preact [B x m], log_slope 1x1.
Val prelu_logdet(Val preact, Val log_slope);

inline Val operator+(Val a, Val b) { return add(a, b); }
inline Val operator-(Val a, Val b) { return sub(a, b); }
inline Val operator*(Val a, Val b) { return cmul(a, b); }

}  // namespace motctl::ad
