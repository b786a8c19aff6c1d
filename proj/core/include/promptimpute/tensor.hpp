#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

namespace prompt_impute {

using Dims = std::vector<int>;

std::size_t numel(const Dims& shape);

// Dense real tensor with an optional gradient buffer. Handles are shared_ptr
// so a parameter can live across training steps while each step's tape holds
// references to it. `grad` stays empty until a backward pass accumulates into
// it; tensors with requires_grad=false never get a buffer.
struct TensorStorage {
  Dims shape;
  std::vector<double> data;
  std::vector<double> grad;
  bool requires_grad = false;
  // Registration on the most recent tape that touched this tensor.
  std::uint64_t tape_gen = 0;
  int node_id = -1;

  std::size_t size() const { return data.size(); }
  int rows() const { return shape.empty() ? 1 : shape[0]; }
  int cols() const { return shape.size() < 2 ? (shape.empty() ? 1 : shape[0]) : shape[1]; }
};

using Tensor = std::shared_ptr<TensorStorage>;

Tensor tensor_create(Dims shape, std::vector<double> values, bool requires_grad = false);
Tensor tensor_zeros(Dims shape, bool requires_grad = false);
Tensor tensor_full(Dims shape, double value, bool requires_grad = false);

// Numerically stable logistic function (branches on sign; never overflows).
double stable_sigmoid(double x);

enum class OpKind {
  leaf,
  matmul,
  matmul_nt,
  add,
  sub,
  mul,
  sigmoid,
  tanh,
  relu,
  softmax_rows,
  concat_cols,
  slice_rows,
  sum_all,
  mean_all,
  mean_rows,
  masked_fill,
  bce_logits_mean,
};

// Records every differentiable operation of one forward pass in execution
// order; backward replays the list once in reverse. A tape is rebuilt per
// training step (fill patterns and sequence lengths change per record) and is
// strictly single-threaded. With recording off the ops still compute values,
// so the same model code serves training and inference.
class Tape {
 public:
  explicit Tape(bool recording = true);

  void set_recording(bool on) { recording_ = on; }
  bool recording() const { return recording_; }
  std::size_t node_count() const { return nodes_.size(); }

  // Drops all nodes and detaches previously registered tensors.
  void reset();

  // out = a(m,k) * b(k,n)
  Tensor matmul(const Tensor& a, const Tensor& b);
  // out = a(m,k) * b(n,k)^T — saves an explicit transpose in attention scores
  Tensor matmul_nt(const Tensor& a, const Tensor& b);
  // Elementwise with one broadcast form: b may be a length-n vector applied
  // to every row of an (m,n) matrix a. Same rule for sub and mul.
  Tensor add(const Tensor& a, const Tensor& b);
  Tensor sub(const Tensor& a, const Tensor& b);
  Tensor mul(const Tensor& a, const Tensor& b);
  Tensor sigmoid(const Tensor& x);
  Tensor tanh(const Tensor& x);
  Tensor relu(const Tensor& x);
  Tensor softmax_rows(const Tensor& x);
  Tensor concat_cols(const Tensor& a, const Tensor& b);
  Tensor slice_rows(const Tensor& x, int row_begin, int row_end);
  Tensor sum(const Tensor& x);
  Tensor mean(const Tensor& x);
  Tensor mean_rows(const Tensor& x);
  // out[l,n] = x[l,n] where mask[l,n]=1, fill[n] where mask[l,n]=0.
  // Gradient routes to x only at observed positions and accumulates into
  // fill[n] over that feature's masked positions; the mask itself is data,
  // never differentiated. Masked x entries are not read.
  Tensor masked_fill(const Tensor& x, const Tensor& mask, const Tensor& fill);
  // mean_k [ max(z,0) - z*y + log1p(exp(-|z|)) ] — binary cross-entropy from
  // logits in the overflow-free form; targets are constants in {0,1}.
  Tensor bce_with_logits_mean(const Tensor& logits, const std::vector<double>& targets);

  // Populates grad buffers of every requires_grad tensor reachable from
  // loss. Gradients accumulate additively across multiple uses of a tensor.
  void backward(const Tensor& loss);

 private:
  struct Node {
    OpKind kind;
    std::vector<Tensor> in;
    Tensor out;
    std::vector<double> attr;
  };

  Tensor record(OpKind kind, std::vector<Tensor> in, Tensor out, std::vector<double> attr = {});
  void register_leaf(const Tensor& t);
  void node_backward(const Node& node);

  std::vector<Node> nodes_;
  bool recording_;
  std::uint64_t gen_;
};

// Central-difference gradient of f with respect to every coordinate of
// `point`, perturbing data in place and restoring it bitwise. f must be
// deterministic and must not mutate `point` itself.
std::vector<double> finite_difference(const std::function<double()>& f, const Tensor& point,
                                      double eps);

// max over coordinates of |a-b| / max(|a|,|b|,1e-8); the comparison rule used
// by every gradient-verification suite in this project.
double max_relative_error(const std::vector<double>& analytic, const std::vector<double>& numeric);

}  // namespace prompt_impute
