#include "promptimpute/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <stdexcept>
#include <string>

#include "promptimpute/errors.hpp"

namespace prompt_impute {

namespace {

std::atomic<std::uint64_t> g_tape_generation{1};

std::string shape_str(const Dims& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

void require_rank2(const Tensor& t, const char* op) {
  if (t->shape.size() != 2)
    throw ShapeError(std::string(op) + ": expected a rank-2 tensor, got shape " +
                     shape_str(t->shape));
}

// Broadcast classification for add/sub/mul: returns true when b is a length-n
// vector applied across the rows of matrix a; false when shapes are equal.
bool broadcast_row_vector(const Tensor& a, const Tensor& b, const char* op) {
  if (a->shape == b->shape) return false;
  if (a->shape.size() == 2 && b->shape.size() == 1 && b->shape[0] == a->shape[1]) return true;
  throw ShapeError(std::string(op) + ": shapes " + shape_str(a->shape) + " and " +
                   shape_str(b->shape) + " neither match nor form a row-vector broadcast");
}

void ensure_grad(const Tensor& t) {
  if (t->grad.empty()) t->grad.assign(t->data.size(), 0.0);
}

// Scalar op results skip the leaf finiteness validation: an overflow inside
// the graph must reach the caller (which decides whether a non-finite loss is
// a diverged run) instead of dying mid-forward.
Tensor op_scalar(double value) {
  auto t = std::make_shared<TensorStorage>();
  t->shape = {1};
  t->data = {value};
  return t;
}

}  // namespace

std::size_t numel(const Dims& shape) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  return n;
}

Tensor tensor_create(Dims shape, std::vector<double> values, bool requires_grad) {
  for (int d : shape)
    if (d < 0) throw std::invalid_argument("tensor_create: negative dimension in shape");
  if (numel(shape) != values.size())
    throw std::invalid_argument("tensor_create: shape " + shape_str(shape) + " expects " +
                                std::to_string(numel(shape)) + " values, got " +
                                std::to_string(values.size()));
  for (double v : values)
    if (!std::isfinite(v)) throw std::invalid_argument("tensor_create: non-finite value");
  auto t = std::make_shared<TensorStorage>();
  t->shape = std::move(shape);
  t->data = std::move(values);
  t->requires_grad = requires_grad;
  return t;
}

Tensor tensor_zeros(Dims shape, bool requires_grad) {
  return tensor_full(std::move(shape), 0.0, requires_grad);
}

Tensor tensor_full(Dims shape, double value, bool requires_grad) {
  std::size_t n = numel(shape);
  return tensor_create(std::move(shape), std::vector<double>(n, value), requires_grad);
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Tape::Tape(bool recording) : recording_(recording), gen_(g_tape_generation.fetch_add(1)) {}

void Tape::reset() {
  nodes_.clear();
  gen_ = g_tape_generation.fetch_add(1);
}

void Tape::register_leaf(const Tensor& t) {
  if (t->tape_gen == gen_) return;
  t->tape_gen = gen_;
  t->node_id = static_cast<int>(nodes_.size());
  nodes_.push_back(Node{OpKind::leaf, {}, t, {}});
}

Tensor Tape::record(OpKind kind, std::vector<Tensor> in, Tensor out, std::vector<double> attr) {
  bool any_grad = false;
  for (const auto& t : in) any_grad = any_grad || t->requires_grad;
  if (!recording_ || !any_grad) return out;
  for (const auto& t : in) register_leaf(t);
  out->requires_grad = true;
  out->tape_gen = gen_;
  out->node_id = static_cast<int>(nodes_.size());
  nodes_.push_back(Node{kind, std::move(in), out, std::move(attr)});
  return nodes_.back().out;
}

Tensor Tape::matmul(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  if (a->shape[1] != b->shape[0])
    throw ShapeError("matmul: inner dimensions disagree, " + shape_str(a->shape) + " vs " +
                     shape_str(b->shape));
  const int m = a->shape[0], k = a->shape[1], n = b->shape[1];
  auto out = tensor_zeros({m, n});
  for (int i = 0; i < m; ++i)
    for (int p = 0; p < k; ++p) {
      const double av = a->data[static_cast<std::size_t>(i) * k + p];
      if (av == 0.0) continue;
      const double* brow = b->data.data() + static_cast<std::size_t>(p) * n;
      double* orow = out->data.data() + static_cast<std::size_t>(i) * n;
      for (int j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  return record(OpKind::matmul, {a, b}, out);
}

Tensor Tape::matmul_nt(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul_nt");
  require_rank2(b, "matmul_nt");
  if (a->shape[1] != b->shape[1])
    throw ShapeError("matmul_nt: column counts disagree, " + shape_str(a->shape) + " vs " +
                     shape_str(b->shape));
  const int m = a->shape[0], k = a->shape[1], n = b->shape[0];
  auto out = tensor_zeros({m, n});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      const double* arow = a->data.data() + static_cast<std::size_t>(i) * k;
      const double* brow = b->data.data() + static_cast<std::size_t>(j) * k;
      double acc = 0.0;
      for (int p = 0; p < k; ++p) acc += arow[p] * brow[p];
      out->data[static_cast<std::size_t>(i) * n + j] = acc;
    }
  return record(OpKind::matmul_nt, {a, b}, out);
}

Tensor Tape::add(const Tensor& a, const Tensor& b) {
  const bool bcast = broadcast_row_vector(a, b, "add");
  auto out = tensor_zeros(a->shape);
  const int n = bcast ? a->shape[1] : 0;
  for (std::size_t i = 0; i < a->size(); ++i)
    out->data[i] = a->data[i] + (bcast ? b->data[i % static_cast<std::size_t>(n)] : b->data[i]);
  return record(OpKind::add, {a, b}, out);
}

Tensor Tape::sub(const Tensor& a, const Tensor& b) {
  const bool bcast = broadcast_row_vector(a, b, "sub");
  auto out = tensor_zeros(a->shape);
  const int n = bcast ? a->shape[1] : 0;
  for (std::size_t i = 0; i < a->size(); ++i)
    out->data[i] = a->data[i] - (bcast ? b->data[i % static_cast<std::size_t>(n)] : b->data[i]);
  return record(OpKind::sub, {a, b}, out);
}

Tensor Tape::mul(const Tensor& a, const Tensor& b) {
  const bool bcast = broadcast_row_vector(a, b, "mul");
  auto out = tensor_zeros(a->shape);
  const int n = bcast ? a->shape[1] : 0;
  for (std::size_t i = 0; i < a->size(); ++i)
    out->data[i] = a->data[i] * (bcast ? b->data[i % static_cast<std::size_t>(n)] : b->data[i]);
  return record(OpKind::mul, {a, b}, out);
}

Tensor Tape::sigmoid(const Tensor& x) {
  auto out = tensor_zeros(x->shape);
  for (std::size_t i = 0; i < x->size(); ++i) out->data[i] = stable_sigmoid(x->data[i]);
  return record(OpKind::sigmoid, {x}, out);
}

Tensor Tape::tanh(const Tensor& x) {
  auto out = tensor_zeros(x->shape);
  for (std::size_t i = 0; i < x->size(); ++i) out->data[i] = std::tanh(x->data[i]);
  return record(OpKind::tanh, {x}, out);
}

Tensor Tape::relu(const Tensor& x) {
  auto out = tensor_zeros(x->shape);
  for (std::size_t i = 0; i < x->size(); ++i) out->data[i] = x->data[i] > 0.0 ? x->data[i] : 0.0;
  return record(OpKind::relu, {x}, out);
}

Tensor Tape::softmax_rows(const Tensor& x) {
  require_rank2(x, "softmax_rows");
  const int m = x->shape[0], n = x->shape[1];
  if (n == 0) throw std::invalid_argument("softmax_rows: empty rows");
  auto out = tensor_zeros(x->shape);
  for (int i = 0; i < m; ++i) {
    const double* row = x->data.data() + static_cast<std::size_t>(i) * n;
    double* orow = out->data.data() + static_cast<std::size_t>(i) * n;
    double mx = row[0];
    for (int j = 1; j < n; ++j) mx = std::max(mx, row[j]);
    double z = 0.0;
    for (int j = 0; j < n; ++j) {
      orow[j] = std::exp(row[j] - mx);
      z += orow[j];
    }
    for (int j = 0; j < n; ++j) orow[j] /= z;
  }
  return record(OpKind::softmax_rows, {x}, out);
}

Tensor Tape::concat_cols(const Tensor& a, const Tensor& b) {
  if (a->shape.size() != b->shape.size() || a->shape.empty() || a->shape.size() > 2)
    throw ShapeError("concat_cols: requires two rank-1 or two rank-2 tensors");
  if (a->shape.size() == 1) {
    auto out = tensor_zeros({a->shape[0] + b->shape[0]});
    std::copy(a->data.begin(), a->data.end(), out->data.begin());
    std::copy(b->data.begin(), b->data.end(), out->data.begin() + a->shape[0]);
    return record(OpKind::concat_cols, {a, b}, out, {static_cast<double>(a->shape[0])});
  }
  if (a->shape[0] != b->shape[0])
    throw ShapeError("concat_cols: row counts disagree, " + shape_str(a->shape) + " vs " +
                     shape_str(b->shape));
  const int m = a->shape[0], p = a->shape[1], q = b->shape[1];
  auto out = tensor_zeros({m, p + q});
  for (int i = 0; i < m; ++i) {
    std::copy_n(a->data.begin() + static_cast<std::size_t>(i) * p, p,
                out->data.begin() + static_cast<std::size_t>(i) * (p + q));
    std::copy_n(b->data.begin() + static_cast<std::size_t>(i) * q, q,
                out->data.begin() + static_cast<std::size_t>(i) * (p + q) + p);
  }
  return record(OpKind::concat_cols, {a, b}, out, {static_cast<double>(p)});
}

Tensor Tape::slice_rows(const Tensor& x, int row_begin, int row_end) {
  require_rank2(x, "slice_rows");
  if (row_begin < 0 || row_end > x->shape[0] || row_begin >= row_end)
    throw std::invalid_argument("slice_rows: bad bounds [" + std::to_string(row_begin) + "," +
                                std::to_string(row_end) + ") for " + std::to_string(x->shape[0]) +
                                " rows");
  const int n = x->shape[1];
  auto out = tensor_zeros({row_end - row_begin, n});
  std::copy_n(x->data.begin() + static_cast<std::size_t>(row_begin) * n,
              static_cast<std::size_t>(row_end - row_begin) * n, out->data.begin());
  return record(OpKind::slice_rows, {x}, out,
                {static_cast<double>(row_begin), static_cast<double>(row_end)});
}

Tensor Tape::sum(const Tensor& x) {
  double acc = 0.0;
  for (double v : x->data) acc += v;
  auto out = op_scalar(acc);
  return record(OpKind::sum_all, {x}, out);
}

Tensor Tape::mean(const Tensor& x) {
  if (x->size() == 0) throw std::invalid_argument("mean: empty tensor");
  double acc = 0.0;
  for (double v : x->data) acc += v;
  auto out = op_scalar(acc / static_cast<double>(x->size()));
  return record(OpKind::mean_all, {x}, out);
}

Tensor Tape::mean_rows(const Tensor& x) {
  require_rank2(x, "mean_rows");
  const int m = x->shape[0], n = x->shape[1];
  if (m == 0) throw std::invalid_argument("mean_rows: no rows");
  auto out = tensor_zeros({1, n});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      out->data[static_cast<std::size_t>(j)] += x->data[static_cast<std::size_t>(i) * n + j];
  for (int j = 0; j < n; ++j) out->data[static_cast<std::size_t>(j)] /= static_cast<double>(m);
  return record(OpKind::mean_rows, {x}, out);
}

Tensor Tape::masked_fill(const Tensor& x, const Tensor& mask, const Tensor& fill) {
  require_rank2(x, "masked_fill");
  if (mask->shape != x->shape)
    throw ShapeError("masked_fill: mask shape " + shape_str(mask->shape) +
                     " does not match values shape " + shape_str(x->shape));
  if (fill->shape.size() != 1 || fill->shape[0] != x->shape[1])
    throw ShapeError("masked_fill: fill must be a length-" + std::to_string(x->shape[1]) +
                     " vector, got shape " + shape_str(fill->shape));
  if (mask->requires_grad)
    throw std::invalid_argument("masked_fill: the mask is data and cannot require gradients");
  const int m = x->shape[0], n = x->shape[1];
  auto out = tensor_zeros(x->shape);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      const std::size_t idx = static_cast<std::size_t>(i) * n + j;
      const double mv = mask->data[idx];
      if (mv != 0.0 && mv != 1.0)
        throw std::invalid_argument("masked_fill: mask entries must be 0 or 1");
      // Branch rather than blend: the masked x entry must never be read.
      out->data[idx] = (mv == 1.0) ? x->data[idx] : fill->data[static_cast<std::size_t>(j)];
    }
  return record(OpKind::masked_fill, {x, mask, fill}, out);
}

Tensor Tape::bce_with_logits_mean(const Tensor& logits, const std::vector<double>& targets) {
  if (logits->size() == 0) throw std::invalid_argument("bce_with_logits_mean: empty batch");
  if (targets.size() != logits->size())
    throw std::invalid_argument("bce_with_logits_mean: " + std::to_string(targets.size()) +
                                " targets for " + std::to_string(logits->size()) + " logits");
  for (double y : targets)
    if (y != 0.0 && y != 1.0)
      throw std::invalid_argument("bce_with_logits_mean: targets must be 0 or 1");
  const double k = static_cast<double>(logits->size());
  double acc = 0.0;
  for (std::size_t i = 0; i < logits->size(); ++i) {
    const double z = logits->data[i];
    acc += std::max(z, 0.0) - z * targets[i] + std::log1p(std::exp(-std::abs(z)));
  }
  auto out = op_scalar(acc / k);
  return record(OpKind::bce_logits_mean, {logits}, out, targets);
}

void Tape::backward(const Tensor& loss) {
  if (loss->size() != 1) throw std::invalid_argument("backward: loss must be a scalar");
  if (nodes_.empty()) throw StateError("backward: no operations recorded on this tape");
  if (loss->tape_gen != gen_ || loss->node_id < 0)
    throw StateError("backward: loss was not produced on this tape");
  ensure_grad(loss);
  loss->grad[0] += 1.0;
  for (std::size_t i = nodes_.size(); i-- > 0;) {
    const Node& node = nodes_[i];
    if (node.kind == OpKind::leaf) continue;
    if (node.out->grad.empty()) continue;  // not reachable from the loss
    node_backward(node);
  }
}

void Tape::node_backward(const Node& node) {
  const std::vector<double>& g = node.out->grad;
  switch (node.kind) {
    case OpKind::leaf:
      break;
    case OpKind::matmul: {
      const Tensor& a = node.in[0];
      const Tensor& b = node.in[1];
      const int m = a->shape[0], k = a->shape[1], n = b->shape[1];
      if (a->requires_grad) {
        ensure_grad(a);
        for (int i = 0; i < m; ++i)
          for (int p = 0; p < k; ++p) {
            double acc = 0.0;
            for (int j = 0; j < n; ++j)
              acc += g[static_cast<std::size_t>(i) * n + j] *
                     b->data[static_cast<std::size_t>(p) * n + j];
            a->grad[static_cast<std::size_t>(i) * k + p] += acc;
          }
      }
      if (b->requires_grad) {
        ensure_grad(b);
        for (int p = 0; p < k; ++p)
          for (int j = 0; j < n; ++j) {
            double acc = 0.0;
            for (int i = 0; i < m; ++i)
              acc += a->data[static_cast<std::size_t>(i) * k + p] *
                     g[static_cast<std::size_t>(i) * n + j];
            b->grad[static_cast<std::size_t>(p) * n + j] += acc;
          }
      }
      break;
    }
    case OpKind::matmul_nt: {
      const Tensor& a = node.in[0];
      const Tensor& b = node.in[1];
      const int m = a->shape[0], k = a->shape[1], n = b->shape[0];
      if (a->requires_grad) {
        ensure_grad(a);
        for (int i = 0; i < m; ++i)
          for (int p = 0; p < k; ++p) {
            double acc = 0.0;
            for (int j = 0; j < n; ++j)
              acc += g[static_cast<std::size_t>(i) * n + j] *
                     b->data[static_cast<std::size_t>(j) * k + p];
            a->grad[static_cast<std::size_t>(i) * k + p] += acc;
          }
      }
      if (b->requires_grad) {
        ensure_grad(b);
        for (int j = 0; j < n; ++j)
          for (int p = 0; p < k; ++p) {
            double acc = 0.0;
            for (int i = 0; i < m; ++i)
              acc += g[static_cast<std::size_t>(i) * n + j] *
                     a->data[static_cast<std::size_t>(i) * k + p];
            b->grad[static_cast<std::size_t>(j) * k + p] += acc;
          }
      }
      break;
    }
    case OpKind::add:
    case OpKind::sub: {
      const Tensor& a = node.in[0];
      const Tensor& b = node.in[1];
      const double sign = node.kind == OpKind::add ? 1.0 : -1.0;
      if (a->requires_grad) {
        ensure_grad(a);
        for (std::size_t i = 0; i < g.size(); ++i) a->grad[i] += g[i];
      }
      if (b->requires_grad) {
        ensure_grad(b);
        if (b->shape == a->shape) {
          for (std::size_t i = 0; i < g.size(); ++i) b->grad[i] += sign * g[i];
        } else {
          const std::size_t n = b->size();
          for (std::size_t i = 0; i < g.size(); ++i) b->grad[i % n] += sign * g[i];
        }
      }
      break;
    }
    case OpKind::mul: {
      const Tensor& a = node.in[0];
      const Tensor& b = node.in[1];
      const bool bcast = b->shape != a->shape;
      const std::size_t n = b->size();
      if (a->requires_grad) {
        ensure_grad(a);
        for (std::size_t i = 0; i < g.size(); ++i)
          a->grad[i] += g[i] * (bcast ? b->data[i % n] : b->data[i]);
      }
      if (b->requires_grad) {
        ensure_grad(b);
        for (std::size_t i = 0; i < g.size(); ++i)
          b->grad[bcast ? i % n : i] += g[i] * a->data[i];
      }
      break;
    }
    case OpKind::sigmoid: {
      const Tensor& x = node.in[0];
      if (!x->requires_grad) break;
      ensure_grad(x);
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double y = node.out->data[i];
        x->grad[i] += g[i] * y * (1.0 - y);
      }
      break;
    }
    case OpKind::tanh: {
      const Tensor& x = node.in[0];
      if (!x->requires_grad) break;
      ensure_grad(x);
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double y = node.out->data[i];
        x->grad[i] += g[i] * (1.0 - y * y);
      }
      break;
    }
    case OpKind::relu: {
      const Tensor& x = node.in[0];
      if (!x->requires_grad) break;
      ensure_grad(x);
      for (std::size_t i = 0; i < g.size(); ++i)
        if (x->data[i] > 0.0) x->grad[i] += g[i];
      break;
    }
    case OpKind::softmax_rows: {
      const Tensor& x = node.in[0];
      if (!x->requires_grad) break;
      ensure_grad(x);
      const int m = x->shape[0], n = x->shape[1];
      for (int i = 0; i < m; ++i) {
        const double* y = node.out->data.data() + static_cast<std::size_t>(i) * n;
        const double* gy = g.data() + static_cast<std::size_t>(i) * n;
        double dot = 0.0;
        for (int j = 0; j < n; ++j) dot += gy[j] * y[j];
        for (int j = 0; j < n; ++j)
          x->grad[static_cast<std::size_t>(i) * n + j] += y[j] * (gy[j] - dot);
      }
      break;
    }
    case OpKind::concat_cols: {
      const Tensor& a = node.in[0];
      const Tensor& b = node.in[1];
      const int p = static_cast<int>(node.attr[0]);
      if (a->shape.size() == 1) {
        if (a->requires_grad) {
          ensure_grad(a);
          for (int j = 0; j < p; ++j) a->grad[static_cast<std::size_t>(j)] += g[static_cast<std::size_t>(j)];
        }
        if (b->requires_grad) {
          ensure_grad(b);
          for (std::size_t j = 0; j < b->size(); ++j) b->grad[j] += g[static_cast<std::size_t>(p) + j];
        }
        break;
      }
      const int m = a->shape[0], q = b->shape[1];
      if (a->requires_grad) {
        ensure_grad(a);
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < p; ++j)
            a->grad[static_cast<std::size_t>(i) * p + j] +=
                g[static_cast<std::size_t>(i) * (p + q) + j];
      }
      if (b->requires_grad) {
        ensure_grad(b);
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < q; ++j)
            b->grad[static_cast<std::size_t>(i) * q + j] +=
                g[static_cast<std::size_t>(i) * (p + q) + p + j];
      }
      break;
    }
    case OpKind::slice_rows: {
      const Tensor& x = node.in[0];
      if (!x->requires_grad) break;
      ensure_grad(x);
      const int r0 = static_cast<int>(node.attr[0]);
      const int n = x->shape[1];
      for (std::size_t i = 0; i < g.size(); ++i)
        x->grad[static_cast<std::size_t>(r0) * n + i] += g[i];
      break;
    }
    case OpKind::sum_all: {
      const Tensor& x = node.in[0];
      if (!x->requires_grad) break;
      ensure_grad(x);
      for (std::size_t i = 0; i < x->size(); ++i) x->grad[i] += g[0];
      break;
    }
    case OpKind::mean_all: {
      const Tensor& x = node.in[0];
      if (!x->requires_grad) break;
      ensure_grad(x);
      const double scale = g[0] / static_cast<double>(x->size());
      for (std::size_t i = 0; i < x->size(); ++i) x->grad[i] += scale;
      break;
    }
    case OpKind::mean_rows: {
      const Tensor& x = node.in[0];
      if (!x->requires_grad) break;
      ensure_grad(x);
      const int m = x->shape[0], n = x->shape[1];
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
          x->grad[static_cast<std::size_t>(i) * n + j] +=
              g[static_cast<std::size_t>(j)] / static_cast<double>(m);
      break;
    }
    case OpKind::masked_fill: {
      const Tensor& x = node.in[0];
      const Tensor& mask = node.in[1];
      const Tensor& fill = node.in[2];
      const int m = x->shape[0], n = x->shape[1];
      if (x->requires_grad) ensure_grad(x);
      if (fill->requires_grad) ensure_grad(fill);
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
          const std::size_t idx = static_cast<std::size_t>(i) * n + j;
          if (mask->data[idx] == 1.0) {
            if (x->requires_grad) x->grad[idx] += g[idx];
          } else if (fill->requires_grad) {
            fill->grad[static_cast<std::size_t>(j)] += g[idx];
          }
        }
      break;
    }
    case OpKind::bce_logits_mean: {
      const Tensor& z = node.in[0];
      if (!z->requires_grad) break;
      ensure_grad(z);
      const double k = static_cast<double>(z->size());
      for (std::size_t i = 0; i < z->size(); ++i)
        z->grad[i] += g[0] * (stable_sigmoid(z->data[i]) - node.attr[i]) / k;
      break;
    }
  }
}

std::vector<double> finite_difference(const std::function<double()>& f, const Tensor& point,
                                      double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("finite_difference: eps must be positive");
  std::vector<double> grad(point->size(), 0.0);
  for (std::size_t i = 0; i < point->size(); ++i) {
    const double original = point->data[i];
    point->data[i] = original + eps;
    const double fp = f();
    point->data[i] = original - eps;
    const double fm = f();
    point->data[i] = original;
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw NumericError("finite_difference: objective returned a non-finite value");
    grad[i] = (fp - fm) / (2.0 * eps);
  }
  return grad;
}

double max_relative_error(const std::vector<double>& analytic, const std::vector<double>& numeric) {
  if (analytic.size() != numeric.size())
    throw std::invalid_argument("max_relative_error: length mismatch");
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric[i]), 1e-8});
    worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / denom);
  }
  return worst;
}

}  // namespace prompt_impute
