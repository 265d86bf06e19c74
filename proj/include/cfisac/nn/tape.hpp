#pragma once

// Minimal dense-tensor math with reverse-mode differentiation. Values live
// on an append-only tape; ops push nodes whose pull-back lambdas accumulate
// gradients into their parents during the reverse sweep. Everything is
// float64 and single-threaded per tape.

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace cfisac::nn {

struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s, double fill = 0.0);
  static Tensor scalar(double v);
  static Tensor from(std::vector<int> s, std::vector<double> d);

  std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
  int ndim() const { return static_cast<int>(shape.size()); }
  int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }
  bool same_shape(const Tensor& o) const { return shape == o.shape; }
  double item() const;  // scalar access, throws if numel != 1
};

class Tape;

/// Lightweight handle to a tape node.
struct Var {
  Tape* tape = nullptr;
  int id = -1;
  const Tensor& value() const;
  const Tensor& grad() const;
  bool tracked() const;
};

class Tape {
 public:
  struct Node {
    Tensor value;
    Tensor grad;  // empty until first accumulation
    bool requires_grad = false;
    // Distributes the node's gradient to its parents.
    std::function<void(Tape&, const Tensor&)> pull;
  };

  Var leaf(Tensor value);      // tracked input (parameters)
  Var constant(Tensor value);  // untracked input (data, masks)
  Var push(Tensor value, bool requires_grad,
           std::function<void(Tape&, const Tensor&)> pull);

  /// Reverse sweep from a scalar loss. Throws on non-scalar input.
  void backward(Var loss);

  Node& node(int id) { return _nodes[static_cast<std::size_t>(id)]; }
  const Node& node(int id) const { return _nodes[static_cast<std::size_t>(id)]; }
  std::size_t size() const { return _nodes.size(); }

  /// Adds g into the node's gradient slot, allocating on first touch.
  void accumulate(int id, const Tensor& g);

 private:
  std::vector<Node> _nodes;
};

// Elementwise arithmetic (same shape unless stated).
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var divide(Var a, Var b);
Var neg(Var a);
Var add_scalar(Var a, double s);
Var mul_scalar(Var a, double s);
/// x * s and x / s where s is a scalar node (broadcast).
Var mul_svar(Var x, Var s);
Var div_svar(Var x, Var s);

// Activations and pointwise transcendentals.
Var leaky_relu(Var a, double slope = 0.2);
Var relu(Var a);
Var tanh_op(Var a);
Var sigmoid(Var a);
Var exp_op(Var a);
Var log_op(Var a);
Var sqrt_op(Var a);

// Linear algebra on 2D tensors.
Var matmul(Var a, Var b);
Var transpose(Var a);
/// [m x n] plus a length-n bias, broadcast across rows.
Var bias_add(Var a, Var b);

// Shape plumbing. Indices are constants; no gradient flows through them.
Var reshape(Var a, std::vector<int> shape);
Var concat(const std::vector<Var>& parts);  // flatten all, join into 1D
Var slice(Var a, std::int64_t offset, std::int64_t len);  // flat 1D window
Var stack_rows(const std::vector<Var>& rows);  // equal-length 1D -> 2D
Var gather_rows(Var a, const std::vector<int>& idx);
/// 1D result out[k] = flat(a)[idx[k]]; duplicates and omissions allowed.
Var gather_flat(Var a, const std::vector<std::int64_t>& idx);

// Reductions.
Var sum(Var a);
Var mean(Var a);
/// Row-wise softmax of a 2D tensor (1D treated as one row). Max-shifted.
Var softmax_rows(Var a);

// Gradient routing.
Var detach(Var a);
/// Straight-through: forward takes `hard`, backward passes the gradient to
/// `soft` unchanged. Shapes must match.
Var straight_through(Var soft, Tensor hard);

/// 3D convolution: x [C_in, D1, D2, D3], kernels [C_out, C_in, 3, 3, 3],
/// bias [C_out], zero padding 1 on every spatial axis.
Var conv3(Var x, Var kernels, Var bias, int stride = 1);

}  // namespace cfisac::nn
