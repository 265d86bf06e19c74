#include "cfisac/nn/tape.hpp"

#include <numeric>
#include <utility>

namespace cfisac::nn {

Tensor::Tensor(std::vector<int> s, double fill) : shape(std::move(s)) {
  std::int64_t n = 1;
  for (int d : shape) {
    if (d < 0) throw std::invalid_argument("Tensor: negative dimension");
    n *= d;
  }
  data.assign(static_cast<std::size_t>(n), fill);
}

Tensor Tensor::scalar(double v) {
  Tensor t;
  t.shape = {1};
  t.data = {v};
  return t;
}

Tensor Tensor::from(std::vector<int> s, std::vector<double> d) {
  Tensor t;
  t.shape = std::move(s);
  std::int64_t n = 1;
  for (int dim : t.shape) n *= dim;
  if (n != static_cast<std::int64_t>(d.size()))
    throw std::invalid_argument("Tensor::from: shape/data size mismatch");
  t.data = std::move(d);
  return t;
}

double Tensor::item() const {
  if (data.size() != 1) throw std::invalid_argument("Tensor::item: not a scalar");
  return data[0];
}

const Tensor& Var::value() const { return tape->node(id).value; }
const Tensor& Var::grad() const { return tape->node(id).grad; }
bool Var::tracked() const { return tape->node(id).requires_grad; }

Var Tape::leaf(Tensor value) {
  _nodes.push_back(Node{std::move(value), Tensor{}, true, nullptr});
  return Var{this, static_cast<int>(_nodes.size()) - 1};
}

Var Tape::constant(Tensor value) {
  _nodes.push_back(Node{std::move(value), Tensor{}, false, nullptr});
  return Var{this, static_cast<int>(_nodes.size()) - 1};
}

Var Tape::push(Tensor value, bool requires_grad,
               std::function<void(Tape&, const Tensor&)> pull) {
  if (!requires_grad) pull = nullptr;  // constants never propagate
  _nodes.push_back(Node{std::move(value), Tensor{}, requires_grad, std::move(pull)});
  return Var{this, static_cast<int>(_nodes.size()) - 1};
}

void Tape::accumulate(int id, const Tensor& g) {
  Node& n = _nodes[static_cast<std::size_t>(id)];
  if (!n.requires_grad) return;
  if (n.grad.data.empty()) {
    n.grad = Tensor(n.value.shape);
  }
  for (std::size_t i = 0; i < g.data.size(); ++i) n.grad.data[i] += g.data[i];
}

void Tape::backward(Var loss) {
  if (loss.tape != this) throw std::invalid_argument("backward: var from another tape");
  const Node& ln = node(loss.id);
  if (ln.value.numel() != 1)
    throw std::invalid_argument("backward: loss must be a scalar");
  accumulate(loss.id, Tensor::scalar(1.0));
  for (int i = loss.id; i >= 0; --i) {
    Node& n = _nodes[static_cast<std::size_t>(i)];
    if (n.grad.data.empty() || !n.pull) continue;
    n.pull(*this, n.grad);
  }
}

}  // namespace cfisac::nn
