#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "tinylight/tensor.hpp"

namespace tinylight {

// Reverse-mode gradient tape over dense vectors. Nodes are recorded in
// forward order; backward() sweeps them once in reverse and accumulates
// parameter gradients into Tensor::grad (only for tensors with
// requires_grad set).
class Tape {
 public:
  using Var = int;

  void clear() {
    nodes_.clear();
    vals_.clear();
    grads_.clear();
    visited_ = 0;
  }

  bool empty() const { return nodes_.empty(); }
  std::size_t size() const { return nodes_.size(); }
  std::size_t visited_ops() const { return visited_; }

  std::span<const double> value(Var v) const { return {vals_.data() + nodes_[v].off, nodes_[v].n}; }
  double scalar(Var v) const { return vals_[nodes_[v].off]; }
  std::span<const double> grad(Var v) const { return {grads_.data() + nodes_[v].off, nodes_[v].n}; }

  Var constant(std::span<const double> x) {
    Var v = push(Op::kConstant, x.size(), false);
    std::copy(x.begin(), x.end(), vals_.begin() + nodes_[v].off);
    return v;
  }

  // Leaf bound to a parameter tensor (flattened).
  Var parameter(Tensor& t) {
    Var v = push(Op::kParameter, t.size(), t.requires_grad);
    nodes_[v].tensor = &t;
    std::copy(t.value.begin(), t.value.end(), vals_.begin() + nodes_[v].off);
    return v;
  }

  Var linear(Var x, DenseParams& p) {
    const std::size_t fin = p.fin(), fout = p.fout();
    if (nodes_[x].n != fin)
      throw ShapeError("linear: input has " + std::to_string(nodes_[x].n) + " entries, expected " +
                       std::to_string(fin));
    const bool ng = nodes_[x].needs_grad || p.weight.requires_grad || p.bias.requires_grad;
    Var y = push(Op::kLinear, fout, ng);
    nodes_[y].a = x;
    nodes_[y].dense = &p;
    const double* xs = vals_.data() + nodes_[x].off;
    double* ys = vals_.data() + nodes_[y].off;
    std::copy(p.bias.value.begin(), p.bias.value.end(), ys);
    const double* w = p.weight.value.data();
    for (std::size_t i = 0; i < fin; ++i) {
      const double xi = xs[i];
      if (xi == 0.0) continue;
      const double* wi = w + i * fout;
      for (std::size_t j = 0; j < fout; ++j) ys[j] += xi * wi[j];
    }
    return y;
  }

  Var relu(Var x) {
    Var y = push(Op::kRelu, nodes_[x].n, nodes_[x].needs_grad);
    nodes_[y].a = x;
    const double* xs = vals_.data() + nodes_[x].off;
    double* ys = vals_.data() + nodes_[y].off;
    for (std::size_t i = 0; i < nodes_[x].n; ++i) ys[i] = xs[i] > 0.0 ? xs[i] : 0.0;
    return y;
  }

  Var add(Var a, Var b) {
    if (nodes_[a].n != nodes_[b].n) throw ShapeError("add: size mismatch");
    Var y = push(Op::kAdd, nodes_[a].n, nodes_[a].needs_grad || nodes_[b].needs_grad);
    nodes_[y].a = a;
    nodes_[y].b = b;
    const double* as = vals_.data() + nodes_[a].off;
    const double* bs = vals_.data() + nodes_[b].off;
    double* ys = vals_.data() + nodes_[y].off;
    for (std::size_t i = 0; i < nodes_[a].n; ++i) ys[i] = as[i] + bs[i];
    return y;
  }

  // x scaled by entry `index` of node s.
  Var scale_by(Var x, Var s, std::size_t index) {
    if (index >= nodes_[s].n) throw ShapeError("scale_by: index out of range");
    Var y = push(Op::kScaleBy, nodes_[x].n, nodes_[x].needs_grad || nodes_[s].needs_grad);
    nodes_[y].a = x;
    nodes_[y].b = s;
    nodes_[y].index = index;
    const double c = vals_[nodes_[s].off + index];
    const double* xs = vals_.data() + nodes_[x].off;
    double* ys = vals_.data() + nodes_[y].off;
    for (std::size_t i = 0; i < nodes_[x].n; ++i) ys[i] = c * xs[i];
    return y;
  }

  Var scale(Var x, double c) {
    Var y = push(Op::kScale, nodes_[x].n, nodes_[x].needs_grad);
    nodes_[y].a = x;
    nodes_[y].c = c;
    const double* xs = vals_.data() + nodes_[x].off;
    double* ys = vals_.data() + nodes_[y].off;
    for (std::size_t i = 0; i < nodes_[x].n; ++i) ys[i] = c * xs[i];
    return y;
  }

  Var softmax(Var z) {
    auto p = tinylight::softmax(value(z));
    Var y = push(Op::kSoftmax, p.size(), nodes_[z].needs_grad);
    nodes_[y].a = z;
    std::copy(p.begin(), p.end(), vals_.begin() + nodes_[y].off);
    return y;
  }

  Var entropy(Var p) {
    const double h = tinylight::entropy(value(p));
    Var y = push(Op::kEntropy, 1, nodes_[p].needs_grad);
    nodes_[y].a = p;
    vals_[nodes_[y].off] = h;
    return y;
  }

  // (target - x[index])^2 with target held constant.
  Var td_loss(Var q, int action, double target) {
    if (action < 0 || static_cast<std::size_t>(action) >= nodes_[q].n) throw ShapeError("td_loss: action out of range");
    Var y = push(Op::kTdLoss, 1, nodes_[q].needs_grad);
    nodes_[y].a = q;
    nodes_[y].index = static_cast<std::size_t>(action);
    nodes_[y].c = target;
    const double d = target - vals_[nodes_[q].off + action];
    vals_[nodes_[y].off] = d * d;
    return y;
  }

  Var sum_squares(Var x) {
    Var y = push(Op::kSumSquares, 1, nodes_[x].needs_grad);
    nodes_[y].a = x;
    double s = 0.0;
    for (double v : value(x)) s += v * v;
    vals_[nodes_[y].off] = s;
    return y;
  }

  Var sum(Var x) {
    Var y = push(Op::kSum, 1, nodes_[x].needs_grad);
    nodes_[y].a = x;
    double s = 0.0;
    for (double v : value(x)) s += v;
    vals_[nodes_[y].off] = s;
    return y;
  }

  // Accumulates d(loss)/d(param) into the tensors' grad buffers.
  void backward(Var loss) {
    if (nodes_.empty()) throw Error("backward: nothing recorded on the tape");
    if (loss < 0 || static_cast<std::size_t>(loss) >= nodes_.size() || nodes_[loss].n != 1)
      throw Error("backward: loss must be a scalar node on this tape");
    grads_.assign(vals_.size(), 0.0);
    grads_[nodes_[loss].off] = 1.0;
    visited_ = 0;
    for (Var v = loss; v >= 0; --v) {
      const Node& node = nodes_[v];
      ++visited_;
      if (!node.needs_grad) continue;
      const double* gy = grads_.data() + node.off;
      const double* y = vals_.data() + node.off;
      switch (node.op) {
        case Op::kConstant: break;
        case Op::kParameter:
          if (node.tensor->requires_grad)
            for (std::size_t i = 0; i < node.n; ++i) node.tensor->grad[i] += gy[i];
          break;
        case Op::kLinear: {
          DenseParams& p = *node.dense;
          const Node& xn = nodes_[node.a];
          const double* x = vals_.data() + xn.off;
          const std::size_t fin = p.fin(), fout = p.fout();
          if (p.bias.requires_grad)
            for (std::size_t j = 0; j < fout; ++j) p.bias.grad[j] += gy[j];
          if (p.weight.requires_grad) {
            double* gw = p.weight.grad.data();
            for (std::size_t i = 0; i < fin; ++i) {
              const double xi = x[i];
              if (xi == 0.0) continue;
              double* gwi = gw + i * fout;
              for (std::size_t j = 0; j < fout; ++j) gwi[j] += xi * gy[j];
            }
          }
          if (xn.needs_grad) {
            double* gx = grads_.data() + xn.off;
            const double* w = p.weight.value.data();
            for (std::size_t i = 0; i < fin; ++i) {
              const double* wi = w + i * fout;
              double s = 0.0;
              for (std::size_t j = 0; j < fout; ++j) s += wi[j] * gy[j];
              gx[i] += s;
            }
          }
          break;
        }
        case Op::kRelu: {
          double* gx = grads_.data() + nodes_[node.a].off;
          for (std::size_t i = 0; i < node.n; ++i)
            if (y[i] > 0.0) gx[i] += gy[i];
          break;
        }
        case Op::kAdd: {
          double* ga = grads_.data() + nodes_[node.a].off;
          double* gb = grads_.data() + nodes_[node.b].off;
          for (std::size_t i = 0; i < node.n; ++i) {
            ga[i] += gy[i];
            gb[i] += gy[i];
          }
          break;
        }
        case Op::kScaleBy: {
          const double c = vals_[nodes_[node.b].off + node.index];
          const double* x = vals_.data() + nodes_[node.a].off;
          double* gx = grads_.data() + nodes_[node.a].off;
          double gs = 0.0;
          for (std::size_t i = 0; i < node.n; ++i) {
            gx[i] += c * gy[i];
            gs += x[i] * gy[i];
          }
          grads_[nodes_[node.b].off + node.index] += gs;
          break;
        }
        case Op::kScale: {
          double* gx = grads_.data() + nodes_[node.a].off;
          for (std::size_t i = 0; i < node.n; ++i) gx[i] += node.c * gy[i];
          break;
        }
        case Op::kSoftmax: {
          // dz_i = p_i (g_i - sum_j p_j g_j)
          double dot = 0.0;
          for (std::size_t i = 0; i < node.n; ++i) dot += y[i] * gy[i];
          double* gz = grads_.data() + nodes_[node.a].off;
          for (std::size_t i = 0; i < node.n; ++i) gz[i] += y[i] * (gy[i] - dot);
          break;
        }
        case Op::kEntropy: {
          // dH/dp_i = -(log p_i + 1); at p_i = 0 the one-sided limit is used
          // only through softmax, whose Jacobian vanishes there.
          const Node& pn = nodes_[node.a];
          const double* p = vals_.data() + pn.off;
          double* gp = grads_.data() + pn.off;
          for (std::size_t i = 0; i < pn.n; ++i)
            if (p[i] > 0.0) gp[i] += -(std::log(p[i]) + 1.0) * gy[0];
          break;
        }
        case Op::kTdLoss: {
          const double qa = vals_[nodes_[node.a].off + node.index];
          grads_[nodes_[node.a].off + node.index] += -2.0 * (node.c - qa) * gy[0];
          break;
        }
        case Op::kSumSquares: {
          const double* x = vals_.data() + nodes_[node.a].off;
          double* gx = grads_.data() + nodes_[node.a].off;
          for (std::size_t i = 0; i < nodes_[node.a].n; ++i) gx[i] += 2.0 * x[i] * gy[0];
          break;
        }
        case Op::kSum: {
          double* gx = grads_.data() + nodes_[node.a].off;
          for (std::size_t i = 0; i < nodes_[node.a].n; ++i) gx[i] += gy[0];
          break;
        }
      }
    }
  }

 private:
  enum class Op { kConstant, kParameter, kLinear, kRelu, kAdd, kScaleBy, kScale, kSoftmax, kEntropy, kTdLoss, kSumSquares, kSum };

  struct Node {
    Op op;
    std::size_t off;
    std::size_t n;
    bool needs_grad;
    Var a = -1;
    Var b = -1;
    std::size_t index = 0;
    double c = 0.0;
    Tensor* tensor = nullptr;
    DenseParams* dense = nullptr;
  };

  Var push(Op op, std::size_t n, bool needs_grad) {
    Node node{op, vals_.size(), n, needs_grad};
    vals_.resize(vals_.size() + n, 0.0);
    nodes_.push_back(node);
    return static_cast<Var>(nodes_.size() - 1);
  }

  std::vector<Node> nodes_;
  std::vector<double> vals_;
  std::vector<double> grads_;
  std::size_t visited_ = 0;
};

}  // namespace tinylight
