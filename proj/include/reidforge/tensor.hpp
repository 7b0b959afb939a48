#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "reidforge/common.hpp"

// Reverse-mode differentiable dense matrices. A TensorT owns a node in an
// implicit compute graph: every operation below records its parents and a
// backprop closure, and backward() replays the graph in reverse topological
// order, visiting each node exactly once and summing gradient contributions.

namespace reidforge {

template <class Scalar>
struct TensorNode {
  DenseMatrix<Scalar> value;
  DenseMatrix<Scalar> grad;  // same shape as value once allocated
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void(TensorNode&)> backprop;  // pulls this->grad into parents

  void ensure_grad() {
    if (grad.size() != value.size()) {
      grad = DenseMatrix<Scalar>::Zero(value.rows(), value.cols());
    }
  }
};

template <class Scalar>
class TensorT {
 public:
  TensorT() : node_(std::make_shared<TensorNode<Scalar>>()) {}

  explicit TensorT(DenseMatrix<Scalar> value, bool requires_grad = false)
      : node_(std::make_shared<TensorNode<Scalar>>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
  }

  static TensorT zeros(Index rows, Index cols, bool requires_grad = false) {
    return TensorT(DenseMatrix<Scalar>::Zero(rows, cols), requires_grad);
  }

  static TensorT constant(Index rows, Index cols, Scalar v) {
    return TensorT(DenseMatrix<Scalar>::Constant(rows, cols, v), false);
  }

  Index rows() const { return node_->value.rows(); }
  Index cols() const { return node_->value.cols(); }

  const DenseMatrix<Scalar>& value() const { return node_->value; }
  DenseMatrix<Scalar>& mutable_value() { return node_->value; }

  bool requires_grad() const { return node_->requires_grad; }

  const DenseMatrix<Scalar>& grad() const {
    node_->ensure_grad();
    return node_->grad;
  }

  void zero_grad() {
    node_->grad = DenseMatrix<Scalar>::Zero(rows(), cols());
  }

  // Value of a 1x1 tensor.
  Scalar scalar() const {
    if (rows() != 1 || cols() != 1) {
      throw ShapeError("scalar(): tensor is " + shape_str() + ", expected 1x1");
    }
    return node_->value(0, 0);
  }

  std::string shape_str() const {
    std::ostringstream os;
    os << rows() << "x" << cols();
    return os.str();
  }

  std::shared_ptr<TensorNode<Scalar>> node() const { return node_; }

 private:
  std::shared_ptr<TensorNode<Scalar>> node_;
};

using Tensor = TensorT<double>;

namespace detail {

template <class Scalar>
TensorT<Scalar> make_result(DenseMatrix<Scalar> value,
                            std::vector<TensorT<Scalar>> parents,
                            std::function<void(TensorNode<Scalar>&)> backprop) {
  bool needs = false;
  for (const auto& p : parents) needs = needs || p.requires_grad();
  TensorT<Scalar> out(std::move(value), needs);
  if (needs) {
    auto node = out.node();
    node->parents.reserve(parents.size());
    for (const auto& p : parents) node->parents.push_back(p.node());
    node->backprop = std::move(backprop);
  }
  return out;
}

template <class Scalar>
[[noreturn]] void shape_fail(const char* op, const TensorT<Scalar>& a,
                             const TensorT<Scalar>& b) {
  throw ShapeError(std::string(op) + ": shape mismatch (a: " + a.shape_str() +
                   ", b: " + b.shape_str() + ")");
}

enum class Broadcast { None, Row, Col };

// Second operand may be a 1xC row (replicated over rows) or an Rx1 column
// (replicated over cols).
template <class Scalar>
Broadcast classify_broadcast(const char* op, const TensorT<Scalar>& a,
                             const TensorT<Scalar>& b) {
  if (a.rows() == b.rows() && a.cols() == b.cols()) return Broadcast::None;
  if (b.rows() == 1 && b.cols() == a.cols()) return Broadcast::Row;
  if (b.cols() == 1 && b.rows() == a.rows()) return Broadcast::Col;
  shape_fail(op, a, b);
}

template <class Scalar>
DenseMatrix<Scalar> expand(const DenseMatrix<Scalar>& b, Broadcast mode,
                           Index rows, Index cols) {
  switch (mode) {
    case Broadcast::Row:
      return b.replicate(rows, 1);
    case Broadcast::Col:
      return b.replicate(1, cols);
    default:
      return b;
  }
}

// Sums a full-shape gradient back down to the broadcast operand's shape.
template <class Scalar>
DenseMatrix<Scalar> reduce(const DenseMatrix<Scalar>& g, Broadcast mode) {
  switch (mode) {
    case Broadcast::Row:
      return g.colwise().sum();
    case Broadcast::Col:
      return g.rowwise().sum();
    default:
      return g;
  }
}

template <class Scalar>
void accumulate(std::shared_ptr<TensorNode<Scalar>>& parent,
                const DenseMatrix<Scalar>& g) {
  if (!parent->requires_grad) return;
  parent->ensure_grad();
  parent->grad += g;
}

}  // namespace detail

template <class Scalar>
TensorT<Scalar> matmul(const TensorT<Scalar>& a, const TensorT<Scalar>& b) {
  if (a.cols() != b.rows()) detail::shape_fail("matmul", a, b);
  DenseMatrix<Scalar> value = a.value() * b.value();
  DenseMatrix<Scalar> av = a.value(), bv = b.value();
  return detail::make_result<Scalar>(
      std::move(value), {a, b}, [av, bv](TensorNode<Scalar>& n) {
        detail::accumulate<Scalar>(n.parents[0],
                                   (n.grad * bv.transpose()).eval());
        detail::accumulate<Scalar>(n.parents[1],
                                   (av.transpose() * n.grad).eval());
      });
}

template <class Scalar>
TensorT<Scalar> transpose(const TensorT<Scalar>& a) {
  return detail::make_result<Scalar>(
      a.value().transpose(), {a}, [](TensorNode<Scalar>& n) {
        detail::accumulate<Scalar>(n.parents[0], n.grad.transpose().eval());
      });
}

template <class Scalar>
TensorT<Scalar> add(const TensorT<Scalar>& a, const TensorT<Scalar>& b) {
  auto mode = detail::classify_broadcast("add", a, b);
  DenseMatrix<Scalar> value =
      a.value() + detail::expand(b.value(), mode, a.rows(), a.cols());
  return detail::make_result<Scalar>(
      std::move(value), {a, b}, [mode](TensorNode<Scalar>& n) {
        detail::accumulate<Scalar>(n.parents[0], n.grad);
        detail::accumulate<Scalar>(n.parents[1], detail::reduce(n.grad, mode));
      });
}

template <class Scalar>
TensorT<Scalar> sub(const TensorT<Scalar>& a, const TensorT<Scalar>& b) {
  auto mode = detail::classify_broadcast("sub", a, b);
  DenseMatrix<Scalar> value =
      a.value() - detail::expand(b.value(), mode, a.rows(), a.cols());
  return detail::make_result<Scalar>(
      std::move(value), {a, b}, [mode](TensorNode<Scalar>& n) {
        detail::accumulate<Scalar>(n.parents[0], n.grad);
        detail::accumulate<Scalar>(n.parents[1],
                                   (-detail::reduce(n.grad, mode)).eval());
      });
}

// Elementwise product; second operand may broadcast as in add().
template <class Scalar>
TensorT<Scalar> hadamard(const TensorT<Scalar>& a, const TensorT<Scalar>& b) {
  auto mode = detail::classify_broadcast("hadamard", a, b);
  DenseMatrix<Scalar> bx = detail::expand(b.value(), mode, a.rows(), a.cols());
  DenseMatrix<Scalar> value = a.value().cwiseProduct(bx);
  DenseMatrix<Scalar> av = a.value();
  return detail::make_result<Scalar>(
      std::move(value), {a, b}, [mode, av, bx](TensorNode<Scalar>& n) {
        detail::accumulate<Scalar>(n.parents[0], n.grad.cwiseProduct(bx).eval());
        detail::accumulate<Scalar>(
            n.parents[1], detail::reduce<Scalar>(n.grad.cwiseProduct(av), mode));
      });
}

template <class Scalar>
TensorT<Scalar> scale(const TensorT<Scalar>& a, Scalar s) {
  return detail::make_result<Scalar>(
      (a.value() * s).eval(), {a}, [s](TensorNode<Scalar>& n) {
        detail::accumulate<Scalar>(n.parents[0], (n.grad * s).eval());
      });
}

template <class Scalar>
TensorT<Scalar> add_scalar(const TensorT<Scalar>& a, Scalar s) {
  return detail::make_result<Scalar>(
      (a.value().array() + s).matrix().eval(), {a},
      [](TensorNode<Scalar>& n) {
        detail::accumulate<Scalar>(n.parents[0], n.grad);
      });
}

// Subgradient at 0 is 0.
template <class Scalar>
TensorT<Scalar> relu(const TensorT<Scalar>& a) {
  DenseMatrix<Scalar> mask =
      (a.value().array() > Scalar(0)).template cast<Scalar>();
  return detail::make_result<Scalar>(
      a.value().cwiseProduct(mask), {a}, [mask](TensorNode<Scalar>& n) {
        detail::accumulate<Scalar>(n.parents[0],
                                   n.grad.cwiseProduct(mask).eval());
      });
}

template <class Scalar>
TensorT<Scalar> log(const TensorT<Scalar>& a) {
  DenseMatrix<Scalar> av = a.value();
  return detail::make_result<Scalar>(
      av.array().log().matrix().eval(), {a}, [av](TensorNode<Scalar>& n) {
        detail::accumulate<Scalar>(
            n.parents[0], (n.grad.array() / av.array()).matrix().eval());
      });
}

// sqrt(x + eps), smooth at x = 0 for eps > 0.
template <class Scalar>
TensorT<Scalar> sqrt_guarded(const TensorT<Scalar>& a, Scalar eps) {
  DenseMatrix<Scalar> root = (a.value().array() + eps).sqrt().matrix();
  return detail::make_result<Scalar>(
      DenseMatrix<Scalar>(root), {a}, [root](TensorNode<Scalar>& n) {
        detail::accumulate<Scalar>(
            n.parents[0],
            (n.grad.array() * (Scalar(0.5) / root.array())).matrix().eval());
      });
}

template <class Scalar>
TensorT<Scalar> reciprocal(const TensorT<Scalar>& a) {
  DenseMatrix<Scalar> inv = a.value().array().inverse().matrix();
  return detail::make_result<Scalar>(
      DenseMatrix<Scalar>(inv), {a}, [inv](TensorNode<Scalar>& n) {
        detail::accumulate<Scalar>(
            n.parents[0],
            (-n.grad.array() * inv.array() * inv.array()).matrix().eval());
      });
}

// Sum of all entries, as a 1x1 tensor.
template <class Scalar>
TensorT<Scalar> sum(const TensorT<Scalar>& a) {
  DenseMatrix<Scalar> value(1, 1);
  value(0, 0) = a.value().sum();
  Index r = a.rows(), c = a.cols();
  return detail::make_result<Scalar>(
      std::move(value), {a}, [r, c](TensorNode<Scalar>& n) {
        detail::accumulate<Scalar>(
            n.parents[0],
            DenseMatrix<Scalar>::Constant(r, c, n.grad(0, 0)).eval());
      });
}

// Column means: n x m -> 1 x m.
template <class Scalar>
TensorT<Scalar> mean_rows(const TensorT<Scalar>& a) {
  if (a.rows() < 1) throw ShapeError("mean_rows: empty tensor");
  Index n = a.rows();
  DenseMatrix<Scalar> value = a.value().colwise().mean();
  return detail::make_result<Scalar>(
      std::move(value), {a}, [n](TensorNode<Scalar>& node) {
        detail::accumulate<Scalar>(
            node.parents[0],
            (node.grad.replicate(n, 1) / Scalar(n)).eval());
      });
}

// Row-wise squared euclidean norms: n x m -> n x 1.
template <class Scalar>
TensorT<Scalar> squared_norm_rows(const TensorT<Scalar>& a) {
  DenseMatrix<Scalar> value = a.value().rowwise().squaredNorm();
  DenseMatrix<Scalar> av = a.value();
  return detail::make_result<Scalar>(
      std::move(value), {a}, [av](TensorNode<Scalar>& n) {
        DenseMatrix<Scalar> g =
            (av.array().colwise() * n.grad.col(0).array()).matrix();
        detail::accumulate<Scalar>(n.parents[0], (g * Scalar(2)).eval());
      });
}

// Numerically stable row-wise softmax. The max shift is a constant offset,
// which leaves both the value and the gradient of softmax unchanged.
template <class Scalar>
TensorT<Scalar> softmax_rows(const TensorT<Scalar>& a) {
  DenseMatrix<Scalar> shifted =
      a.value().array().colwise() - a.value().rowwise().maxCoeff().array();
  DenseMatrix<Scalar> e = shifted.array().exp();
  DenseMatrix<Scalar> s =
      (e.array().colwise() / e.rowwise().sum().array()).matrix();
  return detail::make_result<Scalar>(
      DenseMatrix<Scalar>(s), {a}, [s](TensorNode<Scalar>& n) {
        // dX_i = s_i .* (dY_i - <dY_i, s_i>)
        DenseMatrix<Scalar> dot = (n.grad.cwiseProduct(s)).rowwise().sum();
        detail::accumulate<Scalar>(
            n.parents[0],
            (s.array() * (n.grad.array().colwise() - dot.col(0).array()))
                .matrix()
                .eval());
      });
}

// Selects rows, duplicates allowed; gradients scatter-add back.
template <class Scalar>
TensorT<Scalar> gather_rows(const TensorT<Scalar>& a,
                            const std::vector<Index>& rows) {
  for (Index r : rows) {
    if (r < 0 || r >= a.rows()) {
      throw ShapeError("gather_rows: row index " + std::to_string(r) +
                       " out of range for " + a.shape_str() + " tensor");
    }
  }
  DenseMatrix<Scalar> value(static_cast<Index>(rows.size()), a.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    value.row(static_cast<Index>(i)) = a.value().row(rows[i]);
  }
  Index src_rows = a.rows(), cols = a.cols();
  return detail::make_result<Scalar>(
      std::move(value), {a}, [rows, src_rows, cols](TensorNode<Scalar>& n) {
        DenseMatrix<Scalar> g = DenseMatrix<Scalar>::Zero(src_rows, cols);
        for (std::size_t i = 0; i < rows.size(); ++i) {
          g.row(rows[i]) += n.grad.row(static_cast<Index>(i));
        }
        detail::accumulate<Scalar>(n.parents[0], g);
      });
}

// Vertical stack of same-width tensors.
template <class Scalar>
TensorT<Scalar> concat_rows(const std::vector<TensorT<Scalar>>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  Index cols = parts[0].cols(), rows = 0;
  for (const auto& p : parts) {
    if (p.cols() != cols) detail::shape_fail("concat_rows", parts[0], p);
    rows += p.rows();
  }
  DenseMatrix<Scalar> value(rows, cols);
  std::vector<Index> offsets;
  Index at = 0;
  for (const auto& p : parts) {
    value.middleRows(at, p.rows()) = p.value();
    offsets.push_back(at);
    at += p.rows();
  }
  std::vector<Index> sizes;
  for (const auto& p : parts) sizes.push_back(p.rows());
  return detail::make_result<Scalar>(
      std::move(value), parts, [offsets, sizes](TensorNode<Scalar>& n) {
        for (std::size_t i = 0; i < n.parents.size(); ++i) {
          detail::accumulate<Scalar>(
              n.parents[i], n.grad.middleRows(offsets[i], sizes[i]).eval());
        }
      });
}

template <class Scalar>
TensorT<Scalar> concat_rows(const TensorT<Scalar>& a, const TensorT<Scalar>& b) {
  return concat_rows(std::vector<TensorT<Scalar>>{a, b});
}

// Reverse pass from `root`. Gradients of every tensor reachable from the
// root are reset first, so each call yields fresh derivatives.
template <class Scalar>
void backward(const TensorT<Scalar>& root) {
  if (!root.requires_grad()) return;
  using Node = TensorNode<Scalar>;
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next].get();
      ++next;
      if (parent->requires_grad && seen.insert(parent).second) {
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  for (Node* n : order) {
    n->grad = DenseMatrix<Scalar>::Zero(n->value.rows(), n->value.cols());
  }
  root.node()->grad =
      DenseMatrix<Scalar>::Ones(root.rows(), root.cols());
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backprop) (*it)->backprop(**it);
  }
}

}  // namespace reidforge
