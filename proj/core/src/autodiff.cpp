#include "lcpvae/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <unordered_set>

#include "lcpvae/error.hpp"

namespace lcpvae {
namespace {

Var make_result(const char* op, Shape shape, std::vector<double> data, std::vector<std::shared_ptr<Node>> parents,
                std::function<void(const Node&)> backward_fn) {
  require_finite(data, op);
  auto node = std::make_shared<Node>();
  node->value = Tensor(shape, std::move(data));
  node->grad = Tensor::zeros(std::move(shape));
  node->requires_grad = std::any_of(parents.begin(), parents.end(), [](const auto& p) { return p->requires_grad; });
  node->parents = std::move(parents);
  if (node->requires_grad) node->backward_fn = std::move(backward_fn);
  return Var(std::move(node));
}

std::span<double> grad_of(const std::shared_ptr<Node>& n) { return n->grad.mutable_data(); }

void require_valid(const Var& v, const char* op) {
  if (!v.valid()) throw ShapeError(std::string(op) + ": uninitialized operand");
}

double unary_value(UnaryOp op, double x) {
  switch (op) {
    case UnaryOp::exp: return std::exp(x);
    case UnaryOp::log: return std::log(x);
    case UnaryOp::tanh: return std::tanh(x);
    case UnaryOp::square: return x * x;
    case UnaryOp::abs: return std::abs(x);
    case UnaryOp::neg: return -x;
  }
  return 0.0;
}

// Derivative given input x and output y.
double unary_derivative(UnaryOp op, double x, double y) {
  switch (op) {
    case UnaryOp::exp: return y;
    case UnaryOp::log: return 1.0 / x;
    case UnaryOp::tanh: return 1.0 - y * y;
    case UnaryOp::square: return 2.0 * x;
    case UnaryOp::abs: return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0);
    case UnaryOp::neg: return -1.0;
  }
  return 0.0;
}

const char* unary_name(UnaryOp op) {
  switch (op) {
    case UnaryOp::exp: return "exp";
    case UnaryOp::log: return "log";
    case UnaryOp::tanh: return "tanh";
    case UnaryOp::square: return "square";
    case UnaryOp::abs: return "abs";
    case UnaryOp::neg: return "neg";
  }
  return "?";
}

const char* binary_name(BinaryOp op) {
  switch (op) {
    case BinaryOp::add: return "add";
    case BinaryOp::sub: return "sub";
    case BinaryOp::mul: return "mul";
    case BinaryOp::div: return "div";
  }
  return "?";
}

}  // namespace

Var Var::constant(Tensor value) {
  auto node = std::make_shared<Node>();
  node->grad = Tensor::zeros(value.shape());
  node->value = std::move(value);
  return Var(std::move(node));
}

Var Var::parameter(Tensor value) {
  Var v = constant(std::move(value));
  v.node_->requires_grad = true;
  return v;
}

void Var::zero_grad() {
  auto g = node_->grad.mutable_data();
  std::fill(g.begin(), g.end(), 0.0);
}

Var matmul(const Var& a, const Var& b) {
  require_valid(a, "matmul");
  require_valid(b, "matmul");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.cols() != bv.rows()) {
    throw ShapeError("matmul: incompatible shapes " + shape_string(av.shape()) + " x " + shape_string(bv.shape()));
  }
  const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
  std::vector<double> out(m * n, 0.0);
  const auto A = av.data();
  const auto B = bv.data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = A[i * k + p];
      for (std::size_t j = 0; j < n; ++j) out[i * n + j] += aip * B[p * n + j];
    }
  }
  return make_result("matmul", {m, n}, std::move(out), {a.node(), b.node()}, [m, k, n](const Node& self) {
    const auto G = self.grad.data();
    const auto& pa = self.parents[0];
    const auto& pb = self.parents[1];
    const auto A = pa->value.data();
    const auto B = pb->value.data();
    if (pa->requires_grad) {
      auto dA = grad_of(pa);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += G[i * n + j] * B[p * n + j];
          dA[i * k + p] += acc;
        }
    }
    if (pb->requires_grad) {
      auto dB = grad_of(pb);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = A[i * k + p];
          for (std::size_t j = 0; j < n; ++j) dB[p * n + j] += aip * G[i * n + j];
        }
    }
  });
}

Var unary(UnaryOp op, const Var& x) {
  require_valid(x, unary_name(op));
  const auto X = x.value().data();
  std::vector<double> out(X.size());
  for (std::size_t i = 0; i < X.size(); ++i) {
    if (op == UnaryOp::log && !(X[i] > 0.0)) {
      throw DomainError("log: non-positive argument " + std::to_string(X[i]) + " at flat index " + std::to_string(i));
    }
    out[i] = unary_value(op, X[i]);
  }
  return make_result(unary_name(op), x.shape(), std::move(out), {x.node()}, [op](const Node& self) {
    const auto& p = self.parents[0];
    const auto X = p->value.data();
    const auto Y = self.value.data();
    const auto G = self.grad.data();
    auto dX = grad_of(p);
    for (std::size_t i = 0; i < X.size(); ++i) dX[i] += G[i] * unary_derivative(op, X[i], Y[i]);
  });
}

Var binary(BinaryOp op, const Var& a, const Var& b) {
  const char* name = binary_name(op);
  require_valid(a, name);
  require_valid(b, name);
  const auto A = a.value().data();
  const auto B = b.value().data();
  Shape shape;
  if (a.shape() == b.shape()) {
    shape = a.shape();
  } else if (B.size() == 1) {
    shape = a.shape();
  } else if (A.size() == 1) {
    shape = b.shape();
  } else {
    throw ShapeError(std::string(name) + ": incompatible shapes " + shape_string(a.shape()) + " and " +
                     shape_string(b.shape()));
  }
  const std::size_t n = shape_size(shape);
  const std::size_t sa = A.size() == 1 && n != 1 ? 0 : 1;
  const std::size_t sb = B.size() == 1 && n != 1 ? 0 : 1;
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double u = A[i * sa], v = B[i * sb];
    switch (op) {
      case BinaryOp::add: out[i] = u + v; break;
      case BinaryOp::sub: out[i] = u - v; break;
      case BinaryOp::mul: out[i] = u * v; break;
      case BinaryOp::div:
        if (v == 0.0) throw DomainError("div: zero denominator at flat index " + std::to_string(i));
        out[i] = u / v;
        break;
    }
  }
  return make_result(name, std::move(shape), std::move(out), {a.node(), b.node()}, [op, n, sa, sb](const Node& self) {
    const auto& pa = self.parents[0];
    const auto& pb = self.parents[1];
    const auto A = pa->value.data();
    const auto B = pb->value.data();
    const auto G = self.grad.data();
    if (pa->requires_grad) {
      auto dA = grad_of(pa);
      for (std::size_t i = 0; i < n; ++i) {
        double d = 0.0;
        switch (op) {
          case BinaryOp::add:
          case BinaryOp::sub: d = G[i]; break;
          case BinaryOp::mul: d = G[i] * B[i * sb]; break;
          case BinaryOp::div: d = G[i] / B[i * sb]; break;
        }
        dA[i * sa] += d;
      }
    }
    if (pb->requires_grad) {
      auto dB = grad_of(pb);
      for (std::size_t i = 0; i < n; ++i) {
        double d = 0.0;
        switch (op) {
          case BinaryOp::add: d = G[i]; break;
          case BinaryOp::sub: d = -G[i]; break;
          case BinaryOp::mul: d = G[i] * A[i * sa]; break;
          case BinaryOp::div: {
            const double v = B[i * sb];
            d = -G[i] * A[i * sa] / (v * v);
            break;
          }
        }
        dB[i * sb] += d;
      }
    }
  });
}

Var scale(const Var& x, double factor) { return binary(BinaryOp::mul, x, Var::constant(Tensor::scalar(factor))); }

Var add_scalar(const Var& x, double offset) { return binary(BinaryOp::add, x, Var::constant(Tensor::scalar(offset))); }

Var add_rowwise(const Var& a, const Var& row) {
  require_valid(a, "add_rowwise");
  require_valid(row, "add_rowwise");
  const Tensor& av = a.value();
  const Tensor& rv = row.value();
  if (av.rank() != 2 || rv.rank() != 2 || rv.rows() != 1 || rv.cols() != av.cols()) {
    throw ShapeError("add_rowwise: incompatible shapes " + shape_string(av.shape()) + " and " +
                     shape_string(rv.shape()));
  }
  const std::size_t m = av.rows(), n = av.cols();
  std::vector<double> out(av.data().begin(), av.data().end());
  const auto R = rv.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] += R[j];
  return make_result("add_rowwise", {m, n}, std::move(out), {a.node(), row.node()}, [m, n](const Node& self) {
    const auto G = self.grad.data();
    const auto& pa = self.parents[0];
    const auto& pr = self.parents[1];
    if (pa->requires_grad) {
      auto dA = grad_of(pa);
      for (std::size_t i = 0; i < m * n; ++i) dA[i] += G[i];
    }
    if (pr->requires_grad) {
      auto dR = grad_of(pr);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) dR[j] += G[i * n + j];
    }
  });
}

Var concat(std::span<const Var> parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: empty list of parts");
  for (const auto& p : parts) require_valid(p, "concat");
  const Shape& first = parts.front().shape();
  if (axis >= first.size()) throw ShapeError("concat: axis out of range for shape " + shape_string(first));
  Shape shape = first;
  shape[axis] = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == first.size();
    for (std::size_t d = 0; ok && d < s.size(); ++d) ok = d == axis || s[d] == first[d];
    if (!ok) throw ShapeError("concat: shape " + shape_string(s) + " incompatible with " + shape_string(first));
    shape[axis] += s[axis];
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= first[d];
  for (std::size_t d = axis + 1; d < first.size(); ++d) inner *= first[d];

  // Width of each part's contiguous chunk per outer index.
  std::vector<std::size_t> chunk;
  std::vector<std::shared_ptr<Node>> parents;
  for (const auto& p : parts) {
    chunk.push_back(p.shape()[axis] * inner);
    parents.push_back(p.node());
  }
  const std::size_t row = shape[axis] * inner;
  std::vector<double> out(outer * row);
  for (std::size_t o = 0; o < outer; ++o) {
    std::size_t offset = o * row;
    for (std::size_t k = 0; k < parts.size(); ++k) {
      const auto src = parts[k].value().data().subspan(o * chunk[k], chunk[k]);
      std::copy(src.begin(), src.end(), out.begin() + static_cast<std::ptrdiff_t>(offset));
      offset += chunk[k];
    }
  }
  return make_result("concat", std::move(shape), std::move(out), std::move(parents),
                     [outer, row, chunk](const Node& self) {
                       const auto G = self.grad.data();
                       for (std::size_t o = 0; o < outer; ++o) {
                         std::size_t offset = o * row;
                         for (std::size_t k = 0; k < chunk.size(); ++k) {
                           const auto& p = self.parents[k];
                           if (p->requires_grad) {
                             auto dP = grad_of(p);
                             for (std::size_t i = 0; i < chunk[k]; ++i) dP[o * chunk[k] + i] += G[offset + i];
                           }
                           offset += chunk[k];
                         }
                       }
                     });
}

Var concat(std::initializer_list<Var> parts, std::size_t axis) {
  return concat(std::span<const Var>(parts.begin(), parts.size()), axis);
}

Var slice_cols(const Var& x, std::size_t begin, std::size_t end) {
  require_valid(x, "slice_cols");
  const Tensor& v = x.value();
  if (v.rank() != 2 || begin >= end || end > v.cols()) {
    throw ShapeError("slice_cols: invalid range [" + std::to_string(begin) + ", " + std::to_string(end) +
                     ") for shape " + shape_string(v.shape()));
  }
  const std::size_t m = v.rows(), n = v.cols(), w = end - begin;
  std::vector<double> out(m * w);
  const auto X = v.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < w; ++j) out[i * w + j] = X[i * n + begin + j];
  return make_result("slice_cols", {m, w}, std::move(out), {x.node()}, [m, n, w, begin](const Node& self) {
    const auto G = self.grad.data();
    auto dX = grad_of(self.parents[0]);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < w; ++j) dX[i * n + begin + j] += G[i * w + j];
  });
}

Var clamp(const Var& x, double lo, double hi) {
  require_valid(x, "clamp");
  if (!(lo <= hi)) throw DomainError("clamp: empty interval");
  const auto X = x.value().data();
  std::vector<double> out(X.size());
  for (std::size_t i = 0; i < X.size(); ++i) out[i] = std::clamp(X[i], lo, hi);
  return make_result("clamp", x.shape(), std::move(out), {x.node()}, [lo, hi](const Node& self) {
    const auto& p = self.parents[0];
    const auto X = p->value.data();
    const auto G = self.grad.data();
    auto dX = grad_of(p);
    for (std::size_t i = 0; i < X.size(); ++i)
      if (X[i] >= lo && X[i] <= hi) dX[i] += G[i];
  });
}

Var stop_gradient(const Var& x) {
  require_valid(x, "stop_gradient");
  auto node = std::make_shared<Node>();
  node->value = x.value();
  node->grad = Tensor::zeros(x.shape());
  node->parents = {x.node()};
  return Var(std::move(node));
}

Var sum(const Var& x) {
  require_valid(x, "sum");
  double total = 0.0;
  for (double v : x.value().data()) total += v;
  return make_result("sum", {}, {total}, {x.node()}, [](const Node& self) {
    const double g = self.grad[0];
    for (double& d : grad_of(self.parents[0])) d += g;
  });
}

Var mean(const Var& x) {
  require_valid(x, "mean");
  return scale(sum(x), 1.0 / static_cast<double>(x.value().size()));
}

void backward(const Var& root) {
  require_valid(root, "backward");
  if (root.value().size() != 1) {
    throw ShapeError("backward: root must be a single element, got shape " + shape_string(root.shape()));
  }
  // Iterative post-order DFS; parents precede children in `order`.
  std::vector<Node*> order;
  std::unordered_set<const Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{root.node().get(), 0}};
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (seen.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  for (Node* n : order) {
    auto g = n->grad.mutable_data();
    std::fill(g.begin(), g.end(), 0.0);
  }
  root.node()->grad.mutable_data()[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->requires_grad && n->backward_fn) n->backward_fn(*n);
  }
}

}  // namespace lcpvae
