// Copyright 2026 The ISG Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "isg/ad.h"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace isg::ad {

namespace {

thread_local bool g_grad_enabled = true;
std::atomic<std::uint64_t> g_generation{0};

template <typename Expr>
void accumulate(Node* n, const Expr& g) {
  if (!n->needs_grad) return;
  if (n->grad.size() == 0) {
    n->grad = g;
  } else {
    n->grad += g;
  }
}

// Queues g += left^T * right for a parameter leaf; other nodes accumulate
// immediately.
void accumulate_outer(Node* n, const Eigen::RowVectorXd& left,
                      const Eigen::RowVectorXd& right) {
  if (!n->needs_grad) return;
  if (n->param != nullptr) {
    n->outer_left.push_back(left);
    n->outer_right.push_back(right);
  } else {
    accumulate(n, left.transpose() * right);
  }
}

bool any_needs_grad(std::initializer_list<const Var*> vars) {
  if (!g_grad_enabled) return false;
  for (const Var* v : vars) {
    if (v->needs_grad()) return true;
  }
  return false;
}

Node* make(Matrix value, bool needs_grad) {
  return Tape::current().push(std::move(value), needs_grad);
}

std::string shape(const Matrix& m) {
  std::ostringstream os;
  os << m.rows() << "x" << m.cols();
  return os.str();
}

[[noreturn]] void shape_error(const char* op, const Matrix& a,
                              const Matrix& b) {
  throw std::invalid_argument(std::string(op) + ": incompatible shapes " +
                              shape(a) + " and " + shape(b));
}

enum class Broadcast { kSame, kRow, kScalar };

Broadcast broadcast_kind(const char* op, const Matrix& a, const Matrix& b) {
  if (a.rows() == b.rows() && a.cols() == b.cols()) return Broadcast::kSame;
  if (b.rows() == 1 && b.cols() == a.cols()) return Broadcast::kRow;
  if (b.size() == 1) return Broadcast::kScalar;
  shape_error(op, a, b);
}

// Reduces a gradient of a's shape down to b's broadcast shape.
Matrix reduce_to(const Matrix& g, Broadcast kind) {
  switch (kind) {
    case Broadcast::kSame:
      return g;
    case Broadcast::kRow:
      return g.colwise().sum();
    case Broadcast::kScalar:
      return Matrix::Constant(1, 1, g.sum());
  }
  return g;
}

Matrix expand(const Matrix& b, Broadcast kind, Index rows, Index cols) {
  switch (kind) {
    case Broadcast::kSame:
      return b;
    case Broadcast::kRow:
      return b.replicate(rows, 1);
    case Broadcast::kScalar:
      return Matrix::Constant(rows, cols, b(0, 0));
  }
  return b;
}

template <typename Fwd, typename Deriv>
Var unary(const Var& a, Fwd fwd, Deriv deriv) {
  const bool ng = any_needs_grad({&a});
  Node* out = make(a.value().unaryExpr(fwd), ng);
  if (ng) {
    Node* pa = a.node();
    out->backward = [pa, deriv](Node& n) {
      accumulate(pa, n.grad.cwiseProduct(
                         pa->value.binaryExpr(n.value, deriv)));
    };
  }
  return Var(out);
}

}  // namespace

Tape& Tape::current() {
  thread_local Tape tape;
  return tape;
}

Tape::Tape() : generation_(++g_generation) {}

void Tape::clear() {
  nodes_.clear();
  generation_ = ++g_generation;
}

Node* Tape::push(Matrix value, bool needs_grad) {
  Node& n = nodes_.emplace_back();
  n.value = std::move(value);
  n.needs_grad = needs_grad;
  return &n;
}

void Node::flush_outer() {
  if (outer_left.empty()) return;
  const Index k = static_cast<Index>(outer_left.size());
  Matrix l(k, outer_left[0].size());
  Matrix r(k, outer_right[0].size());
  for (Index i = 0; i < k; ++i) {
    l.row(i) = outer_left[static_cast<std::size_t>(i)];
    r.row(i) = outer_right[static_cast<std::size_t>(i)];
  }
  if (grad.size() == 0) {
    grad.noalias() = l.transpose() * r;
  } else {
    grad.noalias() += l.transpose() * r;
  }
  outer_left.clear();
  outer_right.clear();
}

void Tape::backward(Node* root) {
  // Locate root; it is almost always the most recent node.
  std::size_t idx = nodes_.size();
  while (idx > 0) {
    --idx;
    if (&nodes_[idx] == root) break;
  }
  if (&nodes_[idx] != root) {
    throw std::logic_error("backward: root is not on the current tape");
  }
  for (std::size_t i = idx + 1; i-- > 0;) {
    Node& n = nodes_[i];
    n.flush_outer();
    if (n.grad.size() == 0 || !n.backward) continue;
    n.backward(n);
  }
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) {
  g_grad_enabled = false;
}
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

Var constant(Matrix value) { return Var(make(std::move(value), false)); }

Var constant_scalar(double value) {
  return constant(Matrix::Constant(1, 1, value));
}

Var param(Parameter& p) {
  const bool ng = g_grad_enabled && !p.frozen;
  Tape& tape = Tape::current();
  if (p.leaf != nullptr && p.leaf_generation == tape.generation() &&
      p.leaf_needs_grad == ng) {
    return Var(p.leaf);
  }
  Node* out = make(p.value, ng);
  p.leaf = out;
  p.leaf_generation = tape.generation();
  p.leaf_needs_grad = ng;
  out->param = &p;
  if (ng) {
    out->backward = [](Node& n) {
      Parameter& target = *n.param;
      if (target.grad.size() == 0) {
        target.grad = n.grad;
      } else {
        target.grad += n.grad;
      }
    };
  }
  return Var(out);
}

void backward(const Var& root) {
  if (root.rows() != 1 || root.cols() != 1) {
    throw std::invalid_argument("backward: root must be a 1x1 scalar");
  }
  if (!root.needs_grad()) return;
  root.node()->grad = Matrix::Ones(1, 1);
  Tape::current().backward(root.node());
}

Var add(const Var& a, const Var& b) {
  const Broadcast kind = broadcast_kind("add", a.value(), b.value());
  const bool ng = any_needs_grad({&a, &b});
  Matrix v = a.value() + expand(b.value(), kind, a.rows(), a.cols());
  Node* out = make(std::move(v), ng);
  if (ng) {
    Node* pa = a.node();
    Node* pb = b.node();
    out->backward = [pa, pb, kind](Node& n) {
      accumulate(pa, n.grad);
      if (pb->needs_grad) accumulate(pb, reduce_to(n.grad, kind));
    };
  }
  return Var(out);
}

Var sub(const Var& a, const Var& b) {
  const Broadcast kind = broadcast_kind("sub", a.value(), b.value());
  const bool ng = any_needs_grad({&a, &b});
  Matrix v = a.value() - expand(b.value(), kind, a.rows(), a.cols());
  Node* out = make(std::move(v), ng);
  if (ng) {
    Node* pa = a.node();
    Node* pb = b.node();
    out->backward = [pa, pb, kind](Node& n) {
      accumulate(pa, n.grad);
      if (pb->needs_grad) accumulate(pb, -reduce_to(n.grad, kind));
    };
  }
  return Var(out);
}

Var mul(const Var& a, const Var& b) {
  const Broadcast kind = broadcast_kind("mul", a.value(), b.value());
  const bool ng = any_needs_grad({&a, &b});
  Matrix bx = expand(b.value(), kind, a.rows(), a.cols());
  Matrix v = a.value().cwiseProduct(bx);
  Node* out = make(std::move(v), ng);
  if (ng) {
    Node* pa = a.node();
    Node* pb = b.node();
    out->backward = [pa, pb, kind, bx = std::move(bx)](Node& n) {
      if (pa->needs_grad) accumulate(pa, n.grad.cwiseProduct(bx));
      if (pb->needs_grad) {
        accumulate(pb, reduce_to(n.grad.cwiseProduct(pa->value), kind));
      }
    };
  }
  return Var(out);
}

Var matmul(const Var& a, const Var& b) {
  if (a.cols() != b.rows()) shape_error("matmul", a.value(), b.value());
  const bool ng = any_needs_grad({&a, &b});
  Node* out = make(a.value() * b.value(), ng);
  if (ng) {
    Node* pa = a.node();
    Node* pb = b.node();
    out->backward = [pa, pb](Node& n) {
      if (pa->needs_grad) accumulate(pa, n.grad * pb->value.transpose());
      if (!pb->needs_grad) return;
      if (pa->value.rows() == 1) {
        accumulate_outer(pb, pa->value.row(0), n.grad.row(0));
      } else {
        accumulate(pb, pa->value.transpose() * n.grad);
      }
    };
  }
  return Var(out);
}

Var scale(const Var& a, double s) {
  const bool ng = any_needs_grad({&a});
  Node* out = make(a.value() * s, ng);
  if (ng) {
    Node* pa = a.node();
    out->backward = [pa, s](Node& n) { accumulate(pa, n.grad * s); };
  }
  return Var(out);
}

Var add_scalar(const Var& a, double s) {
  const bool ng = any_needs_grad({&a});
  Node* out = make(a.value().array() + s, ng);
  if (ng) {
    Node* pa = a.node();
    out->backward = [pa](Node& n) { accumulate(pa, n.grad); };
  }
  return Var(out);
}

Var neg(const Var& a) { return scale(a, -1.0); }

Var sigmoid(const Var& a) {
  return unary(
      a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
      [](double, double y) { return y * (1.0 - y); });
}

Var tanh(const Var& a) {
  return unary(
      a, [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

Var relu(const Var& a) {
  return unary(
      a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var clamp(const Var& a, double lo, double hi) {
  return unary(
      a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
      [lo, hi](double x, double) { return x >= lo && x <= hi ? 1.0 : 0.0; });
}

Var exp(const Var& a) {
  return unary(
      a, [](double x) { return std::exp(x); },
      [](double, double y) { return y; });
}

Var log(const Var& a) {
  return unary(
      a, [](double x) { return std::log(x); },
      [](double x, double) { return 1.0 / x; });
}

Var square(const Var& a) {
  return unary(
      a, [](double x) { return x * x; },
      [](double x, double) { return 2.0 * x; });
}

Var softplus(const Var& a) {
  return unary(
      a,
      [](double x) {
        return x > 30.0 ? x : std::log1p(std::exp(x));
      },
      [](double x, double) { return 1.0 / (1.0 + std::exp(-x)); });
}

Var sum(const Var& a) {
  const bool ng = any_needs_grad({&a});
  Node* out = make(Matrix::Constant(1, 1, a.value().sum()), ng);
  if (ng) {
    Node* pa = a.node();
    out->backward = [pa](Node& n) {
      accumulate(pa, Matrix::Constant(pa->value.rows(), pa->value.cols(),
                                      n.grad(0, 0)));
    };
  }
  return Var(out);
}

Var mean(const Var& a) {
  return scale(sum(a), 1.0 / static_cast<double>(a.value().size()));
}

Var sum_rows(const Var& a) {
  const bool ng = any_needs_grad({&a});
  Node* out = make(a.value().colwise().sum(), ng);
  if (ng) {
    Node* pa = a.node();
    out->backward = [pa](Node& n) {
      accumulate(pa, n.grad.replicate(pa->value.rows(), 1));
    };
  }
  return Var(out);
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
  const Index rows = parts.front().rows();
  Index cols = 0;
  bool ng = false;
  for (const Var& p : parts) {
    if (p.rows() != rows) shape_error("concat_cols", parts[0].value(), p.value());
    cols += p.cols();
    ng = ng || p.needs_grad();
  }
  ng = ng && g_grad_enabled;
  Matrix v(rows, cols);
  Index at = 0;
  for (const Var& p : parts) {
    v.middleCols(at, p.cols()) = p.value();
    at += p.cols();
  }
  Node* out = make(std::move(v), ng);
  if (ng) {
    std::vector<Node*> nodes;
    nodes.reserve(parts.size());
    for (const Var& p : parts) nodes.push_back(p.node());
    out->backward = [nodes = std::move(nodes)](Node& n) {
      Index at = 0;
      for (Node* p : nodes) {
        const Index c = p->value.cols();
        if (p->needs_grad) accumulate(p, n.grad.middleCols(at, c));
        at += c;
      }
    };
  }
  return Var(out);
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no inputs");
  const Index cols = parts.front().cols();
  Index rows = 0;
  bool ng = false;
  for (const Var& p : parts) {
    if (p.cols() != cols) shape_error("concat_rows", parts[0].value(), p.value());
    rows += p.rows();
    ng = ng || p.needs_grad();
  }
  ng = ng && g_grad_enabled;
  Matrix v(rows, cols);
  Index at = 0;
  for (const Var& p : parts) {
    v.middleRows(at, p.rows()) = p.value();
    at += p.rows();
  }
  Node* out = make(std::move(v), ng);
  if (ng) {
    std::vector<Node*> nodes;
    nodes.reserve(parts.size());
    for (const Var& p : parts) nodes.push_back(p.node());
    out->backward = [nodes = std::move(nodes)](Node& n) {
      Index at = 0;
      for (Node* p : nodes) {
        const Index r = p->value.rows();
        if (p->needs_grad) accumulate(p, n.grad.middleRows(at, r));
        at += r;
      }
    };
  }
  return Var(out);
}

Var slice_cols(const Var& a, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) {
    throw std::out_of_range("slice_cols: range outside matrix");
  }
  const bool ng = any_needs_grad({&a});
  Node* out = make(a.value().middleCols(start, count), ng);
  if (ng) {
    Node* pa = a.node();
    out->backward = [pa, start, count](Node& n) {
      if (pa->grad.size() == 0) pa->grad.setZero(pa->value.rows(), pa->value.cols());
      pa->grad.middleCols(start, count) += n.grad;
    };
  }
  return Var(out);
}

Var slice_rows(const Var& a, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > a.rows()) {
    throw std::out_of_range("slice_rows: range outside matrix");
  }
  const bool ng = any_needs_grad({&a});
  Node* out = make(a.value().middleRows(start, count), ng);
  if (ng) {
    Node* pa = a.node();
    out->backward = [pa, start, count](Node& n) {
      if (pa->grad.size() == 0) pa->grad.setZero(pa->value.rows(), pa->value.cols());
      pa->grad.middleRows(start, count) += n.grad;
    };
  }
  return Var(out);
}

Var row(const Var& a, Index r) { return slice_rows(a, r, 1); }

Var transpose(const Var& a) {
  const bool ng = any_needs_grad({&a});
  Node* out = make(a.value().transpose(), ng);
  if (ng) {
    Node* pa = a.node();
    out->backward = [pa](Node& n) { accumulate(pa, n.grad.transpose()); };
  }
  return Var(out);
}

Var gather_rows(const Var& a, const std::vector<int>& index) {
  Matrix v(static_cast<Index>(index.size()), a.cols());
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] < 0 || index[i] >= a.rows()) {
      throw std::out_of_range("gather_rows: index out of range");
    }
    v.row(static_cast<Index>(i)) = a.value().row(index[i]);
  }
  const bool ng = any_needs_grad({&a});
  Node* out = make(std::move(v), ng);
  if (ng) {
    Node* pa = a.node();
    out->backward = [pa, index](Node& n) {
      if (pa->grad.size() == 0) pa->grad.setZero(pa->value.rows(), pa->value.cols());
      for (std::size_t i = 0; i < index.size(); ++i) {
        pa->grad.row(index[i]) += n.grad.row(static_cast<Index>(i));
      }
    };
  }
  return Var(out);
}

Var softmax_rows(const Var& a) {
  Matrix v = a.value();
  for (Index r = 0; r < v.rows(); ++r) {
    const double m = v.row(r).maxCoeff();
    v.row(r) = (v.row(r).array() - m).exp();
    v.row(r) /= v.row(r).sum();
  }
  const bool ng = any_needs_grad({&a});
  Node* out = make(std::move(v), ng);
  if (ng) {
    Node* pa = a.node();
    out->backward = [pa](Node& n) {
      const Matrix& y = n.value;
      Matrix g(y.rows(), y.cols());
      for (Index r = 0; r < y.rows(); ++r) {
        const double dot = n.grad.row(r).dot(y.row(r));
        g.row(r) = y.row(r).array() * (n.grad.row(r).array() - dot);
      }
      accumulate(pa, g);
    };
  }
  return Var(out);
}

Var layer_norm_rows(const Var& a, double eps) {
  const Matrix& x = a.value();
  const Index c = x.cols();
  Matrix xhat(x.rows(), c);
  Eigen::VectorXd inv_std(x.rows());
  for (Index r = 0; r < x.rows(); ++r) {
    const double mu = x.row(r).mean();
    const double var = (x.row(r).array() - mu).square().mean();
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (x.row(r).array() - mu) * inv_std(r);
  }
  const bool ng = any_needs_grad({&a});
  Node* out = make(xhat, ng);
  if (ng) {
    Node* pa = a.node();
    out->backward = [pa, inv_std, c](Node& n) {
      const Matrix& y = n.value;
      Matrix g(y.rows(), c);
      for (Index r = 0; r < y.rows(); ++r) {
        const auto gr = n.grad.row(r).array();
        const double mg = gr.mean();
        const double mgy = (gr * y.row(r).array()).mean();
        g.row(r) = inv_std(r) * (gr - mg - y.row(r).array() * mgy);
      }
      accumulate(pa, g);
    };
  }
  return Var(out);
}

Var im2col(const Var& x, int kernel, int dilation) {
  if (kernel < 1 || dilation < 1) {
    throw std::invalid_argument("im2col: kernel and dilation must be >= 1");
  }
  const Index t_len = x.rows();
  const Index ch = x.cols();
  const Index pad = static_cast<Index>(dilation) * (kernel - 1) / 2;
  Matrix v = Matrix::Zero(t_len, kernel * ch);
  for (Index t = 0; t < t_len; ++t) {
    for (int k = 0; k < kernel; ++k) {
      const Index src = t - pad + static_cast<Index>(k) * dilation;
      if (src < 0 || src >= t_len) continue;
      v.block(t, k * ch, 1, ch) = x.value().row(src);
    }
  }
  const bool ng = any_needs_grad({&x});
  Node* out = make(std::move(v), ng);
  if (ng) {
    Node* px = x.node();
    out->backward = [px, kernel, dilation, pad, t_len, ch](Node& n) {
      Matrix g = Matrix::Zero(t_len, ch);
      for (Index t = 0; t < t_len; ++t) {
        for (int k = 0; k < kernel; ++k) {
          const Index src = t - pad + static_cast<Index>(k) * dilation;
          if (src < 0 || src >= t_len) continue;
          g.row(src) += n.grad.block(t, k * ch, 1, ch);
        }
      }
      accumulate(px, g);
    };
  }
  return Var(out);
}

Var dropout(const Var& a, double p, std::mt19937_64& rng) {
  if (p <= 0.0) return a;
  if (p >= 1.0) return constant(Matrix::Zero(a.rows(), a.cols()));
  std::bernoulli_distribution keep(1.0 - p);
  Matrix mask(a.rows(), a.cols());
  const double s = 1.0 / (1.0 - p);
  for (Index j = 0; j < mask.cols(); ++j) {
    for (Index i = 0; i < mask.rows(); ++i) mask(i, j) = keep(rng) ? s : 0.0;
  }
  return mul(a, constant(std::move(mask)));
}

Var stop_gradient(const Var& a) { return constant(a.value()); }

Var group_mix(const Var& x, const Var& w, const std::vector<int>& perm) {
  const Index g = w.rows();
  if (w.cols() != g || g == 0 || static_cast<Index>(perm.size()) != x.cols() ||
      x.cols() % g != 0) {
    throw std::invalid_argument("group_mix: shape mismatch");
  }
  const Index t_len = x.rows();
  const Index groups = x.cols() / g;
  // Stack groups vertically: (groups * T) x g.
  Matrix stacked(groups * t_len, g);
  for (Index j = 0; j < groups; ++j) {
    for (Index k = 0; k < g; ++k) {
      stacked.block(j * t_len, k, t_len, 1) = x.value().col(perm[j * g + k]);
    }
  }
  const Matrix mixed = stacked * w.value();
  Matrix v(t_len, x.cols());
  for (Index j = 0; j < groups; ++j) {
    for (Index k = 0; k < g; ++k) {
      v.col(perm[j * g + k]) = mixed.block(j * t_len, k, t_len, 1);
    }
  }
  const bool ng = any_needs_grad({&x, &w});
  Node* out = make(std::move(v), ng);
  if (ng) {
    Node* px = x.node();
    Node* pw = w.node();
    out->backward = [px, pw, perm, g, groups, t_len,
                     stacked = std::move(stacked)](Node& n) {
      Matrix gs(groups * t_len, g);
      for (Index j = 0; j < groups; ++j) {
        for (Index k = 0; k < g; ++k) {
          gs.block(j * t_len, k, t_len, 1) = n.grad.col(perm[j * g + k]);
        }
      }
      if (pw->needs_grad) accumulate(pw, stacked.transpose() * gs);
      if (!px->needs_grad) return;
      const Matrix gx = gs * pw->value.transpose();
      Matrix out_g(t_len, groups * g);
      for (Index j = 0; j < groups; ++j) {
        for (Index k = 0; k < g; ++k) {
          out_g.col(perm[j * g + k]) = gx.block(j * t_len, k, t_len, 1);
        }
      }
      accumulate(px, out_g);
    };
  }
  return Var(out);
}

Var logabsdet(const Var& w) {
  if (w.rows() != w.cols()) throw std::invalid_argument("logabsdet: not square");
  Eigen::PartialPivLU<Matrix> lu(w.value());
  const double ld = lu.matrixLU().diagonal().array().abs().log().sum();
  const bool ng = any_needs_grad({&w});
  Node* out = make(Matrix::Constant(1, 1, ld), ng);
  if (ng) {
    Node* pw = w.node();
    out->backward = [pw, lu](Node& n) {
      accumulate(pw, lu.inverse().transpose() * n.grad(0, 0));
    };
  }
  return Var(out);
}

Var lstm_cell(const Var& x, const Var& h, const Var& c, const Var& w,
              const Var& b) {
  const Index in = x.cols();
  const Index hid = h.cols();
  if (w.rows() != in + hid || w.cols() != 4 * hid || b.cols() != 4 * hid ||
      c.cols() != hid || x.rows() != 1 || h.rows() != 1) {
    throw std::invalid_argument("lstm_cell: shape mismatch");
  }
  Eigen::RowVectorXd gates = x.value() * w.value().topRows(in) +
                             h.value() * w.value().bottomRows(hid) + b.value();
  Eigen::RowVectorXd i = gates.segment(0, hid);
  Eigen::RowVectorXd f = gates.segment(hid, hid);
  Eigen::RowVectorXd g = gates.segment(2 * hid, hid);
  Eigen::RowVectorXd o = gates.segment(3 * hid, hid);
  auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  i = i.unaryExpr(sig);
  f = f.unaryExpr(sig);
  o = o.unaryExpr(sig);
  g = g.array().tanh();
  Eigen::RowVectorXd c_new =
      f.cwiseProduct(c.value()) + i.cwiseProduct(g);
  Eigen::RowVectorXd tc = c_new.array().tanh();
  Eigen::RowVectorXd h_new = o.cwiseProduct(tc);
  Matrix v(1, 2 * hid);
  v << h_new, c_new;
  const bool ng = any_needs_grad({&x, &h, &c, &w, &b});
  Node* out = make(std::move(v), ng);
  if (ng) {
    Node* px = x.node();
    Node* ph = h.node();
    Node* pc = c.node();
    Node* pw = w.node();
    Node* pb = b.node();
    out->backward = [=](Node& n) {
      const Eigen::RowVectorXd dh = n.grad.block(0, 0, 1, hid);
      Eigen::RowVectorXd dc = n.grad.block(0, hid, 1, hid);
      dc += dh.cwiseProduct(o).cwiseProduct(
          (1.0 - tc.array().square()).matrix());
      Eigen::RowVectorXd dgates(4 * hid);
      dgates.segment(0, hid) =
          dc.cwiseProduct(g).cwiseProduct(i.cwiseProduct((1.0 - i.array()).matrix()));
      dgates.segment(hid, hid) = dc.cwiseProduct(pc->value).cwiseProduct(
          f.cwiseProduct((1.0 - f.array()).matrix()));
      dgates.segment(2 * hid, hid) =
          dc.cwiseProduct(i).cwiseProduct((1.0 - g.array().square()).matrix());
      dgates.segment(3 * hid, hid) = dh.cwiseProduct(tc).cwiseProduct(
          o.cwiseProduct((1.0 - o.array()).matrix()));
      if (px->needs_grad) {
        accumulate(px, dgates * pw->value.topRows(in).transpose());
      }
      if (ph->needs_grad) {
        accumulate(ph, dgates * pw->value.bottomRows(hid).transpose());
      }
      if (pc->needs_grad) accumulate(pc, dc.cwiseProduct(f));
      if (pw->needs_grad) {
        Eigen::RowVectorXd xh(in + hid);
        xh << px->value.row(0), ph->value.row(0);
        accumulate_outer(pw, xh, dgates);
      }
      if (pb->needs_grad) accumulate(pb, dgates);
    };
  }
  return Var(out);
}

Var mse(const Var& a, const Var& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    shape_error("mse", a.value(), b.value());
  }
  Matrix diff = a.value() - b.value();
  const double n_el = static_cast<double>(diff.size());
  const bool ng = any_needs_grad({&a, &b});
  Node* out = make(Matrix::Constant(1, 1, diff.squaredNorm() / n_el), ng);
  if (ng) {
    Node* pa = a.node();
    Node* pb = b.node();
    out->backward = [pa, pb, diff = std::move(diff), n_el](Node& n) {
      const double s = 2.0 * n.grad(0, 0) / n_el;
      if (pa->needs_grad) accumulate(pa, diff * s);
      if (pb->needs_grad) accumulate(pb, diff * -s);
    };
  }
  return Var(out);
}

Var bce_with_logits(const Var& logits, const Matrix& targets) {
  if (logits.rows() != targets.rows() || logits.cols() != targets.cols()) {
    shape_error("bce_with_logits", logits.value(), targets);
  }
  const Matrix& x = logits.value();
  double total = 0.0;
  for (Index j = 0; j < x.cols(); ++j) {
    for (Index i = 0; i < x.rows(); ++i) {
      const double v = x(i, j);
      // max(v,0) - v*y + log(1 + exp(-|v|))
      total += std::max(v, 0.0) - v * targets(i, j) +
               std::log1p(std::exp(-std::abs(v)));
    }
  }
  const double n_el = static_cast<double>(x.size());
  const bool ng = any_needs_grad({&logits});
  Node* out = make(Matrix::Constant(1, 1, total / n_el), ng);
  if (ng) {
    Node* pl = logits.node();
    out->backward = [pl, targets, n_el](Node& n) {
      Matrix p = pl->value.unaryExpr(
          [](double v) { return 1.0 / (1.0 + std::exp(-v)); });
      accumulate(pl, (p - targets) * (n.grad(0, 0) / n_el));
    };
  }
  return Var(out);
}

}  // namespace isg::ad
