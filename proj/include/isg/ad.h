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

#ifndef ISG_AD_H_
#define ISG_AD_H_

// Reverse-mode automatic differentiation over dense double matrices.
//
// Every operation appends a node to a thread-local tape. Nodes are kept in
// creation order, which is a valid topological order, so backward() simply
// walks the tape in reverse. Call Tape::current().clear() between training
// steps; Vars created before a clear() are dangling afterwards.

#include <cstdint>
#include <deque>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace isg::ad {

using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

struct Node;

// A trainable tensor. Gradients accumulate into `grad` until zero_grad().
struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
  bool frozen = false;

  // Leaf cache for the current tape generation (see ad::param).
  Node* leaf = nullptr;
  std::uint64_t leaf_generation = 0;
  bool leaf_needs_grad = false;

  Index size() const { return value.size(); }
  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

struct Node {
  Matrix value;
  Matrix grad;
  std::function<void(Node&)> backward;
  Parameter* param = nullptr;
  bool needs_grad = false;
  // Queued rank-1 gradient terms left_k^T * right_k, summed with one GEMM
  // before this node's gradient is consumed.
  std::vector<Eigen::RowVectorXd> outer_left;
  std::vector<Eigen::RowVectorXd> outer_right;

  void flush_outer();
};

class Var {
 public:
  Var() = default;
  explicit Var(Node* node) : node_(node) {}

  const Matrix& value() const { return node_->value; }
  const Matrix& grad() const { return node_->grad; }
  Index rows() const { return node_->value.rows(); }
  Index cols() const { return node_->value.cols(); }
  double item() const { return node_->value(0, 0); }
  bool needs_grad() const { return node_->needs_grad; }
  bool defined() const { return node_ != nullptr; }
  Node* node() const { return node_; }

 private:
  Node* node_ = nullptr;
};

class Tape {
 public:
  static Tape& current();

  Node* push(Matrix value, bool needs_grad);
  Tape();
  void clear();
  std::size_t size() const { return nodes_.size(); }
  std::uint64_t generation() const { return generation_; }
  void backward(Node* root);

 private:
  std::deque<Node> nodes_;
  std::uint64_t generation_ = 0;
};

// Disables gradient recording for the lifetime of the guard.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

Var constant(Matrix value);
Var constant_scalar(double value);
// Leaf bound to a parameter; frozen parameters never receive gradient.
// Repeated calls on one tape generation return the same leaf.
Var param(Parameter& p);

// Seeds d(root)/d(root) = 1 and propagates to every reachable parameter.
void backward(const Var& root);

Var add(const Var& a, const Var& b);  // b may be same-shape, 1xC or 1x1
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var matmul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
Var neg(const Var& a);

Var sigmoid(const Var& a);
Var tanh(const Var& a);
Var relu(const Var& a);
Var exp(const Var& a);
Var clamp(const Var& a, double lo, double hi);  // zero gradient outside
Var log(const Var& a);
Var square(const Var& a);
Var softplus(const Var& a);

Var sum(const Var& a);
Var mean(const Var& a);
Var sum_rows(const Var& a);  // R x C -> 1 x C

Var concat_cols(const std::vector<Var>& parts);
Var concat_rows(const std::vector<Var>& parts);
Var slice_cols(const Var& a, Index start, Index count);
Var slice_rows(const Var& a, Index start, Index count);
Var row(const Var& a, Index r);
Var transpose(const Var& a);
Var gather_rows(const Var& a, const std::vector<int>& index);

Var softmax_rows(const Var& a);
Var layer_norm_rows(const Var& a, double eps = 1e-5);

// "Same"-padded 1-D convolution patches: T x C -> T x (kernel * C). Row t
// holds frames t - pad .. t - pad + (kernel-1)*dilation, zero outside.
Var im2col(const Var& x, int kernel, int dilation = 1);

Var dropout(const Var& a, double p, std::mt19937_64& rng);
Var stop_gradient(const Var& a);

// Grouped invertible channel mixing. `perm` lists the columns of x so that
// group j occupies perm[j*g .. j*g+g), g = w.rows(); every group of every row
// is multiplied by the same g x g matrix w.
Var group_mix(const Var& x, const Var& w, const std::vector<int>& perm);

// ln|det W| for square W.
Var logabsdet(const Var& w);

// Fused LSTM cell with gate order (input, forget, cell, output).
// x: 1 x I, h, c: 1 x H, w: (I + H) x 4H, b: 1 x 4H. Returns 1 x 2H = [h' | c'].
Var lstm_cell(const Var& x, const Var& h, const Var& c, const Var& w,
              const Var& b);

Var mse(const Var& a, const Var& b);
// Mean binary cross-entropy of sigmoid(logits) against 0/1 targets.
Var bce_with_logits(const Var& logits, const Matrix& targets);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }

}  // namespace isg::ad

#endif  // ISG_AD_H_
