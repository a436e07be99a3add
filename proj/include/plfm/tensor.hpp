#pragma once

// Minimal dense-tensor reverse-mode autodiff. 64-bit floats, deterministic
// single-threaded loops, shapes checked eagerly. Graphs are built fresh on
// every forward pass over shared parameter leaves; backward() zeroes the
// reachable gradient buffers before accumulating, so leaves can be reused
// across passes without manual zero_grad bookkeeping.

#include <functional>
#include <memory>
#include <vector>

#include "plfm/common.hpp"

namespace plfm {

struct Tensor {
  std::vector<int> shape;
  std::vector<double> v;

  Tensor() = default;
  static Tensor zeros(std::vector<int> shape);

  size_t size() const { return v.size(); }
  int dim(int i) const { return shape[size_t(i)]; }
  int rows() const { return shape.at(0); }
  int cols() const { return shape.at(1); }
  static size_t count(const std::vector<int>& shape);
};

struct Node;
using Var = std::shared_ptr<Node>;

struct Node {
  Tensor val;
  Tensor grad;  // allocated by backward(); same shape as val
  bool needs_grad = false;
  std::vector<Var> parents;
  std::function<void(Node&)> back;  // accumulate node.grad into parents
};

Var constant(Tensor t);
Var leaf(Tensor t);  // parameter or input that wants a gradient

// Runs reverse-mode accumulation from a scalar loss. Gradients of every node
// reachable from `loss` are reset to zero first.
void backward(const Var& loss);

// Elementwise and broadcast arithmetic.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double c);
Var vexp(const Var& a);
Var gelu(const Var& a);

// x [m,n] combined with a vector [n] or [1,n] broadcast across rows.
Var add_rowvec(const Var& x, const Var& b);
Var mul_rowvec(const Var& x, const Var& c);

Var matmul(const Var& a, const Var& b);  // [m,k] x [k,n]

// Per-row standardization, no affine part.
Var layer_norm(const Var& x, double eps = 1e-5);

// Multi-head attention over a single sequence with an additive per-head
// logit bias: softmax(Q_h K_h^T / sqrt(d) + bias[:,:,h]) V_h, heads
// concatenated back to [L, C]. bias has shape [L, L, H].
Var attention_pair_bias(const Var& q, const Var& k, const Var& v, const Var& bias, int heads);

Var slice_cols(const Var& x, int lo, int hi);
Var slice_rows(const Var& x, int lo, int hi);
Var concat_cols(const Var& a, const Var& b);  // [m,na] | [m,nb] -> [m,na+nb]
Var reshape(const Var& x, std::vector<int> shape);
Var sum(const Var& x);  // scalar [1]

// Scalar losses (sums, not means; callers normalize).
Var cross_entropy_logits(const Var& logits, const std::vector<int>& labels);
Var masked_sse(const Var& pred, const Tensor& target, const Tensor& mask);
Var kl_diag_gaussian(const Var& mu, const Var& log_sigma);

}  // namespace plfm
