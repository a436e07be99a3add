#include "plfm/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace plfm {

size_t Tensor::count(const std::vector<int>& shape) {
  size_t n = 1;
  for (int d : shape) n *= size_t(d);
  return n;
}

Tensor Tensor::zeros(std::vector<int> shape) {
  Tensor t;
  t.v.assign(count(shape), 0.0);
  t.shape = std::move(shape);
  return t;
}

namespace {

void check(bool ok, const char* what) {
  if (!ok) throw Error("ShapeMismatch", what);
}

Var make_node(Tensor val, std::vector<Var> parents, std::function<void(Node&)> back) {
  auto n = std::make_shared<Node>();
  n->val = std::move(val);
  for (const Var& p : parents)
    if (p->needs_grad) n->needs_grad = true;
  if (n->needs_grad) {
    n->parents = std::move(parents);
    n->back = std::move(back);
  }
  return n;
}

void ensure_grad(Node& n) {
  if (n.grad.v.size() != n.val.v.size()) {
    n.grad.shape = n.val.shape;
    n.grad.v.assign(n.val.v.size(), 0.0);
  } else {
    std::fill(n.grad.v.begin(), n.grad.v.end(), 0.0);
    n.grad.shape = n.val.shape;
  }
}

}  // namespace

Var constant(Tensor t) {
  auto n = std::make_shared<Node>();
  n->val = std::move(t);
  return n;
}

Var leaf(Tensor t) {
  auto n = std::make_shared<Node>();
  n->val = std::move(t);
  n->needs_grad = true;
  return n;
}

void backward(const Var& loss) {
  check(loss->val.size() == 1, "backward needs a scalar loss");

  // Iterative post-order DFS; visited set keyed by node address.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, size_t>> stack{{loss.get(), 0}};
  seen.insert(loss.get());
  while (!stack.empty()) {
    auto& [n, idx] = stack.back();
    if (idx < n->parents.size()) {
      Node* p = n->parents[idx++].get();
      if (p->needs_grad && !seen.count(p)) {
        seen.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  for (Node* n : order) ensure_grad(*n);
  loss->grad.v[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it)
    if ((*it)->back) (*it)->back(**it);
}

Var add(const Var& a, const Var& b) {
  check(a->val.shape == b->val.shape, "add: shapes differ");
  Tensor out = a->val;
  for (size_t i = 0; i < out.size(); ++i) out.v[i] += b->val.v[i];
  return make_node(std::move(out), {a, b}, [a, b](Node& n) {
    if (a->needs_grad)
      for (size_t i = 0; i < n.grad.size(); ++i) a->grad.v[i] += n.grad.v[i];
    if (b->needs_grad)
      for (size_t i = 0; i < n.grad.size(); ++i) b->grad.v[i] += n.grad.v[i];
  });
}

Var sub(const Var& a, const Var& b) {
  check(a->val.shape == b->val.shape, "sub: shapes differ");
  Tensor out = a->val;
  for (size_t i = 0; i < out.size(); ++i) out.v[i] -= b->val.v[i];
  return make_node(std::move(out), {a, b}, [a, b](Node& n) {
    if (a->needs_grad)
      for (size_t i = 0; i < n.grad.size(); ++i) a->grad.v[i] += n.grad.v[i];
    if (b->needs_grad)
      for (size_t i = 0; i < n.grad.size(); ++i) b->grad.v[i] -= n.grad.v[i];
  });
}

Var mul(const Var& a, const Var& b) {
  check(a->val.shape == b->val.shape, "mul: shapes differ");
  Tensor out = a->val;
  for (size_t i = 0; i < out.size(); ++i) out.v[i] *= b->val.v[i];
  return make_node(std::move(out), {a, b}, [a, b](Node& n) {
    if (a->needs_grad)
      for (size_t i = 0; i < n.grad.size(); ++i) a->grad.v[i] += n.grad.v[i] * b->val.v[i];
    if (b->needs_grad)
      for (size_t i = 0; i < n.grad.size(); ++i) b->grad.v[i] += n.grad.v[i] * a->val.v[i];
  });
}

Var scale(const Var& a, double s) {
  Tensor out = a->val;
  for (double& x : out.v) x *= s;
  return make_node(std::move(out), {a}, [a, s](Node& n) {
    if (a->needs_grad)
      for (size_t i = 0; i < n.grad.size(); ++i) a->grad.v[i] += s * n.grad.v[i];
  });
}

Var add_scalar(const Var& a, double c) {
  Tensor out = a->val;
  for (double& x : out.v) x += c;
  return make_node(std::move(out), {a}, [a](Node& n) {
    if (a->needs_grad)
      for (size_t i = 0; i < n.grad.size(); ++i) a->grad.v[i] += n.grad.v[i];
  });
}

Var vexp(const Var& a) {
  Tensor out = a->val;
  for (double& x : out.v) x = std::exp(x);
  return make_node(std::move(out), {a}, [a](Node& n) {
    if (a->needs_grad)
      for (size_t i = 0; i < n.grad.size(); ++i) a->grad.v[i] += n.grad.v[i] * n.val.v[i];
  });
}

namespace {
// gelu tanh approximation constants; smooth everywhere so finite differences
// agree with the analytic derivative
constexpr double gelu_c0 = 0.7978845608028654;  // sqrt(2/pi)
constexpr double gelu_c1 = 0.044715;
}  // namespace

Var gelu(const Var& a) {
  Tensor out = a->val;
  for (double& x : out.v) {
    double u = gelu_c0 * (x + gelu_c1 * x * x * x);
    x = 0.5 * x * (1.0 + std::tanh(u));
  }
  return make_node(std::move(out), {a}, [a](Node& n) {
    if (!a->needs_grad) return;
    for (size_t i = 0; i < n.grad.size(); ++i) {
      double x = a->val.v[i];
      double u = gelu_c0 * (x + gelu_c1 * x * x * x);
      double th = std::tanh(u);
      double sech2 = 1.0 - th * th;
      double d = 0.5 * (1.0 + th) + 0.5 * x * sech2 * gelu_c0 * (1.0 + 3.0 * gelu_c1 * x * x);
      a->grad.v[i] += n.grad.v[i] * d;
    }
  });
}

namespace {
int vec_len(const Var& b) {
  if (b->val.shape.size() == 1) return b->val.dim(0);
  if (b->val.shape.size() == 2 && b->val.dim(0) == 1) return b->val.dim(1);
  throw Error("ShapeMismatch", "expected a vector or [1,n] row");
}
}  // namespace

Var add_rowvec(const Var& x, const Var& b) {
  const int m = x->val.rows(), n = x->val.cols();
  check(vec_len(b) == n, "add_rowvec: width mismatch");
  Tensor out = x->val;
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out.v[size_t(i) * n + j] += b->val.v[j];
  return make_node(std::move(out), {x, b}, [x, b, m, n](Node& nd) {
    if (x->needs_grad)
      for (size_t i = 0; i < nd.grad.size(); ++i) x->grad.v[i] += nd.grad.v[i];
    if (b->needs_grad)
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) b->grad.v[j] += nd.grad.v[size_t(i) * n + j];
  });
}

Var mul_rowvec(const Var& x, const Var& c) {
  const int m = x->val.rows(), n = x->val.cols();
  check(vec_len(c) == n, "mul_rowvec: width mismatch");
  Tensor out = x->val;
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out.v[size_t(i) * n + j] *= c->val.v[j];
  return make_node(std::move(out), {x, c}, [x, c, m, n](Node& nd) {
    if (x->needs_grad)
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
          x->grad.v[size_t(i) * n + j] += nd.grad.v[size_t(i) * n + j] * c->val.v[j];
    if (c->needs_grad)
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
          c->grad.v[j] += nd.grad.v[size_t(i) * n + j] * x->val.v[size_t(i) * n + j];
  });
}

Var matmul(const Var& a, const Var& b) {
  check(a->val.shape.size() == 2 && b->val.shape.size() == 2, "matmul: rank 2 required");
  const int m = a->val.rows(), k = a->val.cols(), n = b->val.cols();
  check(b->val.rows() == k, "matmul: inner dims differ");
  Tensor out = Tensor::zeros({m, n});
  for (int i = 0; i < m; ++i)
    for (int kk = 0; kk < k; ++kk) {
      double av = a->val.v[size_t(i) * k + kk];
      if (av == 0.0) continue;
      const double* brow = &b->val.v[size_t(kk) * n];
      double* orow = &out.v[size_t(i) * n];
      for (int j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  return make_node(std::move(out), {a, b}, [a, b, m, k, n](Node& nd) {
    if (a->needs_grad)
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
          double g = nd.grad.v[size_t(i) * n + j];
          if (g == 0.0) continue;
          const double* brow = &b->val.v[0] + j;
          for (int kk = 0; kk < k; ++kk)
            a->grad.v[size_t(i) * k + kk] += g * brow[size_t(kk) * n];
        }
    if (b->needs_grad)
      for (int kk = 0; kk < k; ++kk)
        for (int i = 0; i < m; ++i) {
          double av = a->val.v[size_t(i) * k + kk];
          if (av == 0.0) continue;
          const double* grow = &nd.grad.v[size_t(i) * n];
          double* brow = &b->grad.v[size_t(kk) * n];
          for (int j = 0; j < n; ++j) brow[j] += av * grow[j];
        }
  });
}

Var layer_norm(const Var& x, double eps) {
  const int m = x->val.rows(), n = x->val.cols();
  Tensor out = Tensor::zeros({m, n});
  std::vector<double> inv_std(m);
  for (int i = 0; i < m; ++i) {
    const double* row = &x->val.v[size_t(i) * n];
    double mu = 0;
    for (int j = 0; j < n; ++j) mu += row[j];
    mu /= n;
    double var = 0;
    for (int j = 0; j < n; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= n;
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (int j = 0; j < n; ++j) out.v[size_t(i) * n + j] = (row[j] - mu) * inv_std[i];
  }
  Tensor saved_y = out;
  return make_node(std::move(out), {x},
                   [x, m, n, inv_std = std::move(inv_std), y = std::move(saved_y)](Node& nd) {
                     if (!x->needs_grad) return;
                     for (int i = 0; i < m; ++i) {
                       const double* g = &nd.grad.v[size_t(i) * n];
                       const double* yr = &y.v[size_t(i) * n];
                       double gmean = 0, gymean = 0;
                       for (int j = 0; j < n; ++j) {
                         gmean += g[j];
                         gymean += g[j] * yr[j];
                       }
                       gmean /= n;
                       gymean /= n;
                       for (int j = 0; j < n; ++j)
                         x->grad.v[size_t(i) * n + j] +=
                             inv_std[i] * (g[j] - gmean - yr[j] * gymean);
                     }
                   });
}

Var attention_pair_bias(const Var& q, const Var& k, const Var& v, const Var& bias, int heads) {
  const int L = q->val.rows(), C = q->val.cols();
  check(k->val.shape == q->val.shape && v->val.shape == q->val.shape, "attention: q/k/v shapes");
  check(C % heads == 0, "attention: heads must divide channels");
  check(bias->val.shape == std::vector<int>({L, L, heads}), "attention: bias shape");
  const int d = C / heads;
  const double inv_sqrt_d = 1.0 / std::sqrt(double(d));

  // A holds the post-softmax weights for every head, saved for backward.
  Tensor A = Tensor::zeros({heads, L, L});
  Tensor out = Tensor::zeros({L, C});
  std::vector<double> logits(static_cast<size_t>(L));
  for (int h = 0; h < heads; ++h) {
    for (int i = 0; i < L; ++i) {
      double mx = -1e300;
      for (int j = 0; j < L; ++j) {
        double s = 0;
        const double* qi = &q->val.v[size_t(i) * C + size_t(h) * d];
        const double* kj = &k->val.v[size_t(j) * C + size_t(h) * d];
        for (int dd = 0; dd < d; ++dd) s += qi[dd] * kj[dd];
        s = s * inv_sqrt_d + bias->val.v[(size_t(i) * L + j) * heads + h];
        logits[size_t(j)] = s;
        mx = std::max(mx, s);
      }
      double z = 0;
      for (int j = 0; j < L; ++j) {
        double e = std::exp(logits[size_t(j)] - mx);
        A.v[(size_t(h) * L + i) * L + j] = e;
        z += e;
      }
      double* arow = &A.v[(size_t(h) * L + i) * L];
      for (int j = 0; j < L; ++j) arow[j] /= z;
      double* orow = &out.v[size_t(i) * C + size_t(h) * d];
      for (int j = 0; j < L; ++j) {
        double a = arow[j];
        if (a == 0.0) continue;
        const double* vj = &v->val.v[size_t(j) * C + size_t(h) * d];
        for (int dd = 0; dd < d; ++dd) orow[dd] += a * vj[dd];
      }
    }
  }

  return make_node(
      std::move(out), {q, k, v, bias},
      [q, k, v, bias, heads, L, C, d, inv_sqrt_d, A = std::move(A)](Node& nd) {
        std::vector<double> gA(static_cast<size_t>(L)), gS(static_cast<size_t>(L));
        for (int h = 0; h < heads; ++h) {
          for (int i = 0; i < L; ++i) {
            const double* grow = &nd.grad.v[size_t(i) * C + size_t(h) * d];
            const double* arow = &A.v[(size_t(h) * L + i) * L];
            // dL/dA and the softmax Jacobian contraction
            double dotg = 0;
            for (int j = 0; j < L; ++j) {
              double s = 0;
              const double* vj = &v->val.v[size_t(j) * C + size_t(h) * d];
              for (int dd = 0; dd < d; ++dd) s += grow[dd] * vj[dd];
              gA[size_t(j)] = s;
              dotg += s * arow[j];
            }
            for (int j = 0; j < L; ++j) gS[size_t(j)] = arow[j] * (gA[size_t(j)] - dotg);

            for (int j = 0; j < L; ++j) {
              double gs = gS[size_t(j)];
              if (bias->needs_grad) bias->grad.v[(size_t(i) * L + j) * heads + h] += gs;
              if (gs == 0.0 && arow[j] == 0.0) continue;
              const double* qi = &q->val.v[size_t(i) * C + size_t(h) * d];
              const double* kj = &k->val.v[size_t(j) * C + size_t(h) * d];
              if (q->needs_grad) {
                double* gq = &q->grad.v[size_t(i) * C + size_t(h) * d];
                for (int dd = 0; dd < d; ++dd) gq[dd] += gs * inv_sqrt_d * kj[dd];
              }
              if (k->needs_grad) {
                double* gk = &k->grad.v[size_t(j) * C + size_t(h) * d];
                for (int dd = 0; dd < d; ++dd) gk[dd] += gs * inv_sqrt_d * qi[dd];
              }
              if (v->needs_grad) {
                double* gv = &v->grad.v[size_t(j) * C + size_t(h) * d];
                for (int dd = 0; dd < d; ++dd) gv[dd] += arow[j] * grow[dd];
              }
            }
          }
        }
      });
}

Var slice_cols(const Var& x, int lo, int hi) {
  const int m = x->val.rows(), n = x->val.cols();
  check(0 <= lo && lo < hi && hi <= n, "slice_cols: bad range");
  const int w = hi - lo;
  Tensor out = Tensor::zeros({m, w});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < w; ++j) out.v[size_t(i) * w + j] = x->val.v[size_t(i) * n + lo + j];
  return make_node(std::move(out), {x}, [x, m, n, lo, w](Node& nd) {
    if (!x->needs_grad) return;
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < w; ++j)
        x->grad.v[size_t(i) * n + lo + j] += nd.grad.v[size_t(i) * w + j];
  });
}

Var slice_rows(const Var& x, int lo, int hi) {
  const int m = x->val.rows(), n = x->val.cols();
  check(0 <= lo && lo < hi && hi <= m, "slice_rows: bad range");
  const int h = hi - lo;
  Tensor out = Tensor::zeros({h, n});
  std::copy(x->val.v.begin() + size_t(lo) * n, x->val.v.begin() + size_t(hi) * n,
            out.v.begin());
  return make_node(std::move(out), {x}, [x, n, lo, h](Node& nd) {
    if (!x->needs_grad) return;
    for (size_t i = 0; i < size_t(h) * n; ++i) x->grad.v[size_t(lo) * n + i] += nd.grad.v[i];
  });
}

Var concat_cols(const Var& a, const Var& b) {
  const int m = a->val.rows(), na = a->val.cols(), nb = b->val.cols();
  check(b->val.rows() == m, "concat_cols: row count differs");
  const int n = na + nb;
  Tensor out = Tensor::zeros({m, n});
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < na; ++j) out.v[size_t(i) * n + j] = a->val.v[size_t(i) * na + j];
    for (int j = 0; j < nb; ++j) out.v[size_t(i) * n + na + j] = b->val.v[size_t(i) * nb + j];
  }
  return make_node(std::move(out), {a, b}, [a, b, m, na, nb, n](Node& nd) {
    if (a->needs_grad)
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < na; ++j)
          a->grad.v[size_t(i) * na + j] += nd.grad.v[size_t(i) * n + j];
    if (b->needs_grad)
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < nb; ++j)
          b->grad.v[size_t(i) * nb + j] += nd.grad.v[size_t(i) * n + na + j];
  });
}

Var reshape(const Var& x, std::vector<int> shape) {
  check(Tensor::count(shape) == x->val.size(), "reshape: element count differs");
  Tensor out;
  out.shape = std::move(shape);
  out.v = x->val.v;
  return make_node(std::move(out), {x}, [x](Node& nd) {
    if (!x->needs_grad) return;
    for (size_t i = 0; i < nd.grad.size(); ++i) x->grad.v[i] += nd.grad.v[i];
  });
}

Var sum(const Var& x) {
  Tensor out = Tensor::zeros({1});
  for (double v : x->val.v) out.v[0] += v;
  return make_node(std::move(out), {x}, [x](Node& nd) {
    if (!x->needs_grad) return;
    for (size_t i = 0; i < x->grad.size(); ++i) x->grad.v[i] += nd.grad.v[0];
  });
}

Var cross_entropy_logits(const Var& logits, const std::vector<int>& labels) {
  const int m = logits->val.rows(), K = logits->val.cols();
  check(int(labels.size()) == m, "cross_entropy: label count");
  Tensor probs = Tensor::zeros({m, K});
  double total = 0;
  for (int i = 0; i < m; ++i) {
    const double* row = &logits->val.v[size_t(i) * K];
    double mx = row[0];
    for (int j = 1; j < K; ++j) mx = std::max(mx, row[j]);
    double z = 0;
    for (int j = 0; j < K; ++j) z += std::exp(row[j] - mx);
    total += mx + std::log(z) - row[labels[size_t(i)]];
    for (int j = 0; j < K; ++j) probs.v[size_t(i) * K + j] = std::exp(row[j] - mx) / z;
  }
  Tensor out = Tensor::zeros({1});
  out.v[0] = total;
  return make_node(std::move(out), {logits},
                   [logits, labels, m, K, probs = std::move(probs)](Node& nd) {
                     if (!logits->needs_grad) return;
                     double g = nd.grad.v[0];
                     for (int i = 0; i < m; ++i) {
                       for (int j = 0; j < K; ++j)
                         logits->grad.v[size_t(i) * K + j] += g * probs.v[size_t(i) * K + j];
                       logits->grad.v[size_t(i) * K + labels[size_t(i)]] -= g;
                     }
                   });
}

Var masked_sse(const Var& pred, const Tensor& target, const Tensor& mask) {
  check(pred->val.shape == target.shape && pred->val.shape == mask.shape,
        "masked_sse: shapes differ");
  Tensor out = Tensor::zeros({1});
  for (size_t i = 0; i < pred->val.size(); ++i) {
    double d = pred->val.v[i] - target.v[i];
    out.v[0] += mask.v[i] * d * d;
  }
  return make_node(std::move(out), {pred}, [pred, target, mask](Node& nd) {
    if (!pred->needs_grad) return;
    double g = nd.grad.v[0];
    for (size_t i = 0; i < pred->val.size(); ++i)
      pred->grad.v[i] += g * 2.0 * mask.v[i] * (pred->val.v[i] - target.v[i]);
  });
}

Var kl_diag_gaussian(const Var& mu, const Var& log_sigma) {
  check(mu->val.shape == log_sigma->val.shape, "kl: shapes differ");
  Tensor out = Tensor::zeros({1});
  for (size_t i = 0; i < mu->val.size(); ++i) {
    double m = mu->val.v[i], s = log_sigma->val.v[i];
    out.v[0] += 0.5 * (m * m + std::exp(2.0 * s) - 1.0) - s;
  }
  return make_node(std::move(out), {mu, log_sigma}, [mu, log_sigma](Node& nd) {
    double g = nd.grad.v[0];
    for (size_t i = 0; i < mu->val.size(); ++i) {
      if (mu->needs_grad) mu->grad.v[i] += g * mu->val.v[i];
      if (log_sigma->needs_grad)
        log_sigma->grad.v[i] += g * (std::exp(2.0 * log_sigma->val.v[i]) - 1.0);
    }
  });
}

}  // namespace plfm
