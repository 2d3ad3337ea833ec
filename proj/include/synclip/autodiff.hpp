#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "synclip/errors.hpp"
#include "synclip/tensor.hpp"

namespace synclip {

// Reverse-mode differentiation over dense row-major arrays.
//
// The primitive set is closed: add/sub (with row broadcast), mul (elementwise
// or scalar), scale, matmul, reshape, transpose, softmax, layer-norm, GELU,
// gather/concat over rows, mean, sum, exp, log, l2-normalize. Training runs
// in float; gradient checks instantiate the same graph code in double.

namespace detail {
template <typename S>
struct Node;
inline uint64_t& autodiff_epoch() {
  static uint64_t e = 0;
  return e;
}
}  // namespace detail

template <typename S>
class Value {
 public:
  Value() = default;
  explicit Value(std::shared_ptr<detail::Node<S>> n) : n_(std::move(n)) {}

  static Value leaf(Tensor<S> t, bool requires_grad = false) {
    Value v;
    v.n_ = std::make_shared<detail::Node<S>>();
    v.n_->shape = std::move(t.shape);
    v.n_->value = std::move(t.data);
    v.n_->requires_grad = requires_grad;
    v.n_->is_leaf = true;
    return v;
  }
  static Value constant(Tensor<S> t) { return leaf(std::move(t), false); }
  static Value scalar(S x) { return constant(Tensor<S>::scalar(x)); }

  bool defined() const { return n_ != nullptr; }
  const Shape& shape() const { return n_->shape; }
  int rows() const { return n_->shape.empty() ? 1 : n_->shape[0]; }
  int cols() const {
    int64_t c = 1;
    for (size_t i = 1; i < n_->shape.size(); ++i) c *= n_->shape[i];
    return int(c);
  }
  int64_t numel() const { return int64_t(n_->value.size()); }
  bool requires_grad() const { return n_->requires_grad; }

  const std::vector<S>& data() const { return n_->value; }
  std::vector<S>& mutable_data() { return n_->value; }
  const std::vector<S>& grad() const { return n_->grad; }
  S item() const {
    check_contract(numel() == 1, "item() requires a scalar Value");
    return n_->value[0];
  }
  Tensor<S> tensor() const { return Tensor<S>(n_->shape, n_->value); }

  detail::Node<S>* node() const { return n_.get(); }
  std::shared_ptr<detail::Node<S>> handle() const { return n_; }

 private:
  std::shared_ptr<detail::Node<S>> n_;
};

namespace detail {
template <typename S>
struct Node {
  Shape shape;
  std::vector<S> value;
  std::vector<S> grad;  // allocated on demand during backward
  bool requires_grad = false;
  bool is_leaf = false;
  const char* op_name = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;  // accumulates into parents' grads
  uint64_t epoch = 0;

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), S(0));
  }
  int rows() const { return shape.empty() ? 1 : shape[0]; }
  int cols() const {
    int64_t c = 1;
    for (size_t i = 1; i < shape.size(); ++i) c *= shape[i];
    return int(c);
  }
};
}  // namespace detail

template <typename S>
using EigenMat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using MatMap = Eigen::Map<EigenMat<S>>;
template <typename S>
using ConstMatMap = Eigen::Map<const EigenMat<S>>;

template <typename S>
Value<S> make_op(Shape shape, std::vector<Value<S>> inputs, std::function<void(detail::Node<S>&)> backward,
                 const char* name) {
  auto n = std::make_shared<detail::Node<S>>();
  n->shape = std::move(shape);
  n->value.resize(size_t(shape_numel(n->shape)), S(0));
  n->op_name = name;
  for (auto& in : inputs) {
    n->requires_grad = n->requires_grad || in.requires_grad();
    n->parents.push_back(in.handle());
  }
  if (n->requires_grad) n->backward_fn = std::move(backward);
  return Value<S>(std::move(n));
}

// ---------------------------------------------------------------------------
// primitives

template <typename S>
Value<S> add(const Value<S>& a, const Value<S>& b) {
  const bool same = a.shape() == b.shape();
  const bool row_bcast = !same && a.cols() == int(b.numel());
  check_contract(same || row_bcast, "add: shapes " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  auto* an = a.node();
  auto* bn = b.node();
  auto out = make_op<S>(
      a.shape(), {a, b},
      [an, bn, same](detail::Node<S>& n) {
        if (an->requires_grad) {
          an->ensure_grad();
          for (size_t i = 0; i < n.grad.size(); ++i) an->grad[i] += n.grad[i];
        }
        if (bn->requires_grad) {
          bn->ensure_grad();
          if (same) {
            for (size_t i = 0; i < n.grad.size(); ++i) bn->grad[i] += n.grad[i];
          } else {
            const size_t c = bn->value.size();
            for (size_t i = 0; i < n.grad.size(); ++i) bn->grad[i % c] += n.grad[i];
          }
        }
      },
      "add");
  auto& y = out.mutable_data();
  const auto& av = a.data();
  const auto& bv = b.data();
  if (same) {
    for (size_t i = 0; i < y.size(); ++i) y[i] = av[i] + bv[i];
  } else {
    const size_t c = bv.size();
    for (size_t i = 0; i < y.size(); ++i) y[i] = av[i] + bv[i % c];
  }
  return out;
}

template <typename S>
Value<S> sub(const Value<S>& a, const Value<S>& b) {
  const bool same = a.shape() == b.shape();
  const bool row_bcast = !same && a.cols() == int(b.numel());
  check_contract(same || row_bcast, "sub: shapes " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  auto* an = a.node();
  auto* bn = b.node();
  auto out = make_op<S>(
      a.shape(), {a, b},
      [an, bn, same](detail::Node<S>& n) {
        if (an->requires_grad) {
          an->ensure_grad();
          for (size_t i = 0; i < n.grad.size(); ++i) an->grad[i] += n.grad[i];
        }
        if (bn->requires_grad) {
          bn->ensure_grad();
          if (same) {
            for (size_t i = 0; i < n.grad.size(); ++i) bn->grad[i] -= n.grad[i];
          } else {
            const size_t c = bn->value.size();
            for (size_t i = 0; i < n.grad.size(); ++i) bn->grad[i % c] -= n.grad[i];
          }
        }
      },
      "sub");
  auto& y = out.mutable_data();
  const auto& av = a.data();
  const auto& bv = b.data();
  if (same) {
    for (size_t i = 0; i < y.size(); ++i) y[i] = av[i] - bv[i];
  } else {
    const size_t c = bv.size();
    for (size_t i = 0; i < y.size(); ++i) y[i] = av[i] - bv[i % c];
  }
  return out;
}

template <typename S>
Value<S> mul(const Value<S>& a, const Value<S>& b) {
  const bool same = a.shape() == b.shape();
  const bool scalar_b = !same && b.numel() == 1;
  check_contract(same || scalar_b, "mul: shapes " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  auto* an = a.node();
  auto* bn = b.node();
  auto out = make_op<S>(
      a.shape(), {a, b},
      [an, bn, same](detail::Node<S>& n) {
        if (an->requires_grad) {
          an->ensure_grad();
          if (same)
            for (size_t i = 0; i < n.grad.size(); ++i) an->grad[i] += n.grad[i] * bn->value[i];
          else
            for (size_t i = 0; i < n.grad.size(); ++i) an->grad[i] += n.grad[i] * bn->value[0];
        }
        if (bn->requires_grad) {
          bn->ensure_grad();
          if (same)
            for (size_t i = 0; i < n.grad.size(); ++i) bn->grad[i] += n.grad[i] * an->value[i];
          else
            for (size_t i = 0; i < n.grad.size(); ++i) bn->grad[0] += n.grad[i] * an->value[i];
        }
      },
      "mul");
  auto& y = out.mutable_data();
  const auto& av = a.data();
  const auto& bv = b.data();
  if (same)
    for (size_t i = 0; i < y.size(); ++i) y[i] = av[i] * bv[i];
  else
    for (size_t i = 0; i < y.size(); ++i) y[i] = av[i] * bv[0];
  return out;
}

template <typename S>
Value<S> scale(const Value<S>& a, S c) {
  auto* an = a.node();
  auto out = make_op<S>(
      a.shape(), {a},
      [an, c](detail::Node<S>& n) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (size_t i = 0; i < n.grad.size(); ++i) an->grad[i] += n.grad[i] * c;
      },
      "scale");
  auto& y = out.mutable_data();
  const auto& av = a.data();
  for (size_t i = 0; i < y.size(); ++i) y[i] = av[i] * c;
  return out;
}

template <typename S>
Value<S> matmul(const Value<S>& a, const Value<S>& b) {
  check_contract(a.shape().size() == 2 && b.shape().size() == 2, "matmul expects 2-D operands");
  const int m = a.shape()[0], k = a.shape()[1], k2 = b.shape()[0], n_ = b.shape()[1];
  check_contract(k == k2, "matmul: inner dims " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  auto* an = a.node();
  auto* bn = b.node();
  auto out = make_op<S>(
      {m, n_}, {a, b},
      [an, bn, m, k, n_](detail::Node<S>& n) {
        ConstMatMap<S> G(n.grad.data(), m, n_);
        if (an->requires_grad) {
          an->ensure_grad();
          MatMap<S> dA(an->grad.data(), m, k);
          ConstMatMap<S> B(bn->value.data(), k, n_);
          dA.noalias() += G * B.transpose();
        }
        if (bn->requires_grad) {
          bn->ensure_grad();
          MatMap<S> dB(bn->grad.data(), k, n_);
          ConstMatMap<S> A(an->value.data(), m, k);
          dB.noalias() += A.transpose() * G;
        }
      },
      "matmul");
  ConstMatMap<S> A(a.data().data(), m, k);
  ConstMatMap<S> B(b.data().data(), k, n_);
  MatMap<S> Y(out.mutable_data().data(), m, n_);
  Y.noalias() = A * B;
  return out;
}

template <typename S>
Value<S> reshape(const Value<S>& a, Shape shape) {
  check_contract(shape_numel(shape) == a.numel(), "reshape: element count mismatch");
  auto* an = a.node();
  auto out = make_op<S>(
      shape, {a},
      [an](detail::Node<S>& n) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (size_t i = 0; i < n.grad.size(); ++i) an->grad[i] += n.grad[i];
      },
      "reshape");
  out.mutable_data() = a.data();
  return out;
}

template <typename S>
Value<S> transpose(const Value<S>& a) {
  check_contract(a.shape().size() == 2, "transpose expects a 2-D Value");
  const int r = a.shape()[0], c = a.shape()[1];
  auto* an = a.node();
  auto out = make_op<S>(
      {c, r}, {a},
      [an, r, c](detail::Node<S>& n) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (int i = 0; i < c; ++i)
          for (int j = 0; j < r; ++j) an->grad[size_t(j) * c + i] += n.grad[size_t(i) * r + j];
      },
      "transpose");
  auto& y = out.mutable_data();
  const auto& av = a.data();
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) y[size_t(j) * r + i] = av[size_t(i) * c + j];
  return out;
}

// Rowwise softmax with max subtraction.
template <typename S>
Value<S> softmax_rows(const Value<S>& a) {
  const int r = a.rows(), c = a.cols();
  auto* an = a.node();
  auto out = make_op<S>(
      a.shape(), {a},
      [an, r, c](detail::Node<S>& n) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (int i = 0; i < r; ++i) {
          const S* p = n.value.data() + size_t(i) * c;
          const S* g = n.grad.data() + size_t(i) * c;
          S dot = 0;
          for (int j = 0; j < c; ++j) dot += p[j] * g[j];
          S* da = an->grad.data() + size_t(i) * c;
          for (int j = 0; j < c; ++j) da[j] += p[j] * (g[j] - dot);
        }
      },
      "softmax");
  auto& y = out.mutable_data();
  const auto& av = a.data();
  for (int i = 0; i < r; ++i) {
    const S* x = av.data() + size_t(i) * c;
    S* p = y.data() + size_t(i) * c;
    S mx = x[0];
    for (int j = 1; j < c; ++j) mx = std::max(mx, x[j]);
    S sum = 0;
    for (int j = 0; j < c; ++j) {
      p[j] = std::exp(x[j] - mx);
      sum += p[j];
    }
    const S inv = S(1) / sum;
    for (int j = 0; j < c; ++j) p[j] *= inv;
  }
  return out;
}

// Rowwise layer norm with affine parameters (gain, bias over the last axis).
template <typename S>
Value<S> layer_norm_rows(const Value<S>& a, const Value<S>& gain, const Value<S>& bias, S eps = S(1e-5)) {
  const int r = a.rows(), c = a.cols();
  check_contract(int(gain.numel()) == c && int(bias.numel()) == c, "layer_norm: gain/bias width mismatch");
  auto* an = a.node();
  auto* gn = gain.node();
  auto* bn = bias.node();
  // cache (inv_std, xhat) for the backward pass
  auto cache = std::make_shared<std::vector<S>>(size_t(r) * (c + 1));
  auto out = make_op<S>(
      a.shape(), {a, gain, bias},
      [an, gn, bn, r, c, cache](detail::Node<S>& n) {
        for (int i = 0; i < r; ++i) {
          const S inv_std = (*cache)[size_t(r) * c + i];
          const S* xh = cache->data() + size_t(i) * c;
          const S* g = n.grad.data() + size_t(i) * c;
          if (gn->requires_grad) {
            gn->ensure_grad();
            for (int j = 0; j < c; ++j) gn->grad[j] += g[j] * xh[j];
          }
          if (bn->requires_grad) {
            bn->ensure_grad();
            for (int j = 0; j < c; ++j) bn->grad[j] += g[j];
          }
          if (an->requires_grad) {
            an->ensure_grad();
            S mean_dxh = 0, mean_dxh_xh = 0;
            for (int j = 0; j < c; ++j) {
              const S dxh = g[j] * gn->value[j];
              mean_dxh += dxh;
              mean_dxh_xh += dxh * xh[j];
            }
            mean_dxh /= S(c);
            mean_dxh_xh /= S(c);
            S* da = an->grad.data() + size_t(i) * c;
            for (int j = 0; j < c; ++j) {
              const S dxh = g[j] * gn->value[j];
              da[j] += inv_std * (dxh - mean_dxh - xh[j] * mean_dxh_xh);
            }
          }
        }
      },
      "layer_norm");
  auto& y = out.mutable_data();
  const auto& av = a.data();
  for (int i = 0; i < r; ++i) {
    const S* x = av.data() + size_t(i) * c;
    S mean = 0;
    for (int j = 0; j < c; ++j) mean += x[j];
    mean /= S(c);
    S var = 0;
    for (int j = 0; j < c; ++j) var += (x[j] - mean) * (x[j] - mean);
    var /= S(c);
    const S inv_std = S(1) / std::sqrt(var + eps);
    (*cache)[size_t(r) * c + i] = inv_std;
    S* xh = cache->data() + size_t(i) * c;
    S* yy = y.data() + size_t(i) * c;
    for (int j = 0; j < c; ++j) {
      xh[j] = (x[j] - mean) * inv_std;
      yy[j] = xh[j] * gain.data()[size_t(j)] + bias.data()[size_t(j)];
    }
  }
  return out;
}

// Exact GELU (erf form).
template <typename S>
Value<S> gelu(const Value<S>& a) {
  auto* an = a.node();
  auto out = make_op<S>(
      a.shape(), {a},
      [an](detail::Node<S>& n) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        constexpr S inv_sqrt2 = S(0.70710678118654752440);
        constexpr S inv_sqrt2pi = S(0.39894228040143267794);
        for (size_t i = 0; i < n.grad.size(); ++i) {
          const S x = an->value[i];
          const S cdf = S(0.5) * (S(1) + std::erf(x * inv_sqrt2));
          const S pdf = inv_sqrt2pi * std::exp(S(-0.5) * x * x);
          an->grad[i] += n.grad[i] * (cdf + x * pdf);
        }
      },
      "gelu");
  auto& y = out.mutable_data();
  const auto& av = a.data();
  constexpr S inv_sqrt2 = S(0.70710678118654752440);
  for (size_t i = 0; i < y.size(); ++i) y[i] = S(0.5) * av[i] * (S(1) + std::erf(av[i] * inv_sqrt2));
  return out;
}

// Row gather; indices may repeat (backward accumulates).
template <typename S>
Value<S> gather_rows(const Value<S>& a, std::vector<int> idx) {
  const int r = a.rows(), c = a.cols();
  for (int i : idx) check_contract(i >= 0 && i < r, "gather_rows: index out of range");
  Shape out_shape = a.shape();
  if (out_shape.empty()) out_shape = {1};
  out_shape[0] = int(idx.size());
  auto* an = a.node();
  auto out = make_op<S>(
      out_shape, {a},
      [an, idx, c](detail::Node<S>& n) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (size_t i = 0; i < idx.size(); ++i) {
          S* dst = an->grad.data() + size_t(idx[i]) * c;
          const S* src = n.grad.data() + i * size_t(c);
          for (int j = 0; j < c; ++j) dst[j] += src[j];
        }
      },
      "gather_rows");
  auto& y = out.mutable_data();
  const auto& av = a.data();
  for (size_t i = 0; i < idx.size(); ++i)
    std::copy_n(av.data() + size_t(idx[i]) * c, c, y.data() + i * size_t(c));
  return out;
}

// Vertical concatenation; the gather/slice family's inverse.
template <typename S>
Value<S> concat_rows(const std::vector<Value<S>>& parts) {
  check_contract(!parts.empty(), "concat_rows: empty input list");
  const int c = parts[0].cols();
  int r = 0;
  for (const auto& p : parts) {
    check_contract(p.cols() == c, "concat_rows: column mismatch");
    r += p.rows();
  }
  std::vector<detail::Node<S>*> nodes;
  for (const auto& p : parts) nodes.push_back(p.node());
  auto out = make_op<S>(
      {r, c}, parts,
      [nodes, c](detail::Node<S>& n) {
        size_t off = 0;
        for (auto* pn : nodes) {
          const size_t cnt = pn->value.size();
          if (pn->requires_grad) {
            pn->ensure_grad();
            for (size_t i = 0; i < cnt; ++i) pn->grad[i] += n.grad[off + i];
          }
          off += cnt;
        }
      },
      "concat_rows");
  auto& y = out.mutable_data();
  size_t off = 0;
  for (const auto& p : parts) {
    std::copy(p.data().begin(), p.data().end(), y.begin() + long(off));
    off += p.data().size();
  }
  return out;
}

template <typename S>
Value<S> sum_all(const Value<S>& a) {
  auto* an = a.node();
  auto out = make_op<S>(
      {1}, {a},
      [an](detail::Node<S>& n) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (auto& g : an->grad) g += n.grad[0];
      },
      "sum");
  S s = 0;
  for (S x : a.data()) s += x;
  out.mutable_data()[0] = s;
  return out;
}

template <typename S>
Value<S> mean_all(const Value<S>& a) {
  auto* an = a.node();
  const S inv = S(1) / S(a.numel());
  auto out = make_op<S>(
      {1}, {a},
      [an, inv](detail::Node<S>& n) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (auto& g : an->grad) g += n.grad[0] * inv;
      },
      "mean");
  S s = 0;
  for (S x : a.data()) s += x;
  out.mutable_data()[0] = s * inv;
  return out;
}

template <typename S>
Value<S> exp_(const Value<S>& a) {
  auto* an = a.node();
  auto out = make_op<S>(
      a.shape(), {a},
      [an](detail::Node<S>& n) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (size_t i = 0; i < n.grad.size(); ++i) an->grad[i] += n.grad[i] * n.value[i];
      },
      "exp");
  auto& y = out.mutable_data();
  for (size_t i = 0; i < y.size(); ++i) y[i] = std::exp(a.data()[i]);
  return out;
}

template <typename S>
Value<S> log_(const Value<S>& a) {
  auto* an = a.node();
  auto out = make_op<S>(
      a.shape(), {a},
      [an](detail::Node<S>& n) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (size_t i = 0; i < n.grad.size(); ++i) an->grad[i] += n.grad[i] / an->value[i];
      },
      "log");
  auto& y = out.mutable_data();
  for (size_t i = 0; i < y.size(); ++i) {
    if (!(a.data()[i] > S(0))) throw_numeric("log of non-positive value");
    y[i] = std::log(a.data()[i]);
  }
  return out;
}

// Rowwise unit normalization. Gradient of each row is orthogonal to the row's
// output direction: dL/dx = (g - <g,y> y) / ||x||.
template <typename S>
Value<S> l2_normalize_rows(const Value<S>& a) {
  const int r = a.rows(), c = a.cols();
  auto* an = a.node();
  auto norms = std::make_shared<std::vector<S>>(size_t(r));
  auto out = make_op<S>(
      a.shape(), {a},
      [an, r, c, norms](detail::Node<S>& n) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (int i = 0; i < r; ++i) {
          const S* y = n.value.data() + size_t(i) * c;
          const S* g = n.grad.data() + size_t(i) * c;
          S dot = 0;
          for (int j = 0; j < c; ++j) dot += y[j] * g[j];
          const S inv = S(1) / (*norms)[size_t(i)];
          S* da = an->grad.data() + size_t(i) * c;
          for (int j = 0; j < c; ++j) da[j] += (g[j] - dot * y[j]) * inv;
        }
      },
      "l2_normalize");
  auto& y = out.mutable_data();
  const auto& av = a.data();
  for (int i = 0; i < r; ++i) {
    const S* x = av.data() + size_t(i) * c;
    S ss = 0;
    for (int j = 0; j < c; ++j) ss += x[j] * x[j];
    if (!(ss > S(0))) throw_numeric("l2_normalize: zero-norm row " + std::to_string(i));
    const S norm = std::sqrt(ss);
    (*norms)[size_t(i)] = norm;
    S* yy = y.data() + size_t(i) * c;
    for (int j = 0; j < c; ++j) yy[j] = x[j] / norm;
  }
  return out;
}

// convenience composites (no new primitives)
template <typename S>
Value<S> square(const Value<S>& a) {
  return mul(a, a);
}

// ---------------------------------------------------------------------------
// backward

// Populates .grad on every reachable node that requires grad. Deterministic:
// reverse post-order DFS with fixed child order.
template <typename S>
void backward_graph(const Value<S>& loss) {
  check_contract(loss.numel() == 1, "backward: loss must be a scalar Value");
  const uint64_t epoch = ++detail::autodiff_epoch();

  std::vector<detail::Node<S>*> order;
  std::vector<std::pair<detail::Node<S>*, size_t>> stack;
  stack.push_back({loss.node(), 0});
  loss.node()->epoch = epoch;
  loss.node()->grad.assign(1, S(0));
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      auto* p = node->parents[next++].get();
      if (p->epoch != epoch) {
        p->epoch = epoch;
        p->grad.assign(p->value.size(), S(0));
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  loss.node()->grad[0] = S(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node<S>* n = *it;
    if (!n->requires_grad || n->is_leaf) continue;
    if (!n->backward_fn) throw Error(ErrorKind::unsupported_op, std::string("unsupported op in graph: ") + n->op_name);
    n->backward_fn(*n);
  }
}

}  // namespace synclip
