#pragma once

#include <cmath>
#include <map>
#include <string>

#include "synclip/autodiff.hpp"
#include "synclip/tensor.hpp"

namespace synclip {

template <typename S>
using GradMap = std::map<std::string, Tensor<S>>;

// Named trainable parameters. Names are unique hierarchical paths; iteration
// order (std::map) is the canonical order used by checkpoints and updates.
template <typename S>
class ParamStore {
 public:
  Value<S> create(const std::string& name, Tensor<S> init) {
    check_contract(!params_.count(name), "parameter already exists: " + name);
    auto v = Value<S>::leaf(std::move(init), /*requires_grad=*/true);
    params_.emplace(name, v);
    return v;
  }

  Value<S> get(const std::string& name) const {
    auto it = params_.find(name);
    check_contract(it != params_.end(), "unknown parameter: " + name);
    return it->second;
  }
  bool contains(const std::string& name) const { return params_.count(name) > 0; }

  const std::map<std::string, Value<S>>& all() const { return params_; }
  size_t size() const { return params_.size(); }
  int64_t numel() const {
    int64_t n = 0;
    for (const auto& [k, v] : params_) n += v.numel();
    return n;
  }

  int64_t step() const { return step_; }
  void set_step(int64_t s) { step_ = s; }
  void bump_step() { ++step_; }

  template <typename T2>
  ParamStore<T2> cast() const {
    ParamStore<T2> out;
    for (const auto& [k, v] : params_) out.create(k, v.tensor().template cast<T2>());
    out.set_step(step_);
    return out;
  }

 private:
  std::map<std::string, Value<S>> params_;
  int64_t step_ = 0;
};

// Gradients of every parameter w.r.t. a scalar loss.
template <typename S>
GradMap<S> backward(const Value<S>& loss, const ParamStore<S>& params) {
  backward_graph(loss);
  GradMap<S> grads;
  const uint64_t epoch = detail::autodiff_epoch();
  for (const auto& [name, v] : params.all()) {
    if (v.node()->epoch == epoch) {
      grads.emplace(name, Tensor<S>(v.shape(), v.node()->grad));
    } else {
      grads.emplace(name, Tensor<S>::zeros(v.shape()));  // unreachable from loss
    }
  }
  return grads;
}

template <typename S>
struct AdamConfig {
  S lr = S(1e-3);
  S beta1 = S(0.9);
  S beta2 = S(0.999);
  S eps = S(1e-8);
};

// Bias-corrected Adam; moment accumulators live here, the step counter in the
// ParamStore.
template <typename S>
class Adam {
 public:
  explicit Adam(AdamConfig<S> cfg = {}) : cfg_(cfg) {
    check_contract(cfg_.beta1 > 0 && cfg_.beta1 < 1 && cfg_.beta2 > 0 && cfg_.beta2 < 1,
                   "adam: betas must lie in (0,1)");
  }

  const AdamConfig<S>& config() const { return cfg_; }
  void set_lr(S lr) { cfg_.lr = lr; }

  void step(ParamStore<S>& params, const GradMap<S>& grads) {
    params.bump_step();
    const int64_t t = params.step();
    const S bc1 = S(1) - std::pow(cfg_.beta1, S(t));
    const S bc2 = S(1) - std::pow(cfg_.beta2, S(t));
    for (const auto& [name, p] : params.all()) {
      auto git = grads.find(name);
      check_contract(git != grads.end(), "adam: missing gradient for " + name);
      const auto& g = git->second;
      check_contract(g.shape == p.shape(), "adam: gradient shape mismatch for " + name);
      auto& m = moment(m_, name, p.shape());
      auto& v = moment(v_, name, p.shape());
      auto& theta = p.node()->value;
      for (size_t i = 0; i < theta.size(); ++i) {
        m.data[i] = cfg_.beta1 * m.data[i] + (S(1) - cfg_.beta1) * g.data[i];
        v.data[i] = cfg_.beta2 * v.data[i] + (S(1) - cfg_.beta2) * g.data[i] * g.data[i];
        const S mhat = m.data[i] / bc1;
        const S vhat = v.data[i] / bc2;
        theta[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
      }
    }
  }

  std::map<std::string, Tensor<S>>& first_moments() { return m_; }
  std::map<std::string, Tensor<S>>& second_moments() { return v_; }

 private:
  Tensor<S>& moment(std::map<std::string, Tensor<S>>& store, const std::string& name, const Shape& shape) {
    auto it = store.find(name);
    if (it == store.end()) it = store.emplace(name, Tensor<S>::zeros(shape)).first;
    check_contract(it->second.shape == shape, "adam: moment shape mismatch for " + name);
    return it->second;
  }

  AdamConfig<S> cfg_;
  std::map<std::string, Tensor<S>> m_, v_;
};

// Global-norm gradient clipping; returns the pre-clip norm.
template <typename S>
double clip_global_norm(GradMap<S>& grads, double max_norm) {
  double ss = 0;
  for (auto& [k, g] : grads)
    for (S x : g.data) ss += double(x) * double(x);
  const double norm = std::sqrt(ss);
  if (norm > max_norm && norm > 0) {
    const S f = S(max_norm / norm);
    for (auto& [k, g] : grads)
      for (S& x : g.data) x *= f;
  }
  return norm;
}

}  // namespace synclip
