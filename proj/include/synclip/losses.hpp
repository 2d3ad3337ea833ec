#pragma once

#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "synclip/autodiff.hpp"
#include "synclip/rng.hpp"
#include "synclip/tensor.hpp"

namespace synclip {

struct LossWeights {
  double lambda_pix = 1.0;
  double lambda_cl = 1.0;
  double lambda_cov = 0.1;
  double tau = 0.1;
  int k = 1;                    // neighbor window of the positive set
  double sim_threshold = 0.95;  // audio self-similarity expansion
  double p_swap = 0.5;          // identity shuffle probability
  bool learnable_tau = false;
  bool cross_clip = false;

  void validate() const {
    check_contract(tau > 0, "temperature must be positive");
    check_contract(lambda_pix >= 0 && lambda_cl >= 0 && lambda_cov >= 0, "loss weights must be nonnegative");
  }
};

struct LossReport {
  double pix_voc = 0;
  double pix_aud = 0;
  double contrastive = 0;
  double cov = 0;
  double total = 0;
};

using PositiveSet = std::vector<std::vector<int>>;  // per anchor, sorted indices

// --- pixel reconstruction ----------------------------------------------------

// (1/T) * sum_t ||xhat_t - x_t||^2; layout-agnostic as long as rows stack the
// T frames.
template <typename S>
Value<S> loss_pix(const Value<S>& xhat, const Value<S>& x, int T) {
  check_contract(xhat.shape() == x.shape(), "loss_pix: shape mismatch");
  check_contract(T >= 1, "loss_pix: T must be positive");
  auto diff = sub(xhat, x);
  return scale(sum_all(mul(diff, diff)), S(1) / S(T));
}

// --- positive sets -------------------------------------------------------------

// P_t = {t} ∪ {|s-t| <= k} ∪ {cos(a_t, a_s) >= threshold}, honored on the raw
// concatenated audio features.
inline PositiveSet positive_set(const TensorF& audio_feats, int k, double sim_threshold) {
  const int T = audio_feats.rows();
  const int w = audio_feats.cols();
  check_contract(k >= 0 && k < T, "positive_set: k out of range");
  std::vector<double> norms(static_cast<size_t>(T));
  for (int t = 0; t < T; ++t) {
    double ss = 0;
    for (int j = 0; j < w; ++j) ss += double(audio_feats(t, j)) * audio_feats(t, j);
    norms[size_t(t)] = std::sqrt(ss);
  }
  PositiveSet P(static_cast<size_t>(T));
  for (int t = 0; t < T; ++t) {
    std::set<int> s;
    for (int d = -k; d <= k; ++d) {
      const int idx = t + d;
      if (idx >= 0 && idx < T) s.insert(idx);
    }
    for (int u = 0; u < T; ++u) {
      if (norms[size_t(t)] == 0 || norms[size_t(u)] == 0) continue;
      double dot = 0;
      for (int j = 0; j < w; ++j) dot += double(audio_feats(t, j)) * audio_feats(u, j);
      if (dot / (norms[size_t(t)] * norms[size_t(u)]) >= sim_threshold) s.insert(u);
    }
    s.insert(t);
    P[size_t(t)].assign(s.begin(), s.end());
  }
  return P;
}

// --- contrastive ---------------------------------------------------------------

// Multi-positive symmetric InfoNCE from a [T,T] score matrix whose rows are
// softmax-normalized: -1/(2T) sum_t [ log sum_{s in P_t} p_{t->s}
//                                   + log sum_{s in P_t} p_{s->t} ].
template <typename S>
Value<S> contrastive_from_scores(const Value<S>& scores, const PositiveSet& P) {
  const int T = scores.rows();
  check_contract(scores.cols() == T, "contrastive: score matrix must be square");
  check_contract(int(P.size()) == T, "contrastive: positive set count mismatch");
  Tensor<S> mask({T, T});
  for (int t = 0; t < T; ++t) {
    check_contract(!P[size_t(t)].empty(), "contrastive: empty positive set");
    for (int s : P[size_t(t)]) {
      check_contract(s >= 0 && s < T, "contrastive: positive index out of range");
      mask(t, s) = S(1);
    }
  }
  auto mask_v = Value<S>::constant(mask);
  auto ones = Value<S>::constant(Tensor<S>::full({T, 1}, S(1)));
  auto p = softmax_rows(scores);                                  // p[t][s] = p_{t->s}
  auto fwd = log_(matmul(mul(p, mask_v), ones));                  // sum_{s in P_t} p_{t->s}
  auto bwd = log_(matmul(mul(transpose(p), mask_v), ones));       // sum_{s in P_t} p_{s->t}
  return scale(sum_all(add(fwd, bwd)), S(-1) / S(2 * T));
}

// Rows of both token matrices are unit-normalized before the dot products, so
// the scores are cosine similarities over tau.
template <typename S>
Value<S> loss_contrastive(const Value<S>& audio_tokens, const Value<S>& vocal_tokens, const PositiveSet& P,
                          S tau) {
  check_contract(tau > 0, "contrastive: tau must be positive");
  check_contract(audio_tokens.shape() == vocal_tokens.shape(), "contrastive: token shape mismatch");
  auto a = l2_normalize_rows(audio_tokens);
  auto v = l2_normalize_rows(vocal_tokens);
  auto scores = scale(matmul(a, transpose(v)), S(1) / tau);
  return contrastive_from_scores(scores, P);
}

// Learnable-temperature variant: scores are divided by exp(log_tau).
template <typename S>
Value<S> loss_contrastive(const Value<S>& audio_tokens, const Value<S>& vocal_tokens, const PositiveSet& P,
                          const Value<S>& log_tau) {
  check_contract(log_tau.numel() == 1, "contrastive: log_tau must be scalar");
  auto a = l2_normalize_rows(audio_tokens);
  auto v = l2_normalize_rows(vocal_tokens);
  auto inv_tau = exp_(scale(log_tau, S(-1)));
  auto scores = mul(matmul(a, transpose(v)), inv_tau);
  return contrastive_from_scores(scores, P);
}

// --- cross-covariance decorrelation ----------------------------------------------

// ||Cov(zp, zq)||_F^2 with sample covariance over the row axis.
template <typename S>
Value<S> cov_pair_term(const Value<S>& zp, const Value<S>& zq) {
  const int n = zp.rows();
  check_contract(n >= 2, "loss_cov: need at least 2 samples for a covariance");
  check_contract(zp.shape() == zq.shape(), "loss_cov: factor shape mismatch");
  auto ones_mean = Value<S>::constant(Tensor<S>::full({1, n}, S(1) / S(n)));
  auto cp = sub(zp, matmul(ones_mean, zp));
  auto cq = sub(zq, matmul(ones_mean, zq));
  auto cov = scale(matmul(transpose(cp), cq), S(1) / S(n - 1));
  return sum_all(mul(cov, cov));
}

// (1/D^2) * sum over unordered factor pairs of ||Cov||_F^2.
template <typename S>
Value<S> loss_cov(const Value<S>& z_id, const Value<S>& z_amb, const Value<S>& z_voc) {
  const int D = z_id.cols();
  auto total = add(cov_pair_term(z_id, z_amb), add(cov_pair_term(z_id, z_voc), cov_pair_term(z_amb, z_voc)));
  return scale(total, S(1) / S(double(D) * double(D)));
}

// --- identity-consistent prompt shuffling -------------------------------------

// Permutation over row slots: with probability p_swap a row is swapped with
// another frame of the same identity whose motion key differs. The result is
// always a within-identity permutation (multiset of rows preserved).
inline std::vector<int> identity_shuffle_perm(const std::vector<int>& identity_labels,
                                              const std::vector<int>& motion_keys, Rng& rng, double p_swap) {
  const size_t n = identity_labels.size();
  check_contract(motion_keys.size() == n, "identity_shuffle: label/key length mismatch");
  std::vector<int> perm(n);
  for (size_t i = 0; i < n; ++i) perm[i] = int(i);
  for (size_t i = 0; i < n; ++i) {
    if (rng.uniform() >= p_swap) continue;
    std::vector<int> candidates;
    for (size_t j = 0; j < n; ++j)
      if (j != i && identity_labels[j] == identity_labels[i] && motion_keys[j] != motion_keys[i])
        candidates.push_back(int(j));
    if (candidates.empty()) continue;
    const int j = candidates[size_t(rng.uniform_int(int(candidates.size())))];
    std::swap(perm[i], perm[size_t(j)]);
  }
  return perm;
}

template <typename S>
Value<S> identity_shuffle(const Value<S>& z_id, const std::vector<int>& identity_labels,
                          const std::vector<int>& motion_keys, Rng& rng, double p_swap) {
  check_contract(int(identity_labels.size()) == z_id.rows(), "identity_shuffle: label count mismatch");
  return gather_rows(z_id, identity_shuffle_perm(identity_labels, motion_keys, rng, p_swap));
}

// --- total --------------------------------------------------------------------

template <typename S>
struct LossBundle {
  Value<S> total;
  LossReport report;
};

template <typename S>
LossBundle<S> total_loss(const Value<S>& pix_voc, const Value<S>& pix_aud, const Value<S>& contrastive,
                         const Value<S>& cov, const LossWeights& w) {
  w.validate();
  const struct {
    const char* name;
    const Value<S>* v;
  } comps[] = {{"pix_voc", &pix_voc}, {"pix_aud", &pix_aud}, {"contrastive", &contrastive}, {"cov", &cov}};
  for (const auto& c : comps) {
    check_contract(c.v->numel() == 1, std::string("total_loss: ") + c.name + " must be scalar");
    if (!std::isfinite(double(c.v->item())))
      throw_numeric(std::string("non-finite loss component: ") + c.name);
  }
  LossBundle<S> out;
  out.total = add(scale(add(pix_voc, pix_aud), S(w.lambda_pix)),
                  add(scale(contrastive, S(w.lambda_cl)), scale(cov, S(w.lambda_cov))));
  out.report.pix_voc = double(pix_voc.item());
  out.report.pix_aud = double(pix_aud.item());
  out.report.contrastive = double(contrastive.item());
  out.report.cov = double(cov.item());
  out.report.total = double(out.total.item());
  return out;
}

}  // namespace synclip
