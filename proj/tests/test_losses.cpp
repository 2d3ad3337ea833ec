#include <cmath>
#include <map>

#include "doctest.h"
#include "synclip/losses.hpp"
#include "synclip/gradcheck.hpp"
#include "synclip/model.hpp"

using namespace synclip;

namespace {

TensorD randn(Shape shape, Rng& rng, double scale = 1.0) {
  TensorD t(shape);
  for (auto& x : t.data) x = rng.normal() * scale;
  return t;
}

// direct-summation oracle for the contrastive loss (independent of autodiff)
double contrastive_oracle(const TensorD& A, const TensorD& V, const PositiveSet& P, double tau) {
  const int T = A.rows(), D = A.cols();
  auto normed = [&](const TensorD& M) {
    std::vector<std::vector<double>> out(size_t(T), std::vector<double>(static_cast<size_t>(D)));
    for (int t = 0; t < T; ++t) {
      double ss = 0;
      for (int j = 0; j < D; ++j) ss += M(t, j) * M(t, j);
      const double inv = 1.0 / std::sqrt(ss);
      for (int j = 0; j < D; ++j) out[size_t(t)][size_t(j)] = M(t, j) * inv;
    }
    return out;
  };
  auto a = normed(A), v = normed(V);
  std::vector<std::vector<double>> p(static_cast<size_t>(T), std::vector<double>(static_cast<size_t>(T)));
  for (int t = 0; t < T; ++t) {
    double denom = 0;
    std::vector<double> e(static_cast<size_t>(T));
    for (int u = 0; u < T; ++u) {
      double dot = 0;
      for (int j = 0; j < D; ++j) dot += a[size_t(t)][size_t(j)] * v[size_t(u)][size_t(j)];
      e[size_t(u)] = std::exp(dot / tau);
      denom += e[size_t(u)];
    }
    for (int u = 0; u < T; ++u) p[size_t(t)][size_t(u)] = e[size_t(u)] / denom;
  }
  double loss = 0;
  for (int t = 0; t < T; ++t) {
    double fwd = 0, bwd = 0;
    for (int s : P[size_t(t)]) {
      fwd += p[size_t(t)][size_t(s)];
      bwd += p[size_t(s)][size_t(t)];
    }
    loss += std::log(fwd) + std::log(bwd);
  }
  return -loss / (2.0 * T);
}

}  // namespace

TEST_CASE("loss_pix: zero, closed form, scalar-loop oracle") {
  Rng rng(3);
  const int T = 2, pix = 24;  // stands in for C*H*W
  auto x = Value<double>::constant(randn({T * 4, pix / 4}, rng));
  CHECK(loss_pix(x, x, T).item() == 0.0);

  auto ones = Value<double>::constant(TensorD::full({T * 4, pix / 4}, 1.0));
  auto shifted = add(x, ones);
  CHECK(loss_pix(shifted, x, T).item() == doctest::Approx(double(4 * (pix / 4))).epsilon(1e-9));

  for (int trial = 0; trial < 20; ++trial) {
    TensorD a = randn({T * 4, pix / 4}, rng), b = randn({T * 4, pix / 4}, rng);
    double expect = 0;
    for (size_t i = 0; i < a.data.size(); ++i) expect += (a.data[i] - b.data[i]) * (a.data[i] - b.data[i]);
    expect /= T;
    const double got = loss_pix(Value<double>::constant(a), Value<double>::constant(b), T).item();
    CHECK(got == doctest::Approx(expect).epsilon(1e-6));
  }
  auto small = Value<double>::constant(randn({2, 3}, rng));
  CHECK_THROWS_AS(loss_pix(small, x, T), Error);
}

TEST_CASE("positive_set: window, boundary clipping, silence expansion") {
  TensorF feats({4, 3});
  Rng rng(5);
  for (auto& v : feats.data) v = float(rng.normal());
  auto P = positive_set(feats, 0, 1.5);  // threshold above 1: cosine never qualifies
  for (int t = 0; t < 4; ++t) {
    CHECK(P[size_t(t)].size() == 1);
    CHECK(P[size_t(t)][0] == t);
  }

  auto P1 = positive_set(feats, 1, 1.5);
  CHECK(P1[0] == std::vector<int>{0, 1});  // left boundary clips
  CHECK(P1[3] == std::vector<int>{2, 3});

  // identical rows (a silent clip): cosine 1 everywhere expands to the full set
  TensorF silent({4, 3});
  for (auto& v : silent.data) v = -4.6f;
  auto Pall = positive_set(silent, 0, 0.95);
  for (int t = 0; t < 4; ++t) CHECK(P1.size() == 4);
  for (int t = 0; t < 4; ++t) CHECK(Pall[size_t(t)] == std::vector<int>{0, 1, 2, 3});
}

TEST_CASE("loss_contrastive: T=1 gives zero, uniform case gives log 4") {
  auto a1 = Value<double>::constant(TensorD({1, 4}, {1, 0, 0, 0}));
  auto v1 = Value<double>::constant(TensorD({1, 4}, {0, 1, 0, 0}));
  PositiveSet P1{{0}};
  CHECK(loss_contrastive(a1, v1, P1, 0.1).item() == doctest::Approx(0.0).epsilon(1e-12));

  // orthogonal unit rows: all similarities equal, single positives, T=4
  const int T = 4, D = 8;
  TensorD A({T, D}), V({T, D});
  for (int t = 0; t < T; ++t) {
    A(t, t) = 1.0;
    V(t, T + t) = 1.0;
  }
  PositiveSet P(static_cast<size_t>(T));
  for (int t = 0; t < T; ++t) P[size_t(t)] = {t};
  const double got =
      loss_contrastive(Value<double>::constant(A), Value<double>::constant(V), P, 0.07).item();
  CHECK(got == doctest::Approx(std::log(4.0)).epsilon(1e-9));
}

TEST_CASE("loss_contrastive matches the direct-summation oracle on random inputs") {
  Rng rng(11);
  const int T = 6, D = 16;
  for (int trial = 0; trial < 20; ++trial) {
    TensorD A = randn({T, D}, rng), V = randn({T, D}, rng);
    PositiveSet P(static_cast<size_t>(T));
    for (int t = 0; t < T; ++t)
      for (int d = -1; d <= 1; ++d)
        if (t + d >= 0 && t + d < T) P[size_t(t)].push_back(t + d);
    const double got = loss_contrastive(Value<double>::constant(A), Value<double>::constant(V), P, 0.1).item();
    const double expect = contrastive_oracle(A, V, P, 0.1);
    CHECK(got == doctest::Approx(expect).epsilon(1e-6));
  }
}

TEST_CASE("loss_contrastive invariances and sensitivities") {
  Rng rng(13);
  const int T = 5, D = 8;
  TensorD A = randn({T, D}, rng), V = randn({T, D}, rng);
  PositiveSet P(static_cast<size_t>(T));
  for (int t = 0; t < T; ++t) P[size_t(t)] = {t};

  // common positive rescaling leaves the loss unchanged (cosine path)
  TensorD A3 = A, V5 = V;
  for (auto& x : A3.data) x *= 3.7;
  for (auto& x : V5.data) x *= 0.2;
  const double base = loss_contrastive(Value<double>::constant(A), Value<double>::constant(V), P, 0.1).item();
  const double scaled =
      loss_contrastive(Value<double>::constant(A3), Value<double>::constant(V5), P, 0.1).item();
  CHECK(base == doctest::Approx(scaled).epsilon(1e-9));

  // softmax rows sum to one
  auto a = l2_normalize_rows(Value<double>::constant(A));
  auto v = l2_normalize_rows(Value<double>::constant(V));
  auto p = softmax_rows(scale(matmul(a, transpose(v)), 10.0));
  for (int t = 0; t < T; ++t) {
    double row = 0;
    for (int s = 0; s < T; ++s) row += p.data()[size_t(t) * T + s];
    CHECK(row == doctest::Approx(1.0).epsilon(1e-6));
  }

  // raising a true-pair score strictly decreases the loss (sign check on the
  // score-space gradient, plus an explicit finite difference)
  auto scores = Value<double>::leaf(randn({T, T}, rng), true);
  auto loss = contrastive_from_scores(scores, P);
  backward_graph(loss);
  for (int t = 0; t < T; ++t) CHECK(scores.grad()[size_t(t) * T + t] < 0);

  TensorD s2 = scores.tensor();
  s2(2, 2) += 1e-4;
  const double bumped = contrastive_from_scores(Value<double>::constant(s2), P).item();
  CHECK(bumped < loss.item());
}

TEST_CASE("loss_cov: constant factors, self-covariance oracle, Monte Carlo decay") {
  Rng rng(17);
  const int n = 64, D = 8;

  // constant factor: centering kills it, pair contributes zero
  auto constant = Value<double>::constant(TensorD::full({n, D}, 0.7));
  auto z = Value<double>::constant(randn({n, D}, rng));
  CHECK(cov_pair_term(constant, z).item() == doctest::Approx(0.0).epsilon(1e-12));

  // z_amb == z_voc: term equals the squared Frobenius norm of the sample
  // covariance of z with itself, computed by an explicit oracle
  TensorD zv = randn({n, D}, rng);
  std::vector<double> mean(size_t(D), 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < D; ++j) mean[size_t(j)] += zv(i, j) / n;
  double frob2 = 0;
  for (int p = 0; p < D; ++p)
    for (int q = 0; q < D; ++q) {
      double c = 0;
      for (int i = 0; i < n; ++i) c += (zv(i, p) - mean[size_t(p)]) * (zv(i, q) - mean[size_t(q)]);
      c /= (n - 1);
      frob2 += c * c;
    }
  const double got = cov_pair_term(Value<double>::constant(zv), Value<double>::constant(zv)).item();
  CHECK(got == doctest::Approx(frob2).epsilon(1e-9));

  // independent factors decorrelate as O(1/n)
  Rng mc(23);
  const int big = 10000;
  auto za = Value<double>::constant(randn({big, D}, mc));
  auto zb = Value<double>::constant(randn({big, D}, mc));
  auto zc = Value<double>::constant(randn({big, D}, mc));
  CHECK(loss_cov(za, zb, zc).item() < 1e-3);

  // a single sample has no covariance
  auto one = Value<double>::constant(randn({1, D}, rng));
  CHECK_THROWS_AS(cov_pair_term(one, one), Error);

  // nonnegative on arbitrary inputs and zero iff cross-covariances vanish
  for (int trial = 0; trial < 5; ++trial) {
    auto r1 = Value<double>::constant(randn({16, D}, rng));
    auto r2 = Value<double>::constant(randn({16, D}, rng));
    auto r3 = Value<double>::constant(randn({16, D}, rng));
    CHECK(loss_cov(r1, r2, r3).item() >= 0.0);
  }
  auto c1 = Value<double>::constant(TensorD::full({16, D}, 1.0));
  auto c2 = Value<double>::constant(TensorD::full({16, D}, -2.0));
  auto r = Value<double>::constant(randn({16, D}, rng));
  CHECK(loss_cov(c1, c2, r).item() == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("identity_shuffle: identity cases, group closure, multiset preservation") {
  Rng rng(29);
  std::vector<int> ids = {0, 0, 0, 0, 1, 1, 1, 1};
  std::vector<int> keys = {0, 1, 2, 3, 0, 1, 2, 3};

  Rng r0(1);
  auto perm0 = identity_shuffle_perm(ids, keys, r0, 0.0);
  for (size_t i = 0; i < perm0.size(); ++i) CHECK(perm0[i] == int(i));

  std::vector<int> distinct_ids = {0, 1, 2, 3, 4, 5, 6, 7};
  Rng r1(2);
  auto perm1 = identity_shuffle_perm(distinct_ids, keys, r1, 1.0);
  for (size_t i = 0; i < perm1.size(); ++i) CHECK(perm1[i] == int(i));

  for (int trial = 0; trial < 50; ++trial) {
    Rng rt(uint64_t(trial) + 100);
    auto perm = identity_shuffle_perm(ids, keys, rt, 0.8);
    std::vector<int> sorted = perm;
    std::sort(sorted.begin(), sorted.end());
    for (size_t i = 0; i < sorted.size(); ++i) CHECK(sorted[i] == int(i));  // a true permutation
    for (size_t i = 0; i < perm.size(); ++i) CHECK(ids[size_t(perm[i])] == ids[i]);  // within identity
  }

  // frames with equal keys never swap (no eligible partner)
  std::vector<int> same_keys(8, 5);
  Rng r2(3);
  auto perm2 = identity_shuffle_perm(ids, same_keys, r2, 1.0);
  for (size_t i = 0; i < perm2.size(); ++i) CHECK(perm2[i] == int(i));
}

TEST_CASE("identity_shuffle keeps the gradient path to donor rows") {
  auto z = Value<double>::leaf(TensorD({4, 2}, {1, 1, 2, 2, 3, 3, 4, 4}), true);
  std::vector<int> ids = {0, 0, 0, 0}, keys = {0, 1, 0, 1};
  Rng rng(31);
  auto shuffled = identity_shuffle(z, ids, keys, rng, 1.0);
  // weight rows so each output slot has a distinct gradient
  TensorD w({4, 2}, {1, 1, 10, 10, 100, 100, 1000, 1000});
  backward_graph(sum_all(mul(shuffled, Value<double>::constant(w))));
  double total = 0;
  for (double g : z.grad()) {
    CHECK(g != 0.0);  // every donor row receives gradient
    total += g;
  }
  CHECK(total == doctest::Approx(2 * (1 + 10 + 100 + 1000)));
}

TEST_CASE("total_loss: weighted sum, zero weights, NaN detection") {
  auto pv = Value<double>::scalar(1.5);
  auto pa = Value<double>::scalar(2.5);
  auto cl = Value<double>::scalar(0.7);
  auto cov = Value<double>::scalar(0.3);

  LossWeights zero;
  zero.lambda_pix = zero.lambda_cl = zero.lambda_cov = 0;
  CHECK(total_loss(pv, pa, cl, cov, zero).total.item() == 0.0);

  LossWeights pix_only;
  pix_only.lambda_pix = 1;
  pix_only.lambda_cl = pix_only.lambda_cov = 0;
  CHECK(total_loss(pv, pa, cl, cov, pix_only).total.item() == doctest::Approx(4.0));

  LossWeights w;  // defaults: 1, 1, 0.1
  auto bundle = total_loss(pv, pa, cl, cov, w);
  const double expect = w.lambda_pix * (1.5 + 2.5) + w.lambda_cl * 0.7 + w.lambda_cov * 0.3;
  CHECK(bundle.total.item() == doctest::Approx(expect).epsilon(1e-7));
  CHECK(bundle.report.pix_voc == 1.5);
  CHECK(bundle.report.contrastive == 0.7);

  auto nan = Value<double>::scalar(std::nan(""));
  CHECK_THROWS_WITH_AS(total_loss(pv, pa, nan, cov, w), doctest::Contains("contrastive"), Error);
}

TEST_CASE("full micro pretrain loss passes the gradient check") {
  const CorpusConfig cfg;
  ModelConfig mc;
  mc.D = 16;
  mc.enc_blocks = 1;
  mc.enc_heads = 2;
  mc.dec_blocks = 1;
  mc.dec_heads = 2;
  mc.adapter_hidden = 16;

  auto corpus = gen_corpus(51, 2, 2, 16, cfg);
  const int B = 2, T = 2;
  std::vector<PreparedClip<double>> batch;
  for (int b = 0; b < B; ++b) {
    Clip clip = corpus[size_t(b)];
    clip.frames.shape[0] = T;
    clip.frames.data.resize(size_t(T) * cfg.C * cfg.H * cfg.W);
    clip.wave.resize(size_t(T) * cfg.samples_per_frame);
    clip.tracks.mouth_drive.resize(static_cast<size_t>(T));
    clip.tracks.dx.resize(static_cast<size_t>(T));
    clip.tracks.dy.resize(static_cast<size_t>(T));
    clip.tracks.blink.resize(static_cast<size_t>(T));
    auto feats = audio_featurize(clip.wave, T, cfg.L, cfg);
    std::vector<JitterParams> jit;
    Rng jr(7 + uint64_t(b));
    for (int t = 0; t < T; ++t) jit.push_back(draw_jitter(jr));
    batch.push_back(prepare_clip<double>(clip, feats, jit, cfg));
  }
  StepRandomness rand;
  Rng rr(71);
  rand.frames.resize(size_t(B));
  for (int b = 0; b < B; ++b)
    for (int t = 0; t < T; ++t) {
      FrameRand fr;
      Rng mr = rr.split(uint64_t(b * T + t));
      fr.uniform_plan = sample_uniform_mask(cfg.n_patches(), 0.75, mr);
      FaceWeights w = face_keep_weights(corpus[0].identity, cfg);
      fr.face_plan = sample_face_mask(cfg.n_patches(), 0.75, w, mr);
      rand.frames[size_t(b)].push_back(fr);
    }
  std::vector<int> ids, keys;
  for (int b = 0; b < B; ++b)
    for (int t = 0; t < T; ++t) {
      ids.push_back(batch[size_t(b)].identity_id);
      keys.push_back(batch[size_t(b)].motion_keys[size_t(t)]);
    }
  Rng sr(73);
  rand.id_perm = identity_shuffle_perm(ids, keys, sr, 0.5);

  LossWeights lw;
  auto fn = [&](ParamStore<double>& ps) {
    auto out = forward_pretrain(ps, mc, batch, rand, MaskMode::two_bypass);
    Value<double> pix_voc, pix_aud, cl;
    for (int b = 0; b < B; ++b) {
      auto pv = loss_pix(out.recon_voc[size_t(b)], out.target[size_t(b)], T);
      auto pa = loss_pix(out.recon_aud[size_t(b)], out.target[size_t(b)], T);
      auto P = positive_set(batch[size_t(b)].audio.cast<float>(), lw.k, lw.sim_threshold);
      auto c = loss_contrastive(out.audio_clip[size_t(b)], out.z_voc_clip[size_t(b)], P, lw.tau);
      pix_voc = b ? add(pix_voc, pv) : pv;
      pix_aud = b ? add(pix_aud, pa) : pa;
      cl = b ? add(cl, c) : c;
    }
    pix_voc = scale(pix_voc, 1.0 / B);
    pix_aud = scale(pix_aud, 1.0 / B);
    cl = scale(cl, 1.0 / B);
    auto cov = loss_cov(out.z_id_all, out.z_amb_all, out.z_voc_all);
    return total_loss(pix_voc, pix_aud, cl, cov, lw).total;
  };

  ParamStore<double> params;
  init_params(params, mc, 99);
  GradCheckOptions opt;
  opt.max_coords = 128;
  auto report = grad_check(fn, params, opt);
  INFO("max rel err ", report.max_rel_err, " at ", report.worst_param);
  CHECK(report.max_rel_err <= 1e-4);
  CHECK(report.pass);
}
