#include "synclip/masking.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace synclip {

MaskPlan MaskPlan::all_visible(int n_patches, Bypass tag) {
  MaskPlan plan;
  plan.tag = tag;
  plan.visible.resize(size_t(n_patches));
  std::iota(plan.visible.begin(), plan.visible.end(), 0);
  return plan;
}

FaceWeights face_keep_weights(const IdentityParams& id, const CorpusConfig& cfg, double face_weight,
                              double background_weight) {
  check_contract(face_weight > 0 && background_weight >= 0, "face weights must be positive");
  const int grid = cfg.W / cfg.patch;
  FaceWeights w;
  w.w.resize(size_t(cfg.n_patches()));
  int inside = 0;
  for (int py = 0; py < cfg.H / cfg.patch; ++py) {
    for (int px = 0; px < grid; ++px) {
      const int cx = px * cfg.patch + cfg.patch / 2;
      const int cy = py * cfg.patch + cfg.patch / 2;
      const bool in_face = id.face_box.contains(cx, cy);
      w.w[size_t(py) * grid + px] = in_face ? face_weight : background_weight;
      inside += in_face;
    }
  }
  check_contract(inside > 0 && inside < cfg.n_patches(), "face box must cover some but not all patches");
  return w;
}

namespace {

int masked_count(int n_patches, double ratio) {
  check_contract(ratio > 0 && ratio < 1, "mask ratio must lie in (0,1)");
  const int n_mask = int(std::ceil(ratio * n_patches));
  if (n_mask >= n_patches) throw Error(ErrorKind::config, "mask ratio leaves no visible patches");
  return n_mask;
}

void finish_plan(MaskPlan& plan, int n_patches, const std::vector<char>& is_visible) {
  for (int i = 0; i < n_patches; ++i)
    (is_visible[size_t(i)] ? plan.visible : plan.masked).push_back(i);
}

}  // namespace

MaskPlan sample_uniform_mask(int n_patches, double ratio, Rng& rng) {
  const int n_mask = masked_count(n_patches, ratio);
  std::vector<int> order(static_cast<size_t>(n_patches));
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  std::vector<char> is_visible(size_t(n_patches), 0);
  for (int i = n_mask; i < n_patches; ++i) is_visible[size_t(order[size_t(i)])] = 1;
  MaskPlan plan;
  plan.tag = Bypass::uniform;
  finish_plan(plan, n_patches, is_visible);
  return plan;
}

MaskPlan sample_face_mask(int n_patches, double ratio, const FaceWeights& weights, Rng& rng) {
  check_contract(int(weights.w.size()) == n_patches, "face weights size mismatch");
  const int n_mask = masked_count(n_patches, ratio);
  const int n_vis = n_patches - n_mask;
  double total = 0;
  for (double w : weights.w) {
    check_contract(w >= 0, "face weights must be nonnegative");
    total += w;
  }
  if (total <= 0) throw Error(ErrorKind::config, "all keep weights are zero");

  // Without-replacement draw with first-order inclusion probability exactly
  // proportional to w_i: randomized-order systematic PPS. Probabilities above
  // 1 are capped (those patches are always kept) and the mass redistributed.
  std::vector<double> pi(static_cast<size_t>(n_patches));
  std::vector<char> forced(static_cast<size_t>(n_patches), 0);
  double mass = double(n_vis);
  int capped = 0;
  for (bool changed = true; changed;) {
    changed = false;
    double free_total = 0;
    for (int i = 0; i < n_patches; ++i)
      if (!forced[size_t(i)]) free_total += weights.w[size_t(i)];
    if (free_total <= 0 && mass > 1e-12)
      throw Error(ErrorKind::config, "not enough positive keep weights for the visible set");
    for (int i = 0; i < n_patches; ++i) {
      if (forced[size_t(i)]) continue;
      pi[size_t(i)] = mass * weights.w[size_t(i)] / free_total;
      if (pi[size_t(i)] >= 1.0) {
        forced[size_t(i)] = 1;
        pi[size_t(i)] = 1.0;
        mass -= 1.0;
        ++capped;
        changed = true;
        break;
      }
    }
  }

  std::vector<int> order(static_cast<size_t>(n_patches));
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  std::vector<char> is_visible(size_t(n_patches), 0);
  int selected = 0;
  for (int i = 0; i < n_patches; ++i)
    if (forced[size_t(i)]) {
      is_visible[size_t(i)] = 1;
      ++selected;
    }
  const double start = rng.uniform();
  double cum = 0;
  int next_tick = 0;
  for (int idx : order) {
    if (forced[size_t(idx)]) continue;
    cum += pi[size_t(idx)];
    if (next_tick < n_vis - capped && cum > start + double(next_tick)) {
      is_visible[size_t(idx)] = 1;
      ++selected;
      ++next_tick;
    }
  }
  // floating-point tail: top up from unselected positive-weight patches
  for (int i = 0; i < n_patches && selected < n_vis; ++i)
    if (!is_visible[size_t(i)] && weights.w[size_t(i)] > 0) {
      is_visible[size_t(i)] = 1;
      ++selected;
    }
  check_contract(selected == n_vis, "face mask selection failed to reach the exact visible count");

  MaskPlan plan;
  plan.tag = Bypass::face_preserving;
  finish_plan(plan, n_patches, is_visible);
  return plan;
}

JitterParams draw_jitter(Rng& rng, const JitterRanges& ranges) {
  JitterParams p;
  p.a = float(rng.uniform(ranges.a_min, ranges.a_max));
  p.b = float(rng.uniform(ranges.b_min, ranges.b_max));
  return p;
}

TensorF photometric_jitter(const TensorF& frame, const JitterParams& p) {
  TensorF out = frame;
  for (auto& v : out.data) v = std::clamp(p.a * v + p.b, 0.0f, 1.0f);
  return out;
}

}  // namespace synclip
