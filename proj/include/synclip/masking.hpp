#pragma once

#include <vector>

#include "synclip/autodiff.hpp"
#include "synclip/rng.hpp"
#include "synclip/synthgen.hpp"

namespace synclip {

enum class Bypass { uniform, face_preserving };

struct MaskPlan {
  std::vector<int> visible;  // sorted
  std::vector<int> masked;   // sorted
  Bypass tag = Bypass::uniform;

  int n_patches() const { return int(visible.size() + masked.size()); }
  static MaskPlan all_visible(int n_patches, Bypass tag = Bypass::uniform);
};

struct FaceWeights {
  std::vector<double> w;  // per patch, >= 0
};

// Keep weights from the synthetic face geometry: patches whose center falls
// inside the face box get face_weight, the rest background_weight.
FaceWeights face_keep_weights(const IdentityParams& id, const CorpusConfig& cfg, double face_weight = 3.0,
                              double background_weight = 1.0);

MaskPlan sample_uniform_mask(int n_patches, double ratio, Rng& rng);
MaskPlan sample_face_mask(int n_patches, double ratio, const FaceWeights& weights, Rng& rng);

struct JitterParams {
  float a = 1.0f;
  float b = 0.0f;
};
struct JitterRanges {
  float a_min = 0.7f, a_max = 1.3f;
  float b_min = -0.2f, b_max = 0.2f;
};

JitterParams draw_jitter(Rng& rng, const JitterRanges& ranges = {});
// v' = clamp(a*v + b, 0, 1), one (a,b) per frame.
TensorF photometric_jitter(const TensorF& frame, const JitterParams& p);

// MAE restoration: row i is the matching visible token for i in V, otherwise
// the mask token; positional embeddings are added at every index. For a fully
// masked plan `visible_tokens` may be left default-constructed.
template <typename S>
Value<S> restore_sequence(const Value<S>& visible_tokens, const MaskPlan& plan, const Value<S>& mask_token,
                          const Value<S>& pos_embed) {
  const int n_patches = plan.n_patches();
  const int n_vis = int(plan.visible.size());
  check_contract(pos_embed.rows() == n_patches, "restore_sequence: pos_embed row count mismatch");
  check_contract(mask_token.rows() == 1 && mask_token.cols() == pos_embed.cols(),
                 "restore_sequence: mask token shape mismatch");
  if (n_vis == 0)
    return add(gather_rows(mask_token, std::vector<int>(size_t(n_patches), 0)), pos_embed);

  check_contract(visible_tokens.defined() && visible_tokens.rows() == n_vis,
                 "restore_sequence: visible token count mismatch");
  check_contract(visible_tokens.cols() == mask_token.cols(), "restore_sequence: token width mismatch");

  // stack [visible; mask_token], then gather with i in V -> slot in V, else the
  // mask row; repeated gathers accumulate mask-token gradients
  auto stacked = concat_rows<S>({visible_tokens, mask_token});
  std::vector<int> index(size_t(n_patches), n_vis);
  for (int slot = 0; slot < n_vis; ++slot) index[size_t(plan.visible[size_t(slot)])] = slot;
  return add(gather_rows(stacked, index), pos_embed);
}

}  // namespace synclip
