#pragma once

#include <string>
#include <vector>

#include "synclip/autodiff.hpp"
#include "synclip/masking.hpp"
#include "synclip/optim.hpp"
#include "synclip/rng.hpp"
#include "synclip/synthgen.hpp"

namespace synclip {

enum class MaskMode { two_bypass, uniform_only, face_only };
enum class AudioMode { concat_adapter, last_layer_only };

struct ModelConfig {
  int D = 64;
  int enc_blocks = 4;
  int enc_heads = 4;
  int dec_blocks = 2;
  int dec_heads = 4;
  int mlp_ratio = 4;
  int adapter_hidden = 128;
  bool final_ln = true;
  bool cross_attention = true;  // off reproduces the concat-prompts variant
  AudioMode audio_mode = AudioMode::concat_adapter;

  // geometry mirrored from the corpus config
  int n_patches = 64;
  int patch_dim = 16;  // p*p*C
  int audio_width = 48;
  int d_a = 16;
  int L = 3;

  void validate() const {
    check_contract(D % enc_heads == 0 && D % dec_heads == 0, "token width must divide the head counts");
    check_contract(audio_width == d_a * L, "audio width must equal L*d_a");
  }
};

// --- patchify -------------------------------------------------------------

// [C,H,W] -> [N_p, p*p*C], row-major patch grid, invertible.
template <typename S>
Tensor<S> patchify(const Tensor<S>& frame, int patch) {
  check_contract(frame.shape.size() == 3, "patchify expects [C,H,W]");
  const int C = frame.shape[0], H = frame.shape[1], W = frame.shape[2];
  if (H % patch != 0 || W % patch != 0)
    throw Error(ErrorKind::config, "patchify: H and W must be divisible by the patch size");
  const int gy = H / patch, gx = W / patch;
  Tensor<S> out({gy * gx, patch * patch * C});
  for (int py = 0; py < gy; ++py)
    for (int px = 0; px < gx; ++px) {
      const int pidx = py * gx + px;
      for (int c = 0; c < C; ++c)
        for (int y = 0; y < patch; ++y)
          for (int x = 0; x < patch; ++x)
            out(pidx, (c * patch + y) * patch + x) =
                frame.data[(size_t(c) * H + py * patch + y) * W + px * patch + x];
    }
  return out;
}

template <typename S>
Tensor<S> unpatchify(const Tensor<S>& patches, int patch, int C, int H, int W) {
  check_contract(patches.shape.size() == 2 && patches.shape[0] == (H / patch) * (W / patch) &&
                     patches.shape[1] == patch * patch * C,
                 "unpatchify: shape mismatch");
  const int gx = W / patch;
  Tensor<S> frame({C, H, W});
  for (int pidx = 0; pidx < patches.shape[0]; ++pidx) {
    const int py = pidx / gx, px = pidx % gx;
    for (int c = 0; c < C; ++c)
      for (int y = 0; y < patch; ++y)
        for (int x = 0; x < patch; ++x)
          frame.data[(size_t(c) * H + py * patch + y) * W + px * patch + x] =
              patches(pidx, (c * patch + y) * patch + x);
  }
  return frame;
}

// --- parameter initialization ----------------------------------------------

template <typename S>
Tensor<S> normal_init(Shape shape, Rng rng, double std_dev) {
  Tensor<S> t(std::move(shape));
  for (auto& x : t.data) x = S(rng.normal() * std_dev);
  return t;
}

template <typename S>
void create_linear(ParamStore<S>& ps, const std::string& prefix, int in, int out, Rng& rng,
                   double std_dev = 0.02) {
  ps.create(prefix + "/w", normal_init<S>({in, out}, rng.split(prefix + "/w"), std_dev));
  ps.create(prefix + "/b", Tensor<S>::zeros({out}));
}

template <typename S>
void create_layer_norm(ParamStore<S>& ps, const std::string& prefix, int dim) {
  ps.create(prefix + "/g", Tensor<S>::full({dim}, S(1)));
  ps.create(prefix + "/b", Tensor<S>::zeros({dim}));
}

template <typename S>
void create_attention(ParamStore<S>& ps, const std::string& prefix, int dim, Rng& rng) {
  for (const char* w : {"wq", "wk", "wv", "wo"})
    ps.create(prefix + "/" + w, normal_init<S>({dim, dim}, rng.split(prefix + "/" + w), 0.02));
  for (const char* b : {"bq", "bk", "bv", "bo"}) ps.create(prefix + "/" + b, Tensor<S>::zeros({dim}));
}

template <typename S>
void init_params(ParamStore<S>& ps, const ModelConfig& mc, uint64_t seed) {
  mc.validate();
  Rng rng(seed);
  const int D = mc.D;

  create_linear(ps, "enc/embed", mc.patch_dim, D, rng);
  ps.create("enc/pos", normal_init<S>({mc.n_patches, D}, rng.split("enc/pos"), 0.02));
  for (const char* p : {"id", "amb", "voc"})
    ps.create(std::string("enc/prompt/") + p, normal_init<S>({1, D}, rng.split(std::string("prompt/") + p), 0.02));
  for (int i = 0; i < mc.enc_blocks; ++i) {
    const std::string blk = "enc/blk" + std::to_string(i);
    create_layer_norm(ps, blk + "/ln1", D);
    create_attention(ps, blk + "/attn", D, rng);
    create_layer_norm(ps, blk + "/ln2", D);
    create_linear(ps, blk + "/mlp/fc1", D, mc.mlp_ratio * D, rng);
    create_linear(ps, blk + "/mlp/fc2", mc.mlp_ratio * D, D, rng);
  }
  if (mc.final_ln) create_layer_norm(ps, "enc/ln_f", D);

  create_linear(ps, "adapter/fc1", mc.audio_width, mc.adapter_hidden, rng);
  create_linear(ps, "adapter/fc2", mc.adapter_hidden, D, rng);

  create_linear(ps, "dec/embed", D, D, rng);
  ps.create("dec/mask_token", normal_init<S>({1, D}, rng.split("dec/mask_token"), 0.02));
  ps.create("dec/pos", normal_init<S>({mc.n_patches, D}, rng.split("dec/pos"), 0.02));
  for (int i = 0; i < mc.dec_blocks; ++i) {
    const std::string blk = "dec/blk" + std::to_string(i);
    create_layer_norm(ps, blk + "/ln1", D);
    create_attention(ps, blk + "/self", D, rng);
    if (mc.cross_attention) {
      create_layer_norm(ps, blk + "/ln_ca", D);
      create_attention(ps, blk + "/cross", D, rng);
    }
    create_layer_norm(ps, blk + "/ln2", D);
    create_linear(ps, blk + "/mlp/fc1", D, mc.mlp_ratio * D, rng);
    create_linear(ps, blk + "/mlp/fc2", mc.mlp_ratio * D, D, rng);
  }
  create_layer_norm(ps, "dec/ln_f", D);
  create_linear(ps, "dec/head", D, mc.patch_dim, rng);
}

// --- building blocks --------------------------------------------------------

template <typename S>
Value<S> linear(const ParamStore<S>& ps, const std::string& prefix, const Value<S>& x) {
  return add(matmul(x, ps.get(prefix + "/w")), ps.get(prefix + "/b"));
}

template <typename S>
Value<S> layer_norm(const ParamStore<S>& ps, const std::string& prefix, const Value<S>& x) {
  return layer_norm_rows(x, ps.get(prefix + "/g"), ps.get(prefix + "/b"));
}

// Multi-head attention; queries from q_in, keys/values from kv_in.
template <typename S>
Value<S> multi_head_attention(const ParamStore<S>& ps, const std::string& prefix, const Value<S>& q_in,
                              const Value<S>& kv_in, int n_heads) {
  const int D = q_in.cols();
  const int dh = D / n_heads;
  const int sq = q_in.rows(), skv = kv_in.rows();

  auto q = add(matmul(q_in, ps.get(prefix + "/wq")), ps.get(prefix + "/bq"));
  auto k = add(matmul(kv_in, ps.get(prefix + "/wk")), ps.get(prefix + "/bk"));
  auto v = add(matmul(kv_in, ps.get(prefix + "/wv")), ps.get(prefix + "/bv"));

  // head h occupies rows {s*H + h} after reshaping [S, H*dh] -> [S*H, dh]
  auto qh = reshape(q, {sq * n_heads, dh});
  auto kh = reshape(k, {skv * n_heads, dh});
  auto vh = reshape(v, {skv * n_heads, dh});

  const S inv_sqrt = S(1) / S(std::sqrt(double(dh)));
  std::vector<Value<S>> heads;
  heads.reserve(size_t(n_heads));
  for (int h = 0; h < n_heads; ++h) {
    std::vector<int> qi(static_cast<size_t>(sq)), ki(static_cast<size_t>(skv));
    for (int s = 0; s < sq; ++s) qi[size_t(s)] = s * n_heads + h;
    for (int s = 0; s < skv; ++s) ki[size_t(s)] = s * n_heads + h;
    auto Q = gather_rows(qh, qi);
    auto K = gather_rows(kh, ki);
    auto V = gather_rows(vh, ki);
    auto attn = softmax_rows(scale(matmul(Q, transpose(K)), inv_sqrt));
    heads.push_back(matmul(attn, V));
  }
  // [H*Sq, dh] with rows h*Sq+s -> reorder to s*H+h and fold back to [Sq, D]
  auto stacked = concat_rows(heads);
  std::vector<int> reorder(size_t(sq) * n_heads);
  for (int s = 0; s < sq; ++s)
    for (int h = 0; h < n_heads; ++h) reorder[size_t(s) * n_heads + h] = h * sq + s;
  auto merged = reshape(gather_rows(stacked, reorder), {sq, D});
  return add(matmul(merged, ps.get(prefix + "/wo")), ps.get(prefix + "/bo"));
}

template <typename S>
Value<S> encoder_block(const ParamStore<S>& ps, const std::string& blk, const Value<S>& x, int n_heads) {
  auto h = layer_norm(ps, blk + "/ln1", x);
  auto y = add(x, multi_head_attention(ps, blk + "/attn", h, h, n_heads));
  auto m = layer_norm(ps, blk + "/ln2", y);
  m = linear(ps, blk + "/mlp/fc2", gelu(linear(ps, blk + "/mlp/fc1", m)));
  return add(y, m);
}

// --- encoder -----------------------------------------------------------------

template <typename S>
struct EncodeOut {
  Value<S> patch_tokens;  // [N_vis, D]
  Value<S> z_id, z_amb, z_voc;  // [1, D] each
};

// The encoder consumes only visible patches; three learnable prompt queries
// are prepended and read back out after the blocks.
template <typename S>
EncodeOut<S> encode(const ParamStore<S>& ps, const ModelConfig& mc, const Value<S>& visible_patches,
                    const MaskPlan& plan) {
  const int n_vis = int(plan.visible.size());
  check_contract(visible_patches.rows() == n_vis, "encode: visible patch count does not match the plan");
  check_contract(visible_patches.cols() == mc.patch_dim, "encode: patch dim mismatch");

  auto embedded = linear(ps, "enc/embed", visible_patches);
  embedded = add(embedded, gather_rows(ps.get("enc/pos"), plan.visible));
  auto x = concat_rows<S>(
      {ps.get("enc/prompt/id"), ps.get("enc/prompt/amb"), ps.get("enc/prompt/voc"), embedded});
  for (int i = 0; i < mc.enc_blocks; ++i) x = encoder_block(ps, "enc/blk" + std::to_string(i), x, mc.enc_heads);
  if (mc.final_ln) x = layer_norm(ps, "enc/ln_f", x);

  EncodeOut<S> out;
  out.z_id = gather_rows(x, {0});
  out.z_amb = gather_rows(x, {1});
  out.z_voc = gather_rows(x, {2});
  std::vector<int> rest(static_cast<size_t>(n_vis));
  for (int i = 0; i < n_vis; ++i) rest[size_t(i)] = 3 + i;
  out.patch_tokens = gather_rows(x, rest);
  return out;
}

// --- audio adapter -----------------------------------------------------------

// Two-layer perceptron from concatenated per-layer audio features to width D.
// In last-layer-only mode the lower layers are zeroed out of the input.
template <typename S>
Value<S> audio_adapt(const ParamStore<S>& ps, const ModelConfig& mc, const Value<S>& concat_features) {
  check_contract(concat_features.cols() == mc.audio_width, "audio_adapt: feature width mismatch");
  Value<S> x = concat_features;
  if (mc.audio_mode == AudioMode::last_layer_only) {
    Tensor<S> gate({1, mc.audio_width});
    for (int j = 0; j < mc.audio_width; ++j)
      gate.data[size_t(j)] = j >= mc.audio_width - mc.d_a ? S(1) : S(0);
    // row-broadcast multiply via elementwise mul with a tiled constant
    Tensor<S> tiled({concat_features.rows(), mc.audio_width});
    for (int r = 0; r < concat_features.rows(); ++r)
      for (int j = 0; j < mc.audio_width; ++j) tiled(r, j) = gate.data[size_t(j)];
    x = mul(x, Value<S>::constant(tiled));
  }
  return linear(ps, "adapter/fc2", gelu(linear(ps, "adapter/fc1", x)));
}

// --- decoder -----------------------------------------------------------------

// MAE-style decoder. Each block self-attends over the restored length-N_p
// sequence and then cross-attends to the 3-token prompt set [z_id, z_amb, c].
// With cross_attention off, the prompts are instead prepended to the sequence
// and dropped before the pixel head.
template <typename S>
Value<S> decode(const ParamStore<S>& ps, const ModelConfig& mc, const Value<S>& restored,
                const Value<S>& z_id, const Value<S>& z_amb, const Value<S>& cond) {
  check_contract(restored.rows() == mc.n_patches, "decode: restored sequence must have N_p rows");
  auto prompts = concat_rows<S>({z_id, z_amb, cond});  // [3, D]

  Value<S> x = restored;
  if (!mc.cross_attention) x = concat_rows<S>({prompts, restored});

  for (int i = 0; i < mc.dec_blocks; ++i) {
    const std::string blk = "dec/blk" + std::to_string(i);
    auto h = layer_norm(ps, blk + "/ln1", x);
    x = add(x, multi_head_attention(ps, blk + "/self", h, h, mc.dec_heads));
    if (mc.cross_attention) {
      auto q = layer_norm(ps, blk + "/ln_ca", x);
      x = add(x, multi_head_attention(ps, blk + "/cross", q, prompts, mc.dec_heads));
    }
    auto m = layer_norm(ps, blk + "/ln2", x);
    m = linear(ps, blk + "/mlp/fc2", gelu(linear(ps, blk + "/mlp/fc1", m)));
    x = add(x, m);
  }
  if (!mc.cross_attention) {
    std::vector<int> body(static_cast<size_t>(mc.n_patches));
    for (int i = 0; i < mc.n_patches; ++i) body[size_t(i)] = 3 + i;
    x = gather_rows(x, body);
  }
  x = layer_norm(ps, "dec/ln_f", x);
  return linear(ps, "dec/head", x);  // [N_p, patch_dim]
}

// --- full pretraining forward --------------------------------------------------

// Constant (non-trainable) per-clip inputs, already patchified/featurized.
template <typename S>
struct PreparedClip {
  std::vector<Tensor<S>> patches;           // per frame [N_p, patch_dim]
  std::vector<Tensor<S>> patches_jittered;  // face-preserving view (may equal patches)
  Tensor<S> audio;                          // [T, L*d_a]
  int identity_id = 0;
  std::vector<int> motion_keys;             // per frame
  int T() const { return int(patches.size()); }
};

struct FrameRand {
  MaskPlan uniform_plan;
  MaskPlan face_plan;
  JitterParams jitter;
};

struct StepRandomness {
  std::vector<std::vector<FrameRand>> frames;  // [clip][frame]
  std::vector<int> id_perm;                    // permutation over B*T frame slots
};

template <typename S>
struct PretrainOutput {
  std::vector<Value<S>> recon_voc;   // per clip [T*N_p, patch_dim]
  std::vector<Value<S>> recon_aud;   // per clip [T*N_p, patch_dim]
  std::vector<Value<S>> target;      // per clip constant [T*N_p, patch_dim]
  std::vector<Value<S>> z_voc_clip;  // per clip [T, D]
  std::vector<Value<S>> audio_clip;  // per clip [T, D]
  Value<S> z_id_all, z_amb_all, z_voc_all;  // [B*T, D], unshuffled
  int encoder_invocations = 0;
};

template <typename S>
PretrainOutput<S> forward_pretrain(const ParamStore<S>& ps, const ModelConfig& mc,
                                   const std::vector<PreparedClip<S>>& batch, const StepRandomness& rand,
                                   MaskMode mode) {
  check_contract(!batch.empty(), "forward_pretrain: empty batch");
  check_contract(rand.frames.size() == batch.size(), "forward_pretrain: randomness batch size mismatch");

  PretrainOutput<S> out;
  const int B = int(batch.size());
  std::vector<Value<S>> z_id_rows, z_amb_rows, z_voc_rows;
  std::vector<std::vector<Value<S>>> patch_tokens(static_cast<size_t>(B));  // [clip][frame] -> [N_vis, D]
  std::vector<const MaskPlan*> decode_plans;

  for (int b = 0; b < B; ++b) {
    const auto& clip = batch[size_t(b)];
    const int T = clip.T();
    check_contract(int(rand.frames[size_t(b)].size()) == T, "forward_pretrain: per-frame randomness mismatch");
    for (int t = 0; t < T; ++t) {
      const auto& fr = rand.frames[size_t(b)][size_t(t)];
      const auto patches = Value<S>::constant(clip.patches[size_t(t)]);
      const auto patches_jit = Value<S>::constant(clip.patches_jittered[size_t(t)]);

      if (mode == MaskMode::two_bypass) {
        auto enc1 = encode(ps, mc, gather_rows(patches, fr.uniform_plan.visible), fr.uniform_plan);
        auto enc2 = encode(ps, mc, gather_rows(patches_jit, fr.face_plan.visible), fr.face_plan);
        out.encoder_invocations += 2;
        z_id_rows.push_back(enc1.z_id);        // vocal/ambient prompts of pass 1 ignored
        z_amb_rows.push_back(enc2.z_amb);      // patch tokens and identity of pass 2 ignored
        z_voc_rows.push_back(enc2.z_voc);
        patch_tokens[size_t(b)].push_back(enc1.patch_tokens);
        decode_plans.push_back(&fr.uniform_plan);
      } else if (mode == MaskMode::uniform_only) {
        auto enc = encode(ps, mc, gather_rows(patches, fr.uniform_plan.visible), fr.uniform_plan);
        out.encoder_invocations += 1;
        z_id_rows.push_back(enc.z_id);
        z_amb_rows.push_back(enc.z_amb);
        z_voc_rows.push_back(enc.z_voc);
        patch_tokens[size_t(b)].push_back(enc.patch_tokens);
        decode_plans.push_back(&fr.uniform_plan);
      } else {  // face_only
        auto enc = encode(ps, mc, gather_rows(patches_jit, fr.face_plan.visible), fr.face_plan);
        out.encoder_invocations += 1;
        z_id_rows.push_back(enc.z_id);
        z_amb_rows.push_back(enc.z_amb);
        z_voc_rows.push_back(enc.z_voc);
        patch_tokens[size_t(b)].push_back(enc.patch_tokens);
        decode_plans.push_back(&fr.face_plan);
      }
    }
  }

  out.z_id_all = concat_rows(z_id_rows);
  out.z_amb_all = concat_rows(z_amb_rows);
  out.z_voc_all = concat_rows(z_voc_rows);
  check_contract(rand.id_perm.size() == z_id_rows.size(), "forward_pretrain: id_perm length mismatch");
  auto z_id_shuffled = gather_rows(out.z_id_all, rand.id_perm);

  int slot = 0;
  for (int b = 0; b < B; ++b) {
    const auto& clip = batch[size_t(b)];
    const int T = clip.T();
    auto audio_tokens = audio_adapt(ps, mc, Value<S>::constant(clip.audio));  // [T, D]
    out.audio_clip.push_back(audio_tokens);
    std::vector<Value<S>> voc_rows_clip(z_voc_rows.begin() + slot, z_voc_rows.begin() + slot + T);
    out.z_voc_clip.push_back(concat_rows(voc_rows_clip));

    std::vector<Value<S>> rec_voc, rec_aud, tgt;
    for (int t = 0; t < T; ++t) {
      const MaskPlan& plan = *decode_plans[size_t(slot + t)];
      auto dec_tokens = linear(ps, "dec/embed", patch_tokens[size_t(b)][size_t(t)]);
      auto restored = restore_sequence(dec_tokens, plan, ps.get("dec/mask_token"), ps.get("dec/pos"));
      auto zid = gather_rows(z_id_shuffled, {slot + t});
      auto zamb = z_amb_rows[size_t(slot + t)];
      auto cvoc = z_voc_rows[size_t(slot + t)];
      auto caud = gather_rows(audio_tokens, {t});
      rec_voc.push_back(decode(ps, mc, restored, zid, zamb, cvoc));
      rec_aud.push_back(decode(ps, mc, restored, zid, zamb, caud));
      tgt.push_back(Value<S>::constant(clip.patches[size_t(t)]));
    }
    out.recon_voc.push_back(concat_rows(rec_voc));
    out.recon_aud.push_back(concat_rows(rec_aud));
    out.target.push_back(concat_rows(tgt));
    slot += T;
  }
  return out;
}

// Patchifies a clip (plus its photometrically perturbed view) and pairs it
// with the frozen audio features. `jitter` may be empty for no perturbation.
template <typename S>
PreparedClip<S> prepare_clip(const Clip& clip, const LayeredAudioFeatures& feats,
                             const std::vector<JitterParams>& jitter, const CorpusConfig& cfg) {
  const int T = clip.frames.shape[0];
  check_contract(jitter.empty() || int(jitter.size()) == T, "prepare_clip: jitter count mismatch");
  PreparedClip<S> out;
  out.identity_id = clip.identity.identity_id;
  for (int t = 0; t < T; ++t) {
    TensorF frame({cfg.C, cfg.H, cfg.W});
    std::copy_n(clip.frames.data.begin() + int64_t(t) * cfg.C * cfg.H * cfg.W, int64_t(cfg.C) * cfg.H * cfg.W,
                frame.data.begin());
    out.patches.push_back(patchify(frame, cfg.patch).template cast<S>());
    const TensorF view = jitter.empty() ? frame : photometric_jitter(frame, jitter[size_t(t)]);
    out.patches_jittered.push_back(patchify(view, cfg.patch).template cast<S>());
    if (!clip.tracks.mouth_drive.empty())
      out.motion_keys.push_back(
          motion_key(clip.tracks.mouth_drive[size_t(t)], clip.tracks.blink[size_t(t)] != 0));
    else
      out.motion_keys.push_back(0);
  }
  out.audio = feats.concat.cast<S>();
  return out;
}

// Eval-time token extraction: no masking, no jitter, one encoder pass.
template <typename S>
struct ClipTokens {
  Tensor<S> z_id, z_amb, z_voc;  // [T, D]
  Tensor<S> audio;               // [T, D]
};

template <typename S>
ClipTokens<S> extract_tokens(const ParamStore<S>& ps, const ModelConfig& mc,
                             const std::vector<Tensor<S>>& frame_patches, const Tensor<S>& audio_concat) {
  const int T = int(frame_patches.size());
  auto plan = MaskPlan::all_visible(mc.n_patches);
  std::vector<Value<S>> id_rows, amb_rows, voc_rows;
  for (int t = 0; t < T; ++t) {
    auto enc = encode(ps, mc, Value<S>::constant(frame_patches[size_t(t)]), plan);
    id_rows.push_back(enc.z_id);
    amb_rows.push_back(enc.z_amb);
    voc_rows.push_back(enc.z_voc);
  }
  ClipTokens<S> out;
  out.z_id = concat_rows(id_rows).tensor();
  out.z_amb = concat_rows(amb_rows).tensor();
  out.z_voc = concat_rows(voc_rows).tensor();
  out.audio = audio_adapt(ps, mc, Value<S>::constant(audio_concat)).tensor();
  return out;
}

}  // namespace synclip
