#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "synclip/rng.hpp"
#include "synclip/tensor.hpp"

namespace synclip {

// Geometry in pixel units, half-open [x0,x1) x [y0,y1).
struct PixelBox {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  int width() const { return x1 - x0; }
  int height() const { return y1 - y0; }
  bool contains(int x, int y) const { return x >= x0 && x < x1 && y >= y0 && y < y1; }
  PixelBox shifted(int dx, int dy) const { return {x0 + dx, y0 + dy, x1 + dx, y1 + dy}; }
};

struct CorpusConfig {
  int C = 1;
  int H = 32;
  int W = 32;
  int patch = 4;
  int T = 16;
  int samples_per_frame = 160;
  int L = 3;    // frozen featurizer layers
  int d_a = 16; // per-layer feature width
  int lag_max = 5;
  float noise_level = 0.01f;

  int n_patches() const { return (H / patch) * (W / patch); }
  int concat_width() const { return L * d_a; }
};

struct IdentityParams {
  int identity_id = 0;
  uint64_t texture_seed = 0;
  PixelBox face_box;
  PixelBox mouth_box;  // strictly inside face_box
  PixelBox eye_band;
};

struct FactorTracks {
  std::vector<float> mouth_drive;  // m_t in [0,1], |m_{t+1}-m_t| <= 0.35
  std::vector<int> dx, dy;         // ambient offsets in pixels
  std::vector<uint8_t> blink;      // 0/1
  int length() const { return int(mouth_drive.size()); }
};

struct Clip {
  TensorF frames;  // [T,C,H,W], values in [0,1]
  std::vector<float> wave;
  FactorTracks tracks;
  IdentityParams identity;
  int true_lag = 0;
  uint64_t seed = 0;
  std::string split;  // train | val | test
};

// Per-layer streams plus the concatenated per-frame feature matrix.
struct LayeredAudioFeatures {
  std::vector<TensorF> layers;  // L tensors of [T, d_a]
  TensorF concat;               // [T, L*d_a]
};

IdentityParams make_identity(int identity_id, uint64_t corpus_seed, const CorpusConfig& cfg);
FactorTracks gen_tracks(Rng& rng, int T);
TensorF render_frame(const IdentityParams& id, float mouth_drive, int dx, int dy, bool blink,
                     const CorpusConfig& cfg);
std::vector<float> synth_audio(const FactorTracks& tracks, float noise_level, Rng& rng,
                               const CorpusConfig& cfg);
float carrier_frame_rms();
// frozen featurizer constants (for closed-form band-energy checks)
double band_amp(int band);
double band_floor();

LayeredAudioFeatures audio_featurize(const std::vector<float>& wave, int T, int L, const CorpusConfig& cfg);

Clip inject_lag(Clip clip, int delta, const CorpusConfig& cfg);

std::vector<Clip> gen_corpus(uint64_t seed, int n_identities, int clips_per_identity, int T,
                             const CorpusConfig& cfg);

// Corpus-level generation inputs; stored at the corpus root so ground-truth
// tracks and identity geometry can be re-derived when loading.
struct CorpusMeta {
  uint64_t seed = 0;
  int n_identities = 0;
  int clips_per_identity = 0;
  int T = 0;
};

void save_corpus(const std::vector<Clip>& corpus, const CorpusMeta& meta, const std::filesystem::path& dir,
                 const CorpusConfig& cfg);
std::vector<Clip> load_corpus(const std::filesystem::path& dir, const CorpusConfig& cfg);
CorpusMeta read_corpus_meta(const std::filesystem::path& dir);

// Quantized (mouth_drive, blink) bucket used as the shuffle eligibility key.
int motion_key(float mouth_drive, bool blink);

// Rows of the mouth box whose minimum is within `rel` of the box minimum,
// measured relative to the box value range. Invariant under the photometric
// affine map as long as the mouth stays the darkest structure in the box.
int dark_extent_rel(const TensorF& frame, const PixelBox& mouth_box, float rel = 0.15f);
// Clean-frame variant: rows containing any pixel below an absolute threshold.
int dark_extent_abs(const TensorF& frame, const PixelBox& mouth_box, float thresh = 0.375f);

}  // namespace synclip
