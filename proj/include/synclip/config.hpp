#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "synclip/losses.hpp"
#include "synclip/masking.hpp"
#include "synclip/model.hpp"
#include "synclip/synthgen.hpp"

namespace synclip {

// Flat experiment configuration. Serialized as `key = value` lines with
// dotted keys; unknown keys are rejected.
struct TrainConfig {
  uint64_t seed = 7;
  int steps = 2000;
  int batch_clips = 2;  // grouped as same-identity pairs

  // corpus
  int corpus_identities = 8;
  int corpus_clips_per_id = 8;
  int corpus_T = 16;
  double corpus_noise = 0.01;
  int corpus_lag_max = 5;

  // model
  int model_D = 64;
  int enc_blocks = 4;
  int enc_heads = 4;
  int dec_blocks = 2;
  int dec_heads = 4;
  int adapter_hidden = 128;
  bool final_ln = true;

  // masking / views
  std::string mask_mode = "two_bypass";  // two_bypass | uniform_only | face_only
  bool mask_photometric = true;
  double mask_ratio = 0.75;
  double face_weight = 3.0;
  JitterRanges jitter;

  // audio + decoder ablations
  std::string audio_mode = "concat_adapter";  // concat_adapter | last_layer_only
  bool cross_attention = true;

  LossWeights loss;

  // optimizer
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double clip_norm = 1.0;
  int warmup_steps = 100;

  // artifacts
  int ckpt_every = 500;
  std::string out_dir = "run";
  std::string data_dir;  // empty: generate the corpus in memory

  void validate() const;
  MaskMode mask_mode_enum() const;
};

// key = value mapping (both directions), shared by files and flag overrides
void config_set(TrainConfig& cfg, const std::string& key, const std::string& value);
std::map<std::string, std::string> config_items(const TrainConfig& cfg);

TrainConfig load_config_file(const std::filesystem::path& path);
void apply_config_line(TrainConfig& cfg, const std::string& line);  // "key = value"
void save_config_file(const TrainConfig& cfg, const std::filesystem::path& path);

CorpusConfig to_corpus_config(const TrainConfig& cfg);
ModelConfig to_model_config(const TrainConfig& cfg);

// Appendix-grid variant switches: A1 uniform-only, A2 face-only, A3 two-bypass
// without photometric jitter, B1 last-layer audio, C1 no cross-attention,
// "ours" leaves the defaults.
void apply_variant(TrainConfig& cfg, const std::string& variant);

}  // namespace synclip
