#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "synclip/config.hpp"
#include "synclip/synthgen.hpp"
#include "synclip/tensor.hpp"

namespace synclip {

// --- metric kernels (pure, float-domain) -----------------------------------

struct SimilarityResult {
  TensorF sim;  // [T,T], cosine
  bool had_zero_rows = false;
};

// Cosine similarity of every (audio frame, video frame) pair; zero-norm rows
// yield 0 similarity and are flagged.
SimilarityResult similarity_matrix(const TensorF& audio_tokens, const TensorF& video_tokens);

struct LagCurve {
  std::vector<int> offsets;    // [-lag_max .. lag_max]
  std::vector<double> scores;  // S(offset), mean over the valid diagonal band
};

LagCurve lag_curve(const TensorF& sim, int lag_max);

struct LagEstimate {
  int lag = 0;
  double in_sync_score = 0;  // S(0)
};

// argmax over the curve; ties break toward the smallest |offset|, then the
// negative one.
LagEstimate estimate_lag(const LagCurve& curve);

struct AccOffset {
  double acc_percent = 0;
  double mean_offset = 0;
};

AccOffset acc_offset(const std::vector<int>& predicted, const std::vector<int>& truth, int K);

// Rank the true candidate among distractors by descending cosine to the
// anchor; ties break toward the lower candidate index.
int retrieval_rank(const std::vector<float>& anchor, const std::vector<std::vector<float>>& candidates,
                   int true_index);

struct SyncConf {
  std::vector<double> conf;  // per window: median - min of the distance curve
  double mean = 0;
};

// SyncNet-style confidence on mean-pooled window embeddings with offsets in
// [-L, L] and window length w.
SyncConf sync_conf(const TensorF& audio_tokens, const TensorF& video_tokens, int window, int L);

struct WerResult {
  double wer = 0;
  int substitutions = 0;
  int deletions = 0;
  int insertions = 0;
};

// Minimal edit distance with the backtrace preference substitution >
// deletion > insertion.
WerResult wer(const std::vector<std::string>& hyp, const std::vector<std::string>& ref);

// --- evaluation driver -------------------------------------------------------

struct LagReportRow {
  int clip_index = 0;
  int true_lag = 0;
  int predicted_lag = 0;
  double in_sync_score = 0;
};

struct EvalReport {
  // lag protocol
  std::vector<LagReportRow> lag_rows;
  std::vector<int> acc_K = {1, 5, 15};
  std::vector<double> acc;     // percent, per K
  std::vector<double> offset;  // mean |err|, per K slot (same value repeated)
  // retrieval protocol
  int pool_size = 32;
  std::vector<double> r_precision;  // k = 1..3
  // sync-conf protocol
  double sync_conf_mean = 0;
  double sync_conf_shuffled = 0;
  // probe protocol
  double probe_accuracy = -1;
  std::string probe_labels;
};

struct EvalOptions {
  std::string protocol = "lag";  // lag | retrieval | sync_conf | probe | all
  std::string split = "test";
  int pool_size = 32;
  uint64_t seed = 99;
  int sync_window = 5;
  std::string probe_labels = "mouth_activity";  // or blink_rate
};

EvalReport eval_corpus(const std::filesystem::path& ckpt_dir, const std::filesystem::path& data_dir,
                       const EvalOptions& opt);

// In-memory variant used by tests and the ablation driver.
EvalReport eval_corpus_inmemory(const TrainConfig& cfg, const std::filesystem::path& ckpt_dir,
                                const std::vector<Clip>& corpus, const EvalOptions& opt);

std::string report_json(const EvalReport& report);
std::string report_table(const EvalReport& report);

// Frozen-feature linear probe: single linear map fitted by gradient descent on
// the train split of per-frame motion descriptors u_t = (z_voc + z_amb)/2;
// video-level prediction is the argmax of mean frame logits.
double probe_fit_eval(const std::vector<TensorF>& clip_features, const std::vector<int>& labels,
                      const std::vector<int>& is_train, int n_classes, uint64_t seed);

}  // namespace synclip
