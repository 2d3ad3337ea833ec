#pragma once

#include <filesystem>
#include <optional>

#include "synclip/checkpoint.hpp"
#include "synclip/config.hpp"
#include "synclip/losses.hpp"

namespace synclip {

struct TrainResult {
  std::filesystem::path final_checkpoint;
  std::filesystem::path metrics_log;
  LossReport last_report;
  int64_t steps_done = 0;
};

// Deterministic pretraining loop: corpus -> masking -> model -> losses ->
// optimizer, with periodic checkpoints and a JSON-lines metrics log. All
// per-step randomness is derived from (seed, step), so a resumed run is
// bit-identical to a straight one.
TrainResult train(const TrainConfig& cfg);

// Continue a checkpoint up to cfg.steps. The checkpoint's config echo must
// match cfg on every model/corpus/loss key (paths may differ).
TrainResult train_resume(const std::filesystem::path& ckpt_dir, const TrainConfig& cfg);

// One full pretraining loss graph for a prepared batch; shared with tests and
// the gradient-check command.
LossBundle<float> pretrain_step_loss(const ParamStore<float>& ps, const ModelConfig& mc,
                                     const std::vector<PreparedClip<float>>& batch,
                                     const std::vector<const PositiveSet*>& positives,
                                     const StepRandomness& rand, MaskMode mode, const LossWeights& lw);

}  // namespace synclip
