#pragma once

#include "synclip/config.hpp"
#include "synclip/gradcheck.hpp"

namespace synclip {

// Reverse-mode vs central-difference verification of the complete pretraining
// loss (both decode passes, contrastive, covariance, identity shuffle) on a
// deterministic 2-clip, 2-frame micro-batch in double precision.
GradCheckReport full_loss_grad_check(const TrainConfig& cfg, const GradCheckOptions& opt);

std::string grad_check_table(const GradCheckReport& report);

}  // namespace synclip
