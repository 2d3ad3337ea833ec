#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "synclip/config.hpp"
#include "synclip/optim.hpp"
#include "synclip/tensor.hpp"

namespace synclip {

// On-disk checkpoint: manifest.txt with `path shape dtype offset` lines plus a
// config echo and the step count, and params.bin holding the concatenated raw
// little-endian float32 arrays in manifest order. Optimizer moments are stored
// under optim/m/... and optim/v/... so resume is bit-exact.
struct Checkpoint {
  std::map<std::string, TensorF> arrays;
  int64_t step = 0;
  std::map<std::string, std::string> config_echo;
};

void save_checkpoint(const std::filesystem::path& dir, const ParamStore<float>& params, Adam<float>& opt,
                     const TrainConfig& cfg);

Checkpoint load_checkpoint(const std::filesystem::path& dir);

// Applies a loaded checkpoint; refuses with a per-array diff report when any
// name or shape disagrees with the freshly initialized stores.
void restore_checkpoint(const Checkpoint& ck, ParamStore<float>& params, Adam<float>& opt);

TrainConfig config_from_checkpoint(const Checkpoint& ck);

std::string read_manifest_text(const std::filesystem::path& dir);

}  // namespace synclip
