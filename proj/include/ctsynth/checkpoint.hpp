#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>

#include "ctsynth/adam.hpp"
#include "ctsynth/config.hpp"
#include "ctsynth/memory.hpp"
#include "ctsynth/params.hpp"

namespace ctsynth {

/// Everything needed for inference, plus optimizer state for resuming.
struct Checkpoint {
  TrainConfig config;
  ParamSet<float> sint;
  ParamSet<float> pint;
  MemoryBank bank;
  std::int64_t step = 0;
  int epoch = 0;
  std::optional<AdamState> adam;
};

// .ckpt layout: one JSON manifest line (config, step, epoch, ordered tensor
// names and shapes, memory bank shape, Adam scalars) followed by the tensors'
// little-endian float32 payloads concatenated in manifest order.

void save_checkpoint(const Checkpoint& ckpt, std::ostream& out);
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(std::istream& in);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace ctsynth
