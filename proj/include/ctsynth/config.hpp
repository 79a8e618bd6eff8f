#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "ctsynth/losses.hpp"
#include "ctsynth/networks.hpp"
#include "ctsynth/volume.hpp"

namespace ctsynth {

struct TrainConfig {
  NetConfig net;              // net.r is the upsampling factor
  int memory_items = 10;      // m
  double gamma = 0.40;        // consistency fraction; 0.25 is a common alternative
  int passes = 2;             // N incremental passes
  bool cmd_mask_originals = true;
  bool truncate_incremental = false;  // gradients through the first pass only
  bool use_memory = true;
  bool wavelet_loss = true;
  bool fusion_include_axial_at_originals = false;
  double memory_alpha = 1.0;
  LossWeights weights;

  int epochs = 50;
  int stage1_epochs = 10;
  int steps_per_epoch = 20;
  int batch_size = 4;
  double lr = 1e-4;
  double lr_decay = 0.1;
  int lr_decay_epoch = 10;  // lr is multiplied by lr_decay for epochs > this
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;

  int patch = 32;
  int slices_per_sample = 0;     // 0 selects 7 for r = 2, 3 and 9 for r = 4 (2r + 1 otherwise)
  double central_fraction = 0.5;  // crops stay inside this centered fraction of each axis

  DegradationSpec degradation;  // evaluation-time LR construction
  std::uint64_t seed = 7;

  int r() const { return net.r; }
  int sample_slices() const;
  void validate() const;
};

/// JSON mirror of TrainConfig. Parsing starts from the defaults and rejects
/// unknown keys.
std::string to_json(const TrainConfig& cfg, int indent = 2);
TrainConfig config_from_json(const std::string& text);
TrainConfig load_config(const std::filesystem::path& path);

}  // namespace ctsynth
