#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <random>
#include <vector>

#include "ctsynth/adam.hpp"
#include "ctsynth/checkpoint.hpp"
#include "ctsynth/config.hpp"
#include "ctsynth/losses.hpp"
#include "ctsynth/memory.hpp"
#include "ctsynth/params.hpp"
#include "ctsynth/volume.hpp"

namespace ctsynth {

struct Model {
  ParamSet<float> sint;
  ParamSet<float> pint;
  MemoryBank bank;  // empty when the memory is disabled
};

/// Independent 64-bit seed for sub-stream `stream` of `seed`.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

Model init_model(const TrainConfig& cfg);

/// Centered box of central_fraction of the extent (at least `patch`):
/// returns [first, last] valid crop start offsets along an axis of size n.
std::pair<int, int> crop_start_range(int n, int patch, double central_fraction);

/// patch x patch x sample_slices() crops; volume choice, in-plane offsets and
/// z offset are drawn from rng in that order per crop.
std::vector<Volume> sample_batch(const std::vector<Volume>& volumes, const TrainConfig& cfg, std::mt19937_64& rng);

/// Every r-th slice starting with the first (direct subsampling).
Volume subsample(const Volume& v, int r);

/// One optimization step. Stage 1: internal losses on the subsampled crops
/// plus memory regularizers. Stage 2 adds the cross-view consistency terms
/// over N incremental passes on the crops themselves.
LossReport train_step(Model& model, AdamState& adam, const std::vector<Volume>& batch, const TrainConfig& cfg,
                      bool stage2, double lr);

inline LossReport stage1_step(Model& model, AdamState& adam, const std::vector<Volume>& batch, const TrainConfig& cfg,
                              double lr) {
  return train_step(model, adam, batch, cfg, false, lr);
}
inline LossReport stage2_step(Model& model, AdamState& adam, const std::vector<Volume>& batch, const TrainConfig& cfg,
                              double lr) {
  return train_step(model, adam, batch, cfg, true, lr);
}

/// O^1 = f(v), O^k = f(O^{k-1}); each pass maps L slices to r*L - r + 1.
Volume incremental_interpolate(const std::function<Volume(const Volume&)>& model_fn, const Volume& v, int r, int n);

struct StepRecord {
  int epoch = 0;
  std::int64_t step = 0;
  double lr = 0.0;
  double wall_seconds = 0.0;
  LossReport loss;
};

std::string to_json_line(const StepRecord& rec);

struct TrainOptions {
  /// Checkpoints go here when non-empty: epoch_NNN.ckpt per epoch and model.ckpt.
  std::filesystem::path out_dir;
  /// JSON-lines step log.
  std::ostream* log = nullptr;
  /// Continue from a checkpoint (its step/epoch counters and Adam state).
  const Checkpoint* resume = nullptr;
  std::function<void(const StepRecord&)> on_step;
};

struct TrainResult {
  Model model;
  AdamState adam;
  std::int64_t step = 0;
  int epoch = 0;
  std::vector<StepRecord> history;
};

TrainResult train(const TrainConfig& cfg, const std::vector<Volume>& volumes, const TrainOptions& options = {});

Checkpoint make_checkpoint(const TrainConfig& cfg, const Model& model, std::int64_t step, int epoch,
                           const AdamState* adam = nullptr);

struct InferResult {
  Volume axial;
  Volume coronal;
  Volume sagittal;
  std::optional<Volume> fused;
};

InferResult infer(const Model& model, const TrainConfig& cfg, const Volume& v, bool fuse_views);

}  // namespace ctsynth
