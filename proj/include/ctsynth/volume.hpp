#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ctsynth/tensor.hpp"

namespace ctsynth {

enum class ViewAxis { axial, coronal, sagittal };

std::string_view to_string(ViewAxis view);
ViewAxis parse_view(std::string_view name);

/// Voxel size in millimetres along y (rows), x (columns) and z (slices).
struct Spacing {
  double sy = 1.0;
  double sx = 1.0;
  double sz = 1.0;
  bool operator==(const Spacing&) const = default;
};

struct IntensityRange {
  double lo = 0.0;
  double hi = 1.0;
  double width() const { return hi - lo; }
  bool operator==(const IntensityRange&) const = default;
};

struct VolumeMeta {
  Spacing spacing{};
  IntensityRange range{};
  bool operator==(const VolumeMeta&) const = default;
};

/// Dense h x w x l scalar field. Storage is z-major, then y, then x, which is
/// also the [l, h, w] layout used when a volume enters a graph.
///
/// Formulas elsewhere use 1-based slice indices; every accessor here is 0-based.
class Volume {
 public:
  Volume(int height, int width, int slices, VolumeMeta meta = {});
  /// Rejects non-finite voxels and clamps the rest into meta.range.
  Volume(int height, int width, int slices, std::vector<float> voxels, VolumeMeta meta = {});

  int height() const noexcept { return h_; }
  int width() const noexcept { return w_; }
  int slices() const noexcept { return l_; }
  const VolumeMeta& meta() const noexcept { return meta_; }
  const Spacing& spacing() const noexcept { return meta_.spacing; }
  const IntensityRange& range() const noexcept { return meta_.range; }

  float at(int y, int x, int z) const { return data_[index(y, x, z)]; }
  /// Writes are clamped into the intensity range.
  void set(int y, int x, int z, float v);

  std::span<const float> voxels() const noexcept { return data_; }
  std::span<const float> slice(int z) const;
  std::size_t plane_size() const noexcept { return static_cast<std::size_t>(h_) * w_; }

  bool same_shape(const Volume& other) const {
    return h_ == other.h_ && w_ == other.w_ && l_ == other.l_;
  }
  std::string shape_string() const;

  bool operator==(const Volume& other) const = default;

 private:
  std::size_t index(int y, int x, int z) const {
    return (static_cast<std::size_t>(z) * h_ + y) * w_ + x;
  }

  int h_ = 0;
  int w_ = 0;
  int l_ = 0;
  VolumeMeta meta_{};
  std::vector<float> data_;
};

/// One 2-D plane of a volume. Axial: h x w (fixed z). Coronal: w x l (fixed y).
/// Sagittal: h x l (fixed x). index is the 1-based source plane.
struct ViewImage {
  Tensor<float> data;
  ViewAxis view = ViewAxis::axial;
  int index = 1;
};

std::vector<ViewImage> decompose(const Volume& v, ViewAxis view);

/// Inverse of decompose. Images may arrive in any order; their indices must
/// cover 1..K exactly once and share one view and one shape.
Volume restack(std::vector<ViewImage> images, VolumeMeta meta = {});

enum class DegradationMode { direct_subsample, blur_noise };

std::string_view to_string(DegradationMode mode);
DegradationMode parse_degradation(std::string_view name);

struct DegradationSpec {
  DegradationMode mode = DegradationMode::direct_subsample;
  int factor = 2;
  /// Gaussian sigma along z in slices; <= 0 selects factor / 2.
  double blur_sigma = 0.0;
  /// Noise std as a fraction of the intensity range width.
  double noise_sigma = 0.01;
  std::uint64_t seed = 0;
};

/// Number of slices kept when subsampling l slices by r: floor((l-1)/r) + 1.
int subsampled_length(int slices, int r);
/// Slices produced when r-1 planes are inserted between each pair: r*l - r + 1.
int upsampled_length(int slices, int r);

/// Low-resolution volume: keeps slice (k-1)*r + 1 for k = 1.. (1-based),
/// optionally after a z-blur, followed by seeded noise and clamping.
Volume degrade(const Volume& v, const DegradationSpec& spec);

/// Voxelwise three-view fusion. At original slice positions (1-based z with
/// z % r == 1) only the coronal and sagittal volumes are averaged unless
/// include_axial_at_originals is set; elsewhere all three are averaged.
Volume fuse(const Volume& oa, const Volume& oc, const Volume& os, int r, bool include_axial_at_originals = false);

/// Graph interop: [1, l, h, w].
template <typename T>
Tensor<T> to_tensor(const Volume& v);
/// Accepts [l, h, w] or [1, l, h, w].
template <typename T>
Volume from_tensor(const Tensor<T>& t, VolumeMeta meta = {});

}  // namespace ctsynth
