#include "ctsynth/volume.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

namespace ctsynth {

std::string_view to_string(ViewAxis view) {
  switch (view) {
    case ViewAxis::axial:
      return "axial";
    case ViewAxis::coronal:
      return "coronal";
    case ViewAxis::sagittal:
      return "sagittal";
  }
  return "?";
}

ViewAxis parse_view(std::string_view name) {
  if (name == "axial") return ViewAxis::axial;
  if (name == "coronal") return ViewAxis::coronal;
  if (name == "sagittal") return ViewAxis::sagittal;
  fail(ErrorKind::usage, "unknown view '" + std::string(name) + "'");
}

std::string_view to_string(DegradationMode mode) {
  return mode == DegradationMode::direct_subsample ? "direct_subsample" : "blur_noise";
}

DegradationMode parse_degradation(std::string_view name) {
  if (name == "direct_subsample") return DegradationMode::direct_subsample;
  if (name == "blur_noise") return DegradationMode::blur_noise;
  fail(ErrorKind::usage, "unknown degradation mode '" + std::string(name) + "'");
}

namespace {

void check_meta(const VolumeMeta& meta) {
  require(std::isfinite(meta.range.lo) && std::isfinite(meta.range.hi) && meta.range.lo < meta.range.hi,
          ErrorKind::data, "intensity range must satisfy lo < hi");
  require(meta.spacing.sy > 0 && meta.spacing.sx > 0 && meta.spacing.sz > 0, ErrorKind::data,
          "voxel spacing must be positive");
}

float clamp_to(float v, const IntensityRange& r) {
  return std::clamp(v, static_cast<float>(r.lo), static_cast<float>(r.hi));
}

}  // namespace

Volume::Volume(int height, int width, int slices, VolumeMeta meta)
    : Volume(height, width, slices,
             std::vector<float>(static_cast<std::size_t>(std::max(height, 0)) * std::max(width, 0) *
                                    std::max(slices, 0),
                                0.0f),
             meta) {}

Volume::Volume(int height, int width, int slices, std::vector<float> voxels, VolumeMeta meta)
    : h_(height), w_(width), l_(slices), meta_(meta), data_(std::move(voxels)) {
  require(h_ >= 1 && w_ >= 1 && l_ >= 1, ErrorKind::shape, "volume dimensions must be >= 1, got " + shape_string());
  require(data_.size() == static_cast<std::size_t>(h_) * w_ * l_, ErrorKind::data,
          "voxel count " + std::to_string(data_.size()) + " does not match shape " + shape_string());
  check_meta(meta_);
  for (float& v : data_) {
    require(std::isfinite(v), ErrorKind::data, "volume contains a non-finite voxel");
    v = clamp_to(v, meta_.range);
  }
}

void Volume::set(int y, int x, int z, float v) {
  require(std::isfinite(v), ErrorKind::data, "cannot write a non-finite voxel");
  data_[index(y, x, z)] = clamp_to(v, meta_.range);
}

std::span<const float> Volume::slice(int z) const {
  require(z >= 0 && z < l_, ErrorKind::shape, "slice index out of range");
  return std::span<const float>(data_).subspan(static_cast<std::size_t>(z) * plane_size(), plane_size());
}

std::string Volume::shape_string() const {
  std::ostringstream os;
  os << h_ << 'x' << w_ << 'x' << l_;
  return os.str();
}

std::vector<ViewImage> decompose(const Volume& v, ViewAxis view) {
  const int h = v.height(), w = v.width(), l = v.slices();
  std::vector<ViewImage> out;
  switch (view) {
    case ViewAxis::axial:
      for (int z = 0; z < l; ++z) {
        auto s = v.slice(z);
        out.push_back({Tensor<float>({h, w}, std::vector<float>(s.begin(), s.end())), view, z + 1});
      }
      break;
    case ViewAxis::coronal:
      for (int y = 0; y < h; ++y) {
        Tensor<float> img({w, l});
        for (int x = 0; x < w; ++x)
          for (int z = 0; z < l; ++z) img.at(x, z) = v.at(y, x, z);
        out.push_back({std::move(img), view, y + 1});
      }
      break;
    case ViewAxis::sagittal:
      for (int x = 0; x < w; ++x) {
        Tensor<float> img({h, l});
        for (int y = 0; y < h; ++y)
          for (int z = 0; z < l; ++z) img.at(y, z) = v.at(y, x, z);
        out.push_back({std::move(img), view, x + 1});
      }
      break;
  }
  return out;
}

Volume restack(std::vector<ViewImage> images, VolumeMeta meta) {
  require(!images.empty(), ErrorKind::shape, "restack: no images");
  const ViewAxis view = images.front().view;
  const Shape shape = images.front().data.shape();
  require(shape.size() == 2, ErrorKind::shape, "restack: images must be 2-D");
  for (const auto& im : images) {
    require(im.view == view, ErrorKind::shape, "restack: mixed views");
    require(im.data.shape() == shape, ErrorKind::shape, "restack: mixed image shapes");
  }
  std::sort(images.begin(), images.end(), [](const ViewImage& a, const ViewImage& b) { return a.index < b.index; });
  const int k = static_cast<int>(images.size());
  for (int i = 0; i < k; ++i)
    require(images[static_cast<std::size_t>(i)].index == i + 1, ErrorKind::shape,
            "restack: image indices must cover 1.." + std::to_string(k) + " without gaps or repeats");

  int h = 0, w = 0, l = 0;
  switch (view) {
    case ViewAxis::axial:
      h = shape[0], w = shape[1], l = k;
      break;
    case ViewAxis::coronal:
      h = k, w = shape[0], l = shape[1];
      break;
    case ViewAxis::sagittal:
      h = shape[0], w = k, l = shape[1];
      break;
  }
  std::vector<float> vox(static_cast<std::size_t>(h) * w * l);
  auto idx = [&](int y, int x, int z) { return (static_cast<std::size_t>(z) * h + y) * w + x; };
  for (int i = 0; i < k; ++i) {
    const Tensor<float>& img = images[static_cast<std::size_t>(i)].data;
    for (int a = 0; a < shape[0]; ++a)
      for (int b = 0; b < shape[1]; ++b) {
        const float v = img.at(a, b);
        switch (view) {
          case ViewAxis::axial:
            vox[idx(a, b, i)] = v;
            break;
          case ViewAxis::coronal:
            vox[idx(i, a, b)] = v;
            break;
          case ViewAxis::sagittal:
            vox[idx(a, i, b)] = v;
            break;
        }
      }
  }
  return Volume(h, w, l, std::move(vox), meta);
}

int subsampled_length(int slices, int r) { return (slices - 1) / r + 1; }

int upsampled_length(int slices, int r) { return r * slices - r + 1; }

Volume degrade(const Volume& v, const DegradationSpec& spec) {
  const int r = spec.factor;
  require(r >= 2, ErrorKind::usage, "degradation factor must be >= 2");
  require(v.slices() >= r, ErrorKind::shape,
          "degrade: volume has " + std::to_string(v.slices()) + " slices, fewer than factor " + std::to_string(r));
  const int l = v.slices();
  const std::size_t plane = v.plane_size();

  std::vector<double> source(v.voxels().begin(), v.voxels().end());
  if (spec.mode == DegradationMode::blur_noise) {
    const double sigma = spec.blur_sigma > 0 ? spec.blur_sigma : r / 2.0;
    const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
    double total = 0.0;
    for (int i = -radius; i <= radius; ++i) {
      const double kv = std::exp(-0.5 * (i / sigma) * (i / sigma));
      kernel[static_cast<std::size_t>(i + radius)] = kv;
      total += kv;
    }
    for (double& kv : kernel) kv /= total;
    std::vector<double> blurred(source.size(), 0.0);
    for (int z = 0; z < l; ++z)
      for (int i = -radius; i <= radius; ++i) {
        const int zz = std::clamp(z + i, 0, l - 1);
        const double kv = kernel[static_cast<std::size_t>(i + radius)];
        const double* src = source.data() + static_cast<std::size_t>(zz) * plane;
        double* dst = blurred.data() + static_cast<std::size_t>(z) * plane;
        for (std::size_t p = 0; p < plane; ++p) dst[p] += kv * src[p];
      }
    source.swap(blurred);
  }

  const int lo = subsampled_length(l, r);
  std::vector<float> out(static_cast<std::size_t>(lo) * plane);
  for (int k = 0; k < lo; ++k) {
    const double* src = source.data() + static_cast<std::size_t>(k) * r * plane;
    for (std::size_t p = 0; p < plane; ++p) out[static_cast<std::size_t>(k) * plane + p] = static_cast<float>(src[p]);
  }

  if (spec.mode == DegradationMode::blur_noise && spec.noise_sigma > 0) {
    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> noise(0.0, spec.noise_sigma * v.range().width());
    for (float& x : out) x = static_cast<float>(x + noise(rng));
  }

  VolumeMeta meta = v.meta();
  meta.spacing.sz *= r;
  return Volume(v.height(), v.width(), lo, std::move(out), meta);
}

Volume fuse(const Volume& oa, const Volume& oc, const Volume& os, int r, bool include_axial_at_originals) {
  require(oa.same_shape(oc) && oa.same_shape(os), ErrorKind::shape,
          "fuse: shape mismatch " + oa.shape_string() + ", " + oc.shape_string() + ", " + os.shape_string());
  require(r >= 2, ErrorKind::usage, "fuse: r must be >= 2");
  require((oa.slices() - 1) % r == 0, ErrorKind::shape,
          "fuse: slice count " + std::to_string(oa.slices()) + " is not of the form r*l - r + 1");
  const std::size_t plane = oa.plane_size();
  std::vector<float> out(oa.voxels().size());
  for (int z = 0; z < oa.slices(); ++z) {
    // 1-based z % r == 1  <=>  0-based z % r == 0
    const bool original = (z % r) == 0;
    for (std::size_t p = 0; p < plane; ++p) {
      const std::size_t i = static_cast<std::size_t>(z) * plane + p;
      const double a = oa.voxels()[i], c = oc.voxels()[i], s = os.voxels()[i];
      out[i] = static_cast<float>(original && !include_axial_at_originals ? (c + s) / 2.0 : (a + c + s) / 3.0);
    }
  }
  return Volume(oa.height(), oa.width(), oa.slices(), std::move(out), oa.meta());
}

template <typename T>
Tensor<T> to_tensor(const Volume& v) {
  std::vector<T> data(v.voxels().begin(), v.voxels().end());
  return Tensor<T>({1, v.slices(), v.height(), v.width()}, std::move(data));
}

template <typename T>
Volume from_tensor(const Tensor<T>& t, VolumeMeta meta) {
  int l = 0, h = 0, w = 0;
  if (t.rank() == 3) {
    l = t.dim(0), h = t.dim(1), w = t.dim(2);
  } else {
    require(t.rank() == 4 && t.dim(0) == 1, ErrorKind::shape,
            "from_tensor: expected [l,h,w] or [1,l,h,w], got " + shape_str(t.shape()));
    l = t.dim(1), h = t.dim(2), w = t.dim(3);
  }
  std::vector<float> vox(t.values().begin(), t.values().end());
  return Volume(h, w, l, std::move(vox), meta);
}

template Tensor<float> to_tensor<float>(const Volume&);
template Tensor<double> to_tensor<double>(const Volume&);
template Volume from_tensor<float>(const Tensor<float>&, VolumeMeta);
template Volume from_tensor<double>(const Tensor<double>&, VolumeMeta);

}  // namespace ctsynth
