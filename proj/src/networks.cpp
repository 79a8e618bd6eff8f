#include "ctsynth/networks.hpp"

#include <algorithm>
#include <random>

#include "ctsynth/ops.hpp"

namespace ctsynth {

void NetConfig::validate() const {
  require(r >= 2, ErrorKind::usage, "net: r must be >= 2");
  require(base_channels >= 1 && blocks_per_group >= 0 && s2d_block >= 1, ErrorKind::usage,
          "net: channel/block counts must be positive");
  require(attention_reduction >= 1 && base_channels % attention_reduction == 0, ErrorKind::usage,
          "net: base_channels must be divisible by attention_reduction");
  require(base_channels % (s2d_block * s2d_block) == 0, ErrorKind::usage,
          "net: base_channels must be a multiple of s2d_block^2");
  require(pint_channels >= 1 && pint_channels % attention_reduction == 0, ErrorKind::usage,
          "net: pint_channels must be divisible by attention_reduction");
  require(pint_groups >= 0 && pint_blocks >= 0, ErrorKind::usage, "net: pint group/block counts must be >= 0");
}

namespace {

using Rng = std::mt19937_64;

void add_conv(ParamSet<float>& ps, const std::string& name, int cout, int cin, int k, Rng& rng, bool zero = false) {
  ps.add(name + ".w", zero ? Tensor<float>({cout, cin, k, k}) : kaiming_uniform<float>({cout, cin, k, k}, cin * k * k, rng));
  ps.add(name + ".b", Tensor<float>({cout}));
}

void add_linear(ParamSet<float>& ps, const std::string& name, int out, int in, Rng& rng) {
  ps.add(name + ".w", kaiming_uniform<float>({out, in}, in, rng));
  ps.add(name + ".b", Tensor<float>({out}));
}

void add_block(ParamSet<float>& ps, const std::string& prefix, int c, int reduction, Rng& rng) {
  add_conv(ps, prefix + ".conv1", c, c, 3, rng);
  add_conv(ps, prefix + ".conv2", c, c, 3, rng, /*zero=*/true);
  add_linear(ps, prefix + ".ca.fc1", c / reduction, c, rng);
  add_linear(ps, prefix + ".ca.fc2", c, c / reduction, rng);
}

std::string block_name(const std::string& group, int k) { return group + ".block" + std::to_string(k); }

template <typename T>
ad::Var conv(ad::Graph<T>& g, const BoundParams<T>& p, const std::string& name, ad::Var x) {
  return ad::conv2d(g, x, p(name + ".w"), p(name + ".b"));
}

template <typename T>
ad::Var run_blocks(ad::Graph<T>& g, const BoundParams<T>& p, const std::string& group, int blocks, ad::Var x) {
  for (int k = 0; k < blocks; ++k) x = residual_block(g, p, block_name(group, k), x);
  return x;
}

// Linear blend of the bracketing slices at t / r, t = 1..r-1 -> [B, r-1, H, W].
template <typename T>
ad::Var blend(ad::Graph<T>& g, ad::Var xi, ad::Var xi1, int r) {
  std::vector<ad::Var> planes;
  for (int t = 1; t < r; ++t) {
    const double a = static_cast<double>(t) / r;
    planes.push_back(ad::add(g, ad::scale(g, xi, 1.0 - a), ad::scale(g, xi1, a)));
  }
  return planes.size() == 1 ? planes.front() : ad::concat(g, planes, 1);
}

}  // namespace

ParamSet<float> build_sint(const NetConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  ParamSet<float> ps;
  const int c = cfg.base_channels, s = cfg.s2d_block;
  add_conv(ps, "sint.head", cfg.head_channels(), 1, 3, rng);
  add_conv(ps, "sint.fuse", c, 2 * c, 3, rng);
  for (int gi = 1; gi <= NetConfig::kGroups; ++gi)
    for (int k = 0; k < cfg.blocks_per_group; ++k)
      add_block(ps, block_name("sint.enc" + std::to_string(gi), k), c, cfg.attention_reduction, rng);
  add_conv(ps, "sint.e3", c, c, 3, rng);
  for (int gi = 1; gi <= NetConfig::kGroups; ++gi) {
    const std::string dec = "sint.dec" + std::to_string(gi);
    if (gi > 1) add_conv(ps, dec + ".merge", c, 2 * c, 1, rng);
    add_conv(ps, dec + ".conv", c, c, 3, rng);
    for (int k = 0; k < cfg.blocks_per_group; ++k) add_block(ps, block_name(dec, k), c, cfg.attention_reduction, rng);
  }
  add_conv(ps, "sint.tail", (cfg.r - 1) * s * s, c, 3, rng, /*zero=*/true);
  return ps;
}

ParamSet<float> build_pint(const NetConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  ParamSet<float> ps;
  const int c = cfg.pint_channels;
  add_conv(ps, "pint.head", c, 1, 3, rng);
  for (int gi = 1; gi <= cfg.pint_groups; ++gi) {
    const std::string group = "pint.group" + std::to_string(gi);
    for (int k = 0; k < cfg.pint_blocks; ++k) add_block(ps, block_name(group, k), c, cfg.attention_reduction, rng);
    add_conv(ps, group + ".conv", c, c, 3, rng);
  }
  add_conv(ps, "pint.body", c, c, 3, rng);
  add_conv(ps, "pint.tail", cfg.pint_keep_originals ? cfg.r - 1 : cfg.r, c, 3, rng, /*zero=*/true);
  return ps;
}

template <typename T>
ad::Var residual_block(ad::Graph<T>& g, const BoundParams<T>& p, const std::string& prefix, ad::Var x) {
  ad::Var u = conv(g, p, prefix + ".conv2", ad::relu(g, conv(g, p, prefix + ".conv1", x)));
  ad::Var pooled = ad::global_avg_pool(g, u);
  ad::Var hidden = ad::relu(g, ad::linear(g, pooled, p(prefix + ".ca.fc1.w"), p(prefix + ".ca.fc1.b")));
  ad::Var gate = ad::sigmoid(g, ad::linear(g, hidden, p(prefix + ".ca.fc2.w"), p(prefix + ".ca.fc2.b")));
  return ad::add(g, x, ad::mul_channels(g, u, gate));
}

template <typename T>
SIntOutput<T> sint_forward(ad::Graph<T>& g, const BoundParams<T>& p, ad::Var bank, ad::Var xi, ad::Var xi1,
                           const NetConfig& cfg) {
  const Shape& xs = g.shape(xi);
  require(xs.size() == 4 && xs[1] == 1 && g.shape(xi1) == xs, ErrorKind::shape,
          "sint: slices must both be [B, 1, H, W], got " + shape_str(xs) + " and " + shape_str(g.shape(xi1)));
  const int s = cfg.s2d_block;
  require(xs[2] % s == 0 && xs[3] % s == 0, ErrorKind::shape,
          "sint: slice size " + std::to_string(xs[2]) + "x" + std::to_string(xs[3]) + " not divisible by s2d_block " +
              std::to_string(s));
  const int b = xs[0], lh = xs[2] / s, lw = xs[3] / s;

  ad::Var fi = ad::space_to_depth(g, conv(g, p, "sint.head", xi), s);
  ad::Var fi1 = ad::space_to_depth(g, conv(g, p, "sint.head", xi1), s);
  ad::Var e0 = conv(g, p, "sint.fuse", ad::concat_channels(g, fi, fi1));

  std::vector<ad::Var> enc;
  ad::Var e = e0;
  for (int gi = 1; gi <= NetConfig::kGroups; ++gi) {
    e = run_blocks(g, p, "sint.enc" + std::to_string(gi), cfg.blocks_per_group, e);
    enc.push_back(e);
  }
  SIntOutput<T> out;
  out.e3 = conv(g, p, "sint.e3", ad::add(g, e0, enc.back()));
  ad::Var u = out.e3;
  if (bank.valid()) {
    out.read = memory_read(g, out.e3, bank);
    u = feature_map(g, out.read.recon, b, lh, lw);
  }
  for (int gi = 1; gi <= NetConfig::kGroups; ++gi) {
    const std::string dec = "sint.dec" + std::to_string(gi);
    // skip inputs: E2 into the second module, E1 into the third
    if (gi > 1) u = conv(g, p, dec + ".merge", ad::concat_channels(g, u, enc[static_cast<std::size_t>(NetConfig::kGroups - gi)]));
    u = run_blocks(g, p, dec, cfg.blocks_per_group, conv(g, p, dec + ".conv", u));
  }
  out.slices = ad::depth_to_space(g, conv(g, p, "sint.tail", u), s);
  if (cfg.global_skip) out.slices = ad::add(g, out.slices, blend(g, xi, xi1, cfg.r));
  return out;
}

template <typename T>
SIntVolume<T> sint_volume(ad::Graph<T>& g, const BoundParams<T>& p, ad::Var bank, ad::Var vol,
                          const NetConfig& cfg) {
  const Shape& vs = g.shape(vol);
  require(vs.size() == 4 && vs[1] >= 2, ErrorKind::shape, "sint_volume: need [B, l, H, W] with l >= 2, got " + shape_str(vs));
  const int b = vs[0], l = vs[1], h = vs[2], w = vs[3];
  ad::Var lower = ad::reshape(g, ad::narrow(g, vol, 1, 0, l - 1), {b * (l - 1), 1, h, w});
  ad::Var upper = ad::reshape(g, ad::narrow(g, vol, 1, 1, l - 1), {b * (l - 1), 1, h, w});
  SIntVolume<T> out;
  out.pairs = sint_forward(g, p, bank, lower, upper, cfg);
  out.volume = ad::interleave_slices(g, vol, out.pairs.slices, cfg.r);
  return out;
}

template <typename T>
ad::Var pint_images(ad::Graph<T>& g, const BoundParams<T>& p, ad::Var images, const NetConfig& cfg) {
  const Shape& is = g.shape(images);
  require(is.size() == 4 && is[1] == 1, ErrorKind::shape, "pint: images must be [N, 1, H, L], got " + shape_str(is));
  const int n = is[0], h = is[2], l = is[3], r = cfg.r;
  ad::Var head = conv(g, p, "pint.head", images);
  ad::Var u = head;
  for (int gi = 1; gi <= cfg.pint_groups; ++gi) {
    const std::string group = "pint.group" + std::to_string(gi);
    ad::Var gin = u;
    u = ad::add(g, conv(g, p, group + ".conv", run_blocks(g, p, group, cfg.pint_blocks, u)), gin);
  }
  u = ad::add(g, conv(g, p, "pint.body", u), head);
  ad::Var phases = conv(g, p, "pint.tail", u);
  if (cfg.pint_keep_originals) phases = ad::concat(g, {g.constant(Tensor<T>({n, 1, h, l})), phases}, 1);
  ad::Var y = ad::shuffle_width(g, phases, r);
  if (cfg.global_skip) y = ad::add(g, y, ad::upsample_linear_width(g, images, r));
  return ad::narrow(g, y, 3, 0, r * l - r + 1);
}

template <typename T>
ad::Var pint_volume(ad::Graph<T>& g, const BoundParams<T>& p, ad::Var vol, ViewAxis view, const NetConfig& cfg) {
  require(view != ViewAxis::axial, ErrorKind::usage, "pint: the pixel-wise network takes coronal or sagittal images");
  const Shape& vs = g.shape(vol);
  require(vs.size() == 4, ErrorKind::shape, "pint_volume: need [B, l, H, W], got " + shape_str(vs));
  const int b = vs[0], l = vs[1], h = vs[2], w = vs[3];
  const int lo = cfg.r * l - cfg.r + 1;
  if (view == ViewAxis::coronal) {
    // one image per y: rows x, columns z
    ad::Var imgs = ad::reshape(g, ad::permute(g, vol, {0, 2, 3, 1}), {b * h, 1, w, l});
    ad::Var up = pint_images(g, p, imgs, cfg);
    return ad::permute(g, ad::reshape(g, up, {b, h, w, lo}), {0, 3, 1, 2});
  }
  // one image per x: rows y, columns z
  ad::Var imgs = ad::reshape(g, ad::permute(g, vol, {0, 3, 2, 1}), {b * w, 1, h, l});
  ad::Var up = pint_images(g, p, imgs, cfg);
  return ad::permute(g, ad::reshape(g, up, {b, w, h, lo}), {0, 3, 2, 1});
}

namespace {

constexpr int kPairChunk = 8;
constexpr int kImageChunk = 64;

VolumeMeta upsampled_meta(VolumeMeta meta, int r) {
  meta.spacing.sz /= r;
  return meta;
}

ad::Graph<float> inference_graph() {
  ad::Graph<float>::Options opts;
  opts.check_finite = true;
  return ad::Graph<float>(opts);
}

}  // namespace

Volume sint_volume(const ParamSet<float>& params, const MemoryBank& bank, const Volume& v, const NetConfig& cfg) {
  require(v.slices() >= 2, ErrorKind::shape, "sint_volume: need at least 2 slices");
  const int l = v.slices(), r = cfg.r, lo = r * l - r + 1;
  const std::size_t plane = v.plane_size();
  std::vector<float> out(static_cast<std::size_t>(lo) * plane);
  for (int z = 0; z < l; ++z) std::ranges::copy(v.slice(z), out.begin() + static_cast<std::ptrdiff_t>(z * r * plane));

  for (int first = 0; first < l - 1; first += kPairChunk) {
    const int count = std::min(kPairChunk, l - 1 - first);
    Tensor<float> lower({count, 1, v.height(), v.width()}), upper({count, 1, v.height(), v.width()});
    for (int k = 0; k < count; ++k) {
      std::ranges::copy(v.slice(first + k), lower.data() + k * plane);
      std::ranges::copy(v.slice(first + k + 1), upper.data() + k * plane);
    }
    auto g = inference_graph();
    BoundParams<float> p(g, params, false);
    ad::Var m = bank.items.empty() ? ad::Var{} : g.constant(bank.items);
    auto res = sint_forward(g, p, m, g.constant(std::move(lower)), g.constant(std::move(upper)), cfg);
    const Tensor<float>& syn = g.value(res.slices);
    for (int k = 0; k < count; ++k)
      for (int t = 1; t < r; ++t) {
        const float* src = syn.data() + (static_cast<std::size_t>(k) * (r - 1) + (t - 1)) * plane;
        std::copy(src, src + plane, out.begin() + static_cast<std::ptrdiff_t>(((first + k) * r + t) * plane));
      }
  }
  return Volume(v.height(), v.width(), lo, std::move(out), upsampled_meta(v.meta(), r));
}

ViewImage pint_image(const ParamSet<float>& params, const ViewImage& image, const NetConfig& cfg) {
  require(image.view != ViewAxis::axial, ErrorKind::usage, "pint: axial images are not accepted");
  auto g = inference_graph();
  BoundParams<float> p(g, params, false);
  const int h = image.data.dim(0), l = image.data.dim(1);
  ad::Var y = pint_images(g, p, g.constant(image.data.reshaped({1, 1, h, l})), cfg);
  const Tensor<float>& out = g.value(y);
  return {out.reshaped({h, out.dim(3)}), image.view, image.index};
}

Volume pint_volume(const ParamSet<float>& params, const Volume& v, ViewAxis view, const NetConfig& cfg) {
  require(view != ViewAxis::axial, ErrorKind::usage, "pint: the pixel-wise network takes coronal or sagittal images");
  std::vector<ViewImage> images = decompose(v, view);
  const int rows = images.front().data.dim(0), cols = images.front().data.dim(1);
  const int lo = cfg.r * cols - cfg.r + 1;
  const std::size_t in_size = static_cast<std::size_t>(rows) * cols, out_size = static_cast<std::size_t>(rows) * lo;
  std::vector<ViewImage> result;
  result.reserve(images.size());
  for (std::size_t first = 0; first < images.size(); first += kImageChunk) {
    const int count = static_cast<int>(std::min<std::size_t>(kImageChunk, images.size() - first));
    Tensor<float> batch({count, 1, rows, cols});
    for (int k = 0; k < count; ++k)
      std::ranges::copy(images[first + static_cast<std::size_t>(k)].data.values(), batch.data() + k * in_size);
    auto g = inference_graph();
    BoundParams<float> p(g, params, false);
    const Tensor<float>& up = g.value(pint_images(g, p, g.constant(std::move(batch)), cfg));
    for (int k = 0; k < count; ++k) {
      const float* src = up.data() + k * out_size;
      result.push_back({Tensor<float>({rows, lo}, std::vector<float>(src, src + out_size)), view,
                        images[first + static_cast<std::size_t>(k)].index});
    }
  }
  return restack(std::move(result), upsampled_meta(v.meta(), cfg.r));
}

#define CTSYNTH_INSTANTIATE(T)                                                                                    \
  template ad::Var residual_block(ad::Graph<T>&, const BoundParams<T>&, const std::string&, ad::Var);             \
  template SIntOutput<T> sint_forward(ad::Graph<T>&, const BoundParams<T>&, ad::Var, ad::Var, ad::Var,            \
                                      const NetConfig&);                                                         \
  template SIntVolume<T> sint_volume(ad::Graph<T>&, const BoundParams<T>&, ad::Var, ad::Var, const NetConfig&);   \
  template ad::Var pint_images(ad::Graph<T>&, const BoundParams<T>&, ad::Var, const NetConfig&);                 \
  template ad::Var pint_volume(ad::Graph<T>&, const BoundParams<T>&, ad::Var, ViewAxis, const NetConfig&);

CTSYNTH_INSTANTIATE(float)
CTSYNTH_INSTANTIATE(double)

#undef CTSYNTH_INSTANTIATE

}  // namespace ctsynth
