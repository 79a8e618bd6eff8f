#include "ctsynth/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace ctsynth {

std::string_view to_string(PhantomKind kind) {
  switch (kind) {
    case PhantomKind::ellipsoids:
      return "ellipsoids";
    case PhantomKind::bandlimited_noise:
      return "bandlimited_noise";
    case PhantomKind::layered_sine:
      return "layered_sine";
  }
  return "?";
}

PhantomKind parse_phantom(std::string_view name) {
  if (name == "ellipsoids") return PhantomKind::ellipsoids;
  if (name == "bandlimited_noise") return PhantomKind::bandlimited_noise;
  if (name == "layered_sine") return PhantomKind::layered_sine;
  fail(ErrorKind::usage, "unknown phantom kind '" + std::string(name) + "'");
}

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kMaxZFreq = 0.1;  // cycles per slice

using Rng = std::mt19937_64;

double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

// Raised-cosine edge: 1 inside rho < 1 - e, 0 beyond 1 + e.
double soft_inside(double rho, double e) {
  if (rho <= 1.0 - e) return 1.0;
  if (rho >= 1.0 + e) return 0.0;
  return 0.5 * (1.0 + std::cos(std::numbers::pi * (rho - (1.0 - e)) / (2.0 * e)));
}

std::vector<float> ellipsoids(int h, int w, int l, Rng& rng) {
  struct Blob {
    double cy, cx, cz, ry, rx, rz, theta, value;
  };
  const int count = 6;
  std::vector<Blob> blobs;
  // Body: a large soft cylinder-like ellipsoid.
  blobs.push_back({(h - 1) / 2.0, (w - 1) / 2.0, (l - 1) / 2.0, 0.45 * h, 0.42 * w, 0.9 * l, 0.0, 0.45});
  for (int i = 0; i < count; ++i) {
    Blob b;
    b.ry = uniform(rng, 0.08, 0.22) * h;
    b.rx = uniform(rng, 0.08, 0.22) * w;
    // z radii of at least ~5 slices keep the edge taper wide along z.
    b.rz = std::max(5.0, uniform(rng, 0.2, 0.45) * l);
    b.cy = uniform(rng, 0.3, 0.7) * (h - 1);
    b.cx = uniform(rng, 0.3, 0.7) * (w - 1);
    b.cz = uniform(rng, 0.2, 0.8) * (l - 1);
    b.theta = uniform(rng, 0.0, std::numbers::pi);
    b.value = uniform(rng, -0.25, 0.35);
    blobs.push_back(b);
  }
  std::vector<float> out(static_cast<std::size_t>(h) * w * l);
  std::size_t i = 0;
  for (int z = 0; z < l; ++z)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x, ++i) {
        double v = 0.05;
        for (const Blob& b : blobs) {
          const double dy = y - b.cy, dx = x - b.cx, dz = z - b.cz;
          const double c = std::cos(b.theta), s = std::sin(b.theta);
          const double u = (c * dy + s * dx) / b.ry;
          const double t = (-s * dy + c * dx) / b.rx;
          const double q = dz / b.rz;
          const double rho = std::sqrt(u * u + t * t + q * q);
          v += b.value * soft_inside(rho, 0.3);
        }
        out[i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
  return out;
}

std::vector<float> bandlimited_noise(int h, int w, int l, Rng& rng) {
  struct Wave {
    double fy, fx, fz, phase, amp;
  };
  std::vector<Wave> waves(24);
  double total = 0.0;
  for (Wave& wv : waves) {
    wv.fy = uniform(rng, -0.12, 0.12);
    wv.fx = uniform(rng, -0.12, 0.12);
    wv.fz = uniform(rng, -kMaxZFreq, kMaxZFreq);
    wv.phase = uniform(rng, 0.0, kTwoPi);
    wv.amp = uniform(rng, 0.2, 1.0);
    total += wv.amp;
  }
  std::vector<float> out(static_cast<std::size_t>(h) * w * l);
  std::size_t i = 0;
  for (int z = 0; z < l; ++z)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x, ++i) {
        double s = 0.0;
        for (const Wave& wv : waves) s += wv.amp * std::cos(kTwoPi * (wv.fy * y + wv.fx * x + wv.fz * z) + wv.phase);
        out[i] = static_cast<float>(std::clamp(0.5 + 0.5 * s / total, 0.0, 1.0));
      }
  return out;
}

// Stacked layers whose depth varies smoothly in-plane:
//   0.5 + A sin(2 pi fz (z + d(y, x)) + phi)
std::vector<float> layered_sine(int h, int w, int l, Rng& rng, double amplitude) {
  const double fz = uniform(rng, 0.05, 0.09);
  const double phi = uniform(rng, 0.0, kTwoPi);
  struct Bend {
    double fy, fx, phase, depth;
  };
  std::vector<Bend> bends(3);
  for (Bend& b : bends) {
    b.fy = uniform(rng, -0.06, 0.06);
    b.fx = uniform(rng, -0.06, 0.06);
    b.phase = uniform(rng, 0.0, kTwoPi);
    b.depth = uniform(rng, 1.0, 4.0);
  }
  std::vector<float> out(static_cast<std::size_t>(h) * w * l);
  std::size_t i = 0;
  for (int z = 0; z < l; ++z)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x, ++i) {
        double d = 0.0;
        for (const Bend& b : bends) d += b.depth * std::sin(kTwoPi * (b.fy * y + b.fx * x) + b.phase);
        const double v = 0.5 + amplitude * std::sin(kTwoPi * fz * (z + d) + phi);
        out[i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
  return out;
}

}  // namespace

Volume make_phantom(PhantomKind kind, int height, int width, int slices, std::uint64_t seed,
                    const PhantomOptions& options) {
  require(height >= 1 && width >= 1 && slices >= 1, ErrorKind::usage, "phantom dimensions must be >= 1");
  Rng rng(seed);
  std::vector<float> vox;
  switch (kind) {
    case PhantomKind::ellipsoids:
      vox = ellipsoids(height, width, slices, rng);
      break;
    case PhantomKind::bandlimited_noise:
      vox = bandlimited_noise(height, width, slices, rng);
      break;
    case PhantomKind::layered_sine:
      vox = layered_sine(height, width, slices, rng, options.amplitude);
      break;
  }
  return Volume(height, width, slices, std::move(vox));
}

}  // namespace ctsynth
