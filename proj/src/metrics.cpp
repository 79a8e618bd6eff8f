#include "ctsynth/metrics.hpp"

#include <array>
#include <cmath>

#include <json.hpp>

namespace ctsynth {

double psnr(const Volume& pred, const Volume& gt) {
  require(pred.same_shape(gt), ErrorKind::shape, "psnr: shape mismatch " + pred.shape_string() + " vs " + gt.shape_string());
  double acc = 0.0;
  auto p = pred.voxels(), t = gt.voxels();
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double d = static_cast<double>(p[i]) - t[i];
    acc += d * d;
  }
  if (acc == 0.0) return std::numeric_limits<double>::infinity();
  const double mse = acc / static_cast<double>(p.size());
  const double l = gt.range().width();
  return 10.0 * std::log10(l * l / mse);
}

namespace {

constexpr int kWin = 11;

std::array<double, kWin> gaussian_window() {
  std::array<double, kWin> w{};
  double total = 0.0;
  for (int i = 0; i < kWin; ++i) {
    const double x = i - kWin / 2;
    w[static_cast<std::size_t>(i)] = std::exp(-x * x / (2.0 * 1.5 * 1.5));
    total += w[static_cast<std::size_t>(i)];
  }
  for (double& v : w) v /= total;
  return w;
}

// Separable filtering over valid positions: [rows, cols] -> [rows-10, cols-10].
std::vector<double> filter_valid(const std::vector<double>& img, int rows, int cols, const std::array<double, kWin>& w) {
  const int ro = rows - kWin + 1, co = cols - kWin + 1;
  std::vector<double> tmp(static_cast<std::size_t>(rows) * co);
  for (int y = 0; y < rows; ++y)
    for (int x = 0; x < co; ++x) {
      double s = 0.0;
      for (int k = 0; k < kWin; ++k) s += w[static_cast<std::size_t>(k)] * img[static_cast<std::size_t>(y) * cols + x + k];
      tmp[static_cast<std::size_t>(y) * co + x] = s;
    }
  std::vector<double> out(static_cast<std::size_t>(ro) * co);
  for (int y = 0; y < ro; ++y)
    for (int x = 0; x < co; ++x) {
      double s = 0.0;
      for (int k = 0; k < kWin; ++k) s += w[static_cast<std::size_t>(k)] * tmp[static_cast<std::size_t>(y + k) * co + x];
      out[static_cast<std::size_t>(y) * co + x] = s;
    }
  return out;
}

double ssim_term(double mx, double my, double vx, double vy, double cxy, double c1, double c2) {
  return ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
}

double ssim_image(const Tensor<float>& a, const Tensor<float>& b, double c1, double c2, bool& fallback) {
  const int rows = a.dim(0), cols = a.dim(1);
  const std::size_t n = a.size();
  std::vector<double> x(a.values().begin(), a.values().end()), y(b.values().begin(), b.values().end());
  if (rows < kWin || cols < kWin) {
    fallback = true;
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < n; ++i) mx += x[i], my += y[i];
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double vx = 0, vy = 0, cxy = 0;
    for (std::size_t i = 0; i < n; ++i) {
      vx += (x[i] - mx) * (x[i] - mx);
      vy += (y[i] - my) * (y[i] - my);
      cxy += (x[i] - mx) * (y[i] - my);
    }
    const double inv = 1.0 / static_cast<double>(n);
    return ssim_term(mx, my, vx * inv, vy * inv, cxy * inv, c1, c2);
  }
  static const auto w = gaussian_window();
  std::vector<double> xx(n), yy(n), xy(n);
  for (std::size_t i = 0; i < n; ++i) {
    xx[i] = x[i] * x[i];
    yy[i] = y[i] * y[i];
    xy[i] = x[i] * y[i];
  }
  const auto mx = filter_valid(x, rows, cols, w), my = filter_valid(y, rows, cols, w);
  const auto sxx = filter_valid(xx, rows, cols, w), syy = filter_valid(yy, rows, cols, w),
             sxy = filter_valid(xy, rows, cols, w);
  double acc = 0.0;
  for (std::size_t i = 0; i < mx.size(); ++i)
    acc += ssim_term(mx[i], my[i], sxx[i] - mx[i] * mx[i], syy[i] - my[i] * my[i], sxy[i] - mx[i] * my[i], c1, c2);
  return acc / static_cast<double>(mx.size());
}

}  // namespace

SsimResult ssim_view(const Volume& pred, const Volume& gt, ViewAxis view) {
  require(pred.same_shape(gt), ErrorKind::shape, "ssim: shape mismatch " + pred.shape_string() + " vs " + gt.shape_string());
  if (pred == gt) return {1.0, false};
  const double l = gt.range().width();
  const double c1 = (0.01 * l) * (0.01 * l), c2 = (0.03 * l) * (0.03 * l);
  const auto a = decompose(pred, view), b = decompose(gt, view);
  SsimResult res{0.0, false};
  for (std::size_t i = 0; i < a.size(); ++i) res.mean += ssim_image(a[i].data, b[i].data, c1, c2, res.global_fallback);
  res.mean /= static_cast<double>(a.size());
  return res;
}

Volume baseline_interpolate(const Volume& lowres, int r, BaselineMethod method) {
  require(lowres.slices() >= 2, ErrorKind::shape, "baseline: need at least 2 slices");
  require(r >= 1, ErrorKind::usage, "baseline: r must be >= 1");
  const int l = lowres.slices(), lo = upsampled_length(l, r);
  const std::size_t plane = lowres.plane_size();
  std::vector<float> out(static_cast<std::size_t>(lo) * plane);
  for (int z = 0; z < lo; ++z) {
    const int k = z / r, t = z % r;
    auto dst = out.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(z) * plane);
    if (t == 0) {
      std::ranges::copy(lowres.slice(k), dst);
      continue;
    }
    auto a = lowres.slice(k), b = lowres.slice(k + 1);
    if (method == BaselineMethod::nearest) {
      std::ranges::copy(2 * t <= r ? a : b, dst);
    } else {
      const double wb = static_cast<double>(t) / r;
      for (std::size_t p = 0; p < plane; ++p)
        dst[static_cast<std::ptrdiff_t>(p)] = static_cast<float>((1.0 - wb) * a[p] + wb * b[p]);
    }
  }
  VolumeMeta meta = lowres.meta();
  meta.spacing.sz /= r;
  return Volume(lowres.height(), lowres.width(), lo, std::move(out), meta);
}

EvalScores evaluate(const Volume& pred, const Volume& gt) {
  EvalScores s;
  s.psnr = psnr(pred, gt);
  const auto a = ssim_view(pred, gt, ViewAxis::axial);
  const auto c = ssim_view(pred, gt, ViewAxis::coronal);
  const auto sg = ssim_view(pred, gt, ViewAxis::sagittal);
  s.ssim_a = a.mean;
  s.ssim_c = c.mean;
  s.ssim_s = sg.mean;
  s.ssim_fallback = a.global_fallback || c.global_fallback || sg.global_fallback;
  return s;
}

namespace {

nlohmann::ordered_json scores_json(const EvalScores& s) {
  nlohmann::ordered_json j;
  if (std::isinf(s.psnr))
    j["psnr"] = "inf";
  else
    j["psnr"] = s.psnr;
  j["ssim_a"] = s.ssim_a;
  j["ssim_c"] = s.ssim_c;
  j["ssim_s"] = s.ssim_s;
  j["ssim_global_fallback"] = s.ssim_fallback;
  return j;
}

}  // namespace

std::string to_json(const EvalReport& report, int indent) {
  nlohmann::ordered_json j = scores_json(report.prediction);
  j["voxels"] = report.voxels;
  if (report.has_baselines) j["baselines"] = {{"nearest", scores_json(report.nearest)}, {"linear", scores_json(report.linear)}};
  return j.dump(indent);
}

}  // namespace ctsynth
