#include "ctsynth/transforms.hpp"

#include <algorithm>

namespace ctsynth {

namespace {

void require_rank(const Shape& s, int rank, const char* op) {
  require(static_cast<int>(s.size()) == rank, ErrorKind::shape,
          std::string(op) + ": expected rank " + std::to_string(rank) + ", got " + shape_str(s));
}

}  // namespace

template <typename T>
Tensor<T> space_to_depth(const Tensor<T>& x, int block) {
  require_rank(x.shape(), 4, "space_to_depth");
  require(block >= 1, ErrorKind::shape, "space_to_depth: block must be >= 1");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  require(h % block == 0 && w % block == 0, ErrorKind::shape,
          "space_to_depth: spatial size " + shape_str(x.shape()) + " not divisible by " + std::to_string(block));
  const int ho = h / block, wo = w / block, co = c * block * block;
  Tensor<T> out({n, co, ho, wo});
  const T* src = x.data();
  T* dst = out.data();
  for (int b = 0; b < n; ++b)
    for (int ch = 0; ch < c; ++ch)
      for (int br = 0; br < block; ++br)
        for (int bc = 0; bc < block; ++bc) {
          const int oc = (ch * block + br) * block + bc;
          T* orow = dst + ((static_cast<std::size_t>(b) * co + oc) * ho) * wo;
          for (int i = 0; i < ho; ++i) {
            const T* irow = src + ((static_cast<std::size_t>(b) * c + ch) * h + i * block + br) * w + bc;
            for (int j = 0; j < wo; ++j) orow[i * wo + j] = irow[j * block];
          }
        }
  return out;
}

template <typename T>
Tensor<T> depth_to_space(const Tensor<T>& x, int block) {
  require_rank(x.shape(), 4, "depth_to_space");
  require(block >= 1, ErrorKind::shape, "depth_to_space: block must be >= 1");
  const int n = x.dim(0), ci = x.dim(1), hi = x.dim(2), wi = x.dim(3);
  require(ci % (block * block) == 0, ErrorKind::shape,
          "depth_to_space: channel count " + std::to_string(ci) + " not divisible by block^2");
  const int c = ci / (block * block), h = hi * block, w = wi * block;
  Tensor<T> out({n, c, h, w});
  const T* src = x.data();
  T* dst = out.data();
  for (int b = 0; b < n; ++b)
    for (int ch = 0; ch < c; ++ch)
      for (int br = 0; br < block; ++br)
        for (int bc = 0; bc < block; ++bc) {
          const int ic = (ch * block + br) * block + bc;
          const T* irow = src + ((static_cast<std::size_t>(b) * ci + ic) * hi) * wi;
          for (int i = 0; i < hi; ++i) {
            T* orow = dst + ((static_cast<std::size_t>(b) * c + ch) * h + i * block + br) * w + bc;
            for (int j = 0; j < wi; ++j) orow[j * block] = irow[i * wi + j];
          }
        }
  return out;
}

template <typename T>
Tensor<T> shuffle_width(const Tensor<T>& x, int r) {
  require_rank(x.shape(), 4, "shuffle_width");
  const int n = x.dim(0), ci = x.dim(1), h = x.dim(2), w = x.dim(3);
  require(r >= 1 && ci % r == 0, ErrorKind::shape, "shuffle_width: channels not divisible by factor");
  const int c = ci / r;
  Tensor<T> out({n, c, h, w * r});
  for (int b = 0; b < n; ++b)
    for (int ch = 0; ch < c; ++ch)
      for (int t = 0; t < r; ++t) {
        const T* src = x.data() + ((static_cast<std::size_t>(b) * ci + ch * r + t) * h) * w;
        T* dst = out.data() + ((static_cast<std::size_t>(b) * c + ch) * h) * (w * r);
        for (int y = 0; y < h; ++y)
          for (int z = 0; z < w; ++z) dst[y * w * r + z * r + t] = src[y * w + z];
      }
  return out;
}

template <typename T>
Tensor<T> unshuffle_width(const Tensor<T>& x, int r) {
  require_rank(x.shape(), 4, "unshuffle_width");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), wr = x.dim(3);
  require(r >= 1 && wr % r == 0, ErrorKind::shape, "unshuffle_width: width not divisible by factor");
  const int w = wr / r;
  Tensor<T> out({n, c * r, h, w});
  for (int b = 0; b < n; ++b)
    for (int ch = 0; ch < c; ++ch)
      for (int t = 0; t < r; ++t) {
        T* dst = out.data() + ((static_cast<std::size_t>(b) * c * r + ch * r + t) * h) * w;
        const T* src = x.data() + ((static_cast<std::size_t>(b) * c + ch) * h) * wr;
        for (int y = 0; y < h; ++y)
          for (int z = 0; z < w; ++z) dst[y * w + z] = src[y * wr + z * r + t];
      }
  return out;
}

template <typename T>
Tensor<T> upsample_linear_width(const Tensor<T>& x, int r) {
  require(x.rank() >= 1 && r >= 1, ErrorKind::shape, "upsample_linear_width: bad input");
  const int w = x.dim(x.rank() - 1);
  const std::size_t rows = x.size() / static_cast<std::size_t>(w);
  Shape os = x.shape();
  os.back() = w * r;
  Tensor<T> out(os);
  for (std::size_t row = 0; row < rows; ++row) {
    const T* src = x.data() + row * w;
    T* dst = out.data() + row * static_cast<std::size_t>(w) * r;
    for (int z = 0; z < w; ++z) {
      const T a = src[z];
      const T b = src[std::min(z + 1, w - 1)];
      for (int t = 0; t < r; ++t) {
        const T f = static_cast<T>(t) / static_cast<T>(r);
        dst[z * r + t] = (T(1) - f) * a + f * b;
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> upsample_linear_width_adjoint(const Tensor<T>& grad, int r) {
  const int wr = grad.dim(grad.rank() - 1);
  require(wr % r == 0, ErrorKind::shape, "upsample_linear_width_adjoint: width not divisible by factor");
  const int w = wr / r;
  const std::size_t rows = grad.size() / static_cast<std::size_t>(wr);
  Shape os = grad.shape();
  os.back() = w;
  Tensor<T> out(os);
  for (std::size_t row = 0; row < rows; ++row) {
    const T* g = grad.data() + row * wr;
    T* dst = out.data() + row * w;
    for (int z = 0; z < w; ++z) {
      const int zn = std::min(z + 1, w - 1);
      for (int t = 0; t < r; ++t) {
        const T f = static_cast<T>(t) / static_cast<T>(r);
        dst[z] += (T(1) - f) * g[z * r + t];
        dst[zn] += f * g[z * r + t];
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> haar_level(const Tensor<T>& x) {
  require_rank(x.shape(), 3, "haar_level");
  const int n = x.dim(0), h = x.dim(1), w = x.dim(2);
  require(h >= 1 && w >= 1, ErrorKind::shape, "haar_level: empty image");
  const int ho = (h + 1) / 2, wo = (w + 1) / 2;
  Tensor<T> out({n, 4, ho, wo});
  const std::size_t plane = static_cast<std::size_t>(ho) * wo;
  for (int b = 0; b < n; ++b) {
    const T* img = x.data() + static_cast<std::size_t>(b) * h * w;
    T* ll = out.data() + static_cast<std::size_t>(b) * 4 * plane;
    T* lh = ll + plane;
    T* hl = lh + plane;
    T* hh = hl + plane;
    for (int i = 0; i < ho; ++i) {
      const int r0 = 2 * i, r1 = std::min(2 * i + 1, h - 1);
      for (int j = 0; j < wo; ++j) {
        const int c0 = 2 * j, c1 = std::min(2 * j + 1, w - 1);
        const T a = img[r0 * w + c0], bb = img[r0 * w + c1];
        const T c = img[r1 * w + c0], d = img[r1 * w + c1];
        const std::size_t o = static_cast<std::size_t>(i) * wo + j;
        ll[o] = (a + bb + c + d) / T(2);
        lh[o] = (a - bb + c - d) / T(2);
        hl[o] = (a + bb - c - d) / T(2);
        hh[o] = (a - bb - c + d) / T(2);
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> haar_level_adjoint(const Tensor<T>& coeffs, int height, int width) {
  require_rank(coeffs.shape(), 4, "haar_level_adjoint");
  const int n = coeffs.dim(0), ho = coeffs.dim(2), wo = coeffs.dim(3);
  require(coeffs.dim(1) == 4 && ho == (height + 1) / 2 && wo == (width + 1) / 2, ErrorKind::shape,
          "haar_level_adjoint: coefficient shape does not match image size");
  Tensor<T> out({n, height, width});
  const std::size_t plane = static_cast<std::size_t>(ho) * wo;
  for (int b = 0; b < n; ++b) {
    T* img = out.data() + static_cast<std::size_t>(b) * height * width;
    const T* ll = coeffs.data() + static_cast<std::size_t>(b) * 4 * plane;
    const T* lh = ll + plane;
    const T* hl = lh + plane;
    const T* hh = hl + plane;
    for (int i = 0; i < ho; ++i) {
      const int r0 = 2 * i, r1 = std::min(2 * i + 1, height - 1);
      for (int j = 0; j < wo; ++j) {
        const int c0 = 2 * j, c1 = std::min(2 * j + 1, width - 1);
        const std::size_t o = static_cast<std::size_t>(i) * wo + j;
        const T gll = ll[o], glh = lh[o], ghl = hl[o], ghh = hh[o];
        img[r0 * width + c0] += (gll + glh + ghl + ghh) / T(2);
        img[r0 * width + c1] += (gll - glh + ghl - ghh) / T(2);
        img[r1 * width + c0] += (gll + glh - ghl - ghh) / T(2);
        img[r1 * width + c1] += (gll - glh - ghl + ghh) / T(2);
      }
    }
  }
  return out;
}

template <typename T>
WaveletPyramid<T> haar_pyramid(const Tensor<T>& image) {
  require_rank(image.shape(), 2, "haar_pyramid");
  require(image.dim(0) >= 8 && image.dim(1) >= 8, ErrorKind::shape,
          "haar_pyramid: image must be at least 8x8, got " + shape_str(image.shape()));
  WaveletPyramid<T> pyr;
  Tensor<T> ll = image.reshaped({1, image.dim(0), image.dim(1)});
  for (auto& scale : pyr.scales) {
    Tensor<T> c = haar_level(ll);
    const int ho = c.dim(2), wo = c.dim(3);
    const std::size_t plane = static_cast<std::size_t>(ho) * wo;
    auto band = [&](int k) {
      return Tensor<T>({ho, wo}, std::vector<T>(c.data() + k * plane, c.data() + (k + 1) * plane));
    };
    scale.ll = band(0);
    scale.lh = band(1);
    scale.hl = band(2);
    scale.hh = band(3);
    ll = scale.ll.reshaped({1, ho, wo});
  }
  return pyr;
}

#define CTSYNTH_INSTANTIATE(T)                                                      \
  template Tensor<T> space_to_depth(const Tensor<T>&, int);                         \
  template Tensor<T> depth_to_space(const Tensor<T>&, int);                         \
  template Tensor<T> shuffle_width(const Tensor<T>&, int);                          \
  template Tensor<T> unshuffle_width(const Tensor<T>&, int);                        \
  template Tensor<T> upsample_linear_width(const Tensor<T>&, int);                  \
  template Tensor<T> upsample_linear_width_adjoint(const Tensor<T>&, int);          \
  template Tensor<T> haar_level(const Tensor<T>&);                                  \
  template Tensor<T> haar_level_adjoint(const Tensor<T>&, int, int);                \
  template WaveletPyramid<T> haar_pyramid(const Tensor<T>&);

CTSYNTH_INSTANTIATE(float)
CTSYNTH_INSTANTIATE(double)

#undef CTSYNTH_INSTANTIATE

}  // namespace ctsynth
