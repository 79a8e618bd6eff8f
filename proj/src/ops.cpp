#include "ctsynth/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "ctsynth/transforms.hpp"

namespace ctsynth::ad {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

void check_same_shape(const Shape& a, const Shape& b, const char* op) {
  require(a == b, ErrorKind::shape, std::string(op) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
}

void check_rank(const Shape& s, int rank, const char* op) {
  require(static_cast<int>(s.size()) == rank, ErrorKind::shape,
          std::string(op) + ": expected rank " + std::to_string(rank) + ", got " + shape_str(s));
}

// cols [C*k*k, H*W] for one image, zero padding of k/2.
template <typename T>
void im2col(const T* img, int c, int h, int w, int k, T* cols) {
  const int pad = k / 2;
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  for (int ch = 0; ch < c; ++ch)
    for (int ki = 0; ki < k; ++ki)
      for (int kj = 0; kj < k; ++kj) {
        T* row = cols + (static_cast<std::size_t>((ch * k + ki) * k + kj)) * hw;
        const int dx = kj - pad;
        const int x0 = std::max(0, -dx), x1 = std::min(w, w - dx);
        for (int y = 0; y < h; ++y) {
          T* dst = row + static_cast<std::size_t>(y) * w;
          const int iy = y + ki - pad;
          if (iy < 0 || iy >= h) {
            std::fill(dst, dst + w, T(0));
            continue;
          }
          const T* src = img + (static_cast<std::size_t>(ch) * h + iy) * w;
          for (int x = 0; x < std::min(x0, w); ++x) dst[x] = T(0);
          for (int x = x0; x < x1; ++x) dst[x] = src[x + dx];
          for (int x = std::max(x1, x0); x < w; ++x) dst[x] = T(0);
        }
      }
}

template <typename T>
void col2im_add(const T* cols, int c, int h, int w, int k, T* img) {
  const int pad = k / 2;
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  for (int ch = 0; ch < c; ++ch)
    for (int ki = 0; ki < k; ++ki)
      for (int kj = 0; kj < k; ++kj) {
        const T* row = cols + (static_cast<std::size_t>((ch * k + ki) * k + kj)) * hw;
        const int dx = kj - pad;
        const int x0 = std::max(0, -dx), x1 = std::min(w, w - dx);
        for (int y = 0; y < h; ++y) {
          const int iy = y + ki - pad;
          if (iy < 0 || iy >= h) continue;
          const T* src = row + static_cast<std::size_t>(y) * w;
          T* dst = img + (static_cast<std::size_t>(ch) * h + iy) * w;
          for (int x = x0; x < x1; ++x) dst[x + dx] += src[x];
        }
      }
}

template <typename T>
Tensor<T> permute_tensor(const Tensor<T>& x, const std::vector<int>& perm) {
  const int rank = x.rank();
  Shape os(static_cast<std::size_t>(rank));
  std::vector<std::size_t> in_stride(static_cast<std::size_t>(rank));
  std::size_t s = 1;
  for (int i = rank - 1; i >= 0; --i) {
    in_stride[static_cast<std::size_t>(i)] = s;
    s *= static_cast<std::size_t>(x.dim(i));
  }
  std::vector<std::size_t> stride(static_cast<std::size_t>(rank));
  for (int i = 0; i < rank; ++i) {
    os[static_cast<std::size_t>(i)] = x.dim(perm[static_cast<std::size_t>(i)]);
    stride[static_cast<std::size_t>(i)] = in_stride[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])];
  }
  Tensor<T> out(os);
  if (out.empty()) return out;
  std::vector<int> idx(static_cast<std::size_t>(rank), 0);
  const int last = rank - 1;
  const std::size_t inner = static_cast<std::size_t>(os[static_cast<std::size_t>(last)]);
  const std::size_t inner_stride = stride[static_cast<std::size_t>(last)];
  std::size_t o = 0;
  while (o < out.size()) {
    std::size_t base = 0;
    for (int i = 0; i < last; ++i) base += static_cast<std::size_t>(idx[static_cast<std::size_t>(i)]) * stride[static_cast<std::size_t>(i)];
    const T* src = x.data() + base;
    for (std::size_t j = 0; j < inner; ++j) out[o++] = src[j * inner_stride];
    for (int i = last - 1; i >= 0; --i) {
      if (++idx[static_cast<std::size_t>(i)] < os[static_cast<std::size_t>(i)]) break;
      idx[static_cast<std::size_t>(i)] = 0;
    }
  }
  return out;
}

struct AxisSplit {
  std::size_t outer = 1, extent = 1, inner = 1;
};

AxisSplit split_at(const Shape& s, int axis) {
  AxisSplit a;
  for (int i = 0; i < axis; ++i) a.outer *= static_cast<std::size_t>(s[static_cast<std::size_t>(i)]);
  a.extent = static_cast<std::size_t>(s[static_cast<std::size_t>(axis)]);
  for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < s.size(); ++i) a.inner *= static_cast<std::size_t>(s[i]);
  return a;
}

}  // namespace

// ---------------------------------------------------------------- conv2d

template <typename T>
Var conv2d(Graph<T>& g, Var x, Var weight, Var bias) {
  const Shape& xs = g.shape(x);
  const Shape& ws = g.shape(weight);
  check_rank(xs, 4, "conv2d input");
  check_rank(ws, 4, "conv2d weight");
  const int n = xs[0], cin = xs[1], h = xs[2], w = xs[3];
  const int cout = ws[0], k = ws[2];
  require(ws[1] == cin && ws[3] == k && k % 2 == 1, ErrorKind::shape,
          "conv2d: weight " + shape_str(ws) + " incompatible with input " + shape_str(xs));
  if (bias.valid()) require(g.shape(bias) == Shape{cout}, ErrorKind::shape, "conv2d: bias shape mismatch");

  const std::size_t hw = static_cast<std::size_t>(h) * w;
  const int kk = cin * k * k;
  Tensor<T> out({n, cout, h, w});
  ConstMatMap<T> wm(g.value(weight).data(), cout, kk);
  std::vector<T> cols(k == 1 ? 0 : static_cast<std::size_t>(kk) * hw);
  for (int b = 0; b < n; ++b) {
    const T* img = g.value(x).data() + static_cast<std::size_t>(b) * cin * hw;
    const T* colp = img;
    if (k != 1) {
      im2col(img, cin, h, w, k, cols.data());
      colp = cols.data();
    }
    MatMap<T> om(out.data() + static_cast<std::size_t>(b) * cout * hw, cout, static_cast<Eigen::Index>(hw));
    om.noalias() = wm * ConstMatMap<T>(colp, kk, static_cast<Eigen::Index>(hw));
    if (bias.valid()) {
      const T* bv = g.value(bias).data();
      for (int co = 0; co < cout; ++co) om.row(co).array() += bv[co];
    }
  }

  auto backward = [x, weight, bias, n, cin, cout, h, w, k, kk, hw](Graph<T>& g, const Tensor<T>& gout) {
    const bool need_x = g.requires_grad(x);
    const bool need_w = g.requires_grad(weight);
    const bool need_b = bias.valid() && g.requires_grad(bias);
    std::vector<T> cols(static_cast<std::size_t>(kk) * hw);
    ConstMatMap<T> wm(g.value(weight).data(), cout, kk);
    Tensor<T>* dx = need_x ? &g.grad_slot(x) : nullptr;
    Tensor<T>* dw = need_w ? &g.grad_slot(weight) : nullptr;
    for (int b = 0; b < n; ++b) {
      ConstMatMap<T> gm(gout.data() + static_cast<std::size_t>(b) * cout * hw, cout, static_cast<Eigen::Index>(hw));
      if (need_w) {
        const T* img = g.value(x).data() + static_cast<std::size_t>(b) * cin * hw;
        const T* colp = img;
        if (k != 1) {
          im2col(img, cin, h, w, k, cols.data());
          colp = cols.data();
        }
        MatMap<T> dwm(dw->data(), cout, kk);
        dwm.noalias() += gm * ConstMatMap<T>(colp, kk, static_cast<Eigen::Index>(hw)).transpose();
      }
      if (need_x) {
        T* dimg = dx->data() + static_cast<std::size_t>(b) * cin * hw;
        if (k == 1) {
          MatMap<T> dm(dimg, cin, static_cast<Eigen::Index>(hw));
          dm.noalias() += wm.transpose() * gm;
        } else {
          MatMap<T> cm(cols.data(), kk, static_cast<Eigen::Index>(hw));
          cm.noalias() = wm.transpose() * gm;
          col2im_add(cols.data(), cin, h, w, k, dimg);
        }
      }
    }
    if (need_b) {
      Tensor<T>& db = g.grad_slot(bias);
      for (int co = 0; co < cout; ++co) {
        double acc = 0.0;
        for (int b = 0; b < n; ++b) {
          const T* p = gout.data() + (static_cast<std::size_t>(b) * cout + co) * hw;
          for (std::size_t i = 0; i < hw; ++i) acc += p[i];
        }
        db[static_cast<std::size_t>(co)] += static_cast<T>(acc);
      }
    }
  };
  return g.record(std::move(out), {x, weight, bias}, backward, "conv2d");
}

// ------------------------------------------------------------ pointwise

template <typename T>
Var relu(Graph<T>& g, Var x) {
  Tensor<T> out = g.value(x);
  for (T& v : out.storage()) v = v > T(0) ? v : T(0);
  return g.record(std::move(out), {x},
                  [x](Graph<T>& g, const Tensor<T>& gout) {
                    Tensor<T> gx = gout;
                    const Tensor<T>& xv = g.value(x);
                    for (std::size_t i = 0; i < gx.size(); ++i)
                      if (!(xv[i] > T(0))) gx[i] = T(0);
                    g.accumulate(x, gx);
                  },
                  "relu");
}

template <typename T>
Var sigmoid(Graph<T>& g, Var x) {
  Tensor<T> out = g.value(x);
  for (T& v : out.storage()) v = T(1) / (T(1) + std::exp(-v));
  const int y_id = static_cast<int>(g.size());
  return g.record(std::move(out), {x},
                  [x, y_id](Graph<T>& g, const Tensor<T>& gout) {
                    const Tensor<T>& yv = g.value(Var{y_id});
                    Tensor<T> gx = gout;
                    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] *= yv[i] * (T(1) - yv[i]);
                    g.accumulate(x, gx);
                  },
                  "sigmoid");
}

template <typename T>
Var add(Graph<T>& g, Var x, Var y) {
  check_same_shape(g.shape(x), g.shape(y), "add");
  Tensor<T> out = g.value(x);
  const Tensor<T>& yv = g.value(y);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += yv[i];
  return g.record(std::move(out), {x, y},
                  [x, y](Graph<T>& g, const Tensor<T>& gout) {
                    g.accumulate(x, gout);
                    g.accumulate(y, gout);
                  },
                  "add");
}

template <typename T>
Var sub(Graph<T>& g, Var x, Var y) {
  check_same_shape(g.shape(x), g.shape(y), "sub");
  Tensor<T> out = g.value(x);
  const Tensor<T>& yv = g.value(y);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= yv[i];
  return g.record(std::move(out), {x, y},
                  [x, y](Graph<T>& g, const Tensor<T>& gout) {
                    g.accumulate(x, gout);
                    if (g.requires_grad(y)) {
                      Tensor<T> gy = gout;
                      for (T& v : gy.storage()) v = -v;
                      g.accumulate(y, gy);
                    }
                  },
                  "sub");
}

template <typename T>
Var mul(Graph<T>& g, Var x, Var y) {
  check_same_shape(g.shape(x), g.shape(y), "mul");
  Tensor<T> out = g.value(x);
  const Tensor<T>& yv = g.value(y);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= yv[i];
  return g.record(std::move(out), {x, y},
                  [x, y](Graph<T>& g, const Tensor<T>& gout) {
                    if (g.requires_grad(x)) {
                      Tensor<T> gx = gout;
                      const Tensor<T>& yv = g.value(y);
                      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] *= yv[i];
                      g.accumulate(x, gx);
                    }
                    if (g.requires_grad(y)) {
                      Tensor<T> gy = gout;
                      const Tensor<T>& xv = g.value(x);
                      for (std::size_t i = 0; i < gy.size(); ++i) gy[i] *= xv[i];
                      g.accumulate(y, gy);
                    }
                  },
                  "mul");
}

template <typename T>
Var scale(Graph<T>& g, Var x, double alpha) {
  Tensor<T> out = g.value(x);
  const T a = static_cast<T>(alpha);
  for (T& v : out.storage()) v *= a;
  return g.record(std::move(out), {x},
                  [x, a](Graph<T>& g, const Tensor<T>& gout) {
                    Tensor<T> gx = gout;
                    for (T& v : gx.storage()) v *= a;
                    g.accumulate(x, gx);
                  },
                  "scale");
}

template <typename T>
Var add_scalar(Graph<T>& g, Var x, double c) {
  Tensor<T> out = g.value(x);
  const T cc = static_cast<T>(c);
  for (T& v : out.storage()) v += cc;
  return g.record(std::move(out), {x}, [x](Graph<T>& g, const Tensor<T>& gout) { g.accumulate(x, gout); },
                  "add_scalar");
}

// ------------------------------------------------------------ structural

template <typename T>
Var concat(Graph<T>& g, const std::vector<Var>& xs, int axis) {
  require(!xs.empty(), ErrorKind::shape, "concat: no inputs");
  Shape os = g.shape(xs[0]);
  require(axis >= 0 && axis < static_cast<int>(os.size()), ErrorKind::shape, "concat: bad axis");
  int total = 0;
  for (Var v : xs) {
    Shape s = g.shape(v);
    require(s.size() == os.size(), ErrorKind::shape, "concat: rank mismatch");
    for (std::size_t i = 0; i < s.size(); ++i)
      if (static_cast<int>(i) != axis)
        require(s[i] == os[i], ErrorKind::shape, "concat: shape mismatch " + shape_str(s) + " vs " + shape_str(os));
    total += s[static_cast<std::size_t>(axis)];
  }
  os[static_cast<std::size_t>(axis)] = total;
  Tensor<T> out(os);
  const AxisSplit full = split_at(os, axis);
  std::size_t offset = 0;
  for (Var v : xs) {
    const AxisSplit part = split_at(g.shape(v), axis);
    const std::size_t chunk = part.extent * part.inner;
    const T* src = g.value(v).data();
    for (std::size_t o = 0; o < full.outer; ++o)
      std::copy(src + o * chunk, src + (o + 1) * chunk, out.data() + o * full.extent * full.inner + offset);
    offset += chunk;
  }
  return g.record(std::move(out), xs,
                  [xs, axis, full](Graph<T>& g, const Tensor<T>& gout) {
                    std::size_t offset = 0;
                    for (Var v : xs) {
                      const AxisSplit part = split_at(g.shape(v), axis);
                      const std::size_t chunk = part.extent * part.inner;
                      if (g.requires_grad(v)) {
                        Tensor<T>& gv = g.grad_slot(v);
                        for (std::size_t o = 0; o < full.outer; ++o) {
                          const T* src = gout.data() + o * full.extent * full.inner + offset;
                          T* dst = gv.data() + o * chunk;
                          for (std::size_t i = 0; i < chunk; ++i) dst[i] += src[i];
                        }
                      }
                      offset += chunk;
                    }
                  },
                  "concat");
}

template <typename T>
Var reshape(Graph<T>& g, Var x, Shape shape) {
  Tensor<T> out = g.value(x).reshaped(shape);
  return g.record(std::move(out), {x},
                  [x](Graph<T>& g, const Tensor<T>& gout) { g.accumulate(x, gout.reshaped(g.shape(x))); },
                  "reshape");
}

template <typename T>
Var permute(Graph<T>& g, Var x, const std::vector<int>& perm) {
  const int rank = static_cast<int>(g.shape(x).size());
  require(static_cast<int>(perm.size()) == rank, ErrorKind::shape, "permute: permutation rank mismatch");
  std::vector<int> inverse(perm.size(), -1);
  for (std::size_t i = 0; i < perm.size(); ++i) {
    require(perm[i] >= 0 && perm[i] < rank && inverse[static_cast<std::size_t>(perm[i])] < 0, ErrorKind::shape,
            "permute: not a permutation");
    inverse[static_cast<std::size_t>(perm[i])] = static_cast<int>(i);
  }
  return g.record(permute_tensor(g.value(x), perm), {x},
                  [x, inverse](Graph<T>& g, const Tensor<T>& gout) {
                    g.accumulate(x, permute_tensor(gout, inverse));
                  },
                  "permute");
}

template <typename T>
Var narrow(Graph<T>& g, Var x, int axis, int start, int length) {
  const Shape& xs = g.shape(x);
  require(axis >= 0 && axis < static_cast<int>(xs.size()), ErrorKind::shape, "narrow: bad axis");
  require(start >= 0 && length >= 0 && start + length <= xs[static_cast<std::size_t>(axis)], ErrorKind::shape,
          "narrow: range out of bounds for shape " + shape_str(xs));
  Shape os = xs;
  os[static_cast<std::size_t>(axis)] = length;
  const AxisSplit in = split_at(xs, axis);
  Tensor<T> out(os);
  const std::size_t chunk = static_cast<std::size_t>(length) * in.inner;
  for (std::size_t o = 0; o < in.outer; ++o) {
    const T* src = g.value(x).data() + (o * in.extent + static_cast<std::size_t>(start)) * in.inner;
    std::copy(src, src + chunk, out.data() + o * chunk);
  }
  return g.record(std::move(out), {x},
                  [x, in, start, chunk](Graph<T>& g, const Tensor<T>& gout) {
                    Tensor<T>& gx = g.grad_slot(x);
                    for (std::size_t o = 0; o < in.outer; ++o) {
                      T* dst = gx.data() + (o * in.extent + static_cast<std::size_t>(start)) * in.inner;
                      const T* src = gout.data() + o * chunk;
                      for (std::size_t i = 0; i < chunk; ++i) dst[i] += src[i];
                    }
                  },
                  "narrow");
}

template <typename T>
Var gather_rows(Graph<T>& g, Var x, const std::vector<int>& rows) {
  const Shape& xs = g.shape(x);
  check_rank(xs, 2, "gather_rows");
  const int nrows = xs[0], d = xs[1];
  Tensor<T> out({static_cast<int>(rows.size()), d});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    require(rows[i] >= 0 && rows[i] < nrows, ErrorKind::shape, "gather_rows: index out of range");
    const T* src = g.value(x).data() + static_cast<std::size_t>(rows[i]) * d;
    std::copy(src, src + d, out.data() + i * static_cast<std::size_t>(d));
  }
  return g.record(std::move(out), {x},
                  [x, rows, d](Graph<T>& g, const Tensor<T>& gout) {
                    Tensor<T>& gx = g.grad_slot(x);
                    for (std::size_t i = 0; i < rows.size(); ++i) {
                      T* dst = gx.data() + static_cast<std::size_t>(rows[i]) * d;
                      const T* src = gout.data() + i * static_cast<std::size_t>(d);
                      for (int j = 0; j < d; ++j) dst[j] += src[j];
                    }
                  },
                  "gather_rows");
}

template <typename T>
Var gather_flat(Graph<T>& g, Var x, const std::vector<std::int64_t>& indices) {
  const std::size_t n = g.value(x).size();
  Tensor<T> out({static_cast<int>(indices.size())});
  for (std::size_t i = 0; i < indices.size(); ++i) {
    require(indices[i] >= 0 && static_cast<std::size_t>(indices[i]) < n, ErrorKind::shape,
            "gather_flat: index out of range");
    out[i] = g.value(x)[static_cast<std::size_t>(indices[i])];
  }
  return g.record(std::move(out), {x},
                  [x, indices](Graph<T>& g, const Tensor<T>& gout) {
                    Tensor<T>& gx = g.grad_slot(x);
                    for (std::size_t i = 0; i < indices.size(); ++i) gx[static_cast<std::size_t>(indices[i])] += gout[i];
                  },
                  "gather_flat");
}

// --------------------------------------------------------- dense algebra

template <typename T>
Var linear(Graph<T>& g, Var x, Var weight, Var bias) {
  const Shape& xs = g.shape(x);
  const Shape& ws = g.shape(weight);
  check_rank(xs, 2, "linear input");
  check_rank(ws, 2, "linear weight");
  require(ws[1] == xs[1], ErrorKind::shape, "linear: weight " + shape_str(ws) + " vs input " + shape_str(xs));
  const int n = xs[0], in = xs[1], outf = ws[0];
  if (bias.valid()) require(g.shape(bias) == Shape{outf}, ErrorKind::shape, "linear: bias shape mismatch");
  Tensor<T> out({n, outf});
  MatMap<T> om(out.data(), n, outf);
  om.noalias() = ConstMatMap<T>(g.value(x).data(), n, in) * ConstMatMap<T>(g.value(weight).data(), outf, in).transpose();
  if (bias.valid()) {
    const T* bv = g.value(bias).data();
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < outf; ++j) om(i, j) += bv[j];
  }
  return g.record(std::move(out), {x, weight, bias},
                  [x, weight, bias, n, in, outf](Graph<T>& g, const Tensor<T>& gout) {
                    ConstMatMap<T> gm(gout.data(), n, outf);
                    if (g.requires_grad(x)) {
                      MatMap<T> dx(g.grad_slot(x).data(), n, in);
                      dx.noalias() += gm * ConstMatMap<T>(g.value(weight).data(), outf, in);
                    }
                    if (g.requires_grad(weight)) {
                      MatMap<T> dw(g.grad_slot(weight).data(), outf, in);
                      dw.noalias() += gm.transpose() * ConstMatMap<T>(g.value(x).data(), n, in);
                    }
                    if (bias.valid() && g.requires_grad(bias)) {
                      Tensor<T>& db = g.grad_slot(bias);
                      for (int j = 0; j < outf; ++j) {
                        double acc = 0.0;
                        for (int i = 0; i < n; ++i) acc += gm(i, j);
                        db[static_cast<std::size_t>(j)] += static_cast<T>(acc);
                      }
                    }
                  },
                  "linear");
}

template <typename T>
Var matmul(Graph<T>& g, Var x, Var y) {
  const Shape& xs = g.shape(x);
  const Shape& ys = g.shape(y);
  check_rank(xs, 2, "matmul lhs");
  check_rank(ys, 2, "matmul rhs");
  require(xs[1] == ys[0], ErrorKind::shape, "matmul: " + shape_str(xs) + " x " + shape_str(ys));
  const int a = xs[0], b = xs[1], c = ys[1];
  Tensor<T> out({a, c});
  MatMap<T>(out.data(), a, c).noalias() = ConstMatMap<T>(g.value(x).data(), a, b) * ConstMatMap<T>(g.value(y).data(), b, c);
  return g.record(std::move(out), {x, y},
                  [x, y, a, b, c](Graph<T>& g, const Tensor<T>& gout) {
                    ConstMatMap<T> gm(gout.data(), a, c);
                    if (g.requires_grad(x))
                      MatMap<T>(g.grad_slot(x).data(), a, b).noalias() +=
                          gm * ConstMatMap<T>(g.value(y).data(), b, c).transpose();
                    if (g.requires_grad(y))
                      MatMap<T>(g.grad_slot(y).data(), b, c).noalias() +=
                          ConstMatMap<T>(g.value(x).data(), a, b).transpose() * gm;
                  },
                  "matmul");
}

template <typename T>
Var transpose(Graph<T>& g, Var x) {
  check_rank(g.shape(x), 2, "transpose");
  return permute(g, x, {1, 0});
}

// ------------------------------------------------------------ reductions

template <typename T>
Var global_avg_pool(Graph<T>& g, Var x) {
  const Shape& xs = g.shape(x);
  check_rank(xs, 4, "global_avg_pool");
  const int n = xs[0], c = xs[1];
  const std::size_t hw = static_cast<std::size_t>(xs[2]) * xs[3];
  Tensor<T> out({n, c});
  for (std::size_t i = 0; i < static_cast<std::size_t>(n) * c; ++i) {
    const T* p = g.value(x).data() + i * hw;
    double acc = 0.0;
    for (std::size_t j = 0; j < hw; ++j) acc += p[j];
    out[i] = static_cast<T>(acc / static_cast<double>(hw));
  }
  return g.record(std::move(out), {x},
                  [x, n, c, hw](Graph<T>& g, const Tensor<T>& gout) {
                    Tensor<T>& gx = g.grad_slot(x);
                    for (std::size_t i = 0; i < static_cast<std::size_t>(n) * c; ++i) {
                      const T v = static_cast<T>(static_cast<double>(gout[i]) / static_cast<double>(hw));
                      T* p = gx.data() + i * hw;
                      for (std::size_t j = 0; j < hw; ++j) p[j] += v;
                    }
                  },
                  "global_avg_pool");
}

template <typename T>
Var mul_channels(Graph<T>& g, Var x, Var s) {
  const Shape& xs = g.shape(x);
  check_rank(xs, 4, "mul_channels");
  require(g.shape(s) == Shape{xs[0], xs[1]}, ErrorKind::shape, "mul_channels: scale shape mismatch");
  const std::size_t nc = static_cast<std::size_t>(xs[0]) * xs[1];
  const std::size_t hw = static_cast<std::size_t>(xs[2]) * xs[3];
  Tensor<T> out = g.value(x);
  for (std::size_t i = 0; i < nc; ++i) {
    const T sv = g.value(s)[i];
    T* p = out.data() + i * hw;
    for (std::size_t j = 0; j < hw; ++j) p[j] *= sv;
  }
  return g.record(std::move(out), {x, s},
                  [x, s, nc, hw](Graph<T>& g, const Tensor<T>& gout) {
                    if (g.requires_grad(x)) {
                      Tensor<T>& gx = g.grad_slot(x);
                      for (std::size_t i = 0; i < nc; ++i) {
                        const T sv = g.value(s)[i];
                        for (std::size_t j = 0; j < hw; ++j) gx[i * hw + j] += gout[i * hw + j] * sv;
                      }
                    }
                    if (g.requires_grad(s)) {
                      Tensor<T>& gs = g.grad_slot(s);
                      const Tensor<T>& xv = g.value(x);
                      for (std::size_t i = 0; i < nc; ++i) {
                        double acc = 0.0;
                        for (std::size_t j = 0; j < hw; ++j) acc += static_cast<double>(gout[i * hw + j]) * xv[i * hw + j];
                        gs[i] += static_cast<T>(acc);
                      }
                    }
                  },
                  "mul_channels");
}

template <typename T>
Var softmax(Graph<T>& g, Var x, int axis) {
  const Shape& xs = g.shape(x);
  check_rank(xs, 2, "softmax");
  require(axis == 0 || axis == 1, ErrorKind::shape, "softmax: axis must be 0 or 1");
  const int rows = xs[0], cols = xs[1];
  // Walk "lines" along the softmax axis: count, extent, element stride, line stride.
  const int lines = axis == 1 ? rows : cols;
  const int extent = axis == 1 ? cols : rows;
  const std::size_t step = axis == 1 ? 1 : static_cast<std::size_t>(cols);
  const std::size_t line_stride = axis == 1 ? static_cast<std::size_t>(cols) : 1;
  Tensor<T> out(xs);
  const Tensor<T>& xv = g.value(x);
  for (int l = 0; l < lines; ++l) {
    const std::size_t base = static_cast<std::size_t>(l) * line_stride;
    T mx = xv[base];
    for (int e = 1; e < extent; ++e) mx = std::max(mx, xv[base + e * step]);
    double z = 0.0;
    for (int e = 0; e < extent; ++e) z += std::exp(static_cast<double>(xv[base + e * step] - mx));
    for (int e = 0; e < extent; ++e)
      out[base + e * step] = static_cast<T>(std::exp(static_cast<double>(xv[base + e * step] - mx)) / z);
  }
  const int y_id = static_cast<int>(g.size());
  return g.record(std::move(out), {x},
                  [x, y_id, lines, extent, step, line_stride](Graph<T>& g, const Tensor<T>& gout) {
                    const Tensor<T>& y = g.value(Var{y_id});
                    Tensor<T>& gx = g.grad_slot(x);
                    for (int l = 0; l < lines; ++l) {
                      const std::size_t base = static_cast<std::size_t>(l) * line_stride;
                      double dot = 0.0;
                      for (int e = 0; e < extent; ++e) dot += static_cast<double>(y[base + e * step]) * gout[base + e * step];
                      for (int e = 0; e < extent; ++e) {
                        const std::size_t i = base + e * step;
                        gx[i] += static_cast<T>(y[i] * (gout[i] - dot));
                      }
                    }
                  },
                  "softmax");
}

template <typename T>
Var mse(Graph<T>& g, Var x, Var y) {
  check_same_shape(g.shape(x), g.shape(y), "mse");
  const Tensor<T>& xv = g.value(x);
  const Tensor<T>& yv = g.value(y);
  const std::size_t n = xv.size();
  require(n > 0, ErrorKind::shape, "mse: empty input");
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(xv[i]) - static_cast<double>(yv[i]);
    acc += d * d;
  }
  Tensor<T> out({1}, static_cast<T>(acc / static_cast<double>(n)));
  return g.record(std::move(out), {x, y},
                  [x, y, n](Graph<T>& g, const Tensor<T>& gout) {
                    const Tensor<T>& xv = g.value(x);
                    const Tensor<T>& yv = g.value(y);
                    const double k = 2.0 * static_cast<double>(gout[0]) / static_cast<double>(n);
                    Tensor<T> gx(g.shape(x));
                    for (std::size_t i = 0; i < n; ++i)
                      gx[i] = static_cast<T>(k * (static_cast<double>(xv[i]) - static_cast<double>(yv[i])));
                    g.accumulate(x, gx);
                    if (g.requires_grad(y)) {
                      for (T& v : gx.storage()) v = -v;
                      g.accumulate(y, gx);
                    }
                  },
                  "mse");
}

template <typename T>
Var sum(Graph<T>& g, Var x) {
  double acc = 0.0;
  for (T v : g.value(x).values()) acc += v;
  Tensor<T> out({1}, static_cast<T>(acc));
  return g.record(std::move(out), {x},
                  [x](Graph<T>& g, const Tensor<T>& gout) { g.accumulate(x, Tensor<T>(g.shape(x), gout[0])); },
                  "sum");
}

template <typename T>
Var mean(Graph<T>& g, Var x) {
  const std::size_t n = g.value(x).size();
  require(n > 0, ErrorKind::shape, "mean: empty input");
  return scale(g, sum(g, x), 1.0 / static_cast<double>(n));
}

template <typename T>
Var row_norms(Graph<T>& g, Var x) {
  const Shape& xs = g.shape(x);
  check_rank(xs, 2, "row_norms");
  const int rows = xs[0], d = xs[1];
  Tensor<T> out({rows});
  for (int r = 0; r < rows; ++r) {
    const T* p = g.value(x).data() + static_cast<std::size_t>(r) * d;
    double acc = 0.0;
    for (int j = 0; j < d; ++j) acc += static_cast<double>(p[j]) * p[j];
    out[static_cast<std::size_t>(r)] = static_cast<T>(std::sqrt(acc));
  }
  const int y_id = static_cast<int>(g.size());
  return g.record(std::move(out), {x},
                  [x, y_id, rows, d](Graph<T>& g, const Tensor<T>& gout) {
                    const Tensor<T>& nv = g.value(Var{y_id});
                    const Tensor<T>& xv = g.value(x);
                    Tensor<T>& gx = g.grad_slot(x);
                    for (int r = 0; r < rows; ++r) {
                      const T nr = nv[static_cast<std::size_t>(r)];
                      if (nr == T(0)) continue;
                      const T k = gout[static_cast<std::size_t>(r)] / nr;
                      for (int j = 0; j < d; ++j) {
                        const std::size_t i = static_cast<std::size_t>(r) * d + j;
                        gx[i] += k * xv[i];
                      }
                    }
                  },
                  "row_norms");
}

template <typename T>
Var l2_normalize_rows(Graph<T>& g, Var x) {
  const Shape& xs = g.shape(x);
  check_rank(xs, 2, "l2_normalize_rows");
  const int rows = xs[0], d = xs[1];
  Tensor<T> out(xs);
  std::vector<T> norms(static_cast<std::size_t>(rows));
  for (int r = 0; r < rows; ++r) {
    const T* p = g.value(x).data() + static_cast<std::size_t>(r) * d;
    double acc = 0.0;
    for (int j = 0; j < d; ++j) acc += static_cast<double>(p[j]) * p[j];
    require(acc > 0.0, ErrorKind::numerical, "l2_normalize_rows: zero row");
    const T nr = static_cast<T>(std::sqrt(acc));
    norms[static_cast<std::size_t>(r)] = nr;
    for (int j = 0; j < d; ++j) out[static_cast<std::size_t>(r) * d + j] = p[j] / nr;
  }
  const int y_id = static_cast<int>(g.size());
  return g.record(std::move(out), {x},
                  [x, y_id, rows, d, norms](Graph<T>& g, const Tensor<T>& gout) {
                    const Tensor<T>& y = g.value(Var{y_id});
                    Tensor<T>& gx = g.grad_slot(x);
                    for (int r = 0; r < rows; ++r) {
                      const std::size_t base = static_cast<std::size_t>(r) * d;
                      double dot = 0.0;
                      for (int j = 0; j < d; ++j) dot += static_cast<double>(y[base + j]) * gout[base + j];
                      for (int j = 0; j < d; ++j)
                        gx[base + j] += static_cast<T>((gout[base + j] - y[base + j] * dot) / norms[static_cast<std::size_t>(r)]);
                    }
                  },
                  "l2_normalize_rows");
}

// --------------------------------------------------- fixed rearrangements

template <typename T>
Var space_to_depth(Graph<T>& g, Var x, int block) {
  return g.record(ctsynth::space_to_depth(g.value(x), block), {x},
                  [x, block](Graph<T>& g, const Tensor<T>& gout) {
                    g.accumulate(x, ctsynth::depth_to_space(gout, block));
                  },
                  "space_to_depth");
}

template <typename T>
Var depth_to_space(Graph<T>& g, Var x, int block) {
  return g.record(ctsynth::depth_to_space(g.value(x), block), {x},
                  [x, block](Graph<T>& g, const Tensor<T>& gout) {
                    g.accumulate(x, ctsynth::space_to_depth(gout, block));
                  },
                  "depth_to_space");
}

template <typename T>
Var shuffle_width(Graph<T>& g, Var x, int r) {
  return g.record(ctsynth::shuffle_width(g.value(x), r), {x},
                  [x, r](Graph<T>& g, const Tensor<T>& gout) { g.accumulate(x, ctsynth::unshuffle_width(gout, r)); },
                  "shuffle_width");
}

template <typename T>
Var upsample_linear_width(Graph<T>& g, Var x, int r) {
  return g.record(ctsynth::upsample_linear_width(g.value(x), r), {x},
                  [x, r](Graph<T>& g, const Tensor<T>& gout) {
                    g.accumulate(x, ctsynth::upsample_linear_width_adjoint(gout, r));
                  },
                  "upsample_linear_width");
}

template <typename T>
Var haar_level(Graph<T>& g, Var x) {
  check_rank(g.shape(x), 3, "haar_level");
  const int h = g.shape(x)[1], w = g.shape(x)[2];
  return g.record(ctsynth::haar_level(g.value(x)), {x},
                  [x, h, w](Graph<T>& g, const Tensor<T>& gout) {
                    g.accumulate(x, ctsynth::haar_level_adjoint(gout, h, w));
                  },
                  "haar_level");
}

template <typename T>
Var interleave_slices(Graph<T>& g, Var originals, Var synthesized, int r) {
  const Shape& os = g.shape(originals);
  const Shape& ss = g.shape(synthesized);
  check_rank(os, 4, "interleave_slices originals");
  check_rank(ss, 4, "interleave_slices synthesized");
  const int b = os[0], l = os[1], h = os[2], w = os[3];
  require(l >= 2 && r >= 2, ErrorKind::shape, "interleave_slices: need l >= 2 and r >= 2");
  require(ss == Shape{b * (l - 1), r - 1, h, w}, ErrorKind::shape,
          "interleave_slices: synthesized shape " + shape_str(ss) + " does not match originals " + shape_str(os));
  const int lo = r * (l - 1) + 1;
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  Tensor<T> out({b, lo, h, w});
  auto for_each_plane = [=](auto&& fn) {
    for (int bi = 0; bi < b; ++bi)
      for (int z = 0; z < lo; ++z) {
        const std::size_t dst = (static_cast<std::size_t>(bi) * lo + z) * plane;
        const int pair = z / r, t = z % r;
        if (t == 0)
          fn(dst, true, (static_cast<std::size_t>(bi) * l + pair) * plane);
        else
          fn(dst, false, ((static_cast<std::size_t>(bi) * (l - 1) + pair) * (r - 1) + (t - 1)) * plane);
      }
  };
  const T* ov = g.value(originals).data();
  const T* sv = g.value(synthesized).data();
  for_each_plane([&](std::size_t dst, bool orig, std::size_t src) {
    const T* p = orig ? ov + src : sv + src;
    std::copy(p, p + plane, out.data() + dst);
  });
  return g.record(std::move(out), {originals, synthesized},
                  [originals, synthesized, for_each_plane, plane](Graph<T>& g, const Tensor<T>& gout) {
                    const bool need_o = g.requires_grad(originals);
                    const bool need_s = g.requires_grad(synthesized);
                    T* go = need_o ? g.grad_slot(originals).data() : nullptr;
                    T* gs = need_s ? g.grad_slot(synthesized).data() : nullptr;
                    for_each_plane([&](std::size_t dst, bool orig, std::size_t src) {
                      T* p = orig ? go : gs;
                      if (!p) return;
                      for (std::size_t i = 0; i < plane; ++i) p[src + i] += gout[dst + i];
                    });
                  },
                  "interleave_slices");
}

#define CTSYNTH_INSTANTIATE(T)                                                                     \
  template Var conv2d(Graph<T>&, Var, Var, Var);                                                   \
  template Var relu(Graph<T>&, Var);                                                               \
  template Var sigmoid(Graph<T>&, Var);                                                            \
  template Var add(Graph<T>&, Var, Var);                                                           \
  template Var sub(Graph<T>&, Var, Var);                                                           \
  template Var mul(Graph<T>&, Var, Var);                                                           \
  template Var scale(Graph<T>&, Var, double);                                                      \
  template Var add_scalar(Graph<T>&, Var, double);                                                 \
  template Var concat(Graph<T>&, const std::vector<Var>&, int);                                    \
  template Var linear(Graph<T>&, Var, Var, Var);                                                   \
  template Var global_avg_pool(Graph<T>&, Var);                                                    \
  template Var mul_channels(Graph<T>&, Var, Var);                                                  \
  template Var softmax(Graph<T>&, Var, int);                                                       \
  template Var mse(Graph<T>&, Var, Var);                                                           \
  template Var sum(Graph<T>&, Var);                                                                \
  template Var mean(Graph<T>&, Var);                                                               \
  template Var matmul(Graph<T>&, Var, Var);                                                        \
  template Var transpose(Graph<T>&, Var);                                                          \
  template Var l2_normalize_rows(Graph<T>&, Var);                                                  \
  template Var row_norms(Graph<T>&, Var);                                                          \
  template Var gather_rows(Graph<T>&, Var, const std::vector<int>&);                               \
  template Var gather_flat(Graph<T>&, Var, const std::vector<std::int64_t>&);                      \
  template Var reshape(Graph<T>&, Var, Shape);                                                     \
  template Var permute(Graph<T>&, Var, const std::vector<int>&);                                   \
  template Var narrow(Graph<T>&, Var, int, int, int);                                              \
  template Var space_to_depth(Graph<T>&, Var, int);                                                \
  template Var depth_to_space(Graph<T>&, Var, int);                                                \
  template Var shuffle_width(Graph<T>&, Var, int);                                                 \
  template Var upsample_linear_width(Graph<T>&, Var, int);                                         \
  template Var haar_level(Graph<T>&, Var);                                                         \
  template Var interleave_slices(Graph<T>&, Var, Var, int);

CTSYNTH_INSTANTIATE(float)
CTSYNTH_INSTANTIATE(double)

#undef CTSYNTH_INSTANTIATE

}  // namespace ctsynth::ad
