// Copyright 2026 The MDC Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Convolution-family operations, lowered to GEMM through im2col.

#include <algorithm>
#include <vector>

#include "mdc/autograd.hpp"
#include "mdc/simd/kernels.hpp"

namespace mdc {
namespace {

using simd::Trans;

// Reusable per-thread workspace for im2col columns. Contents are
// unspecified on acquisition; every user overwrites the whole span.
class Scratch {
 public:
  explicit Scratch(size_t n) {
    auto& pool = free_list();
    if (!pool.empty()) {
      buf_ = std::move(pool.back());
      pool.pop_back();
    }
    if (buf_.size() < n) buf_.resize(n);
  }
  ~Scratch() { free_list().push_back(std::move(buf_)); }
  Scratch(const Scratch&) = delete;
  Scratch& operator=(const Scratch&) = delete;

  double* data() { return buf_.data(); }

 private:
  static std::vector<std::vector<double>>& free_list() {
    thread_local std::vector<std::vector<double>> pool;
    return pool;
  }
  std::vector<double> buf_;
};

struct Geom2d {
  int channels, h, w;  // source grid
  int kh, kw;
  int stride, pad, dilation;
  int ho, wo;  // output grid
};

// Range of output columns ox for which ox * stride + off lands in [0, w).
inline void valid_range(int off, int stride, int w, int wo, int& lo, int& hi) {
  lo = off >= 0 ? 0 : (-off + stride - 1) / stride;
  hi = w - off <= 0 ? 0 : (w - off + stride - 1) / stride;
  lo = std::min(lo, wo);
  hi = std::clamp(hi, lo, wo);
}

void im2col(const double* x, const Geom2d& g, double* cols) {
  const size_t plane = static_cast<size_t>(g.ho) * g.wo;
  for (int c = 0; c < g.channels; ++c) {
    for (int i = 0; i < g.kh; ++i) {
      for (int j = 0; j < g.kw; ++j) {
        double* row = cols + ((static_cast<size_t>(c) * g.kh + i) * g.kw + j) * plane;
        const int xoff = j * g.dilation - g.pad;
        int lo, hi;
        valid_range(xoff, g.stride, g.w, g.wo, lo, hi);
        for (int oy = 0; oy < g.ho; ++oy) {
          double* dst = row + static_cast<size_t>(oy) * g.wo;
          const int iy = oy * g.stride - g.pad + i * g.dilation;
          if (iy < 0 || iy >= g.h) {
            std::fill(dst, dst + g.wo, 0.0);
            continue;
          }
          const double* src = x + (static_cast<size_t>(c) * g.h + iy) * g.w;
          std::fill(dst, dst + lo, 0.0);
          if (g.stride == 1) {
            std::copy(src + lo + xoff, src + hi + xoff, dst + lo);
          } else {
            for (int ox = lo; ox < hi; ++ox) dst[ox] = src[ox * g.stride + xoff];
          }
          std::fill(dst + hi, dst + g.wo, 0.0);
        }
      }
    }
  }
}

void col2im(const double* cols, const Geom2d& g, double* x) {
  const size_t plane = static_cast<size_t>(g.ho) * g.wo;
  for (int c = 0; c < g.channels; ++c) {
    for (int i = 0; i < g.kh; ++i) {
      for (int j = 0; j < g.kw; ++j) {
        const double* row = cols + ((static_cast<size_t>(c) * g.kh + i) * g.kw + j) * plane;
        const int xoff = j * g.dilation - g.pad;
        int lo, hi;
        valid_range(xoff, g.stride, g.w, g.wo, lo, hi);
        for (int oy = 0; oy < g.ho; ++oy) {
          const int iy = oy * g.stride - g.pad + i * g.dilation;
          if (iy < 0 || iy >= g.h) continue;
          const double* src = row + static_cast<size_t>(oy) * g.wo;
          double* dst = x + (static_cast<size_t>(c) * g.h + iy) * g.w;
          if (g.stride == 1) {
            double* d1 = dst + xoff;
            for (int ox = lo; ox < hi; ++ox) d1[ox] += src[ox];
          } else {
            for (int ox = lo; ox < hi; ++ox) dst[ox * g.stride + xoff] += src[ox];
          }
        }
      }
    }
  }
}

void add_bias(Tensor& y, const Tensor& b) {
  const int c = y.dim(0);
  const size_t inner = y.size() / static_cast<size_t>(c);
  for (int ch = 0; ch < c; ++ch) {
    double* p = y.data() + ch * inner;
    const double bv = b[ch];
    for (size_t i = 0; i < inner; ++i) p[i] += bv;
  }
}

void bias_grad(const Tensor& gy, Tensor& gb) {
  const int c = gy.dim(0);
  const size_t inner = gy.size() / static_cast<size_t>(c);
  for (int ch = 0; ch < c; ++ch) {
    const double* p = gy.data() + ch * inner;
    double acc = 0.0;
    for (size_t i = 0; i < inner; ++i) acc += p[i];
    gb[ch] += acc;
  }
}

bool wants(const Node& self, size_t i) {
  return i < self.inputs.size() && self.inputs[i] && self.inputs[i]->requires_grad;
}

// 3-D analogue of im2col for a 3x3x3 kernel, stride 1, zero padding 1.
void im2col3(const double* x, int c, int d, int h, int w, double* cols) {
  const size_t vol = static_cast<size_t>(d) * h * w;
  for (int ch = 0; ch < c; ++ch) {
    for (int t = 0; t < 27; ++t) {
      const int dz = t / 9 - 1, dy = (t / 3) % 3 - 1, dx = t % 3 - 1;
      double* row = cols + (static_cast<size_t>(ch) * 27 + t) * vol;
      for (int z = 0; z < d; ++z) {
        for (int y = 0; y < h; ++y) {
          double* dst = row + (static_cast<size_t>(z) * h + y) * w;
          const int sz = z + dz, sy = y + dy;
          if (sz < 0 || sz >= d || sy < 0 || sy >= h) {
            std::fill(dst, dst + w, 0.0);
            continue;
          }
          const double* src = x + ((static_cast<size_t>(ch) * d + sz) * h + sy) * w;
          const int lo = std::max(0, -dx), hi = std::min(w, w - dx);
          std::fill(dst, dst + lo, 0.0);
          std::copy(src + lo + dx, src + hi + dx, dst + lo);
          std::fill(dst + hi, dst + w, 0.0);
        }
      }
    }
  }
}

void col2im3(const double* cols, int c, int d, int h, int w, double* x) {
  const size_t vol = static_cast<size_t>(d) * h * w;
  for (int ch = 0; ch < c; ++ch) {
    for (int t = 0; t < 27; ++t) {
      const int dz = t / 9 - 1, dy = (t / 3) % 3 - 1, dx = t % 3 - 1;
      const double* row = cols + (static_cast<size_t>(ch) * 27 + t) * vol;
      for (int z = 0; z < d; ++z) {
        for (int y = 0; y < h; ++y) {
          const int sz = z + dz, sy = y + dy;
          if (sz < 0 || sz >= d || sy < 0 || sy >= h) continue;
          const double* src = row + (static_cast<size_t>(z) * h + y) * w;
          double* dst = x + ((static_cast<size_t>(ch) * d + sz) * h + sy) * w + dx;
          const int lo = std::max(0, -dx), hi = std::min(w, w - dx);
          for (int xx = lo; xx < hi; ++xx) dst[xx] += src[xx];
        }
      }
    }
  }
}

}  // namespace

Var conv2d(const Var& x, const Var& w, const Var& b, ConvGeom geom) {
  if (x.value().rank() != 3 || w.value().rank() != 4 || w.dim(1) != x.dim(0)) {
    throw ShapeError("conv2d: input " + shape_str(x.shape()) + " vs weight " +
                     shape_str(w.shape()));
  }
  Geom2d g{x.dim(0), x.dim(1), x.dim(2), w.dim(2), w.dim(3),
           geom.stride, geom.pad, geom.dilation, 0, 0};
  g.ho = (g.h + 2 * g.pad - g.dilation * (g.kh - 1) - 1) / g.stride + 1;
  g.wo = (g.w + 2 * g.pad - g.dilation * (g.kw - 1) - 1) / g.stride + 1;
  if (g.ho <= 0 || g.wo <= 0) throw ShapeError("conv2d: input smaller than kernel");
  const int cout = w.dim(0);
  const int kdim = g.channels * g.kh * g.kw;
  const int n = g.ho * g.wo;

  Scratch cols(static_cast<size_t>(kdim) * n);
  im2col(x.value().data(), g, cols.data());
  Tensor y({cout, g.ho, g.wo});
  simd::gemm(Trans::kNo, Trans::kNo, cout, n, kdim, w.value().data(), kdim, cols.data(), n,
             y.data(), n, false);
  if (b.defined()) add_bias(y, b.value());

  std::vector<Var> inputs{x, w};
  if (b.defined()) inputs.push_back(b);
  return make_op(std::move(y), std::move(inputs), [g, cout, kdim, n](Node& self) {
    const Tensor& xv = self.inputs[0]->value;
    const Tensor& wv = self.inputs[1]->value;
    if (wants(self, 2)) bias_grad(self.grad, self.inputs[2]->grad_buffer());
    if (wants(self, 1)) {
      Scratch cols(static_cast<size_t>(kdim) * n);
      im2col(xv.data(), g, cols.data());
      simd::gemm(Trans::kNo, Trans::kYes, cout, kdim, n, self.grad.data(), n, cols.data(), n,
                 self.inputs[1]->grad_buffer().data(), kdim, true);
    }
    if (wants(self, 0)) {
      Scratch dcols(static_cast<size_t>(kdim) * n);
      simd::gemm(Trans::kYes, Trans::kNo, kdim, n, cout, wv.data(), kdim, self.grad.data(), n,
                 dcols.data(), n, false);
      col2im(dcols.data(), g, self.inputs[0]->grad_buffer().data());
    }
  });
}

Var conv_transpose2d(const Var& x, const Var& w, const Var& b, int stride, int pad) {
  if (x.value().rank() != 3 || w.value().rank() != 4 || w.dim(0) != x.dim(0) ||
      w.dim(2) != w.dim(3)) {
    throw ShapeError("conv_transpose2d: input " + shape_str(x.shape()) + " vs weight " +
                     shape_str(w.shape()));
  }
  const int cin = x.dim(0), h = x.dim(1), wd = x.dim(2);
  const int cout = w.dim(1), k = w.dim(2);
  const int ho = (h - 1) * stride - 2 * pad + k;
  const int wo = (wd - 1) * stride - 2 * pad + k;
  if (ho <= 0 || wo <= 0) throw ShapeError("conv_transpose2d: empty output");
  // The adjoint convolution maps the output grid back onto the input grid.
  Geom2d g{cout, ho, wo, k, k, stride, pad, 1, h, wd};
  const int kdim = cout * k * k;
  const int n = h * wd;

  Scratch cols(static_cast<size_t>(kdim) * n);
  simd::gemm(Trans::kYes, Trans::kNo, kdim, n, cin, w.value().data(), kdim, x.value().data(), n,
             cols.data(), n, false);
  Tensor y({cout, ho, wo});
  col2im(cols.data(), g, y.data());
  if (b.defined()) add_bias(y, b.value());

  std::vector<Var> inputs{x, w};
  if (b.defined()) inputs.push_back(b);
  return make_op(std::move(y), std::move(inputs), [g, cin, kdim, n](Node& self) {
    if (wants(self, 2)) bias_grad(self.grad, self.inputs[2]->grad_buffer());
    Scratch dcols(static_cast<size_t>(kdim) * n);
    im2col(self.grad.data(), g, dcols.data());
    if (wants(self, 0)) {
      simd::gemm(Trans::kNo, Trans::kNo, cin, n, kdim, self.inputs[1]->value.data(), kdim,
                 dcols.data(), n, self.inputs[0]->grad_buffer().data(), n, true);
    }
    if (wants(self, 1)) {
      simd::gemm(Trans::kNo, Trans::kYes, cin, kdim, n, self.inputs[0]->value.data(), n,
                 dcols.data(), n, self.inputs[1]->grad_buffer().data(), kdim, true);
    }
  });
}

Var conv3d(const Var& x, const Var& w, const Var& b) {
  if (x.value().rank() != 4 || w.value().rank() != 5 || w.dim(1) != x.dim(0) ||
      w.dim(2) != 3 || w.dim(3) != 3 || w.dim(4) != 3) {
    throw ShapeError("conv3d: input " + shape_str(x.shape()) + " vs weight " +
                     shape_str(w.shape()));
  }
  const int cin = x.dim(0), d = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const int cout = w.dim(0);
  const int kdim = cin * 27;
  const int n = d * h * wd;
  Scratch cols(static_cast<size_t>(kdim) * n);
  im2col3(x.value().data(), cin, d, h, wd, cols.data());
  Tensor y({cout, d, h, wd});
  simd::gemm(Trans::kNo, Trans::kNo, cout, n, kdim, w.value().data(), kdim, cols.data(), n,
             y.data(), n, false);
  if (b.defined()) add_bias(y, b.value());

  std::vector<Var> inputs{x, w};
  if (b.defined()) inputs.push_back(b);
  return make_op(std::move(y), std::move(inputs), [cin, d, h, wd, cout, kdim, n](Node& self) {
    if (wants(self, 2)) bias_grad(self.grad, self.inputs[2]->grad_buffer());
    if (wants(self, 1)) {
      Scratch cols(static_cast<size_t>(kdim) * n);
      im2col3(self.inputs[0]->value.data(), cin, d, h, wd, cols.data());
      simd::gemm(Trans::kNo, Trans::kYes, cout, kdim, n, self.grad.data(), n, cols.data(), n,
                 self.inputs[1]->grad_buffer().data(), kdim, true);
    }
    if (wants(self, 0)) {
      Scratch dcols(static_cast<size_t>(kdim) * n);
      simd::gemm(Trans::kYes, Trans::kNo, kdim, n, cout, self.inputs[1]->value.data(), kdim,
                 self.grad.data(), n, dcols.data(), n, false);
      col2im3(dcols.data(), cin, d, h, wd, self.inputs[0]->grad_buffer().data());
    }
  });
}

Var filter_valid(const Var& x, const std::vector<double>& taps) {
  const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
  const int t = static_cast<int>(taps.size());
  const int ho = h - t + 1, wo = w - t + 1;
  if (ho <= 0 || wo <= 0) throw ShapeError("filter_valid: image smaller than window");
  const Tensor& xv = x.value();
  Tensor tmp({c, h, wo});
  for (int ch = 0; ch < c; ++ch) {
    for (int y = 0; y < h; ++y) {
      for (int ox = 0; ox < wo; ++ox) {
        double acc = 0.0;
        for (int i = 0; i < t; ++i) acc += taps[i] * xv.at(ch, y, ox + i);
        tmp.at(ch, y, ox) = acc;
      }
    }
  }
  Tensor out({c, ho, wo});
  for (int ch = 0; ch < c; ++ch) {
    for (int oy = 0; oy < ho; ++oy) {
      for (int ox = 0; ox < wo; ++ox) {
        double acc = 0.0;
        for (int i = 0; i < t; ++i) acc += taps[i] * tmp.at(ch, oy + i, ox);
        out.at(ch, oy, ox) = acc;
      }
    }
  }
  return make_op(std::move(out), {x}, [taps, c, h, w, t, ho, wo](Node& self) {
    Tensor gtmp({c, h, wo});
    for (int ch = 0; ch < c; ++ch) {
      for (int oy = 0; oy < ho; ++oy) {
        for (int ox = 0; ox < wo; ++ox) {
          const double gv = self.grad.at(ch, oy, ox);
          for (int i = 0; i < t; ++i) gtmp.at(ch, oy + i, ox) += taps[i] * gv;
        }
      }
    }
    Tensor& gx = self.inputs[0]->grad_buffer();
    for (int ch = 0; ch < c; ++ch) {
      for (int y = 0; y < h; ++y) {
        for (int ox = 0; ox < wo; ++ox) {
          const double gv = gtmp.at(ch, y, ox);
          for (int i = 0; i < t; ++i) gx.at(ch, y, ox + i) += taps[i] * gv;
        }
      }
    }
    (void)w;
  });
}

Var avg_pool2(const Var& x) {
  const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
  const int ho = h / 2, wo = w / 2;
  if (ho == 0 || wo == 0) throw ShapeError("avg_pool2: image too small");
  const Tensor& xv = x.value();
  Tensor out({c, ho, wo});
  for (int ch = 0; ch < c; ++ch) {
    for (int y = 0; y < ho; ++y) {
      for (int xx = 0; xx < wo; ++xx) {
        out.at(ch, y, xx) = 0.25 * (xv.at(ch, 2 * y, 2 * xx) + xv.at(ch, 2 * y, 2 * xx + 1) +
                                    xv.at(ch, 2 * y + 1, 2 * xx) +
                                    xv.at(ch, 2 * y + 1, 2 * xx + 1));
      }
    }
  }
  return make_op(std::move(out), {x}, [c, ho, wo](Node& self) {
    Tensor& gx = self.inputs[0]->grad_buffer();
    for (int ch = 0; ch < c; ++ch) {
      for (int y = 0; y < ho; ++y) {
        for (int xx = 0; xx < wo; ++xx) {
          const double gv = 0.25 * self.grad.at(ch, y, xx);
          gx.at(ch, 2 * y, 2 * xx) += gv;
          gx.at(ch, 2 * y, 2 * xx + 1) += gv;
          gx.at(ch, 2 * y + 1, 2 * xx) += gv;
          gx.at(ch, 2 * y + 1, 2 * xx + 1) += gv;
        }
      }
    }
  });
}

}  // namespace mdc
