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

#include "mdc/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace mdc::image {
namespace {

void require_image(const Tensor& img) {
  if (img.rank() != 3 || img.dim(0) != 3 || img.dim(1) < 1 || img.dim(2) < 1) {
    throw ShapeError("expected a [3,H,W] image, got " + shape_str(img.shape()));
  }
}

int mirror(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

}  // namespace

Tensor read_png(const std::string& path) {
  png_image pi{};
  pi.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&pi, path.c_str())) {
    throw std::runtime_error("cannot read PNG " + path + ": " + pi.message);
  }
  pi.format = PNG_FORMAT_RGB;
  std::vector<png_byte> buf(PNG_IMAGE_SIZE(pi));
  if (!png_image_finish_read(&pi, nullptr, buf.data(), 0, nullptr)) {
    png_image_free(&pi);
    throw std::runtime_error("cannot decode PNG " + path + ": " + pi.message);
  }
  const int h = static_cast<int>(pi.height), w = static_cast<int>(pi.width);
  Tensor img({3, h, w});
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) {
        img.at(c, y, x) = buf[(static_cast<size_t>(y) * w + x) * 3 + c] / 255.0;
      }
    }
  }
  return img;
}

void write_png(const std::string& path, const Tensor& img) {
  require_image(img);
  const int h = img.dim(1), w = img.dim(2);
  std::vector<png_byte> buf(static_cast<size_t>(h) * w * 3);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) {
        const double v = std::clamp(img.at(c, y, x), 0.0, 1.0);
        buf[(static_cast<size_t>(y) * w + x) * 3 + c] =
            static_cast<png_byte>(std::lround(v * 255.0));
      }
    }
  }
  png_image pi{};
  pi.version = PNG_IMAGE_VERSION;
  pi.width = static_cast<png_uint_32>(w);
  pi.height = static_cast<png_uint_32>(h);
  pi.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&pi, path.c_str(), 0, buf.data(), 0, nullptr)) {
    throw std::runtime_error("cannot write PNG " + path + ": " + pi.message);
  }
}

Tensor resize_bilinear(const Tensor& img, int out_h, int out_w) {
  require_image(img);
  if (out_h < 1 || out_w < 1) throw std::invalid_argument("resize target must be positive");
  const int h = img.dim(1), w = img.dim(2);
  Tensor out({3, out_h, out_w});
  const double sy = static_cast<double>(h) / out_h, sx = static_cast<double>(w) / out_w;
  for (int y = 0; y < out_h; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, h - 1.0);
    const int y0 = static_cast<int>(fy), y1 = std::min(y0 + 1, h - 1);
    const double ty = fy - y0;
    for (int x = 0; x < out_w; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, w - 1.0);
      const int x0 = static_cast<int>(fx), x1 = std::min(x0 + 1, w - 1);
      const double tx = fx - x0;
      for (int c = 0; c < 3; ++c) {
        const double top = img.at(c, y0, x0) * (1 - tx) + img.at(c, y0, x1) * tx;
        const double bot = img.at(c, y1, x0) * (1 - tx) + img.at(c, y1, x1) * tx;
        out.at(c, y, x) = top * (1 - ty) + bot * ty;
      }
    }
  }
  return out;
}

Tensor ensure_min_side(const Tensor& img, int min_side) {
  require_image(img);
  const int h = img.dim(1), w = img.dim(2);
  if (std::min(h, w) >= min_side) return img;
  const double scale = static_cast<double>(min_side) / std::min(h, w);
  const int nh = h <= w ? min_side : static_cast<int>(std::lround(h * scale));
  const int nw = w < h ? min_side : static_cast<int>(std::lround(w * scale));
  return resize_bilinear(img, nh, nw);
}

int round_up(int v, int multiple) { return (v + multiple - 1) / multiple * multiple; }

Tensor reflect_pad(const Tensor& img, int out_h, int out_w) {
  require_image(img);
  const int h = img.dim(1), w = img.dim(2);
  if (out_h < h || out_w < w) throw std::invalid_argument("padding target smaller than image");
  Tensor out({3, out_h, out_w});
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < out_h; ++y) {
      for (int x = 0; x < out_w; ++x) out.at(c, y, x) = img.at(c, mirror(y, h), mirror(x, w));
    }
  }
  return out;
}

Tensor crop(const Tensor& img, int top, int left, int h, int w) {
  require_image(img);
  if (top < 0 || left < 0 || h < 1 || w < 1 || top + h > img.dim(1) || left + w > img.dim(2)) {
    throw std::out_of_range("crop window outside image");
  }
  Tensor out({3, h, w});
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) out.at(c, y, x) = img.at(c, top + y, left + x);
    }
  }
  return out;
}

Tensor constant(int h, int w, double value) {
  Tensor t({3, h, w});
  t.fill(value);
  return t;
}

Tensor synthetic_texture(int h, int w, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Tensor img({3, h, w});
  // Base: a smooth colour gradient.
  double c0[3], c1[3];
  for (int c = 0; c < 3; ++c) {
    c0[c] = u(rng);
    c1[c] = u(rng);
  }
  const double ang = u(rng) * 2 * std::numbers::pi;
  const double gx = std::cos(ang), gy = std::sin(ang);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double t = 0.5 + 0.5 * (gx * (x / double(w) - 0.5) + gy * (y / double(h) - 0.5)) * 1.4;
      for (int c = 0; c < 3; ++c) img.at(c, y, x) = c0[c] + (c1[c] - c0[c]) * std::clamp(t, 0.0, 1.0);
    }
  }
  // Oriented gratings.
  const int gratings = 1 + static_cast<int>(u(rng) * 3);
  for (int g = 0; g < gratings; ++g) {
    const double period = 4.0 + u(rng) * 20.0;
    const double theta = u(rng) * std::numbers::pi;
    const double phase = u(rng) * 2 * std::numbers::pi;
    const double amp = 0.1 + 0.2 * u(rng);
    double tint[3];
    for (double& t : tint) t = u(rng) * 2 - 1;
    const double kx = std::cos(theta) * 2 * std::numbers::pi / period;
    const double ky = std::sin(theta) * 2 * std::numbers::pi / period;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const double s = amp * std::sin(kx * x + ky * y + phase);
        for (int c = 0; c < 3; ++c) img.at(c, y, x) += s * tint[c];
      }
    }
  }
  // Filled discs and rectangles.
  const int shapes = static_cast<int>(u(rng) * 5);
  for (int s = 0; s < shapes; ++s) {
    const bool disc = u(rng) < 0.5;
    const double cy = u(rng) * h, cx = u(rng) * w;
    const double ry = (0.05 + 0.25 * u(rng)) * h, rx = (0.05 + 0.25 * u(rng)) * w;
    double col[3];
    for (double& v : col) v = u(rng);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const double dy = (y - cy) / ry, dx = (x - cx) / rx;
        const bool inside = disc ? dx * dx + dy * dy <= 1.0 : std::abs(dx) <= 1 && std::abs(dy) <= 1;
        if (inside) {
          for (int c = 0; c < 3; ++c) img.at(c, y, x) = col[c];
        }
      }
    }
  }
  std::normal_distribution<double> noise(0.0, 0.01);
  for (double& v : img.storage()) v = std::clamp(v + noise(rng), 0.0, 1.0);
  return img;
}

void write_synthetic_dataset(const std::string& dir, int count, int h, int w, uint64_t seed) {
  std::filesystem::create_directories(dir);
  std::mt19937_64 rng(seed);
  for (int i = 0; i < count; ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "tex_%04d.png", i);
    write_png((std::filesystem::path(dir) / name).string(), synthetic_texture(h, w, rng));
  }
}

}  // namespace mdc::image
