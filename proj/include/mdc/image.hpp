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

#ifndef MDC_IMAGE_HPP_
#define MDC_IMAGE_HPP_

#include <cstdint>
#include <random>
#include <string>

#include "mdc/tensor.hpp"

namespace mdc::image {

// Images are [3, H, W] tensors with samples in [0, 1].

Tensor read_png(const std::string& path);
// Samples are clamped to [0, 1] and rounded to 8 bits.
void write_png(const std::string& path, const Tensor& img);

// Bilinear resampling with half-pixel centers.
Tensor resize_bilinear(const Tensor& img, int out_h, int out_w);
// Rescales so the shorter side equals `min_side` when it is smaller.
Tensor ensure_min_side(const Tensor& img, int min_side);

// Mirror padding (edge sample not repeated) on the bottom and right.
Tensor reflect_pad(const Tensor& img, int out_h, int out_w);
int round_up(int v, int multiple);
Tensor crop(const Tensor& img, int top, int left, int h, int w);

Tensor constant(int h, int w, double value);

// Procedural RGB texture: gratings, gradients and filled shapes.
Tensor synthetic_texture(int h, int w, std::mt19937_64& rng);
// Writes `count` textures named tex_NNNN.png and returns the directory.
void write_synthetic_dataset(const std::string& dir, int count, int h, int w, uint64_t seed);

}  // namespace mdc::image

#endif  // MDC_IMAGE_HPP_
