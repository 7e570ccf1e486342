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

#ifndef MDC_ERRORS_HPP_
#define MDC_ERRORS_HPP_

#include <stdexcept>

#include "mdc/tensor.hpp"

namespace mdc {

// A description or checkpoint whose bytes violate the container format.
class CorruptData : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// The bitstream was produced with a different entropy model.
class ModelMismatch : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid configuration or hyper-parameter.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Training produced a non-finite value.
class Divergence : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace mdc

#endif  // MDC_ERRORS_HPP_
