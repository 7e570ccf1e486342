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

#ifndef MDC_SYMBOL_MODEL_HPP_
#define MDC_SYMBOL_MODEL_HPP_

#include <cstddef>
#include <span>

namespace mdc {

// Sequential probability source for the arithmetic coder. Positions are
// visited in raster order; `commit` reveals the symbol at a position
// before the next position is queried.
class SymbolModel {
 public:
  virtual ~SymbolModel() = default;
  virtual int levels() const = 0;
  virtual size_t positions() const = 0;
  // Writes a distribution over levels() symbols for `pos`.
  virtual void probabilities(size_t pos, std::span<double> out) = 0;
  virtual void commit(size_t pos, int symbol) = 0;
};

}  // namespace mdc

#endif  // MDC_SYMBOL_MODEL_HPP_
