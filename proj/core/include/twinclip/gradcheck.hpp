// Copyright 2026 The twinclip Authors
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

#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "twinclip/loss.hpp"

namespace twinclip {

struct GradCheckResult {
  double max_relative_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t coordinates = 0;
};

/// |a - n| / max(|a|, |n|, floor). The floor keeps coordinates whose true
/// gradient is zero from dividing round-off by round-off.
inline constexpr double kGradCheckFloor = 1e-6;
double relative_error(double analytic, double numeric, double floor = kGradCheckFloor);

using ValueFn = std::function<double(const std::vector<Matrix>&)>;

/// Central differences on every coordinate of every input against the
/// supplied analytic gradients (same shapes, same order).
GradCheckResult grad_check(const ValueFn& value, std::vector<Matrix> inputs,
                           const std::vector<Matrix>& analytic, double eps);

using LossFn = std::function<LossOutput(const std::vector<Matrix>&)>;

/// Convenience overload for losses that report their own gradients.
/// `eps` must lie in [1e-7, 1e-3].
GradCheckResult grad_check(const LossFn& loss, const std::vector<Matrix>& inputs, double eps);

}  // namespace twinclip
