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

#include "twinclip/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "twinclip/error.hpp"

namespace twinclip {

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

GradCheckResult grad_check(const ValueFn& value, std::vector<Matrix> inputs,
                           const std::vector<Matrix>& analytic, double eps) {
  require(eps >= 1e-7 && eps <= 1e-3, ErrorCode::InvalidArgument, "eps must lie in [1e-7, 1e-3]");
  require(analytic.size() == inputs.size(), ErrorCode::DimensionMismatch,
          "analytic gradient count differs from input count");
  GradCheckResult result;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    require(analytic[k].rows() == inputs[k].rows() && analytic[k].cols() == inputs[k].cols(),
            ErrorCode::DimensionMismatch, "analytic gradient shape differs from its input");
    for (Eigen::Index i = 0; i < inputs[k].size(); ++i) {
      double& x = inputs[k].data()[i];
      const double saved = x;
      x = saved + eps;
      const double up = value(inputs);
      x = saved - eps;
      const double down = value(inputs);
      x = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double a = analytic[k].data()[i];
      result.max_abs_error = std::max(result.max_abs_error, std::abs(a - numeric));
      result.max_relative_error = std::max(result.max_relative_error, relative_error(a, numeric));
      ++result.coordinates;
    }
  }
  return result;
}

GradCheckResult grad_check(const LossFn& loss, const std::vector<Matrix>& inputs, double eps) {
  const LossOutput at = loss(inputs);
  return grad_check([&](const std::vector<Matrix>& x) { return loss(x).value; }, inputs, at.grads,
                    eps);
}

}  // namespace twinclip
