#pragma once

#include <functional>

#include "domst/tensor.hpp"

namespace domst {

struct GradCheckResult {
  double max_rel_error = 0.0;
  Eigen::Index worst_index = -1;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;
};

// Central-difference check of an analytic gradient. `loss` must be a
// deterministic scalar function of the flat parameter vector. Relative
// error uses max(|analytic|, |numeric|, 1e-8) as the denominator.
GradCheckResult finite_diff_check(
    const std::function<double(const Array&)>& loss, const Array& theta,
    const Array& analytic_grad, double eps = 1e-5);

}  // namespace domst
