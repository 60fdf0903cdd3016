#include "domst/gradcheck.hpp"

#include <cmath>

namespace domst {

GradCheckResult finite_diff_check(
    const std::function<double(const Array&)>& loss, const Array& theta,
    const Array& analytic_grad, double eps) {
  check_shape(theta.size() == analytic_grad.size(),
              cat("finite_diff_check: theta length ", theta.size(),
                  " != grad length ", analytic_grad.size()));
  require(eps > 0.0, "finite_diff_check: eps must be positive");

  GradCheckResult r;
  Array probe = theta;
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    probe(i) = theta(i) + eps;
    const double up = loss(probe);
    probe(i) = theta(i) - eps;
    const double down = loss(probe);
    probe(i) = theta(i);
    check_finite(up, "finite_diff_check loss");
    check_finite(down, "finite_diff_check loss");
    const double numeric = (up - down) / (2.0 * eps);
    const double analytic = analytic_grad(i);
    const double denom =
        std::max({std::abs(numeric), std::abs(analytic), 1e-8});
    const double rel = std::abs(numeric - analytic) / denom;
    if (rel > r.max_rel_error) {
      r.max_rel_error = rel;
      r.worst_index = i;
      r.analytic_at_worst = analytic;
      r.numeric_at_worst = numeric;
    }
  }
  return r;
}

}  // namespace domst
