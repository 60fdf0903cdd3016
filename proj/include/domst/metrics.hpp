#pragma once

#include <vector>

#include "domst/tensor.hpp"

namespace domst {

// Nash-Sutcliffe efficiency: 1 - sum(obs-sim)^2 / sum(obs-mean(obs))^2.
// 1 is a perfect fit, 0 matches the mean predictor, negative is worse.
struct NseResult {
  double nse = 0.0;
  int n = 0;
  double obs_mean = 0.0;
  double obs_var = 0.0;  // population variance of the observations
};

NseResult nse(const std::vector<double>& sim, const std::vector<double>& obs);

// Spearman rank correlation with average ranks on ties; in [-1, 1].
double spearman(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace domst
