// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "refvos/tensor.hpp"

namespace refvos {

struct GradCheckResult {
  double max_error = 0.0;
  Index checked = 0;  // number of coordinates compared
};

// Compares the analytic gradient of a scalar f at x with central differences.
// Returns max_i |g_i - g^_i| / max(1, |g_i|, |g^_i|). eps must lie in
// [1e-6, 1e-3]. Throws NumericError if f(x) is not finite.
double grad_check(const std::function<Var<double>(const Var<double>&)>& f, const Matrix<double>& x,
                  double eps = 1e-5);

// Same measure for a loss closure over existing leaves (model parameters).
// When max_coords_per_leaf > 0, that many coordinates per leaf are drawn with
// the given seed instead of checking every entry.
GradCheckResult grad_check_leaves(const std::function<Var<double>()>& loss, std::vector<Var<double>> leaves,
                                  double eps = 1e-5, Index max_coords_per_leaf = 0, std::uint64_t seed = 0);

}  // namespace refvos
