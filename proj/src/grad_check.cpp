// SPDX-License-Identifier: Apache-2.0
#include "refvos/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "refvos/random.hpp"

namespace refvos {

namespace {

double evaluate(const std::function<Var<double>()>& loss) {
  NoGradGuard guard;
  const Var<double> out = loss();
  if (out.size() != 1) throw DimensionError("grad_check: function must return a scalar");
  const double v = out.item();
  if (!std::isfinite(v)) throw NumericError("grad_check: non-finite function value");
  return v;
}

double relative_error(double analytic, double numeric) {
  const double denom = std::max({1.0, std::abs(analytic), std::abs(numeric)});
  return std::abs(analytic - numeric) / denom;
}

}  // namespace

GradCheckResult grad_check_leaves(const std::function<Var<double>()>& loss, std::vector<Var<double>> leaves,
                                  double eps, Index max_coords_per_leaf, std::uint64_t seed) {
  if (!(eps >= 1e-6 && eps <= 1e-3)) throw DomainError("grad_check: eps must lie in [1e-6, 1e-3]");
  std::vector<bool> flags;
  for (auto& leaf : leaves) {
    flags.push_back(leaf.requires_grad());
    leaf.zero_grad();
    leaf.set_requires_grad(true);
  }
  {
    const Var<double> out = loss();
    if (out.size() != 1) throw DimensionError("grad_check: function must return a scalar");
    if (!std::isfinite(out.item())) throw NumericError("grad_check: non-finite function value");
    backward(out);
  }

  Rng rng(seed);
  GradCheckResult result;
  for (auto& leaf : leaves) {
    const Matrix<double> analytic =
        leaf.has_grad() ? leaf.grad() : Matrix<double>::Zero(leaf.rows(), leaf.cols());
    std::vector<Index> coords;
    if (max_coords_per_leaf > 0 && max_coords_per_leaf < leaf.size()) {
      for (Index k = 0; k < max_coords_per_leaf; ++k) {
        coords.push_back(static_cast<Index>(rng.below(static_cast<std::uint64_t>(leaf.size()))));
      }
    } else {
      for (Index k = 0; k < leaf.size(); ++k) coords.push_back(k);
    }
    for (const Index k : coords) {
      double& slot = leaf.mutable_value().data()[k];
      const double saved = slot;
      slot = saved + eps;
      const double up = evaluate(loss);
      slot = saved - eps;
      const double down = evaluate(loss);
      slot = saved;
      const double numeric = (up - down) / (2.0 * eps);
      result.max_error = std::max(result.max_error, relative_error(analytic.data()[k], numeric));
      ++result.checked;
    }
    leaf.zero_grad();
  }
  for (std::size_t i = 0; i < leaves.size(); ++i) leaves[i].set_requires_grad(flags[i]);
  return result;
}

double grad_check(const std::function<Var<double>(const Var<double>&)>& f, const Matrix<double>& x, double eps) {
  Var<double> leaf(x, true);
  return grad_check_leaves([&] { return f(leaf); }, {leaf}, eps).max_error;
}

}  // namespace refvos
