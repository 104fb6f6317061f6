#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>

#include "appledet/tensor/tensor.hpp"

namespace appledet::tensor {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  std::size_t coordinates_checked = 0;
  bool nan_found = false;
  std::size_t nan_index = 0;

  bool passed(double tolerance) const { return !nan_found && max_rel_error < tolerance; }
  std::string summary() const;
};

struct GradCheckOptions {
  double eps = 1e-4;
  // 0 checks every coordinate; otherwise a seeded random subset of this size.
  std::size_t max_coordinates = 0;
  std::uint64_t seed = 0;
};

/// Compares the analytic gradient of `loss_fn` with respect to `point` against
/// central differences (f(x + eps e_i) - f(x - eps e_i)) / 2 eps, perturbing
/// `point` in place. `loss_fn` must rebuild the scalar from current values on
/// every call and be deterministic. Error per coordinate is
/// |g_a - g_fd| / max(1e-8, |g_a| + |g_fd|), or 0 when the two agree within
/// the rounding resolution of the difference quotient,
/// 10 * DBL_EPSILON * max(1, |f(x + eps)|, |f(x - eps)|) / eps.
GradCheckResult grad_check(const std::function<Tensor()>& loss_fn, Tensor point,
                           const GradCheckOptions& options = {});

/// Functional form: checks fn at a copy of `point`.
GradCheckResult grad_check(const std::function<Tensor(const Tensor&)>& fn, const Tensor& point,
                           double eps = 1e-4);

}  // namespace appledet::tensor
