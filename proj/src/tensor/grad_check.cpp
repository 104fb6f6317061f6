#include "appledet/tensor/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <vector>

#include "appledet/common/error.hpp"
#include "appledet/common/rng.hpp"

namespace appledet::tensor {

std::string GradCheckResult::summary() const {
  std::ostringstream out;
  if (nan_found) {
    out << "NaN gradient at coordinate " << nan_index;
  } else {
    out << "max relative error " << max_rel_error << " at coordinate " << worst_index << " ("
        << coordinates_checked << " checked)";
  }
  return out.str();
}

GradCheckResult grad_check(const std::function<Tensor()>& loss_fn, Tensor point,
                           const GradCheckOptions& options) {
  require(point.requires_grad(), "grad_check: point must require grad");
  require(options.eps > 0.0, "grad_check: eps must be positive");

  point.zero_grad();
  const Tensor loss = loss_fn();
  require(loss.numel() == 1, "grad_check: loss_fn must return a scalar");
  loss.backward();
  std::vector<double> analytic(point.numel(), 0.0);
  if (!point.grad().empty()) std::copy(point.grad().begin(), point.grad().end(), analytic.begin());

  std::vector<std::size_t> coords(point.numel());
  std::iota(coords.begin(), coords.end(), std::size_t{0});
  if (options.max_coordinates > 0 && options.max_coordinates < coords.size()) {
    Rng rng(options.seed);
    for (std::size_t i = 0; i < options.max_coordinates; ++i) {
      const auto j = i + rng.next() % (coords.size() - i);
      std::swap(coords[i], coords[j]);
    }
    coords.resize(options.max_coordinates);
  }

  GradCheckResult result;
  NoGradGuard no_grad;
  auto values = point.data();
  for (std::size_t i : coords) {
    const double original = values[i];
    values[i] = original + options.eps;
    const double plus = loss_fn().item();
    values[i] = original - options.eps;
    const double minus = loss_fn().item();
    values[i] = original;
    const double numeric = (plus - minus) / (2.0 * options.eps);
    ++result.coordinates_checked;
    if (std::isnan(numeric) || std::isnan(analytic[i])) {
      result.nan_found = true;
      result.nan_index = i;
      return result;
    }
    const double diff = std::abs(analytic[i] - numeric);
    const double resolution = 10.0 * std::numeric_limits<double>::epsilon() *
                              std::max({1.0, std::abs(plus), std::abs(minus)}) / options.eps;
    const double err =
        diff <= resolution ? 0.0 : diff / std::max(1e-8, std::abs(analytic[i]) + std::abs(numeric));
    if (err > result.max_rel_error) {
      result.max_rel_error = err;
      result.worst_index = i;
    }
  }
  return result;
}

GradCheckResult grad_check(const std::function<Tensor(const Tensor&)>& fn, const Tensor& point,
                           double eps) {
  Tensor x = Tensor::from_data(point.shape(),
                               std::vector<double>(point.data().begin(), point.data().end()), true);
  return grad_check([&] { return fn(x); }, x, GradCheckOptions{eps, 0, 0});
}

}  // namespace appledet::tensor
