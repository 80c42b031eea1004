#include "dexfm/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace dexfm {

double gradient_rel_error(double analytic, double numeric) {
  double denom = std::max(1e-8, std::abs(analytic) + std::abs(numeric));
  return std::abs(analytic - numeric) / denom;
}

double grad_check_tensor(const std::function<double()>& loss, Tensor& param,
                         const Tensor& analytic, double h, std::size_t sample_cap,
                         Rng* rng) {
  if (!param.same_shape(analytic))
    throw std::invalid_argument("grad_check: analytic gradient shape mismatch");
  if (h <= 0.0) throw std::invalid_argument("grad_check: step must be positive");

  std::vector<std::size_t> coords(param.numel());
  std::iota(coords.begin(), coords.end(), 0);
  if (rng != nullptr && param.numel() > sample_cap) {
    rng->shuffle(coords);
    coords.resize(sample_cap);
  }

  double worst = 0.0;
  for (std::size_t c : coords) {
    const double saved = param[c];
    param[c] = saved + h;
    const double up = loss();
    param[c] = saved - h;
    const double down = loss();
    param[c] = saved;
    if (!std::isfinite(up) || !std::isfinite(down))
      throw std::runtime_error("grad_check: non-finite loss during perturbation");
    const double numeric = (up - down) / (2.0 * h);
    worst = std::max(worst, gradient_rel_error(analytic[c], numeric));
  }
  return worst;
}

}  // namespace dexfm
