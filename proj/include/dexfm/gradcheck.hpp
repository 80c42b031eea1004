#pragma once

#include <functional>

#include "dexfm/rng.hpp"
#include "dexfm/tensor.hpp"

namespace dexfm {

// |ga - gn| / max(1e-8, |ga| + |gn|)
double gradient_rel_error(double analytic, double numeric);

// Central finite differences against an analytic gradient for one parameter
// tensor. `loss` re-evaluates the objective after in-place perturbation of
// `param`; the tensor is restored before returning. Tensors with more than
// `sample_cap` coordinates are checked on a random sample of `sample_cap`
// coordinates (at least 200 by contract).
double grad_check_tensor(const std::function<double()>& loss, Tensor& param,
                         const Tensor& analytic, double h = 1e-5,
                         std::size_t sample_cap = 200, Rng* rng = nullptr);

}  // namespace dexfm
