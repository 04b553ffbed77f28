// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>

#include "fassl/autograd.hpp"
#include "fassl/param_tree.hpp"

namespace fassl {

/// p <- p - lr * g for every parameter with a gradient entry.
ParamTree sgd_step(const ParamTree& params, const GradientMap& grads, double lr);

/// Central-difference gradient of a scalar function, one scalar at a time.
GradientMap finite_diff_grad(const std::function<double(const ParamTree&)>& f,
                             const ParamTree& params, double step);

/// max over all scalars of |a - b| / max(|a|, |b|, floor).
double max_relative_error(const GradientMap& a, const GradientMap& b, double floor = 1e-6);

}  // namespace fassl
