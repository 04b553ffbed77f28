// SPDX-License-Identifier: Apache-2.0
#include "fassl/optim.hpp"

#include <algorithm>
#include <cmath>

#include "fassl/errors.hpp"

namespace fassl {

ParamTree sgd_step(const ParamTree& params, const GradientMap& grads, double lr) {
  if (!(lr > 0.0)) throw ContractError("sgd_step: lr must be > 0");
  for (const auto& [name, _] : grads) {
    if (!params.contains(name)) throw ContractError("sgd_step: gradient for unknown '" + name + "'");
  }
  ParamTree out = params;
  for (const auto& [name, g] : grads) {
    Tensor& p = out.at(name);
    if (p.shape() != g.shape()) {
      throw ContractError("sgd_step: shape mismatch for '" + name + "': " + shape_str(p.shape()) +
                          " vs " + shape_str(g.shape()));
    }
    auto pd = p.mutable_data();
    for (std::size_t i = 0; i < pd.size(); ++i) pd[i] -= lr * g[i];
    p.check_finite();
  }
  return out;
}

GradientMap finite_diff_grad(const std::function<double(const ParamTree&)>& f,
                             const ParamTree& params, double step) {
  if (!(step > 0.0)) throw ContractError("finite_diff_grad: step must be > 0");
  GradientMap out;
  ParamTree probe = params;
  for (const auto& [name, t] : params.entries()) {
    std::vector<double> g(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double orig = t[i];
      probe.at(name)[i] = orig + step;
      const double up = f(probe);
      probe.at(name)[i] = orig - step;
      const double down = f(probe);
      probe.at(name)[i] = orig;
      g[i] = (up - down) / (2.0 * step);
    }
    out.emplace(name, Tensor(t.shape(), std::move(g)));
  }
  return out;
}

double max_relative_error(const GradientMap& a, const GradientMap& b, double floor) {
  if (a.size() != b.size()) throw ContractError("max_relative_error: key sets differ");
  double worst = 0.0;
  for (const auto& [name, ta] : a) {
    auto it = b.find(name);
    if (it == b.end() || it->second.shape() != ta.shape()) {
      throw ContractError("max_relative_error: mismatch at '" + name + "'");
    }
    for (std::size_t i = 0; i < ta.size(); ++i) {
      const double x = ta[i], y = it->second[i];
      const double denom = std::max({std::abs(x), std::abs(y), floor});
      worst = std::max(worst, std::abs(x - y) / denom);
    }
  }
  return worst;
}

}  // namespace fassl
