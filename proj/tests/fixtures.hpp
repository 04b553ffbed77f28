#pragma once

#include <vector>

#include "fassl/data.hpp"
#include "fassl/param_tree.hpp"
#include "fassl/rng.hpp"
#include "fassl/tensor.hpp"

namespace fixture {

inline fassl::Tensor random_tensor(fassl::Rng& rng, fassl::Shape shape, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(fassl::numel(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return fassl::Tensor(std::move(shape), std::move(v));
}

// Values bounded away from zero so ReLU kinks stay out of finite-difference reach.
inline fassl::Tensor away_from_zero(fassl::Rng& rng, fassl::Shape shape) {
  fassl::Tensor t = random_tensor(rng, std::move(shape), 0.05, 1.0);
  for (auto& x : t.mutable_data()) {
    if (rng.uniform() < 0.5) x = -x;
  }
  return t;
}

inline std::vector<const fassl::Clip*> pointers(const fassl::SynthDataset& ds, std::size_t n = 0) {
  std::vector<const fassl::Clip*> out;
  for (const auto& c : ds.clips) {
    if (n && out.size() == n) break;
    out.push_back(&c);
  }
  return out;
}

}  // namespace fixture
