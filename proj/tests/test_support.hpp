#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>

#include "rtrl/nets.hpp"
#include "rtrl/rng.hpp"

namespace rtrl::test {

inline MlpParams random_mlp(const std::vector<std::size_t>& sizes, RngStream& rng, double scale = 0.7) {
  MlpParams p;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    Dense d{Mat(sizes[l + 1], sizes[l]), Vec(sizes[l + 1])};
    for (double& w : d.weight.values()) w = rng.uniform(-scale, scale);
    for (double& b : d.bias) b = rng.uniform(-scale, scale);
    p.layers.push_back(std::move(d));
    p.activations.push_back(l + 2 < sizes.size() ? Activation::kTanh : Activation::kLinear);
  }
  return p;
}

inline Vec fd_gradient(const std::function<double(const MlpParams&)>& f, const MlpParams& at, double eps) {
  MlpParams p = at;
  Vec x = flatten(p.layers);
  Vec g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double x0 = x[i];
    x[i] = x0 + eps;
    unflatten(x, p.layers);
    const double up = f(p);
    x[i] = x0 - eps;
    unflatten(x, p.layers);
    const double down = f(p);
    x[i] = x0;
    g[i] = (up - down) / (2.0 * eps);
  }
  return g;
}

inline double rel_err(std::span<const double> a, std::span<const double> b) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num = std::max(num, std::abs(a[i] - b[i]));
    den = std::max(den, std::abs(b[i]));
  }
  return num / std::max(den, 1e-12);
}

}  // namespace rtrl::test
