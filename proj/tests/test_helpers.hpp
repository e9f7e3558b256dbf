#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "lambert/tensor.hpp"

namespace lambert::test {

// Central-difference gradient check in double precision. forward() must
// rebuild the graph from the current parameter values and return a scalar
// loss. Returns the worst relative error over all parameter elements.
inline double gradcheck(const std::vector<nn::Tensor<double>*>& params,
                        const std::function<nn::Tensor<double>()>& forward, double h = 1e-5) {
  auto loss = forward();
  auto gs = nn::backward(loss);
  double worst = 0.0;
  for (auto* p : params) {
    const auto* analytic = gs.find(*p);
    for (size_t i = 0; i < p->numel(); ++i) {
      const double keep = (*p->data)[i];
      (*p->data)[i] = keep + h;
      const double up = forward().item();
      (*p->data)[i] = keep - h;
      const double down = forward().item();
      (*p->data)[i] = keep;
      const double numeric = (up - down) / (2 * h);
      const double a = analytic ? (*analytic)[i] : 0.0;
      // the 1e-6 floor keeps the comparison meaningful where central
      // differences bottom out in roundoff (~1e-10 absolute at h=1e-5)
      const double denom = std::max({std::abs(numeric), std::abs(a), 1e-6});
      worst = std::max(worst, std::abs(numeric - a) / denom);
    }
  }
  return worst;
}

}  // namespace lambert::test
