#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lambert/tensor.hpp"

namespace lambert::nn {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

// Adam with decoupled weight decay. Moments are kept per parameter; the decay
// is applied directly to the parameter values, not through the gradients.
class AdamW {
 public:
  AdamW(std::vector<Tensor<float>> params, AdamWConfig cfg);

  // Applies one update with the given per-parameter gradients (aligned with
  // the params vector; null entries are treated as zero gradient). If any
  // gradient value is non-finite the step is rejected: parameters and state
  // are left untouched, false is returned and *diag names the parameter.
  bool step(const std::vector<const std::vector<float>*>& grads, double lr,
            std::string* diag = nullptr);

  int64_t steps_taken() const { return t_; }
  const AdamWConfig& config() const { return cfg_; }

 private:
  std::vector<Tensor<float>> params_;
  std::vector<std::vector<float>> m_, v_;
  AdamWConfig cfg_;
  int64_t t_ = 0;
};

// Linear warmup over the first ceil(0.1*total) steps from 0 to peak, then
// linear decay to 0 at step == total.
double lr_schedule(int64_t step, int64_t total, double peak);

// Fine-tuning variant: the warmup ramp is replaced by a constant peak
// segment; the decay leg is identical.
double lr_schedule_no_warmup(int64_t step, int64_t total, double peak);

}  // namespace lambert::nn
