#include "lambert/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace lambert::nn {

AdamW::AdamW(std::vector<Tensor<float>> params, AdamWConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
  m_.resize(params_.size());
  v_.resize(params_.size());
  for (size_t i = 0; i < params_.size(); ++i) {
    m_[i].assign(params_[i].numel(), 0.0f);
    v_[i].assign(params_[i].numel(), 0.0f);
  }
}

bool AdamW::step(const std::vector<const std::vector<float>*>& grads, double lr,
                 std::string* diag) {
  if (grads.size() != params_.size())
    throw std::invalid_argument("AdamW::step: gradient count does not match parameter count");
  for (size_t i = 0; i < grads.size(); ++i) {
    if (!grads[i]) continue;
    if (grads[i]->size() != params_[i].numel())
      throw std::invalid_argument("AdamW::step: gradient size mismatch at parameter " +
                                  std::to_string(i));
    for (float g : *grads[i]) {
      if (!std::isfinite(g)) {
        if (diag) *diag = "non-finite gradient in parameter " + std::to_string(i);
        return false;
      }
    }
  }

  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (size_t i = 0; i < params_.size(); ++i) {
    auto& p = *params_[i].data;
    auto& m = m_[i];
    auto& v = v_[i];
    // decoupled decay first, then the Adam update
    if (cfg_.weight_decay != 0.0) {
      const float shrink = static_cast<float>(1.0 - lr * cfg_.weight_decay);
      for (auto& pv : p) pv *= shrink;
    }
    if (!grads[i]) continue;
    const auto& g = *grads[i];
    for (size_t j = 0; j < p.size(); ++j) {
      m[j] = static_cast<float>(cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g[j]);
      v[j] = static_cast<float>(cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g[j] * g[j]);
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      p[j] -= static_cast<float>(lr * mhat / (std::sqrt(vhat) + cfg_.eps));
    }
  }
  return true;
}

double lr_schedule(int64_t step, int64_t total, double peak) {
  if (total <= 0) throw std::invalid_argument("lr_schedule: total must be positive");
  if (step < 0 || step > total)
    throw std::invalid_argument("lr_schedule: step out of range [0," + std::to_string(total) + "]");
  const int64_t warmup = (total + 9) / 10;  // ceil(0.1 * total)
  if (step <= warmup) return peak * static_cast<double>(step) / static_cast<double>(warmup);
  return peak * static_cast<double>(total - step) / static_cast<double>(total - warmup);
}

double lr_schedule_no_warmup(int64_t step, int64_t total, double peak) {
  if (total <= 0) throw std::invalid_argument("lr_schedule: total must be positive");
  if (step < 0 || step > total)
    throw std::invalid_argument("lr_schedule: step out of range [0," + std::to_string(total) + "]");
  const int64_t warmup = (total + 9) / 10;
  if (step <= warmup) return peak;
  return peak * static_cast<double>(total - step) / static_cast<double>(total - warmup);
}

}  // namespace lambert::nn
