#pragma once

#include <vector>

#include "lambert/doc_model.hpp"
#include "lambert/rng.hpp"
#include "lambert/tensor.hpp"

namespace lambert::layout {

// Scaling factors for the winding map. theta is a geometric progression of
// length n/8 from 0.25 to 500; seq_theta_max feeds the optional sinusoidal
// sequential-position table.
struct WindingConfig {
  int n = 128;
  std::vector<double> theta;
  double seq_theta_max = 10000.0;
};

inline constexpr double kThetaMin = 0.25;
inline constexpr double kThetaMax = 500.0;

// theta[r] = 0.25 * 2000^(r/(len-1)), len = n/8
std::vector<double> make_theta(int n);

WindingConfig make_winding_config(int n, double seq_theta_max = 10000.0);

// Interleaved multi-frequency map of a scalar onto d/2 unit circles:
// out[2r] = cos(theta[r]*t), out[2r+1] = sin(theta[r]*t).
std::vector<double> winding(double t, const std::vector<double>& theta);

struct LayoutVector {
  std::vector<double> values;  // length cfg.n; squared norm n/2
  doc::BBox box;
};

// [F(x1) | F(y1) | F(x2) | F(y2)], each block of length n/4. Depends only on
// the box, never on the token.
LayoutVector layout_embedding(const doc::BBox& box, const WindingConfig& cfg);

// Row-per-box matrix of layout embeddings, flattened row-major (len x n).
std::vector<double> layout_matrix(const std::vector<doc::BBox>& boxes, const WindingConfig& cfg);

// Sinusoidal sequential-position table (optional alternative to the trainable
// table): row i is the winding of i with a geometric progression of length
// n/2 from 1 to M.
std::vector<double> sinusoidal_positions(int max_len, int n, double m);

// Trainable linear map from layout dimension k to input dimension n.
template <class S>
struct Adapter {
  nn::Tensor<S> weight;  // [n x k]
  nn::Tensor<S> bias;    // [n], zero at init

  template <class T>
  Adapter<T> cast() const {
    return Adapter<T>{weight.template cast<T>(), bias.template cast<T>()};
  }
};

// weight ~ N(0, sigma^2) i.i.d., bias zero
Adapter<float> make_adapter(int n, int k, double sigma, Rng& rng);

template <class S>
nn::Tensor<S> adapter_apply(const nn::Tensor<S>& l, const Adapter<S>& a) {
  return nn::add_bias(nn::matmul_nt(l, a.weight), a.bias);
}

}  // namespace lambert::layout
