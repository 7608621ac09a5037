#pragma once

#include <vector>

#include "phos/tensor.hpp"

namespace phos {

/// Running statistics and mode of one batch-norm layer. Eval mode never
/// mutates the state.
struct BatchNormState {
  enum class Mode { train, eval };
  std::vector<double> running_mean;
  std::vector<double> running_var;
  double momentum = 0.1;
  double epsilon = 1e-5;
  Mode mode = Mode::train;

  static BatchNormState make(std::size_t channels, double momentum = 0.1,
                             double epsilon = 1e-5);
};

// Layer ops.

/// Zero-padded 3D convolution. input [B,Cin,D,H,W], kernel [Cout,Cin,k,k,k],
/// bias [Cout]. Output edge: floor((D + 2*padding - k)/stride) + 1.
Tensor conv3d(const Tensor& input, const Tensor& kernel, const Tensor& bias,
              std::size_t stride, std::size_t padding);

Tensor leaky_relu(const Tensor& x, double negative_slope);

Tensor sigmoid(const Tensor& x);

/// Per-channel normalization over batch + spatial dims. Train mode requires
/// B >= 2 and updates running stats: running = (1-m)*running + m*batch.
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  BatchNormState& state);

/// x [B,Din], weight [Dout,Din], bias [Dout] -> [B,Dout].
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

/// F [B,Q,V,V,V] + s [B,Q] broadcast over the spatial dims.
Tensor broadcast_add(const Tensor& features, const Tensor& shift);

/// Log-sum-exp over the spatial dims of [B,N,V,V,V] -> [B,N], max-shifted.
Tensor lse_pool(const Tensor& maps);

// Elementwise / reduction helpers.

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor sum(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);

/// Multiplies column n of x [B,N] by weights[n].
Tensor scale_columns(const Tensor& x, const std::vector<double>& weights);

/// upper - sum over columns: x [B,N] -> [B].
Tensor upper_minus_row_sum(const Tensor& x, double upper);

/// Mean over spatial dims: [B,C,spatial...] -> [B,C].
Tensor global_avg_pool(const Tensor& x);

/// Mean of |pred - truth| over the batch; subgradient 0 at exact zeros.
Tensor mean_abs_error(const Tensor& pred, const std::vector<double>& truth);

}  // namespace phos
