#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "phos/ops.hpp"
#include "phos/tensor.hpp"

namespace phos {

/// Discretization of survival days into N equidistant bins covering [0, U].
struct BinConfig {
  std::size_t n_bins = 0;
  double upper_days = 0.0;
  std::vector<double> widths;  // widths[n] == upper_days / n_bins
};

/// Outputs of the binned survival head for one batch.
struct HeadOutput {
  Tensor saliency;    // [B,N,V,V,V]
  Tensor p;           // [B,N] per-bin survival probability, in (0,1)
  Tensor p_weighted;  // [B,N] days deducted per bin
  Tensor y_hat;       // [B] predicted OS days, in (0,U)
};

/// N equidistant bins between 0 and `upper_days`. Requires N >= 2 (the
/// monotonicity penalty needs at least one neighbor pair).
BinConfig make_bins(std::size_t n_bins, double upper_days);

/// p[b,n] = sigmoid(LSE over the spatial dims of saliency[b,n]).
Tensor bin_probabilities(const Tensor& saliency);

/// Days per bin: widths[n] * p[b,n].
Tensor weighted_bin_predictions(const Tensor& p, const BinConfig& bins);

/// y_hat[b] = U - sum_n p_weighted[b,n].
Tensor os_prediction(const Tensor& p_weighted, double upper_days);

/// Mean over the batch of (1/(N-1)) * sum_n max(0, p[n+1] - p[n]).
/// Subgradient 0 at ties.
Tensor monotonic_penalty(const Tensor& p);

/// Mean absolute error plus alpha times the monotonicity penalty.
Tensor total_loss(const Tensor& y_hat, const std::vector<double>& y,
                  const Tensor& p, double alpha);

/// Index (1-based, in {1..N}) of the bin maximizing min(p, |1-p|); ties
/// broken by the smallest index.
std::size_t transition_bin(std::span<const double> p);

/// Binary mask over the flat map selecting the k = max(1, floor(fraction*M))
/// largest values; ties at the threshold broken by ascending index.
std::vector<std::uint8_t> saliency_mask(std::span<const double> map,
                                        double fraction);

}  // namespace phos
