#include "phos/survival.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace phos {

BinConfig make_bins(std::size_t n_bins, double upper_days) {
  if (n_bins < 2) {
    throw ShapeError("make_bins: need at least 2 bins, got " +
                     std::to_string(n_bins));
  }
  if (!(upper_days > 0.0)) {
    throw ShapeError("make_bins: upper limit must be positive");
  }
  BinConfig b;
  b.n_bins = n_bins;
  b.upper_days = upper_days;
  b.widths.assign(n_bins, upper_days / static_cast<double>(n_bins));
  return b;
}

Tensor bin_probabilities(const Tensor& saliency) {
  return sigmoid(lse_pool(saliency));
}

Tensor weighted_bin_predictions(const Tensor& p, const BinConfig& bins) {
  return scale_columns(p, bins.widths);
}

Tensor os_prediction(const Tensor& p_weighted, double upper_days) {
  return upper_minus_row_sum(p_weighted, upper_days);
}

Tensor monotonic_penalty(const Tensor& p) {
  if (p.rank() != 2 || p.shape()[1] < 2) {
    throw ShapeError("monotonic_penalty: p must be [B,N] with N >= 2, got " +
                     shape_to_string(p.shape()));
  }
  const std::size_t B = p.shape()[0], N = p.shape()[1];
  const auto pv = p.values();
  double acc = 0.0;
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t n = 0; n + 1 < N; ++n) {
      acc += std::max(0.0, pv[b * N + n + 1] - pv[b * N + n]);
    }
  }
  acc /= static_cast<double>(B * (N - 1));
  auto pn = p.node();
  auto back = [pn, B, N](detail::TensorNode& self) {
    const double g = self.grad[0] / static_cast<double>(B * (N - 1));
    for (std::size_t b = 0; b < B; ++b) {
      for (std::size_t n = 0; n + 1 < N; ++n) {
        if (pn->values[b * N + n + 1] - pn->values[b * N + n] > 0.0) {
          pn->grad[b * N + n + 1] += g;
          pn->grad[b * N + n] -= g;
        }
      }
    }
  };
  return detail::make_op({1}, {acc}, {pn}, std::move(back));
}

Tensor total_loss(const Tensor& y_hat, const std::vector<double>& y,
                  const Tensor& p, double alpha) {
  Tensor mae = mean_abs_error(y_hat, y);
  if (alpha == 0.0) return mae;
  return add(mae, scale(monotonic_penalty(p), alpha));
}

std::size_t transition_bin(std::span<const double> p) {
  if (p.empty()) throw ShapeError("transition_bin: empty probability vector");
  std::size_t best = 0;
  double best_score = -1.0;
  for (std::size_t n = 0; n < p.size(); ++n) {
    const double score = std::min(p[n], std::fabs(1.0 - p[n]));
    if (score > best_score) {
      best_score = score;
      best = n;
    }
  }
  return best + 1;
}

std::vector<std::uint8_t> saliency_mask(std::span<const double> map,
                                        double fraction) {
  if (!(fraction > 0.0 && fraction < 1.0)) {
    throw ShapeError("saliency_mask: fraction must be in (0,1)");
  }
  const std::size_t m = map.size();
  if (m == 0) throw ShapeError("saliency_mask: empty map");
  std::size_t k = static_cast<std::size_t>(
      std::floor(fraction * static_cast<double>(m)));
  if (k == 0) k = 1;
  std::vector<std::size_t> idx(m);
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return map[a] > map[b];
  });
  std::vector<std::uint8_t> mask(m, 0);
  for (std::size_t i = 0; i < k; ++i) mask[idx[i]] = 1;
  return mask;
}

}  // namespace phos
