#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "phos/ops.hpp"
#include "phos/survival.hpp"
#include "phos/tensor.hpp"

namespace phos {

enum class HeadKind { posthoc, regression };

enum class RunMode { train, eval };

struct NetworkConfig {
  std::size_t input_size = 32;          // cube edge fed to the encoder
  std::size_t modalities = 4;
  std::vector<std::size_t> channels = {8, 16, 32, 32};  // last entry is Q
  std::size_t kernel = 3;
  std::size_t stride = 2;               // every block downsamples
  double negative_slope = 0.1;
  std::size_t n_bins = 4;
  double upper_days = 1800.0;
  bool use_age = true;
  HeadKind head = HeadKind::posthoc;
  std::uint64_t seed = 0;

  /// Spatial edge after the 4 encoder blocks (padding kernel/2 throughout).
  std::size_t output_edge() const;
  void validate() const;
};

std::string head_to_string(HeadKind h);
HeadKind head_from_string(const std::string& s);

/// Result of explain(): the transition bin, its saliency map and the
/// top-fraction mask at the map's resolution.
struct Explanation {
  std::size_t n_star = 0;  // 1-based bin index
  Tensor map;              // [V,V,V]
  std::vector<std::uint8_t> mask;
};

/// 4-block fully convolutional encoder with age fusion and either the
/// binned survival head or the regression baseline head.
class PosthocModel {
 public:
  static PosthocModel init(const NetworkConfig& config);

  const NetworkConfig& config() const { return config_; }

  std::vector<Parameter>& parameters() { return params_; }
  const std::vector<Parameter>& parameters() const { return params_; }
  Parameter& param(const std::string& name);

  std::vector<BatchNormState>& batch_norm_states() { return bn_states_; }
  const std::vector<BatchNormState>& batch_norm_states() const {
    return bn_states_;
  }

  /// Full forward pass for the posthoc head. image [B,4,D,D,D], age [B]
  /// (already normalized).
  HeadOutput forward(const Tensor& image, const Tensor& age, RunMode mode);

  /// Regression baseline: encoder + age fusion, global average pool,
  /// linear to one scalar per case.
  Tensor forward_regression(const Tensor& image, const Tensor& age,
                            RunMode mode);

  /// Single-case eval-mode explanation (posthoc head only); the mask keeps
  /// the top 5% of the selected map.
  Explanation explain(const Tensor& image, const Tensor& age);

  /// Deep copy of parameters and batch-norm state.
  PosthocModel clone() const;

  /// Clone configured for a different input edge. The encoder is fully
  /// convolutional and batch-norm eval statistics are per-channel, so the
  /// same weights run at any resolution; a larger input yields a finer
  /// saliency grid (e.g. 24 -> 2 cells per axis, 48 -> 3).
  PosthocModel at_resolution(std::size_t input_size) const;

  /// Total number of scalar parameters.
  std::size_t parameter_count() const;

 private:
  Tensor encode(const Tensor& image, const Tensor& age, RunMode mode);

  NetworkConfig config_;
  std::vector<Parameter> params_;
  std::vector<BatchNormState> bn_states_;
};

}  // namespace phos
