#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "phos/data.hpp"
#include "phos/tensor.hpp"

namespace phos {

class PosthocModel;

/// Boundaries of the 3-class survival grouping, in days. Defaults use
/// 1 month = 30.4375 days (10 and 15 months).
struct ClassThresholds {
  double short_upper = 304.375;
  double long_lower = 456.5625;

  void validate() const;
};

enum class SurvivalClass { short_survivor, mid_survivor, long_survivor };

std::string survival_class_to_string(SurvivalClass c);

struct SquaredErrorStats {
  double mse = 0.0;
  double median_se = 0.0;
  double std_se = 0.0;  // population standard deviation
};

struct MetricsReport {
  double accuracy = 0.0;
  double mse = 0.0;
  double median_se = 0.0;
  double std_se = 0.0;
  std::optional<double> spearman_r;  // absent when a rank variance is zero
  std::optional<double> mean_dice;   // absent when no case has a mask
  std::size_t n_cases = 0;
};

struct CaseEval {
  std::string id;
  double pred_days = 0.0;
  double truth_days = 0.0;
  SurvivalClass pred_class = SurvivalClass::short_survivor;
  SurvivalClass truth_class = SurvivalClass::short_survivor;
  std::optional<double> dice;
};

SquaredErrorStats squared_error_stats(std::span<const double> pred,
                                      std::span<const double> truth);

/// Pearson correlation of average-ties ranks; absent if either side has
/// zero rank variance.
std::optional<double> spearman_r(std::span<const double> pred,
                                 std::span<const double> truth);

SurvivalClass survival_class(double days, const ClassThresholds& t);

double classification_accuracy(std::span<const double> pred_days,
                               std::span<const double> truth_days,
                               const ClassThresholds& t);

/// 2|A^B| / (|A|+|B|); both masks empty -> 1.0.
double dice(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b);

/// Trilinear resampling between cubic grids, voxel centers aligned.
std::vector<double> upsample_trilinear(std::span<const double> src,
                                       const Shape& src_dims,
                                       const Shape& dst_dims);

/// Resamples a saliency grid to a mask grid using the encoder's sampling
/// geometry: with odd kernels, kernel/2 padding and four stride-s blocks,
/// saliency cell i is centred on input voxel s^4 * i, so destination voxel
/// d maps to cell coordinate d / voxels_per_cell (clamped), not to the
/// voxel-center alignment of a generic resize. voxels_per_cell is per-axis:
/// s^4 scaled by mask extent over network input extent.
std::vector<double> upsample_saliency(std::span<const double> src,
                                      const Shape& src_dims,
                                      const Shape& dst_dims,
                                      const std::array<double, 3>& voxels_per_cell);

struct Evaluation {
  MetricsReport report;
  std::vector<CaseEval> cases;
};

/// Eval-mode forward per case; Dice is computed for cases with a ground
/// truth mask by resampling the explanation map to the mask resolution
/// along the encoder's sampling grid (upsample_saliency) and taking its
/// top 5%.
Evaluation evaluate(PosthocModel& model, const std::vector<CaseRecord>& cases,
                    const ClassThresholds& thresholds);

/// Per-case prediction export: id,pred_days,truth_days,pred_class,
/// truth_class,dice.
void write_case_evals(const std::vector<CaseEval>& evals,
                      const std::filesystem::path& path);

/// Canonical JSON with fixed key order.
std::string report_to_json(const MetricsReport& report);

}  // namespace phos
