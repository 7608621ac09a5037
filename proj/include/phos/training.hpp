#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "phos/data.hpp"
#include "phos/metrics.hpp"
#include "phos/network.hpp"

namespace phos {

struct TrainConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.001;
  std::size_t batch_size = 8;
  double alpha = 10000.0;
  std::size_t epochs = 10;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Adam moment buffers, one pair per parameter in model order.
struct OptimizerState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::uint64_t t = 0;

  static OptimizerState make(const PosthocModel& model);
};

/// One Adam update over all model parameters. Weight decay is applied as an
/// L2 term added to the gradient before the moment updates.
void adam_step(PosthocModel& model, OptimizerState& state,
               const TrainConfig& config);

/// One pass over the training cases: seeded shuffle, fixed-size batches
/// (final short batch dropped), augment -> forward -> loss -> backward ->
/// adam_step. Returns per-batch losses.
std::vector<double> train_epoch(PosthocModel& model, OptimizerState& state,
                                const std::vector<CaseRecord>& cases,
                                const TrainConfig& config, Rng& rng);

struct EpochStats {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_mae = 0.0;
  double val_accuracy = 0.0;
};

struct FitResult {
  PosthocModel best_model;
  std::size_t best_epoch = 0;  // 1-based
  std::vector<EpochStats> history;
};

/// Trains for config.epochs epochs, evaluating validation MAE after each;
/// the returned model is the checkpoint of the best (lowest val MAE) epoch.
FitResult fit(PosthocModel model, const std::vector<CaseRecord>& train_cases,
              const std::vector<CaseRecord>& val_cases,
              const TrainConfig& config,
              const ClassThresholds& thresholds = {});

/// Mean absolute prediction error over the cases, eval mode.
double validation_mae(PosthocModel& model,
                      const std::vector<CaseRecord>& cases,
                      std::size_t batch_size);

/// Predicted days for every case, eval mode, batched.
std::vector<double> predict_days(PosthocModel& model,
                                 const std::vector<CaseRecord>& cases,
                                 std::size_t batch_size);

/// Preprocessing needed to feed the model new data: the training-split
/// normalization statistics and the downsample factor applied before them.
struct PreprocessInfo {
  NormStats stats;
  std::size_t downsample_factor = 1;
};

// Checkpoint container ("PHOS"): magic, u32 version, canonical config text,
// named float64 parameter blobs, batch-norm running stats and an optional
// optimizer section. Round-trips are bit-exact.
void save_checkpoint(const PosthocModel& model, const OptimizerState* state,
                     const std::filesystem::path& path,
                     const PreprocessInfo* preprocess = nullptr);

struct Checkpoint {
  PosthocModel model;
  std::optional<OptimizerState> optimizer;
  std::optional<PreprocessInfo> preprocess;
};

Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace phos
