#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

#include "phos/data.hpp"
#include "phos/metrics.hpp"
#include "phos/network.hpp"
#include "phos/training.hpp"

namespace phos {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Data paths and preprocessing knobs. `manifest` has no default.
struct DataConfig {
  std::string manifest;
  std::size_t downsample_factor = 1;
  double val_fraction = 0.2;
  std::uint64_t split_seed = 0;
};

/// One config file drives every command; flags override single fields.
struct RunConfig {
  NetworkConfig network;
  TrainConfig train;
  PhantomConfig phantom;
  ClassThresholds thresholds;
  DataConfig data;
  std::string output_dir = "out";
};

nlohmann::json network_config_to_json(const NetworkConfig& c);
NetworkConfig network_config_from_json(const nlohmann::json& j);

nlohmann::json run_config_to_json(const RunConfig& c);
/// Unknown keys anywhere are rejected.
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig run_config_from_file(const std::filesystem::path& path);

}  // namespace phos
