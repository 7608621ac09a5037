#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "phos/config.hpp"

using namespace phos;
using nlohmann::json;

TEST_CASE("run config defaults survive an empty object") {
  RunConfig c = run_config_from_json(json::object());
  CHECK(c.network.input_size == 32);
  CHECK(c.network.channels == std::vector<std::size_t>{8, 16, 32, 32});
  CHECK(c.train.learning_rate == 1e-3);
  CHECK(c.train.batch_size == 8);
  CHECK(c.train.alpha == 10000.0);
  CHECK(c.phantom.edge == 48);
  CHECK(c.thresholds.short_upper == 304.375);
  CHECK(c.thresholds.long_lower == 456.5625);
  CHECK(c.data.val_fraction == 0.2);
  CHECK(c.output_dir == "out");
}

TEST_CASE("unknown keys are rejected at every level") {
  CHECK_THROWS_AS(run_config_from_json({{"networks", json::object()}}),
                  ConfigError);
  CHECK_THROWS_AS(
      run_config_from_json({{"network", {{"input_sise", 32}}}}),
      ConfigError);
  CHECK_THROWS_AS(run_config_from_json({{"train", {{"lr", 0.1}}}}),
                  ConfigError);
  CHECK_THROWS_AS(run_config_from_json({{"data", {{"paths", "x"}}}}),
                  ConfigError);
  CHECK_THROWS_AS(
      run_config_from_json({{"thresholds", {{"short", 100.0}}}}),
      ConfigError);
}

TEST_CASE("bad value types are reported by key") {
  try {
    run_config_from_json({{"train", {{"batch_size", "eight"}}}});
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("batch_size") != std::string::npos);
  }
}

TEST_CASE("round-trip through json preserves every field") {
  RunConfig c;
  c.network.input_size = 24;
  c.network.channels = {4, 8, 8, 16};
  c.network.n_bins = 15;
  c.network.head = HeadKind::regression;
  c.network.use_age = false;
  c.network.seed = 99;
  c.train.alpha = 1e6;
  c.train.epochs = 30;
  c.phantom.n_cases = 17;
  c.thresholds.short_upper = 300.0;
  c.data.manifest = "somewhere/manifest.csv";
  c.data.downsample_factor = 2;
  c.output_dir = "results";

  RunConfig back = run_config_from_json(run_config_to_json(c));
  CHECK(back.network.input_size == 24);
  CHECK(back.network.channels == c.network.channels);
  CHECK(back.network.n_bins == 15);
  CHECK(back.network.head == HeadKind::regression);
  CHECK(back.network.use_age == false);
  CHECK(back.network.seed == 99);
  CHECK(back.train.alpha == 1e6);
  CHECK(back.train.epochs == 30);
  CHECK(back.phantom.n_cases == 17);
  CHECK(back.thresholds.short_upper == 300.0);
  CHECK(back.data.manifest == "somewhere/manifest.csv");
  CHECK(back.data.downsample_factor == 2);
  CHECK(back.output_dir == "results");
}

TEST_CASE("config file loading errors") {
  namespace fs = std::filesystem;
  CHECK_THROWS_AS(run_config_from_file("/nonexistent/config.json"),
                  ConfigError);
  const fs::path bad = fs::temp_directory_path() / "phos_bad_config.json";
  std::ofstream(bad) << "{ not json";
  CHECK_THROWS_AS(run_config_from_file(bad), ConfigError);
}

TEST_CASE("network config json keeps head and seed readable") {
  NetworkConfig n;
  n.head = HeadKind::posthoc;
  json j = network_config_to_json(n);
  CHECK(j.at("head") == "posthoc");
  NetworkConfig back = network_config_from_json(j);
  CHECK(back.head == HeadKind::posthoc);
  CHECK_THROWS_AS(network_config_from_json({{"head", "mystery"}}),
                  std::exception);
}
