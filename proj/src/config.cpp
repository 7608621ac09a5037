#include "phos/config.hpp"

#include <fstream>

namespace phos {

namespace {

using nlohmann::json;

void reject_unknown(const json& j, std::initializer_list<const char*> known,
                    const std::string& section) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : known) ok = ok || it.key() == k;
    if (!ok) {
      throw ConfigError("unknown key '" + it.key() + "' in " + section);
    }
  }
}

template <class T>
void get_if(const json& j, const char* key, T& out) {
  if (j.contains(key)) {
    try {
      out = j.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError(std::string("bad value for '") + key + "'");
    }
  }
}

}  // namespace

json network_config_to_json(const NetworkConfig& c) {
  json j;
  j["input_size"] = c.input_size;
  j["modalities"] = c.modalities;
  j["channels"] = c.channels;
  j["kernel"] = c.kernel;
  j["stride"] = c.stride;
  j["negative_slope"] = c.negative_slope;
  j["n_bins"] = c.n_bins;
  j["upper_days"] = c.upper_days;
  j["use_age"] = c.use_age;
  j["head"] = head_to_string(c.head);
  j["seed"] = c.seed;
  return j;
}

NetworkConfig network_config_from_json(const json& j) {
  reject_unknown(j,
                 {"input_size", "modalities", "channels", "kernel", "stride",
                  "negative_slope", "n_bins", "upper_days", "use_age", "head",
                  "seed"},
                 "network");
  NetworkConfig c;
  get_if(j, "input_size", c.input_size);
  get_if(j, "modalities", c.modalities);
  get_if(j, "channels", c.channels);
  get_if(j, "kernel", c.kernel);
  get_if(j, "stride", c.stride);
  get_if(j, "negative_slope", c.negative_slope);
  get_if(j, "n_bins", c.n_bins);
  get_if(j, "upper_days", c.upper_days);
  get_if(j, "use_age", c.use_age);
  if (j.contains("head")) c.head = head_from_string(j.at("head").get<std::string>());
  get_if(j, "seed", c.seed);
  return c;
}

namespace {

json train_to_json(const TrainConfig& c) {
  json j;
  j["learning_rate"] = c.learning_rate;
  j["beta1"] = c.beta1;
  j["beta2"] = c.beta2;
  j["epsilon"] = c.epsilon;
  j["weight_decay"] = c.weight_decay;
  j["batch_size"] = c.batch_size;
  j["alpha"] = c.alpha;
  j["epochs"] = c.epochs;
  j["seed"] = c.seed;
  return j;
}

TrainConfig train_from_json(const json& j) {
  reject_unknown(j,
                 {"learning_rate", "beta1", "beta2", "epsilon", "weight_decay",
                  "batch_size", "alpha", "epochs", "seed"},
                 "train");
  TrainConfig c;
  get_if(j, "learning_rate", c.learning_rate);
  get_if(j, "beta1", c.beta1);
  get_if(j, "beta2", c.beta2);
  get_if(j, "epsilon", c.epsilon);
  get_if(j, "weight_decay", c.weight_decay);
  get_if(j, "batch_size", c.batch_size);
  get_if(j, "alpha", c.alpha);
  get_if(j, "epochs", c.epochs);
  get_if(j, "seed", c.seed);
  return c;
}

json phantom_to_json(const PhantomConfig& c) {
  json j;
  j["edge"] = c.edge;
  j["n_cases"] = c.n_cases;
  j["radius_min"] = c.radius_min;
  j["radius_max"] = c.radius_max;
  j["tumor_intensity_offset"] = c.tumor_intensity_offset;
  j["age_min"] = c.age_min;
  j["age_max"] = c.age_max;
  j["noise_std"] = c.noise_std;
  j["c_vol"] = c.c_vol;
  j["c_age"] = c.c_age;
  j["upper_days"] = c.upper_days;
  j["seed"] = c.seed;
  return j;
}

PhantomConfig phantom_from_json(const json& j) {
  reject_unknown(j,
                 {"edge", "n_cases", "radius_min", "radius_max",
                  "tumor_intensity_offset", "age_min", "age_max", "noise_std",
                  "c_vol", "c_age", "upper_days", "seed"},
                 "phantom");
  PhantomConfig c;
  get_if(j, "edge", c.edge);
  get_if(j, "n_cases", c.n_cases);
  get_if(j, "radius_min", c.radius_min);
  get_if(j, "radius_max", c.radius_max);
  get_if(j, "tumor_intensity_offset", c.tumor_intensity_offset);
  get_if(j, "age_min", c.age_min);
  get_if(j, "age_max", c.age_max);
  get_if(j, "noise_std", c.noise_std);
  get_if(j, "c_vol", c.c_vol);
  get_if(j, "c_age", c.c_age);
  get_if(j, "upper_days", c.upper_days);
  get_if(j, "seed", c.seed);
  return c;
}

}  // namespace

json run_config_to_json(const RunConfig& c) {
  json j;
  j["network"] = network_config_to_json(c.network);
  j["train"] = train_to_json(c.train);
  j["phantom"] = phantom_to_json(c.phantom);
  j["thresholds"] = {{"short_upper", c.thresholds.short_upper},
                     {"long_lower", c.thresholds.long_lower}};
  j["data"] = {{"manifest", c.data.manifest},
               {"downsample_factor", c.data.downsample_factor},
               {"val_fraction", c.data.val_fraction},
               {"split_seed", c.data.split_seed}};
  j["output_dir"] = c.output_dir;
  return j;
}

RunConfig run_config_from_json(const json& j) {
  reject_unknown(
      j, {"network", "train", "phantom", "thresholds", "data", "output_dir"},
      "run config");
  RunConfig c;
  if (j.contains("network")) c.network = network_config_from_json(j.at("network"));
  if (j.contains("train")) c.train = train_from_json(j.at("train"));
  if (j.contains("phantom")) c.phantom = phantom_from_json(j.at("phantom"));
  if (j.contains("thresholds")) {
    const json& t = j.at("thresholds");
    reject_unknown(t, {"short_upper", "long_lower"}, "thresholds");
    get_if(t, "short_upper", c.thresholds.short_upper);
    get_if(t, "long_lower", c.thresholds.long_lower);
  }
  if (j.contains("data")) {
    const json& d = j.at("data");
    reject_unknown(d, {"manifest", "downsample_factor", "val_fraction",
                       "split_seed"},
                   "data");
    get_if(d, "manifest", c.data.manifest);
    get_if(d, "downsample_factor", c.data.downsample_factor);
    get_if(d, "val_fraction", c.data.val_fraction);
    get_if(d, "split_seed", c.data.split_seed);
  }
  get_if(j, "output_dir", c.output_dir);
  return c;
}

RunConfig run_config_from_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file " + path.string());
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config file " + path.string() + " is not valid JSON: " +
                      e.what());
  }
  return run_config_from_json(j);
}

}  // namespace phos
