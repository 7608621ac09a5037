// phos: post-hoc overall-survival prediction with weakly supervised tumor
// localization. Subcommands: synth, train, eval, predict.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "phos/config.hpp"
#include "phos/data.hpp"
#include "phos/metrics.hpp"
#include "phos/network.hpp"
#include "phos/survival.hpp"
#include "phos/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CommonArgs {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
};

phos::RunConfig resolve_config(const CommonArgs& args, json* raw = nullptr) {
  phos::RunConfig cfg;
  if (!args.config_path.empty()) {
    if (raw) {
      std::ifstream is(args.config_path);
      if (!is) {
        throw phos::ConfigError("cannot open config file " + args.config_path);
      }
      try {
        is >> *raw;
      } catch (const json::exception& e) {
        throw phos::ConfigError(std::string("config is not valid JSON: ") +
                                e.what());
      }
      cfg = phos::run_config_from_json(*raw);
    } else {
      cfg = phos::run_config_from_file(args.config_path);
    }
  }
  if (args.seed) {
    cfg.network.seed = *args.seed;
    cfg.train.seed = *args.seed;
    cfg.phantom.seed = *args.seed;
    cfg.data.split_seed = *args.seed;
  }
  if (args.out) cfg.output_dir = *args.out;
  return cfg;
}

std::vector<phos::CaseRecord> load_cases(const phos::Manifest& manifest) {
  std::vector<phos::CaseRecord> cases;
  cases.reserve(manifest.entries.size());
  for (const auto& e : manifest.entries) {
    cases.push_back(phos::load_case(manifest, e));
  }
  return cases;
}

std::vector<phos::CaseRecord> prepare(std::vector<phos::CaseRecord> cases,
                                      const phos::NormStats& stats,
                                      std::size_t factor) {
  for (auto& c : cases) {
    c = phos::normalize(phos::downsample_case(c, factor), stats);
  }
  return cases;
}

void write_history(const std::vector<phos::EpochStats>& history,
                   const fs::path& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw phos::DataError("cannot write history " + path.string());
  for (const auto& e : history) {
    nlohmann::ordered_json j;
    j["epoch"] = e.epoch;
    j["train_loss"] = e.train_loss;
    j["val_mae"] = e.val_mae;
    j["val_accuracy"] = e.val_accuracy;
    os << j.dump() << "\n";
  }
}

void write_pgm(const std::vector<double>& pixels, std::size_t w, std::size_t h,
               const fs::path& path) {
  double lo = pixels[0], hi = pixels[0];
  for (double v : pixels) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  const double span = hi - lo > 0 ? hi - lo : 1.0;
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  os << "P5\n" << w << " " << h << "\n255\n";
  for (double v : pixels) {
    os.put(static_cast<char>(std::lround(255.0 * (v - lo) / span)));
  }
}

int cmd_synth(const CommonArgs& args) {
  const phos::RunConfig cfg = resolve_config(args);
  const auto cases = phos::synthesize_phantom(cfg.phantom);
  const fs::path out_dir = cfg.output_dir;
  const fs::path data_dir = out_dir / "data";
  std::error_code ec;
  fs::create_directories(data_dir, ec);
  if (ec) {
    throw phos::DataError("cannot create output directory " +
                          data_dir.string() + ": " + ec.message());
  }
  phos::Manifest manifest;
  manifest.root = out_dir;
  const char* suffix[4] = {"flair", "t1", "t1ce", "t2"};
  for (const auto& c : cases) {
    phos::ManifestEntry e;
    e.id = c.id;
    e.age_years = c.age_years;
    e.resection = c.resection;
    e.survival_days = c.survival_days;
    for (int m = 0; m < 4; ++m) {
      e.volume_paths[m] = "data/" + c.id + "_" + suffix[m] + ".svol";
      phos::save_volume(c.volumes[m], out_dir / e.volume_paths[m]);
    }
    e.mask_path = "data/" + c.id + "_mask.svol";
    phos::save_volume(*c.tumor_mask, out_dir / *e.mask_path);
    manifest.entries.push_back(std::move(e));
  }
  phos::save_manifest(manifest, out_dir / "manifest.csv");
  std::cout << "wrote " << cases.size() << " phantom cases to "
            << out_dir.string() << "\n";
  return 0;
}

int cmd_train(const CommonArgs& args, const std::string& head_override,
              const std::string& manifest_override) {
  phos::RunConfig cfg = resolve_config(args);
  if (!head_override.empty()) {
    cfg.network.head = phos::head_from_string(head_override);
  }
  if (!manifest_override.empty()) cfg.data.manifest = manifest_override;
  if (cfg.data.manifest.empty()) {
    throw phos::ConfigError("no manifest given (config data.manifest or "
                            "--manifest)");
  }
  const phos::Manifest manifest = phos::load_manifest(cfg.data.manifest);
  for (const auto& e : manifest.entries) {
    if (!e.survival_days) {
      throw phos::DataError("case " + e.id + " lacks a survival label; "
                            "training requires labeled cases");
    }
  }
  auto [train_manifest, val_manifest] =
      phos::split(manifest, cfg.data.val_fraction, cfg.data.split_seed);
  auto train_cases = load_cases(train_manifest);
  auto val_cases = load_cases(val_manifest);
  for (auto& c : train_cases) {
    c = phos::downsample_case(c, cfg.data.downsample_factor);
  }
  for (auto& c : val_cases) {
    c = phos::downsample_case(c, cfg.data.downsample_factor);
  }
  const phos::NormStats stats = phos::compute_norm_stats(train_cases);
  for (auto& c : train_cases) c = phos::normalize(c, stats);
  for (auto& c : val_cases) c = phos::normalize(c, stats);

  phos::PosthocModel model = phos::PosthocModel::init(cfg.network);
  phos::FitResult result =
      phos::fit(std::move(model), train_cases, val_cases, cfg.train,
                cfg.thresholds);

  const fs::path out_dir = cfg.output_dir;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) {
    throw phos::DataError("cannot create output directory " +
                          out_dir.string());
  }
  phos::PreprocessInfo preprocess{stats, cfg.data.downsample_factor};
  phos::save_checkpoint(result.best_model, nullptr, out_dir / "best.ckpt",
                        &preprocess);
  write_history(result.history, out_dir / "history.jsonl");
  const phos::EpochStats& best = result.history[result.best_epoch - 1];
  std::cout << "best epoch " << best.epoch << ": val MAE " << best.val_mae
            << " days, val accuracy " << best.val_accuracy << "\n";
  return 0;
}

void check_config_checkpoint_match(const json& raw,
                                   const phos::NetworkConfig& ckpt_config) {
  if (!raw.contains("network")) return;
  const json ckpt_json = phos::network_config_to_json(ckpt_config);
  for (auto it = raw.at("network").begin(); it != raw.at("network").end();
       ++it) {
    if (ckpt_json.contains(it.key()) && ckpt_json.at(it.key()) != it.value()) {
      throw phos::ConfigError(
          "config/checkpoint mismatch on network." + it.key() + ": config " +
          it.value().dump() + " vs checkpoint " +
          ckpt_json.at(it.key()).dump());
    }
  }
}

int cmd_eval(const CommonArgs& args, const std::string& checkpoint_path,
             const std::string& manifest_path) {
  json raw;
  phos::RunConfig cfg = resolve_config(args, &raw);
  phos::Checkpoint ckpt = phos::load_checkpoint(checkpoint_path);
  check_config_checkpoint_match(raw, ckpt.model.config());
  const std::string manifest_file =
      manifest_path.empty() ? cfg.data.manifest : manifest_path;
  if (manifest_file.empty()) {
    throw phos::ConfigError("no manifest given (config data.manifest or "
                            "--manifest)");
  }
  const phos::Manifest manifest = phos::load_manifest(manifest_file);
  for (const auto& e : manifest.entries) {
    if (!e.survival_days) {
      throw phos::DataError("case " + e.id + " lacks a survival label; "
                            "eval requires labeled cases");
    }
  }
  if (!ckpt.preprocess) {
    throw phos::DataError("checkpoint carries no preprocessing stats; cannot "
                          "normalize new data");
  }
  auto cases = prepare(load_cases(manifest), ckpt.preprocess->stats,
                       ckpt.preprocess->downsample_factor);
  // Dice needs the full-resolution masks; prepare() keeps them untouched.
  phos::Evaluation ev = phos::evaluate(ckpt.model, cases, cfg.thresholds);
  const std::string report = phos::report_to_json(ev.report);
  std::cout << report;
  const fs::path out_dir = cfg.output_dir;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) {
    throw phos::DataError("cannot create output directory " +
                          out_dir.string());
  }
  std::ofstream os(out_dir / "report.json", std::ios::trunc);
  os << report;
  phos::write_case_evals(ev.cases, out_dir / "predictions.csv");
  return 0;
}

int cmd_predict(const CommonArgs& args, const std::string& checkpoint_path,
                const std::vector<std::string>& modality_paths, double age,
                const std::string& case_id, bool slices) {
  const phos::RunConfig cfg = resolve_config(args);
  const char* names[4] = {"flair", "t1", "t1ce", "t2"};
  std::string missing;
  for (int m = 0; m < 4; ++m) {
    if (modality_paths[m].empty()) missing += std::string(" --") + names[m];
  }
  if (!missing.empty()) {
    throw phos::ConfigError("missing modality volume(s):" + missing);
  }
  phos::Checkpoint ckpt = phos::load_checkpoint(checkpoint_path);
  if (!ckpt.preprocess) {
    throw phos::DataError("checkpoint carries no preprocessing stats; cannot "
                          "normalize new data");
  }
  phos::CaseRecord record;
  record.id = case_id;
  record.age_years = age;
  for (int m = 0; m < 4; ++m) {
    record.volumes[m] = phos::load_volume(modality_paths[m]);
  }
  phos::CaseRecord prepared = phos::normalize(
      phos::downsample_case(record, ckpt.preprocess->downsample_factor),
      ckpt.preprocess->stats);
  std::vector<phos::CaseRecord> one{prepared};
  const std::size_t idx[1] = {0};
  phos::Tensor image = phos::cases_to_image_tensor(one, idx);
  phos::Tensor age_t = phos::cases_to_age_tensor(one, idx);
  phos::HeadOutput out = ckpt.model.forward(image, age_t, phos::RunMode::eval);
  phos::Explanation ex = ckpt.model.explain(image, age_t);

  const double pred_days = out.y_hat.value_at(0);
  const phos::SurvivalClass cls = phos::survival_class(pred_days,
                                                       cfg.thresholds);
  std::cout << "predicted_days " << pred_days << "\n"
            << "class " << phos::survival_class_to_string(cls) << "\n"
            << "transition_bin " << ex.n_star << "\n";

  const fs::path out_dir = cfg.output_dir;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) {
    throw phos::DataError("cannot create output directory " +
                          out_dir.string());
  }
  const std::size_t v = ckpt.model.config().output_edge();
  phos::Volume map;
  map.dims = {v, v, v};
  map.values.assign(ex.map.values().begin(), ex.map.values().end());
  phos::save_volume(map, out_dir / "saliency.svol");
  phos::Volume mask;
  mask.dims = {v, v, v};
  for (std::uint8_t b : ex.mask) mask.values.push_back(b);
  phos::save_volume(mask, out_dir / "mask.svol");

  if (slices) {
    // Mid-slice overlays of the saliency map on Flair, one per axis.
    const phos::Volume& flair = prepared.volumes[0];
    const std::size_t e = flair.dims[0];
    const std::vector<double> up =
        phos::upsample_trilinear(ex.map.values(), {v, v, v}, flair.dims);
    auto norm01 = [](std::vector<double> vals) {
      double lo = vals[0], hi = vals[0];
      for (double x : vals) {
        lo = std::min(lo, x);
        hi = std::max(hi, x);
      }
      const double span = hi - lo > 0 ? hi - lo : 1.0;
      for (double& x : vals) x = (x - lo) / span;
      return vals;
    };
    const std::vector<double> f01 = norm01(flair.values);
    const std::vector<double> m01 = norm01(up);
    const std::size_t mid = e / 2;
    for (int axis = 0; axis < 3; ++axis) {
      std::vector<double> img(e * e);
      for (std::size_t a = 0; a < e; ++a)
        for (std::size_t b = 0; b < e; ++b) {
          std::size_t z = axis == 0 ? mid : a;
          std::size_t y = axis == 1 ? mid : (axis == 0 ? a : b);
          std::size_t x = axis == 2 ? mid : b;
          const std::size_t i = (z * e + y) * e + x;
          img[a * e + b] = 0.5 * f01[i] + 0.5 * m01[i];
        }
      write_pgm(img, e, e,
                out_dir / ("slice_axis" + std::to_string(axis) + ".pgm"));
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"post-hoc OS time prediction with saliency-based tumor "
               "localization"};
  app.require_subcommand(1);

  CommonArgs common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config_path, "JSON run config");
    sub->add_option_function<std::uint64_t>(
        "--seed", [&](const std::uint64_t& s) { common.seed = s; },
        "override all seeds");
    sub->add_option_function<std::string>(
        "--out", [&](const std::string& s) { common.out = s; },
        "output directory");
  };

  CLI::App* synth = app.add_subcommand("synth", "generate phantom data set");
  add_common(synth);

  CLI::App* train = app.add_subcommand("train", "train a model");
  add_common(train);
  std::string head_override, train_manifest;
  train->add_option("--head", head_override,
                    "head kind override: posthoc or regression");
  train->add_option("--manifest", train_manifest, "manifest CSV path");

  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  add_common(eval);
  std::string ckpt_path, eval_manifest;
  eval->add_option("--checkpoint", ckpt_path, "checkpoint path")->required();
  eval->add_option("--manifest", eval_manifest, "manifest CSV path");

  CLI::App* predict = app.add_subcommand("predict", "predict one case");
  add_common(predict);
  std::string p_ckpt, p_id = "case";
  std::vector<std::string> modality_paths(4);
  double p_age = 0.0;
  bool p_slices = false;
  predict->add_option("--checkpoint", p_ckpt, "checkpoint path")->required();
  predict->add_option("--flair", modality_paths[0], "Flair volume (SVOL)");
  predict->add_option("--t1", modality_paths[1], "T1 volume (SVOL)");
  predict->add_option("--t1ce", modality_paths[2], "T1ce volume (SVOL)");
  predict->add_option("--t2", modality_paths[3], "T2 volume (SVOL)");
  predict->add_option("--age", p_age, "age in years")->required();
  predict->add_option("--id", p_id, "case id for reporting");
  predict->add_flag("--slices", p_slices, "write mid-slice overlay images");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (synth->parsed()) return cmd_synth(common);
    if (train->parsed()) return cmd_train(common, head_override, train_manifest);
    if (eval->parsed()) return cmd_eval(common, ckpt_path, eval_manifest);
    if (predict->parsed()) {
      return cmd_predict(common, p_ckpt, modality_paths, p_age, p_id,
                         p_slices);
    }
  } catch (const phos::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const phos::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 3;
  }
  return 1;
}
