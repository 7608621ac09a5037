#include "phos/training.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "phos/config.hpp"
#include "phos/survival.hpp"

namespace phos {

namespace {

constexpr char kCheckpointMagic[4] = {'P', 'H', 'O', 'S'};
constexpr std::uint32_t kCheckpointVersion = 1;

template <class T>
void write_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class T>
T read_pod(std::istream& is, const char* what) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof v)) {
    throw DataError(std::string("truncated checkpoint while reading ") + what);
  }
  return v;
}

void write_doubles(std::ostream& os, std::span<const double> v) {
  os.write(reinterpret_cast<const char*>(v.data()),
           static_cast<std::streamsize>(v.size() * sizeof(double)));
}

void read_doubles(std::istream& is, std::span<double> v, const char* what) {
  if (!is.read(reinterpret_cast<char*>(v.data()),
               static_cast<std::streamsize>(v.size() * sizeof(double)))) {
    throw DataError(std::string("truncated checkpoint while reading ") + what);
  }
}

}  // namespace

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !(beta1 > 0.0 && beta1 < 1.0) ||
      !(beta2 > 0.0 && beta2 < 1.0) || !(epsilon > 0.0) ||
      weight_decay < 0.0 || alpha < 0.0 || epochs < 1) {
    throw ConfigError("TrainConfig: hyperparameters out of range");
  }
  if (batch_size < 2) {
    throw ConfigError("TrainConfig: batch_size must be >= 2 (batch norm "
                      "train mode)");
  }
}

OptimizerState OptimizerState::make(const PosthocModel& model) {
  OptimizerState s;
  for (const auto& p : model.parameters()) {
    s.m.emplace_back(p.tensor.size(), 0.0);
    s.v.emplace_back(p.tensor.size(), 0.0);
  }
  return s;
}

void adam_step(PosthocModel& model, OptimizerState& state,
               const TrainConfig& config) {
  auto& params = model.parameters();
  if (state.m.size() != params.size()) {
    throw ShapeError("adam_step: optimizer state does not match model");
  }
  state.t += 1;
  const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = params[i];
    if (!p.tensor.has_grad()) {
      throw ShapeError("adam_step: missing gradient for parameter '" +
                       p.name + "'");
    }
    auto w = p.tensor.mutable_values();
    auto g = p.tensor.grad();
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double grad = g[k] + config.weight_decay * w[k];
      m[k] = config.beta1 * m[k] + (1.0 - config.beta1) * grad;
      v[k] = config.beta2 * v[k] + (1.0 - config.beta2) * grad * grad;
      const double m_hat = m[k] / bc1;
      const double v_hat = v[k] / bc2;
      w[k] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + config.epsilon);
    }
  }
}

std::vector<double> train_epoch(PosthocModel& model, OptimizerState& state,
                                const std::vector<CaseRecord>& cases,
                                const TrainConfig& config, Rng& rng) {
  config.validate();
  if (cases.size() < config.batch_size) {
    throw DataError("train_epoch: " + std::to_string(cases.size()) +
                    " cases is fewer than batch size " +
                    std::to_string(config.batch_size));
  }
  for (const auto& c : cases) {
    if (!c.survival_days) {
      throw DataError("train_epoch: case " + c.id + " has no survival label");
    }
  }
  std::vector<std::size_t> order(cases.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);
  const std::size_t n_batches = cases.size() / config.batch_size;
  std::vector<double> losses;
  losses.reserve(n_batches);
  const bool posthoc = model.config().head == HeadKind::posthoc;
  for (std::size_t b = 0; b < n_batches; ++b) {
    std::vector<CaseRecord> batch;
    std::vector<double> labels;
    batch.reserve(config.batch_size);
    for (std::size_t k = 0; k < config.batch_size; ++k) {
      const CaseRecord& c = cases[order[b * config.batch_size + k]];
      batch.push_back(augment_scale(c, rng));
      labels.push_back(*c.survival_days);
    }
    std::vector<std::size_t> idx(batch.size());
    for (std::size_t k = 0; k < idx.size(); ++k) idx[k] = k;
    Tensor image = cases_to_image_tensor(batch, idx);
    Tensor age = cases_to_age_tensor(batch, idx);
    Tensor loss;
    if (posthoc) {
      HeadOutput out = model.forward(image, age, RunMode::train);
      loss = total_loss(out.y_hat, labels, out.p, config.alpha);
    } else {
      Tensor pred = model.forward_regression(image, age, RunMode::train);
      loss = mean_abs_error(pred, labels);
    }
    backward(loss);
    adam_step(model, state, config);
    losses.push_back(loss.item());
  }
  return losses;
}

std::vector<double> predict_days(PosthocModel& model,
                                 const std::vector<CaseRecord>& cases,
                                 std::size_t batch_size) {
  std::vector<double> preds;
  preds.reserve(cases.size());
  const bool posthoc = model.config().head == HeadKind::posthoc;
  for (std::size_t start = 0; start < cases.size(); start += batch_size) {
    const std::size_t end = std::min(start + batch_size, cases.size());
    std::vector<std::size_t> idx;
    for (std::size_t i = start; i < end; ++i) idx.push_back(i);
    Tensor image = cases_to_image_tensor(cases, idx);
    Tensor age = cases_to_age_tensor(cases, idx);
    if (posthoc) {
      HeadOutput out = model.forward(image, age, RunMode::eval);
      for (std::size_t i = 0; i < idx.size(); ++i) {
        preds.push_back(out.y_hat.value_at(i));
      }
    } else {
      Tensor out = model.forward_regression(image, age, RunMode::eval);
      for (std::size_t i = 0; i < idx.size(); ++i) {
        preds.push_back(out.value_at(i));
      }
    }
  }
  return preds;
}

double validation_mae(PosthocModel& model,
                      const std::vector<CaseRecord>& cases,
                      std::size_t batch_size) {
  if (cases.empty()) throw DataError("validation_mae: no cases");
  const std::vector<double> preds = predict_days(model, cases, batch_size);
  double acc = 0.0;
  for (std::size_t i = 0; i < cases.size(); ++i) {
    if (!cases[i].survival_days) {
      throw DataError("validation_mae: case " + cases[i].id +
                      " has no survival label");
    }
    acc += std::fabs(preds[i] - *cases[i].survival_days);
  }
  return acc / static_cast<double>(cases.size());
}

FitResult fit(PosthocModel model, const std::vector<CaseRecord>& train_cases,
              const std::vector<CaseRecord>& val_cases,
              const TrainConfig& config, const ClassThresholds& thresholds) {
  config.validate();
  if (val_cases.empty()) throw DataError("fit: empty validation set");
  OptimizerState state = OptimizerState::make(model);
  Rng rng(config.seed);
  FitResult result{model.clone(), 0, {}};
  double best_mae = std::numeric_limits<double>::infinity();
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const std::vector<double> losses =
        train_epoch(model, state, train_cases, config, rng);
    double train_loss = 0.0;
    for (double l : losses) train_loss += l;
    train_loss /= static_cast<double>(losses.size());

    const std::vector<double> preds =
        predict_days(model, val_cases, config.batch_size);
    std::vector<double> truths;
    for (const auto& c : val_cases) truths.push_back(*c.survival_days);
    double val_mae = 0.0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
      val_mae += std::fabs(preds[i] - truths[i]);
    }
    val_mae /= static_cast<double>(preds.size());
    const double val_acc = classification_accuracy(preds, truths, thresholds);

    result.history.push_back({epoch, train_loss, val_mae, val_acc});
    if (val_mae < best_mae) {
      best_mae = val_mae;
      result.best_model = model.clone();
      result.best_epoch = epoch;
    }
  }
  return result;
}

namespace {

nlohmann::json preprocess_to_json(const PreprocessInfo& p) {
  nlohmann::json j;
  j["mean"] = p.stats.mean;
  j["stddev"] = p.stats.stddev;
  j["age_mean"] = p.stats.age_mean;
  j["age_stddev"] = p.stats.age_stddev;
  j["downsample_factor"] = p.downsample_factor;
  return j;
}

PreprocessInfo preprocess_from_json(const nlohmann::json& j) {
  PreprocessInfo p;
  j.at("mean").get_to(p.stats.mean);
  j.at("stddev").get_to(p.stats.stddev);
  p.stats.age_mean = j.at("age_mean").get<double>();
  p.stats.age_stddev = j.at("age_stddev").get<double>();
  p.downsample_factor = j.at("downsample_factor").get<std::size_t>();
  return p;
}

}  // namespace

void save_checkpoint(const PosthocModel& model, const OptimizerState* state,
                     const std::filesystem::path& path,
                     const PreprocessInfo* preprocess) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot write checkpoint " + path.string());
  os.write(kCheckpointMagic, 4);
  write_pod(os, kCheckpointVersion);
  nlohmann::json config_json;
  config_json["network"] = network_config_to_json(model.config());
  if (preprocess) config_json["preprocess"] = preprocess_to_json(*preprocess);
  const std::string config_text = config_json.dump();
  write_pod(os, static_cast<std::uint64_t>(config_text.size()));
  os.write(config_text.data(),
           static_cast<std::streamsize>(config_text.size()));
  const auto& params = model.parameters();
  write_pod(os, static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) {
    write_pod(os, static_cast<std::uint32_t>(p.name.size()));
    os.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    write_pod(os, static_cast<std::uint32_t>(p.tensor.rank()));
    for (std::size_t d : p.tensor.shape()) {
      write_pod(os, static_cast<std::uint32_t>(d));
    }
    write_doubles(os, p.tensor.values());
  }
  const auto& bns = model.batch_norm_states();
  write_pod(os, static_cast<std::uint32_t>(bns.size()));
  for (const auto& s : bns) {
    write_pod(os, s.momentum);
    write_pod(os, s.epsilon);
    write_pod(os, static_cast<std::uint32_t>(s.running_mean.size()));
    write_doubles(os, s.running_mean);
    write_doubles(os, s.running_var);
  }
  const std::uint8_t has_opt = state != nullptr;
  write_pod(os, has_opt);
  if (state) {
    write_pod(os, static_cast<std::uint64_t>(state->t));
    for (std::size_t i = 0; i < params.size(); ++i) {
      write_doubles(os, state->m[i]);
      write_doubles(os, state->v[i]);
    }
  }
  if (!os) throw DataError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open checkpoint " + path.string());
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kCheckpointMagic, 4) != 0) {
    throw DataError("bad magic in " + path.string() + ": expected \"PHOS\"");
  }
  const auto version = read_pod<std::uint32_t>(is, "version");
  if (version != kCheckpointVersion) {
    throw DataError("checkpoint version " + std::to_string(version) +
                    " in " + path.string() + " does not match supported "
                    "version " + std::to_string(kCheckpointVersion));
  }
  const auto config_len = read_pod<std::uint64_t>(is, "config length");
  std::string config_text(config_len, '\0');
  if (!is.read(config_text.data(),
               static_cast<std::streamsize>(config_len))) {
    throw DataError("truncated checkpoint while reading config");
  }
  NetworkConfig config;
  std::optional<PreprocessInfo> preprocess;
  try {
    const nlohmann::json j = nlohmann::json::parse(config_text);
    config = network_config_from_json(j.at("network"));
    if (j.contains("preprocess")) {
      preprocess = preprocess_from_json(j.at("preprocess"));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError("corrupt checkpoint config in " + path.string() + ": " +
                    e.what());
  }
  Checkpoint ckpt{PosthocModel::init(config), std::nullopt, preprocess};
  auto& params = ckpt.model.parameters();
  const auto n_params = read_pod<std::uint32_t>(is, "parameter count");
  if (n_params != params.size()) {
    throw DataError("checkpoint parameter count " + std::to_string(n_params) +
                    " does not match config-derived count " +
                    std::to_string(params.size()));
  }
  for (auto& p : params) {
    const auto name_len = read_pod<std::uint32_t>(is, "parameter name");
    std::string name(name_len, '\0');
    if (!is.read(name.data(), name_len)) {
      throw DataError("truncated checkpoint while reading parameter name");
    }
    if (name != p.name) {
      throw DataError("checkpoint parameter '" + name +
                      "' does not match expected '" + p.name + "'");
    }
    const auto rank = read_pod<std::uint32_t>(is, "parameter rank");
    Shape shape;
    for (std::uint32_t i = 0; i < rank; ++i) {
      shape.push_back(read_pod<std::uint32_t>(is, "parameter dims"));
    }
    if (shape != p.tensor.shape()) {
      throw DataError("checkpoint parameter '" + name + "' has shape " +
                      shape_to_string(shape) + ", expected " +
                      shape_to_string(p.tensor.shape()));
    }
    read_doubles(is, p.tensor.mutable_values(), "parameter values");
  }
  auto& bns = ckpt.model.batch_norm_states();
  const auto n_bn = read_pod<std::uint32_t>(is, "batch-norm count");
  if (n_bn != bns.size()) {
    throw DataError("checkpoint batch-norm count mismatch");
  }
  for (auto& s : bns) {
    s.momentum = read_pod<double>(is, "batch-norm momentum");
    s.epsilon = read_pod<double>(is, "batch-norm epsilon");
    const auto channels = read_pod<std::uint32_t>(is, "batch-norm channels");
    if (channels != s.running_mean.size()) {
      throw DataError("checkpoint batch-norm channel mismatch");
    }
    read_doubles(is, s.running_mean, "batch-norm running mean");
    read_doubles(is, s.running_var, "batch-norm running var");
  }
  const auto has_opt = read_pod<std::uint8_t>(is, "optimizer flag");
  if (has_opt) {
    OptimizerState state = OptimizerState::make(ckpt.model);
    state.t = read_pod<std::uint64_t>(is, "optimizer step");
    for (std::size_t i = 0; i < params.size(); ++i) {
      read_doubles(is, state.m[i], "optimizer first moment");
      read_doubles(is, state.v[i], "optimizer second moment");
    }
    ckpt.optimizer = std::move(state);
  }
  return ckpt;
}

}  // namespace phos
