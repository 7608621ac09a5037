#include "phos/network.hpp"

#include <cmath>

#include "phos/rng.hpp"

namespace phos {

namespace {

Tensor draw_uniform(Rng& rng, Shape shape, double bound) {
  std::vector<double> values(shape_size(shape));
  for (double& v : values) v = rng.uniform(-bound, bound);
  return Tensor(std::move(shape), std::move(values), true);
}

}  // namespace

std::size_t NetworkConfig::output_edge() const {
  const std::size_t pad = kernel / 2;
  std::size_t d = input_size;
  for (int b = 0; b < 4; ++b) {
    if (d + 2 * pad < kernel) return 0;
    d = (d + 2 * pad - kernel) / stride + 1;
  }
  return d;
}

void NetworkConfig::validate() const {
  if (modalities != 4) {
    throw ShapeError("NetworkConfig: expected 4 modalities");
  }
  if (channels.size() != 4) {
    throw ShapeError("NetworkConfig: need per-block channels for 4 blocks");
  }
  if (kernel == 0 || kernel % 2 == 0) {
    throw ShapeError("NetworkConfig: kernel must be odd and positive");
  }
  if (stride < 1) throw ShapeError("NetworkConfig: stride must be >= 1");
  if (n_bins < 2) throw ShapeError("NetworkConfig: n_bins must be >= 2");
  if (!(upper_days > 0.0)) {
    throw ShapeError("NetworkConfig: upper_days must be positive");
  }
  const std::size_t v = output_edge();
  if (v < 1) {
    throw ShapeError("NetworkConfig: input_size " +
                     std::to_string(input_size) + " collapses to spatial edge " +
                     std::to_string(v) + " after 4 stride-" +
                     std::to_string(stride) + " blocks");
  }
}

std::string head_to_string(HeadKind h) {
  return h == HeadKind::posthoc ? "posthoc" : "regression";
}

HeadKind head_from_string(const std::string& s) {
  if (s == "posthoc") return HeadKind::posthoc;
  if (s == "regression") return HeadKind::regression;
  throw ShapeError("unknown head kind '" + s + "'");
}

PosthocModel PosthocModel::init(const NetworkConfig& config) {
  config.validate();
  PosthocModel m;
  m.config_ = config;
  Rng rng(config.seed);
  const std::size_t k = config.kernel;
  const std::size_t q = config.channels.back();
  std::size_t prev = config.modalities;
  for (int b = 0; b < 4; ++b) {
    const std::size_t c = config.channels[b];
    const std::string tag = "block" + std::to_string(b);
    const double bound =
        std::sqrt(6.0 / static_cast<double>(prev * k * k * k));
    m.params_.push_back({tag + ".conv.weight",
                         draw_uniform(rng, {c, prev, k, k, k}, bound)});
    m.params_.push_back({tag + ".conv.bias", Tensor::zeros({c}, true)});
    m.params_.push_back({tag + ".bn.gamma", Tensor::full({c}, 1.0, true)});
    m.params_.push_back({tag + ".bn.beta", Tensor::zeros({c}, true)});
    m.bn_states_.push_back(BatchNormState::make(c));
    prev = c;
  }
  // The age draw always happens so the remaining initialization stream is
  // identical with and without fusion; the parameters are only registered
  // (and trained) when the fusion path is active.
  Tensor age_weight = draw_uniform(rng, {q, 1}, std::sqrt(6.0));
  if (config.use_age) {
    m.params_.push_back({"age.weight", std::move(age_weight)});
    m.params_.push_back({"age.bias", Tensor::zeros({q}, true)});
  }
  const double head_bound = std::sqrt(6.0 / static_cast<double>(q));
  if (config.head == HeadKind::posthoc) {
    m.params_.push_back({"final.weight", draw_uniform(
                             rng, {config.n_bins, q, 1, 1, 1}, head_bound)});
    m.params_.push_back({"final.bias", Tensor::zeros({config.n_bins}, true)});
  } else {
    m.params_.push_back({"reg.weight", draw_uniform(rng, {1, q}, head_bound)});
    m.params_.push_back({"reg.bias", Tensor::zeros({1}, true)});
  }
  return m;
}

Parameter& PosthocModel::param(const std::string& name) {
  for (auto& p : params_) {
    if (p.name == name) return p;
  }
  throw std::invalid_argument("no parameter named '" + name + "'");
}

Tensor PosthocModel::encode(const Tensor& image, const Tensor& age,
                            RunMode mode) {
  if (image.rank() != 5 || image.shape()[1] != config_.modalities ||
      image.shape()[2] != config_.input_size ||
      image.shape()[3] != config_.input_size ||
      image.shape()[4] != config_.input_size) {
    throw ShapeError("forward: image must be [B,4," +
                     std::to_string(config_.input_size) + "^3], got " +
                     shape_to_string(image.shape()));
  }
  const std::size_t B = image.shape()[0];
  if (age.rank() != 1 || age.shape()[0] != B) {
    throw ShapeError("forward: age must be [B]");
  }
  const std::size_t pad = config_.kernel / 2;
  Tensor x = image;
  for (int b = 0; b < 4; ++b) {
    const std::string tag = "block" + std::to_string(b);
    bn_states_[b].mode = mode == RunMode::train ? BatchNormState::Mode::train
                                                : BatchNormState::Mode::eval;
    x = conv3d(x, param(tag + ".conv.weight").tensor,
               param(tag + ".conv.bias").tensor, config_.stride, pad);
    x = leaky_relu(x, config_.negative_slope);
    x = batch_norm(x, param(tag + ".bn.gamma").tensor,
                   param(tag + ".bn.beta").tensor, bn_states_[b]);
  }
  if (config_.use_age) {
    Tensor age_col = reshape(age, {B, 1});
    Tensor shift = linear(age_col, param("age.weight").tensor,
                          param("age.bias").tensor);
    x = broadcast_add(x, shift);
  }
  return x;
}

HeadOutput PosthocModel::forward(const Tensor& image, const Tensor& age,
                                 RunMode mode) {
  if (config_.head != HeadKind::posthoc) {
    throw ShapeError("forward: model has a regression head; use "
                     "forward_regression");
  }
  Tensor features = encode(image, age, mode);
  HeadOutput out;
  out.saliency = conv3d(features, param("final.weight").tensor,
                        param("final.bias").tensor, 1, 0);
  out.p = bin_probabilities(out.saliency);
  const BinConfig bins = make_bins(config_.n_bins, config_.upper_days);
  out.p_weighted = weighted_bin_predictions(out.p, bins);
  out.y_hat = os_prediction(out.p_weighted, config_.upper_days);
  return out;
}

Tensor PosthocModel::forward_regression(const Tensor& image, const Tensor& age,
                                        RunMode mode) {
  if (config_.head != HeadKind::regression) {
    throw ShapeError("forward_regression: model has a posthoc head");
  }
  Tensor features = encode(image, age, mode);
  Tensor pooled = global_avg_pool(features);
  Tensor pred = linear(pooled, param("reg.weight").tensor,
                       param("reg.bias").tensor);
  return reshape(pred, {image.shape()[0]});
}

Explanation PosthocModel::explain(const Tensor& image, const Tensor& age) {
  if (config_.head != HeadKind::posthoc) {
    throw ShapeError("explain: regression head has no saliency semantics");
  }
  if (image.shape()[0] != 1) {
    throw ShapeError("explain: expects a single case");
  }
  HeadOutput out = forward(image, age, RunMode::eval);
  Explanation e;
  e.n_star = transition_bin(out.p.values());
  const std::size_t v = config_.output_edge();
  const std::size_t map_size = v * v * v;
  const std::size_t offset = (e.n_star - 1) * map_size;
  std::vector<double> map(out.saliency.values().begin() + offset,
                          out.saliency.values().begin() + offset + map_size);
  e.map = Tensor({v, v, v}, std::move(map));
  e.mask = saliency_mask(e.map.values(), 0.05);
  return e;
}

PosthocModel PosthocModel::clone() const {
  PosthocModel m;
  m.config_ = config_;
  m.bn_states_ = bn_states_;
  for (const auto& p : params_) m.params_.push_back({p.name, p.tensor.clone()});
  return m;
}

PosthocModel PosthocModel::at_resolution(std::size_t input_size) const {
  PosthocModel m = clone();
  m.config_.input_size = input_size;
  m.config_.validate();
  return m;
}

std::size_t PosthocModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.tensor.size();
  return n;
}

}  // namespace phos
