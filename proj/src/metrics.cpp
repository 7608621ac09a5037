#include "phos/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "phos/network.hpp"
#include "phos/survival.hpp"

#include <nlohmann/json.hpp>

namespace phos {

namespace {

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<double> average_ranks(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return values[a] < values[b];
  });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && values[idx[j + 1]] == values[idx[i]]) ++j;
    const double avg = 0.5 * (static_cast<double>(i + 1) +
                              static_cast<double>(j + 1));
    for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

void ClassThresholds::validate() const {
  if (!(short_upper > 0.0 && short_upper < long_lower)) {
    throw ShapeError("ClassThresholds: need 0 < short_upper < long_lower");
  }
}

std::string survival_class_to_string(SurvivalClass c) {
  switch (c) {
    case SurvivalClass::short_survivor:
      return "short";
    case SurvivalClass::mid_survivor:
      return "mid";
    default:
      return "long";
  }
}

SquaredErrorStats squared_error_stats(std::span<const double> pred,
                                      std::span<const double> truth) {
  if (pred.size() != truth.size() || pred.empty()) {
    throw ShapeError("squared_error_stats: need equal nonzero lengths, got " +
                     std::to_string(pred.size()) + " and " +
                     std::to_string(truth.size()));
  }
  const std::size_t n = pred.size();
  std::vector<double> se(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double d = pred[i] - truth[i];
    se[i] = d * d;
  }
  SquaredErrorStats s;
  for (double v : se) s.mse += v;
  s.mse /= static_cast<double>(n);
  std::vector<double> sorted = se;
  std::sort(sorted.begin(), sorted.end());
  s.median_se = n % 2 ? sorted[n / 2]
                      : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  double ss = 0.0;
  for (double v : se) ss += (v - s.mse) * (v - s.mse);
  s.std_se = std::sqrt(ss / static_cast<double>(n));
  return s;
}

std::optional<double> spearman_r(std::span<const double> pred,
                                 std::span<const double> truth) {
  if (pred.size() != truth.size() || pred.size() < 2) {
    throw ShapeError("spearman_r: need equal lengths >= 2");
  }
  const auto ra = average_ranks(pred);
  const auto rb = average_ranks(truth);
  const double n = static_cast<double>(ra.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    ma += ra[i];
    mb += rb[i];
  }
  ma /= n;
  mb /= n;
  double cov = 0.0, va = 0.0, vb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    cov += (ra[i] - ma) * (rb[i] - mb);
    va += (ra[i] - ma) * (ra[i] - ma);
    vb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (va == 0.0 || vb == 0.0) return std::nullopt;
  return cov / std::sqrt(va * vb);
}

SurvivalClass survival_class(double days, const ClassThresholds& t) {
  t.validate();
  if (days < t.short_upper) return SurvivalClass::short_survivor;
  if (days > t.long_lower) return SurvivalClass::long_survivor;
  return SurvivalClass::mid_survivor;
}

double classification_accuracy(std::span<const double> pred_days,
                               std::span<const double> truth_days,
                               const ClassThresholds& t) {
  if (pred_days.size() != truth_days.size() || pred_days.empty()) {
    throw ShapeError("classification_accuracy: need equal nonzero lengths");
  }
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred_days.size(); ++i) {
    if (survival_class(pred_days[i], t) == survival_class(truth_days[i], t)) {
      ++hits;
    }
  }
  return static_cast<double>(hits) / static_cast<double>(pred_days.size());
}

double dice(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b) {
  if (a.size() != b.size()) {
    throw ShapeError("dice: shape mismatch, " + std::to_string(a.size()) +
                     " vs " + std::to_string(b.size()) + " voxels");
  }
  std::size_t na = 0, nb = 0, inter = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const bool va = a[i] != 0, vb = b[i] != 0;
    na += va;
    nb += vb;
    inter += va && vb;
  }
  if (na + nb == 0) return 1.0;
  return 2.0 * static_cast<double>(inter) / static_cast<double>(na + nb);
}

std::vector<double> upsample_trilinear(std::span<const double> src,
                                       const Shape& src_dims,
                                       const Shape& dst_dims) {
  if (src_dims.size() != 3 || dst_dims.size() != 3 ||
      shape_size(src_dims) != src.size()) {
    throw ShapeError("upsample_trilinear: expects rank-3 grids");
  }
  const std::size_t sd = src_dims[0], sh = src_dims[1], sw = src_dims[2];
  const std::size_t dd = dst_dims[0], dh = dst_dims[1], dw = dst_dims[2];
  auto src_at = [&](std::size_t z, std::size_t y, std::size_t x) {
    return src[(z * sh + y) * sw + x];
  };
  auto axis_coord = [](std::size_t dst, std::size_t dn, std::size_t sn) {
    // Voxel-center alignment between the two grids.
    double c = (static_cast<double>(dst) + 0.5) * static_cast<double>(sn) /
                   static_cast<double>(dn) -
               0.5;
    if (c < 0.0) c = 0.0;
    const double mx = static_cast<double>(sn - 1);
    if (c > mx) c = mx;
    return c;
  };
  std::vector<double> out(dd * dh * dw);
  std::size_t oi = 0;
  for (std::size_t z = 0; z < dd; ++z) {
    const double cz = axis_coord(z, dd, sd);
    const std::size_t z0 = static_cast<std::size_t>(cz);
    const std::size_t z1 = std::min(z0 + 1, sd - 1);
    const double fz = cz - static_cast<double>(z0);
    for (std::size_t y = 0; y < dh; ++y) {
      const double cy = axis_coord(y, dh, sh);
      const std::size_t y0 = static_cast<std::size_t>(cy);
      const std::size_t y1 = std::min(y0 + 1, sh - 1);
      const double fy = cy - static_cast<double>(y0);
      for (std::size_t x = 0; x < dw; ++x, ++oi) {
        const double cx = axis_coord(x, dw, sw);
        const std::size_t x0 = static_cast<std::size_t>(cx);
        const std::size_t x1 = std::min(x0 + 1, sw - 1);
        const double fx = cx - static_cast<double>(x0);
        const double c00 = src_at(z0, y0, x0) * (1 - fx) + src_at(z0, y0, x1) * fx;
        const double c01 = src_at(z0, y1, x0) * (1 - fx) + src_at(z0, y1, x1) * fx;
        const double c10 = src_at(z1, y0, x0) * (1 - fx) + src_at(z1, y0, x1) * fx;
        const double c11 = src_at(z1, y1, x0) * (1 - fx) + src_at(z1, y1, x1) * fx;
        const double c0 = c00 * (1 - fy) + c01 * fy;
        const double c1 = c10 * (1 - fy) + c11 * fy;
        out[oi] = c0 * (1 - fz) + c1 * fz;
      }
    }
  }
  return out;
}

std::vector<double> upsample_saliency(
    std::span<const double> src, const Shape& src_dims, const Shape& dst_dims,
    const std::array<double, 3>& voxels_per_cell) {
  if (src_dims.size() != 3 || dst_dims.size() != 3 ||
      shape_size(src_dims) != src.size()) {
    throw ShapeError("upsample_saliency: expects rank-3 grids");
  }
  for (double v : voxels_per_cell) {
    if (!(v > 0.0)) {
      throw ShapeError("upsample_saliency: voxels_per_cell must be positive");
    }
  }
  const std::size_t sd = src_dims[0], sh = src_dims[1], sw = src_dims[2];
  const std::size_t dd = dst_dims[0], dh = dst_dims[1], dw = dst_dims[2];
  auto src_at = [&](std::size_t z, std::size_t y, std::size_t x) {
    return src[(z * sh + y) * sw + x];
  };
  auto axis_coord = [](std::size_t dst, double vpc, std::size_t sn) {
    double c = static_cast<double>(dst) / vpc;
    const double mx = static_cast<double>(sn - 1);
    if (c > mx) c = mx;
    return c;
  };
  std::vector<double> out(dd * dh * dw);
  std::size_t oi = 0;
  for (std::size_t z = 0; z < dd; ++z) {
    const double cz = axis_coord(z, voxels_per_cell[0], sd);
    const std::size_t z0 = static_cast<std::size_t>(cz);
    const std::size_t z1 = std::min(z0 + 1, sd - 1);
    const double fz = cz - static_cast<double>(z0);
    for (std::size_t y = 0; y < dh; ++y) {
      const double cy = axis_coord(y, voxels_per_cell[1], sh);
      const std::size_t y0 = static_cast<std::size_t>(cy);
      const std::size_t y1 = std::min(y0 + 1, sh - 1);
      const double fy = cy - static_cast<double>(y0);
      for (std::size_t x = 0; x < dw; ++x, ++oi) {
        const double cx = axis_coord(x, voxels_per_cell[2], sw);
        const std::size_t x0 = static_cast<std::size_t>(cx);
        const std::size_t x1 = std::min(x0 + 1, sw - 1);
        const double fx = cx - static_cast<double>(x0);
        const double c00 = src_at(z0, y0, x0) * (1 - fx) + src_at(z0, y0, x1) * fx;
        const double c01 = src_at(z0, y1, x0) * (1 - fx) + src_at(z0, y1, x1) * fx;
        const double c10 = src_at(z1, y0, x0) * (1 - fx) + src_at(z1, y0, x1) * fx;
        const double c11 = src_at(z1, y1, x0) * (1 - fx) + src_at(z1, y1, x1) * fx;
        const double c0 = c00 * (1 - fy) + c01 * fy;
        const double c1 = c10 * (1 - fy) + c11 * fy;
        out[oi] = c0 * (1 - fz) + c1 * fz;
      }
    }
  }
  return out;
}

Evaluation evaluate(PosthocModel& model, const std::vector<CaseRecord>& cases,
                    const ClassThresholds& thresholds) {
  thresholds.validate();
  if (cases.empty()) throw DataError("evaluate: no cases");
  for (const auto& c : cases) {
    if (!c.survival_days) {
      throw DataError("evaluate: case " + c.id + " has no survival label");
    }
  }
  Evaluation ev;
  std::vector<double> preds, truths, dices;
  const bool posthoc = model.config().head == HeadKind::posthoc;
  const std::size_t v = model.config().output_edge();
  for (std::size_t i = 0; i < cases.size(); ++i) {
    const std::size_t one[1] = {i};
    Tensor image = cases_to_image_tensor(cases, one);
    Tensor age = cases_to_age_tensor(cases, one);
    CaseEval ce;
    ce.id = cases[i].id;
    ce.truth_days = *cases[i].survival_days;
    if (posthoc) {
      HeadOutput out = model.forward(image, age, RunMode::eval);
      ce.pred_days = out.y_hat.value_at(0);
      if (cases[i].tumor_mask) {
        const std::size_t n_star = transition_bin(out.p.values());
        const std::size_t map_size = v * v * v;
        std::span<const double> map =
            out.saliency.values().subspan((n_star - 1) * map_size, map_size);
        const Volume& gt = *cases[i].tumor_mask;
        // Saliency cell i is centred on input voxel stride^4 * i; scale by
        // the mask-to-input resolution ratio per axis.
        const double stride_total =
            std::pow(static_cast<double>(model.config().stride), 4.0);
        std::array<double, 3> vpc;
        for (int a = 0; a < 3; ++a) {
          vpc[a] = stride_total * static_cast<double>(gt.dims[a]) /
                   static_cast<double>(model.config().input_size);
        }
        std::vector<double> up = upsample_saliency(map, {v, v, v}, gt.dims, vpc);
        std::vector<std::uint8_t> pred_mask = saliency_mask(up, 0.05);
        std::vector<std::uint8_t> truth_mask(gt.values.size());
        for (std::size_t j = 0; j < gt.values.size(); ++j) {
          truth_mask[j] = gt.values[j] > 0.5 ? 1 : 0;
        }
        ce.dice = dice(pred_mask, truth_mask);
        dices.push_back(*ce.dice);
      }
    } else {
      Tensor out = model.forward_regression(image, age, RunMode::eval);
      ce.pred_days = out.value_at(0);
    }
    ce.pred_class = survival_class(ce.pred_days, thresholds);
    ce.truth_class = survival_class(ce.truth_days, thresholds);
    preds.push_back(ce.pred_days);
    truths.push_back(ce.truth_days);
    ev.cases.push_back(std::move(ce));
  }
  const SquaredErrorStats se = squared_error_stats(preds, truths);
  ev.report.mse = se.mse;
  ev.report.median_se = se.median_se;
  ev.report.std_se = se.std_se;
  ev.report.accuracy = classification_accuracy(preds, truths, thresholds);
  ev.report.spearman_r =
      preds.size() >= 2 ? spearman_r(preds, truths) : std::nullopt;
  if (!dices.empty()) {
    double acc = 0.0;
    for (double d : dices) acc += d;
    ev.report.mean_dice = acc / static_cast<double>(dices.size());
  }
  ev.report.n_cases = cases.size();
  return ev;
}

void write_case_evals(const std::vector<CaseEval>& evals,
                      const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError("cannot write predictions file " + path.string());
  os << "id,pred_days,truth_days,pred_class,truth_class,dice\n";
  for (const auto& e : evals) {
    os << e.id << ',' << format_double(e.pred_days) << ','
       << format_double(e.truth_days) << ','
       << survival_class_to_string(e.pred_class) << ','
       << survival_class_to_string(e.truth_class) << ','
       << (e.dice ? format_double(*e.dice) : std::string()) << '\n';
  }
}

std::string report_to_json(const MetricsReport& report) {
  nlohmann::ordered_json j;
  j["accuracy"] = report.accuracy;
  j["mse"] = report.mse;
  j["median_se"] = report.median_se;
  j["std_se"] = report.std_se;
  if (report.spearman_r) {
    j["spearman_r"] = *report.spearman_r;
  } else {
    j["spearman_r"] = nullptr;
  }
  if (report.mean_dice) {
    j["mean_dice"] = *report.mean_dice;
  } else {
    j["mean_dice"] = nullptr;
  }
  j["n_cases"] = report.n_cases;
  return j.dump(2) + "\n";
}

}  // namespace phos
