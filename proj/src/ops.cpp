#include "phos/ops.hpp"

#include <cmath>
#include <utility>

namespace phos {

namespace {

using detail::TensorNode;
using NodePtr = std::shared_ptr<TensorNode>;

using detail::make_op;

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " +
                     shape_to_string(a.shape()) + " vs " +
                     shape_to_string(b.shape()));
  }
}

}  // namespace

BatchNormState BatchNormState::make(std::size_t channels, double momentum,
                                    double epsilon) {
  BatchNormState s;
  s.running_mean.assign(channels, 0.0);
  s.running_var.assign(channels, 1.0);
  s.momentum = momentum;
  s.epsilon = epsilon;
  return s;
}

Tensor conv3d(const Tensor& input, const Tensor& kernel, const Tensor& bias,
              std::size_t stride, std::size_t padding) {
  if (input.rank() != 5) {
    throw ShapeError("conv3d: input must be [B,Cin,D,H,W], got " +
                     shape_to_string(input.shape()));
  }
  if (kernel.rank() != 5 || kernel.shape()[2] != kernel.shape()[3] ||
      kernel.shape()[2] != kernel.shape()[4]) {
    throw ShapeError("conv3d: kernel must be [Cout,Cin,k,k,k], got " +
                     shape_to_string(kernel.shape()));
  }
  if (stride < 1) throw ShapeError("conv3d: stride must be >= 1");
  const std::size_t B = input.shape()[0], Cin = input.shape()[1];
  const std::size_t D = input.shape()[2], H = input.shape()[3],
                    W = input.shape()[4];
  const std::size_t Cout = kernel.shape()[0], k = kernel.shape()[2];
  if (kernel.shape()[1] != Cin) {
    throw ShapeError("conv3d: input channels do not match kernel: input " +
                     shape_to_string(input.shape()) + " vs kernel " +
                     shape_to_string(kernel.shape()));
  }
  if (bias.rank() != 1 || bias.shape()[0] != Cout) {
    throw ShapeError("conv3d: bias must be [Cout]");
  }
  if (k > D + 2 * padding || k > H + 2 * padding || k > W + 2 * padding) {
    throw ShapeError("conv3d: kernel size " + std::to_string(k) +
                     " exceeds padded input extent");
  }
  const std::size_t Do = (D + 2 * padding - k) / stride + 1;
  const std::size_t Ho = (H + 2 * padding - k) / stride + 1;
  const std::size_t Wo = (W + 2 * padding - k) / stride + 1;

  const auto in = input.values();
  const auto kw = kernel.values();
  const auto bv = bias.values();
  std::vector<double> out(B * Cout * Do * Ho * Wo);

  const long pad = static_cast<long>(padding);
  auto in_idx = [=](std::size_t b, std::size_t c, std::size_t z, std::size_t y,
                    std::size_t x) {
    return (((b * Cin + c) * D + z) * H + y) * W + x;
  };
  auto k_idx = [=](std::size_t co, std::size_t ci, std::size_t kz,
                   std::size_t ky, std::size_t kx) {
    return (((co * Cin + ci) * k + kz) * k + ky) * k + kx;
  };

  std::size_t oi = 0;
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t co = 0; co < Cout; ++co)
      for (std::size_t od = 0; od < Do; ++od)
        for (std::size_t oh = 0; oh < Ho; ++oh)
          for (std::size_t ow = 0; ow < Wo; ++ow, ++oi) {
            double acc = bv[co];
            const long z0 = static_cast<long>(od * stride) - pad;
            const long y0 = static_cast<long>(oh * stride) - pad;
            const long x0 = static_cast<long>(ow * stride) - pad;
            for (std::size_t ci = 0; ci < Cin; ++ci)
              for (std::size_t kz = 0; kz < k; ++kz) {
                const long z = z0 + static_cast<long>(kz);
                if (z < 0 || z >= static_cast<long>(D)) continue;
                for (std::size_t ky = 0; ky < k; ++ky) {
                  const long y = y0 + static_cast<long>(ky);
                  if (y < 0 || y >= static_cast<long>(H)) continue;
                  for (std::size_t kx = 0; kx < k; ++kx) {
                    const long x = x0 + static_cast<long>(kx);
                    if (x < 0 || x >= static_cast<long>(W)) continue;
                    acc += in[in_idx(b, ci, static_cast<std::size_t>(z),
                                     static_cast<std::size_t>(y),
                                     static_cast<std::size_t>(x))] *
                           kw[k_idx(co, ci, kz, ky, kx)];
                  }
                }
              }
            out[oi] = acc;
          }

  auto in_node = input.node();
  auto k_node = kernel.node();
  auto b_node = bias.node();
  auto back = [in_node, k_node, b_node, B, Cin, Cout, D, H, W, Do, Ho, Wo, k,
               stride, pad, in_idx, k_idx](TensorNode& self) {
    const auto& g = self.grad;
    const auto& in = in_node->values;
    const auto& kw = k_node->values;
    auto& gin = in_node->grad;
    auto& gk = k_node->grad;
    auto& gb = b_node->grad;
    std::size_t oi = 0;
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t co = 0; co < Cout; ++co)
        for (std::size_t od = 0; od < Do; ++od)
          for (std::size_t oh = 0; oh < Ho; ++oh)
            for (std::size_t ow = 0; ow < Wo; ++ow, ++oi) {
              const double go = g[oi];
              if (go == 0.0) continue;
              gb[co] += go;
              const long z0 = static_cast<long>(od * stride) - pad;
              const long y0 = static_cast<long>(oh * stride) - pad;
              const long x0 = static_cast<long>(ow * stride) - pad;
              for (std::size_t ci = 0; ci < Cin; ++ci)
                for (std::size_t kz = 0; kz < k; ++kz) {
                  const long z = z0 + static_cast<long>(kz);
                  if (z < 0 || z >= static_cast<long>(D)) continue;
                  for (std::size_t ky = 0; ky < k; ++ky) {
                    const long y = y0 + static_cast<long>(ky);
                    if (y < 0 || y >= static_cast<long>(H)) continue;
                    for (std::size_t kx = 0; kx < k; ++kx) {
                      const long x = x0 + static_cast<long>(kx);
                      if (x < 0 || x >= static_cast<long>(W)) continue;
                      const std::size_t ii =
                          in_idx(b, ci, static_cast<std::size_t>(z),
                                 static_cast<std::size_t>(y),
                                 static_cast<std::size_t>(x));
                      const std::size_t ki = k_idx(co, ci, kz, ky, kx);
                      gin[ii] += go * kw[ki];
                      gk[ki] += go * in[ii];
                    }
                  }
                }
            }
  };
  return make_op({B, Cout, Do, Ho, Wo}, std::move(out),
                 {in_node, k_node, b_node}, std::move(back));
}

Tensor leaky_relu(const Tensor& x, double negative_slope) {
  const auto xv = x.values();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = xv[i] >= 0.0 ? xv[i] : negative_slope * xv[i];
  }
  auto xn = x.node();
  auto back = [xn, negative_slope](TensorNode& self) {
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      xn->grad[i] +=
          self.grad[i] * (xn->values[i] >= 0.0 ? 1.0 : negative_slope);
    }
  };
  return make_op(x.shape(), std::move(out), {xn}, std::move(back));
}

Tensor sigmoid(const Tensor& x) {
  const auto xv = x.values();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = xv[i];
    if (v >= 0.0) {
      out[i] = 1.0 / (1.0 + std::exp(-v));
    } else {
      const double e = std::exp(v);
      out[i] = e / (1.0 + e);
    }
  }
  auto xn = x.node();
  auto back = [xn](TensorNode& self) {
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const double y = self.values[i];
      xn->grad[i] += self.grad[i] * y * (1.0 - y);
    }
  };
  return make_op(x.shape(), std::move(out), {xn}, std::move(back));
}

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  BatchNormState& state) {
  if (x.rank() < 2) {
    throw ShapeError("batch_norm: input must be [B,C,...]");
  }
  const std::size_t B = x.shape()[0], C = x.shape()[1];
  std::size_t spatial = 1;
  for (std::size_t i = 2; i < x.rank(); ++i) spatial *= x.shape()[i];
  if (gamma.size() != C || beta.size() != C ||
      state.running_mean.size() != C || state.running_var.size() != C) {
    throw ShapeError("batch_norm: gamma/beta/state must have " +
                     std::to_string(C) + " channels");
  }
  const auto xv = x.values();
  const auto gv = gamma.values();
  const auto bv = beta.values();
  const std::size_t m = B * spatial;
  auto x_idx = [=](std::size_t b, std::size_t c, std::size_t s) {
    return (b * C + c) * spatial + s;
  };

  std::vector<double> out(x.size());
  auto xn = x.node();
  auto gn = gamma.node();
  auto bn = beta.node();

  if (state.mode == BatchNormState::Mode::eval) {
    std::vector<double> invstd(C);
    for (std::size_t c = 0; c < C; ++c) {
      invstd[c] = 1.0 / std::sqrt(state.running_var[c] + state.epsilon);
    }
    std::vector<double> mean = state.running_mean;
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t s = 0; s < spatial; ++s) {
          const std::size_t i = x_idx(b, c, s);
          out[i] = gv[c] * (xv[i] - mean[c]) * invstd[c] + bv[c];
        }
    auto back = [xn, gn, bn, mean, invstd, B, C, spatial,
                 x_idx](TensorNode& self) {
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t c = 0; c < C; ++c)
          for (std::size_t s = 0; s < spatial; ++s) {
            const std::size_t i = x_idx(b, c, s);
            const double g = self.grad[i];
            const double xhat = (xn->values[i] - mean[c]) * invstd[c];
            xn->grad[i] += g * gn->values[c] * invstd[c];
            gn->grad[c] += g * xhat;
            bn->grad[c] += g;
          }
    };
    return make_op(x.shape(), std::move(out), {xn, gn, bn}, std::move(back));
  }

  if (B < 2) {
    throw ShapeError(
        "batch_norm: train mode requires batch size >= 2, got " +
        std::to_string(B));
  }
  std::vector<double> mean(C, 0.0), var(C, 0.0);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t s = 0; s < spatial; ++s) mean[c] += xv[x_idx(b, c, s)];
  for (std::size_t c = 0; c < C; ++c) mean[c] /= static_cast<double>(m);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t s = 0; s < spatial; ++s) {
        const double d = xv[x_idx(b, c, s)] - mean[c];
        var[c] += d * d;
      }
  for (std::size_t c = 0; c < C; ++c) var[c] /= static_cast<double>(m);

  std::vector<double> invstd(C);
  auto xhat = std::make_shared<std::vector<double>>(x.size());
  for (std::size_t c = 0; c < C; ++c) {
    invstd[c] = 1.0 / std::sqrt(var[c] + state.epsilon);
  }
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t s = 0; s < spatial; ++s) {
        const std::size_t i = x_idx(b, c, s);
        (*xhat)[i] = (xv[i] - mean[c]) * invstd[c];
        out[i] = gv[c] * (*xhat)[i] + bv[c];
      }
  for (std::size_t c = 0; c < C; ++c) {
    state.running_mean[c] =
        (1.0 - state.momentum) * state.running_mean[c] + state.momentum * mean[c];
    state.running_var[c] =
        (1.0 - state.momentum) * state.running_var[c] + state.momentum * var[c];
  }
  auto back = [xn, gn, bn, xhat, invstd, B, C, spatial, m,
               x_idx](TensorNode& self) {
    std::vector<double> sum_g(C, 0.0), sum_gx(C, 0.0);
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t s = 0; s < spatial; ++s) {
          const std::size_t i = x_idx(b, c, s);
          sum_g[c] += self.grad[i];
          sum_gx[c] += self.grad[i] * (*xhat)[i];
        }
    const double inv_m = 1.0 / static_cast<double>(m);
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t s = 0; s < spatial; ++s) {
          const std::size_t i = x_idx(b, c, s);
          const double g = self.grad[i];
          xn->grad[i] += gn->values[c] * invstd[c] *
                         (g - inv_m * sum_g[c] - (*xhat)[i] * inv_m * sum_gx[c]);
        }
    for (std::size_t c = 0; c < C; ++c) {
      gn->grad[c] += sum_gx[c];
      bn->grad[c] += sum_g[c];
    }
  };
  return make_op(x.shape(), std::move(out), {xn, gn, bn}, std::move(back));
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  if (x.rank() != 2 || weight.rank() != 2 || bias.rank() != 1) {
    throw ShapeError("linear: expects x [B,Din], weight [Dout,Din], bias "
                     "[Dout]");
  }
  const std::size_t B = x.shape()[0], Din = x.shape()[1];
  const std::size_t Dout = weight.shape()[0];
  if (weight.shape()[1] != Din || bias.shape()[0] != Dout) {
    throw ShapeError("linear: dimension mismatch, x " +
                     shape_to_string(x.shape()) + " weight " +
                     shape_to_string(weight.shape()) + " bias " +
                     shape_to_string(bias.shape()));
  }
  const auto xv = x.values();
  const auto wv = weight.values();
  const auto bv = bias.values();
  std::vector<double> out(B * Dout);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t o = 0; o < Dout; ++o) {
      double acc = bv[o];
      for (std::size_t i = 0; i < Din; ++i) {
        acc += xv[b * Din + i] * wv[o * Din + i];
      }
      out[b * Dout + o] = acc;
    }
  auto xn = x.node();
  auto wn = weight.node();
  auto bn = bias.node();
  auto back = [xn, wn, bn, B, Din, Dout](TensorNode& self) {
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t o = 0; o < Dout; ++o) {
        const double g = self.grad[b * Dout + o];
        bn->grad[o] += g;
        for (std::size_t i = 0; i < Din; ++i) {
          xn->grad[b * Din + i] += g * wn->values[o * Din + i];
          wn->grad[o * Din + i] += g * xn->values[b * Din + i];
        }
      }
  };
  return make_op({B, Dout}, std::move(out), {xn, wn, bn}, std::move(back));
}

Tensor broadcast_add(const Tensor& features, const Tensor& shift) {
  if (features.rank() < 2 || shift.rank() != 2 ||
      features.shape()[0] != shift.shape()[0] ||
      features.shape()[1] != shift.shape()[1]) {
    throw ShapeError("broadcast_add: features " +
                     shape_to_string(features.shape()) +
                     " incompatible with shift " +
                     shape_to_string(shift.shape()));
  }
  const std::size_t B = features.shape()[0], Q = features.shape()[1];
  std::size_t spatial = 1;
  for (std::size_t i = 2; i < features.rank(); ++i) spatial *= features.shape()[i];
  const auto fv = features.values();
  const auto sv = shift.values();
  std::vector<double> out(features.size());
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t q = 0; q < Q; ++q) {
      const double add = sv[b * Q + q];
      const std::size_t base = (b * Q + q) * spatial;
      for (std::size_t s = 0; s < spatial; ++s) out[base + s] = fv[base + s] + add;
    }
  auto fn = features.node();
  auto sn = shift.node();
  auto back = [fn, sn, B, Q, spatial](TensorNode& self) {
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t q = 0; q < Q; ++q) {
        const std::size_t base = (b * Q + q) * spatial;
        double acc = 0.0;
        for (std::size_t s = 0; s < spatial; ++s) {
          fn->grad[base + s] += self.grad[base + s];
          acc += self.grad[base + s];
        }
        sn->grad[b * Q + q] += acc;
      }
  };
  return make_op(features.shape(), std::move(out), {fn, sn}, std::move(back));
}

Tensor lse_pool(const Tensor& maps) {
  if (maps.rank() < 3) {
    throw ShapeError("lse_pool: input must be [B,N,spatial...]");
  }
  const std::size_t B = maps.shape()[0], N = maps.shape()[1];
  std::size_t spatial = 1;
  for (std::size_t i = 2; i < maps.rank(); ++i) spatial *= maps.shape()[i];
  const auto mv = maps.values();
  std::vector<double> out(B * N);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t n = 0; n < N; ++n) {
      const std::size_t base = (b * N + n) * spatial;
      double mx = mv[base];
      for (std::size_t s = 1; s < spatial; ++s) mx = std::max(mx, mv[base + s]);
      double acc = 0.0;
      for (std::size_t s = 0; s < spatial; ++s) acc += std::exp(mv[base + s] - mx);
      out[b * N + n] = mx + std::log(acc);
    }
  auto mn = maps.node();
  auto back = [mn, B, N, spatial](TensorNode& self) {
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t n = 0; n < N; ++n) {
        const double g = self.grad[b * N + n];
        const double lse = self.values[b * N + n];
        const std::size_t base = (b * N + n) * spatial;
        for (std::size_t s = 0; s < spatial; ++s) {
          mn->grad[base + s] += g * std::exp(mn->values[base + s] - lse);
        }
      }
  };
  return make_op({B, N}, std::move(out), {mn}, std::move(back));
}

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] + b.values()[i];
  auto an = a.node();
  auto bn = b.node();
  auto back = [an, bn](TensorNode& self) {
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      an->grad[i] += self.grad[i];
      bn->grad[i] += self.grad[i];
    }
  };
  return make_op(a.shape(), std::move(out), {an, bn}, std::move(back));
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] - b.values()[i];
  auto an = a.node();
  auto bn = b.node();
  auto back = [an, bn](TensorNode& self) {
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      an->grad[i] += self.grad[i];
      bn->grad[i] -= self.grad[i];
    }
  };
  return make_op(a.shape(), std::move(out), {an, bn}, std::move(back));
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * b.values()[i];
  auto an = a.node();
  auto bn = b.node();
  auto back = [an, bn](TensorNode& self) {
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      an->grad[i] += self.grad[i] * bn->values[i];
      bn->grad[i] += self.grad[i] * an->values[i];
    }
  };
  return make_op(a.shape(), std::move(out), {an, bn}, std::move(back));
}

Tensor scale(const Tensor& a, double c) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * c;
  auto an = a.node();
  auto back = [an, c](TensorNode& self) {
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      an->grad[i] += self.grad[i] * c;
    }
  };
  return make_op(a.shape(), std::move(out), {an}, std::move(back));
}

Tensor sum(const Tensor& a) {
  double acc = 0.0;
  for (double v : a.values()) acc += v;
  auto an = a.node();
  auto back = [an](TensorNode& self) {
    for (std::size_t i = 0; i < an->grad.size(); ++i) an->grad[i] += self.grad[0];
  };
  return make_op({1}, {acc}, {an}, std::move(back));
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_size(shape) != a.size()) {
    throw ShapeError("reshape: size mismatch " + shape_to_string(a.shape()) +
                     " -> " + shape_to_string(shape));
  }
  std::vector<double> out(a.values().begin(), a.values().end());
  auto an = a.node();
  auto back = [an](TensorNode& self) {
    for (std::size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i];
  };
  return make_op(std::move(shape), std::move(out), {an}, std::move(back));
}

Tensor scale_columns(const Tensor& x, const std::vector<double>& weights) {
  if (x.rank() != 2 || x.shape()[1] != weights.size()) {
    throw ShapeError("scale_columns: x " + shape_to_string(x.shape()) +
                     " incompatible with " + std::to_string(weights.size()) +
                     " weights");
  }
  const std::size_t B = x.shape()[0], N = x.shape()[1];
  std::vector<double> out(x.size());
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t n = 0; n < N; ++n) out[b * N + n] = x.values()[b * N + n] * weights[n];
  auto xn = x.node();
  auto back = [xn, weights, B, N](TensorNode& self) {
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t n = 0; n < N; ++n) {
        xn->grad[b * N + n] += self.grad[b * N + n] * weights[n];
      }
  };
  return make_op(x.shape(), std::move(out), {xn}, std::move(back));
}

Tensor upper_minus_row_sum(const Tensor& x, double upper) {
  if (x.rank() != 2) throw ShapeError("upper_minus_row_sum: x must be [B,N]");
  const std::size_t B = x.shape()[0], N = x.shape()[1];
  std::vector<double> out(B);
  for (std::size_t b = 0; b < B; ++b) {
    double acc = 0.0;
    for (std::size_t n = 0; n < N; ++n) acc += x.values()[b * N + n];
    out[b] = upper - acc;
  }
  auto xn = x.node();
  auto back = [xn, B, N](TensorNode& self) {
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t n = 0; n < N; ++n) xn->grad[b * N + n] -= self.grad[b];
  };
  return make_op({B}, std::move(out), {xn}, std::move(back));
}

Tensor global_avg_pool(const Tensor& x) {
  if (x.rank() < 3) throw ShapeError("global_avg_pool: x must be [B,C,...]");
  const std::size_t B = x.shape()[0], C = x.shape()[1];
  std::size_t spatial = 1;
  for (std::size_t i = 2; i < x.rank(); ++i) spatial *= x.shape()[i];
  std::vector<double> out(B * C);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < C; ++c) {
      const std::size_t base = (b * C + c) * spatial;
      double acc = 0.0;
      for (std::size_t s = 0; s < spatial; ++s) acc += x.values()[base + s];
      out[b * C + c] = acc / static_cast<double>(spatial);
    }
  auto xn = x.node();
  auto back = [xn, B, C, spatial](TensorNode& self) {
    const double inv = 1.0 / static_cast<double>(spatial);
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t c = 0; c < C; ++c) {
        const double g = self.grad[b * C + c] * inv;
        const std::size_t base = (b * C + c) * spatial;
        for (std::size_t s = 0; s < spatial; ++s) xn->grad[base + s] += g;
      }
  };
  return make_op({B, C}, std::move(out), {xn}, std::move(back));
}

Tensor mean_abs_error(const Tensor& pred, const std::vector<double>& truth) {
  if (pred.rank() != 1 || pred.size() != truth.size()) {
    throw ShapeError("mean_abs_error: pred " + shape_to_string(pred.shape()) +
                     " vs " + std::to_string(truth.size()) + " labels");
  }
  const std::size_t B = pred.size();
  double acc = 0.0;
  for (std::size_t b = 0; b < B; ++b) acc += std::fabs(pred.values()[b] - truth[b]);
  acc /= static_cast<double>(B);
  auto pn = pred.node();
  auto back = [pn, truth, B](TensorNode& self) {
    const double g = self.grad[0] / static_cast<double>(B);
    for (std::size_t b = 0; b < B; ++b) {
      const double d = pn->values[b] - truth[b];
      if (d > 0.0) {
        pn->grad[b] += g;
      } else if (d < 0.0) {
        pn->grad[b] -= g;
      }
    }
  };
  return make_op({1}, {acc}, {pn}, std::move(back));
}

}  // namespace phos
