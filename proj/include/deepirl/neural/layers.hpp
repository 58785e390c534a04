#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "deepirl/neural/tensor.hpp"

namespace deepirl::nn {

// ---------------------------------------------------------------------------
// conv2d: stride 1, zero "same" padding, odd square kernels.
// weights are [out, in, k, k].

struct ConvGrads {
  Tensor input;
  Tensor weights;
  std::vector<double> bias;
};

namespace detail {

struct ConvWindow {
  int y0, y1, x0, x1, dy, dx;
};

// Output rows/cols for which input (y+dy, x+dx) lies inside the image.
inline ConvWindow conv_window(int h, int w, int ky, int kx, int pad) {
  ConvWindow cw;
  cw.dy = ky - pad;
  cw.dx = kx - pad;
  cw.y0 = std::max(0, -cw.dy);
  cw.y1 = std::min(h, h - cw.dy);
  cw.x0 = std::max(0, -cw.dx);
  cw.x1 = std::min(w, w - cw.dx);
  return cw;
}

inline void check_conv(const Tensor& input, const Tensor& weights, std::size_t bias_size) {
  if (weights.h != weights.w || weights.h % 2 == 0) throw std::invalid_argument("conv kernel must be odd and square");
  if (input.c != weights.c)
    throw std::invalid_argument("conv channel mismatch: input " + input.shape_str() + " weights " +
                                weights.shape_str());
  if (bias_size != static_cast<std::size_t>(weights.n)) throw std::invalid_argument("conv bias size mismatch");
}

}  // namespace detail

inline Tensor conv2d(const Tensor& input, const Tensor& weights, const std::vector<double>& bias) {
  detail::check_conv(input, weights, bias.size());
  const int k = weights.h, pad = k / 2, H = input.h, W = input.w;
  Tensor out(input.n, weights.n, H, W);
  for (int n = 0; n < input.n; ++n)
    for (int oc = 0; oc < weights.n; ++oc) {
      double* o = out.plane_ptr(n, oc);
      std::fill(o, o + out.plane(), bias[oc]);
      for (int ic = 0; ic < input.c; ++ic) {
        const double* in = input.plane_ptr(n, ic);
        for (int ky = 0; ky < k; ++ky)
          for (int kx = 0; kx < k; ++kx) {
            const double wv = weights(oc, ic, ky, kx);
            if (wv == 0.0) continue;
            const auto cw = detail::conv_window(H, W, ky, kx, pad);
            for (int y = cw.y0; y < cw.y1; ++y) {
              double* orow = o + static_cast<std::size_t>(y) * W;
              const double* irow = in + static_cast<std::size_t>(y + cw.dy) * W + cw.dx;
              for (int x = cw.x0; x < cw.x1; ++x) orow[x] += wv * irow[x];
            }
          }
      }
    }
  return out;
}

inline ConvGrads conv2d_backward(const Tensor& input, const Tensor& weights, const Tensor& grad_out,
                                 bool need_input_grad = true) {
  detail::check_conv(input, weights, static_cast<std::size_t>(weights.n));
  const int k = weights.h, pad = k / 2, H = input.h, W = input.w;
  if (grad_out.n != input.n || grad_out.c != weights.n || grad_out.h != H || grad_out.w != W)
    throw std::invalid_argument("conv grad shape mismatch");
  ConvGrads g;
  g.input = need_input_grad ? Tensor(input.n, input.c, H, W) : Tensor();
  g.weights = Tensor(weights.n, weights.c, k, k);
  g.bias.assign(weights.n, 0.0);
  std::vector<double> colacc(W);
  for (int n = 0; n < input.n; ++n)
    for (int oc = 0; oc < weights.n; ++oc) {
      const double* go = grad_out.plane_ptr(n, oc);
      double bsum = 0.0;
      for (std::size_t i = 0; i < grad_out.plane(); ++i) bsum += go[i];
      g.bias[oc] += bsum;
      for (int ic = 0; ic < input.c; ++ic) {
        const double* in = input.plane_ptr(n, ic);
        double* gi = need_input_grad ? g.input.plane_ptr(n, ic) : nullptr;
        for (int ky = 0; ky < k; ++ky)
          for (int kx = 0; kx < k; ++kx) {
            const auto cw = detail::conv_window(H, W, ky, kx, pad);
            const double wv = weights(oc, ic, ky, kx);
            std::fill(colacc.begin(), colacc.end(), 0.0);
            for (int y = cw.y0; y < cw.y1; ++y) {
              const double* grow = go + static_cast<std::size_t>(y) * W;
              const double* irow = in + static_cast<std::size_t>(y + cw.dy) * W + cw.dx;
              for (int x = cw.x0; x < cw.x1; ++x) colacc[x] += grow[x] * irow[x];
              if (gi && wv != 0.0) {
                double* girow = gi + static_cast<std::size_t>(y + cw.dy) * W + cw.dx;
                for (int x = cw.x0; x < cw.x1; ++x) girow[x] += wv * grow[x];
              }
            }
            double s = 0.0;
            for (int x = cw.x0; x < cw.x1; ++x) s += colacc[x];
            g.weights(oc, ic, ky, kx) += s;
          }
      }
    }
  return g;
}

// ---------------------------------------------------------------------------
// relu

inline Tensor relu(const Tensor& x) {
  Tensor y = x;
  for (auto& v : y.data) v = v > 0.0 ? v : 0.0;
  return y;
}

inline Tensor relu_backward(const Tensor& x, const Tensor& grad_out) {
  Tensor g = grad_out;
  for (std::size_t i = 0; i < g.size(); ++i)
    if (!(x.data[i] > 0.0)) g.data[i] = 0.0;
  return g;
}

// ---------------------------------------------------------------------------
// -softplus: maps any activation to a strictly negative reward.

inline double neg_softplus_scalar(double x) {
  return -(std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))));
}

inline Tensor neg_softplus(const Tensor& x) {
  Tensor y = x;
  for (auto& v : y.data) v = neg_softplus_scalar(v);
  return y;
}

inline Tensor neg_softplus_backward(const Tensor& x, const Tensor& grad_out) {
  Tensor g = grad_out;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double v = x.data[i];
    const double sig = v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
    g.data[i] *= -sig;
  }
  return g;
}

// ---------------------------------------------------------------------------
// Batch normalisation over (batch, H, W) per channel.

enum class Mode { Train, Eval };

inline constexpr double kBatchNormEps = 1e-5;

struct BatchNormCache {
  Tensor xhat;
  std::vector<double> inv_std;
  Mode mode = Mode::Eval;
};

struct BatchNormGrads {
  Tensor input;
  std::vector<double> gamma;
  std::vector<double> beta;
};

/// Running statistics follow running = (1 - momentum) * running + momentum *
/// batch; the running variance uses the unbiased batch variance.
inline Tensor batchnorm(const Tensor& x, const std::vector<double>& gamma, const std::vector<double>& beta,
                        std::vector<double>& running_mean, std::vector<double>& running_var, Mode mode,
                        double momentum, BatchNormCache* cache = nullptr) {
  const int C = x.c;
  if (gamma.size() != static_cast<std::size_t>(C) || beta.size() != gamma.size() ||
      running_mean.size() != gamma.size() || running_var.size() != gamma.size())
    throw std::invalid_argument("batchnorm parameter size mismatch");
  const std::size_t count = static_cast<std::size_t>(x.n) * x.plane();
  if (mode == Mode::Train && count < 2)
    throw std::invalid_argument("batchnorm in train mode needs at least two values per channel");

  Tensor y(x.n, x.c, x.h, x.w);
  if (cache) {
    cache->xhat = Tensor(x.n, x.c, x.h, x.w);
    cache->inv_std.assign(C, 0.0);
    cache->mode = mode;
  }
  for (int c = 0; c < C; ++c) {
    double mean, var;
    if (mode == Mode::Train) {
      double s = 0.0;
      for (int n = 0; n < x.n; ++n) {
        const double* p = x.plane_ptr(n, c);
        for (std::size_t i = 0; i < x.plane(); ++i) s += p[i];
      }
      mean = s / static_cast<double>(count);
      double ss = 0.0;
      for (int n = 0; n < x.n; ++n) {
        const double* p = x.plane_ptr(n, c);
        for (std::size_t i = 0; i < x.plane(); ++i) ss += (p[i] - mean) * (p[i] - mean);
      }
      var = ss / static_cast<double>(count);
      running_mean[c] = (1.0 - momentum) * running_mean[c] + momentum * mean;
      running_var[c] = (1.0 - momentum) * running_var[c] +
                       momentum * var * static_cast<double>(count) / static_cast<double>(count - 1);
    } else {
      mean = running_mean[c];
      var = running_var[c];
    }
    const double inv_std = 1.0 / std::sqrt(var + kBatchNormEps);
    if (cache) cache->inv_std[c] = inv_std;
    for (int n = 0; n < x.n; ++n) {
      const double* p = x.plane_ptr(n, c);
      double* q = y.plane_ptr(n, c);
      double* xh = cache ? cache->xhat.plane_ptr(n, c) : nullptr;
      for (std::size_t i = 0; i < x.plane(); ++i) {
        const double v = (p[i] - mean) * inv_std;
        if (xh) xh[i] = v;
        q[i] = gamma[c] * v + beta[c];
      }
    }
  }
  return y;
}

inline BatchNormGrads batchnorm_backward(const BatchNormCache& cache, const std::vector<double>& gamma,
                                         const Tensor& grad_out) {
  const Tensor& xhat = cache.xhat;
  if (!xhat.same_shape(grad_out)) throw std::invalid_argument("batchnorm grad shape mismatch");
  const int C = xhat.c;
  const double m = static_cast<double>(xhat.n) * static_cast<double>(xhat.plane());
  BatchNormGrads g;
  g.input = Tensor(xhat.n, xhat.c, xhat.h, xhat.w);
  g.gamma.assign(C, 0.0);
  g.beta.assign(C, 0.0);
  for (int c = 0; c < C; ++c) {
    double sum_g = 0.0, sum_gx = 0.0;
    for (int n = 0; n < xhat.n; ++n) {
      const double* go = grad_out.plane_ptr(n, c);
      const double* xh = xhat.plane_ptr(n, c);
      for (std::size_t i = 0; i < xhat.plane(); ++i) {
        sum_g += go[i];
        sum_gx += go[i] * xh[i];
      }
    }
    g.beta[c] = sum_g;
    g.gamma[c] = sum_gx;
    const double scale = gamma[c] * cache.inv_std[c];
    for (int n = 0; n < xhat.n; ++n) {
      const double* go = grad_out.plane_ptr(n, c);
      const double* xh = xhat.plane_ptr(n, c);
      double* gi = g.input.plane_ptr(n, c);
      if (cache.mode == Mode::Train) {
        for (std::size_t i = 0; i < xhat.plane(); ++i)
          gi[i] = scale * (go[i] - sum_g / m - xh[i] * sum_gx / m);
      } else {
        for (std::size_t i = 0; i < xhat.plane(); ++i) gi[i] = scale * go[i];
      }
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// 2x2 stride-2 max pooling. Ties go to the first element in row-major
// order within the window.

struct PoolResult {
  Tensor output;
  std::vector<std::uint32_t> argmax;  // flat input offsets
};

inline PoolResult maxpool2x2(const Tensor& x) {
  if (x.h % 2 != 0 || x.w % 2 != 0) throw std::invalid_argument("maxpool2x2 needs even spatial dimensions");
  PoolResult r;
  r.output = Tensor(x.n, x.c, x.h / 2, x.w / 2);
  r.argmax.resize(r.output.size());
  std::size_t o = 0;
  for (int n = 0; n < x.n; ++n)
    for (int c = 0; c < x.c; ++c)
      for (int y = 0; y < x.h / 2; ++y)
        for (int xx = 0; xx < x.w / 2; ++xx, ++o) {
          std::size_t best = x.offset(n, c, 2 * y, 2 * xx);
          for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx) {
              const std::size_t off = x.offset(n, c, 2 * y + dy, 2 * xx + dx);
              if (x.data[off] > x.data[best]) best = off;
            }
          r.output.data[o] = x.data[best];
          r.argmax[o] = static_cast<std::uint32_t>(best);
        }
  return r;
}

inline Tensor maxpool2x2_backward(const std::vector<std::uint32_t>& argmax, const Tensor& grad_out, int n, int c,
                                  int h, int w) {
  if (argmax.size() != grad_out.size()) throw std::invalid_argument("maxpool grad shape mismatch");
  Tensor g(n, c, h, w);
  for (std::size_t i = 0; i < argmax.size(); ++i) g.data[argmax[i]] += grad_out.data[i];
  return g;
}

// ---------------------------------------------------------------------------
// Nearest-neighbour 2x upsampling.

inline Tensor upsample2x(const Tensor& x) {
  Tensor y(x.n, x.c, x.h * 2, x.w * 2);
  for (int n = 0; n < x.n; ++n)
    for (int c = 0; c < x.c; ++c)
      for (int yy = 0; yy < y.h; ++yy)
        for (int xx = 0; xx < y.w; ++xx) y(n, c, yy, xx) = x(n, c, yy / 2, xx / 2);
  return y;
}

inline Tensor upsample2x_backward(const Tensor& grad_out) {
  if (grad_out.h % 2 != 0 || grad_out.w % 2 != 0) throw std::invalid_argument("upsample grad must have even size");
  Tensor g(grad_out.n, grad_out.c, grad_out.h / 2, grad_out.w / 2);
  for (int n = 0; n < grad_out.n; ++n)
    for (int c = 0; c < grad_out.c; ++c)
      for (int yy = 0; yy < grad_out.h; ++yy)
        for (int xx = 0; xx < grad_out.w; ++xx) g(n, c, yy / 2, xx / 2) += grad_out(n, c, yy, xx);
  return g;
}

// ---------------------------------------------------------------------------
// Channel concatenation in argument order. An empty tensor (no channels)
// is the identity element.

inline Tensor concat_channels(const Tensor& a, const Tensor& b) {
  if (a.c == 0 || a.size() == 0) return b;
  if (b.c == 0 || b.size() == 0) return a;
  if (a.n != b.n || a.h != b.h || a.w != b.w)
    throw std::invalid_argument("concat spatial mismatch: " + a.shape_str() + " vs " + b.shape_str());
  Tensor y(a.n, a.c + b.c, a.h, a.w);
  for (int n = 0; n < a.n; ++n) {
    std::copy(a.plane_ptr(n, 0), a.plane_ptr(n, 0) + a.c * a.plane(), y.plane_ptr(n, 0));
    std::copy(b.plane_ptr(n, 0), b.plane_ptr(n, 0) + b.c * b.plane(), y.plane_ptr(n, a.c));
  }
  return y;
}

inline std::pair<Tensor, Tensor> concat_channels_backward(const Tensor& grad_out, int channels_a) {
  if (channels_a < 0 || channels_a > grad_out.c) throw std::invalid_argument("concat split out of range");
  Tensor ga(grad_out.n, channels_a, grad_out.h, grad_out.w);
  Tensor gb(grad_out.n, grad_out.c - channels_a, grad_out.h, grad_out.w);
  for (int n = 0; n < grad_out.n; ++n) {
    const double* src = grad_out.plane_ptr(n, 0);
    std::copy(src, src + ga.c * ga.plane(), ga.data.data() + ga.offset(n, 0, 0, 0));
    std::copy(src + ga.c * ga.plane(), src + grad_out.c * grad_out.plane(),
              gb.data.data() + gb.offset(n, 0, 0, 0));
  }
  return {std::move(ga), std::move(gb)};
}

}  // namespace deepirl::nn
