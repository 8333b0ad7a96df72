#include "spikedec/layers.hpp"

#include <cmath>
#include <string>

#include "linalg.hpp"
#include "spikedec/error.hpp"
#include "spikedec/rng.hpp"

namespace spikedec {

namespace {

Tensor uniform_tensor(Tensor::Shape shape, double bound, Rng& rng) {
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = rng.uniform(-bound, bound);
  return t;
}

}  // namespace

// ---- convolution ----------------------------------------------------------

Conv1dParams Conv1dParams::zeros(std::size_t out_ch, std::size_t in_ch, std::size_t k,
                                 std::size_t padding) {
  if (k == 0) throw ConfigError("conv1d: kernel size must be at least 1");
  return {Tensor({out_ch, in_ch, k}), Tensor({out_ch}), padding};
}

Conv1dParams Conv1dParams::random(std::size_t out_ch, std::size_t in_ch, std::size_t k,
                                  std::size_t padding, Rng& rng) {
  if (k == 0) throw ConfigError("conv1d: kernel size must be at least 1");
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_ch * k));
  Conv1dParams p;
  p.kernel = uniform_tensor({out_ch, in_ch, k}, bound, rng);
  p.bias = uniform_tensor({out_ch}, bound, rng);
  p.padding = padding;
  return p;
}

std::size_t Conv1dParams::output_length(std::size_t input_length) const {
  const long long len = static_cast<long long>(input_length) +
                        2 * static_cast<long long>(padding) -
                        static_cast<long long>(kernel_size()) + 1;
  if (len < 1) {
    throw ConfigError("conv1d: input length " + std::to_string(input_length) + " with kernel " +
                      std::to_string(kernel_size()) + " and padding " + std::to_string(padding) +
                      " leaves no output");
  }
  return static_cast<std::size_t>(len);
}

namespace {

Tensor conv_pre(const Conv1dParams& p, const Tensor& x, std::size_t padding) {
  if (x.rank() != 2 || x.dim(0) != p.in_channels()) {
    throw DimensionError("conv1d: input " + x.shape_string() + " does not match kernel " +
                         p.kernel.shape_string());
  }
  const std::size_t in_ch = p.in_channels(), out_ch = p.out_channels(), k = p.kernel_size();
  const std::size_t len = x.dim(1);
  const long long out_signed = static_cast<long long>(len) + 2 * static_cast<long long>(padding) -
                               static_cast<long long>(k) + 1;
  if (out_signed < 1) {
    throw ConfigError("conv1d: input length " + std::to_string(len) + " with kernel " +
                      std::to_string(k) + " and padding " + std::to_string(padding) +
                      " leaves no output");
  }
  const std::size_t out_len = static_cast<std::size_t>(out_signed);
  const long long pad = static_cast<long long>(padding);

  Tensor pre({out_ch, out_len});
  for (std::size_t o = 0; o < out_ch; ++o) {
    auto y = pre.row(o);
    for (double& v : y) v = p.bias[o];
    for (std::size_t c = 0; c < in_ch; ++c) {
      auto xc = x.row(c);
      for (std::size_t d = 0; d < k; ++d) {
        const double w = p.kernel.at(o, c, d);
        // input index m = i + d - pad must lie in [0, len)
        const long long shift = static_cast<long long>(d) - pad;
        const long long lo = std::max<long long>(0, -shift);
        const long long hi = std::min<long long>(static_cast<long long>(out_len),
                                                 static_cast<long long>(len) - shift);
        for (long long i = lo; i < hi; ++i) y[i] += w * xc[i + shift];
      }
    }
  }
  return pre;
}

Tensor activate(Tensor t, Activation activation) {
  if (activation == Activation::relu) {
    for (double& v : t.values()) v = v > 0.0 ? v : 0.0;
  }
  return t;
}

}  // namespace

LayerOutput<Conv1dCache> conv1d_forward(const Conv1dParams& p, const Tensor& x,
                                        Activation activation) {
  Tensor pre = conv_pre(p, x, p.padding);
  Tensor out = activate(pre, activation);
  return {std::move(out), {x, std::move(pre), activation}};
}

Tensor conv1d_valid(const Conv1dParams& p, const Tensor& x, Activation activation) {
  return activate(conv_pre(p, x, 0), activation);
}

void conv1d_backward(const Conv1dParams& p, const Conv1dCache& cache, const Tensor& dy,
                     Conv1dParams& grads, Tensor* dx) {
  require_same_shape(dy, cache.pre, "conv1d_backward");
  const std::size_t in_ch = p.in_channels(), out_ch = p.out_channels(), k = p.kernel_size();
  const std::size_t len = cache.input.dim(1), out_len = cache.pre.dim(1);
  const long long pad = static_cast<long long>(p.padding);

  Tensor dpre = dy;
  if (cache.activation == Activation::relu) {
    for (std::size_t i = 0; i < dpre.size(); ++i) {
      if (!(cache.pre[i] > 0.0)) dpre[i] = 0.0;
    }
  }
  if (dx) *dx = Tensor({in_ch, len});

  for (std::size_t o = 0; o < out_ch; ++o) {
    auto g = dpre.row(o);
    double db = 0.0;
    for (double v : g) db += v;
    grads.bias[o] += db;
    for (std::size_t c = 0; c < in_ch; ++c) {
      auto xc = cache.input.row(c);
      for (std::size_t d = 0; d < k; ++d) {
        const long long shift = static_cast<long long>(d) - pad;
        const long long lo = std::max<long long>(0, -shift);
        const long long hi = std::min<long long>(static_cast<long long>(out_len),
                                                 static_cast<long long>(len) - shift);
        double acc = 0.0;
        for (long long i = lo; i < hi; ++i) acc += g[i] * xc[i + shift];
        grads.kernel.at(o, c, d) += acc;
        if (dx) {
          const double w = p.kernel.at(o, c, d);
          auto dxc = dx->row(c);
          for (long long i = lo; i < hi; ++i) dxc[i + shift] += w * g[i];
        }
      }
    }
  }
}

// ---- pooling --------------------------------------------------------------

LayerOutput<MaxPoolCache> maxpool1d(const Tensor& x) {
  if (x.rank() != 2) throw DimensionError("maxpool1d: expects [ch x L], got " + x.shape_string());
  const std::size_t ch = x.dim(0), len = x.dim(1);
  if (len < 2) throw ConfigError("maxpool1d: input length " + std::to_string(len) + " < 2");
  const std::size_t out_len = len / 2;
  Tensor y({ch, out_len});
  MaxPoolCache cache{std::vector<std::size_t>(ch * out_len), x.shape()};
  for (std::size_t c = 0; c < ch; ++c) {
    for (std::size_t q = 0; q < out_len; ++q) {
      const std::size_t a = c * len + 2 * q;
      const std::size_t win = x[a] >= x[a + 1] ? a : a + 1;
      y.at(c, q) = x[win];
      cache.argmax[c * out_len + q] = win;
    }
  }
  return {std::move(y), std::move(cache)};
}

Tensor maxpool1d_backward(const MaxPoolCache& cache, const Tensor& dy) {
  if (dy.size() != cache.argmax.size()) {
    throw DimensionError("maxpool1d_backward: gradient " + dy.shape_string() +
                         " does not match the cached output");
  }
  Tensor dx(cache.input_shape);
  for (std::size_t i = 0; i < dy.size(); ++i) dx[cache.argmax[i]] += dy[i];
  return dx;
}

// ---- linear ---------------------------------------------------------------

LinearParams LinearParams::zeros(std::size_t in, std::size_t out) {
  return {Tensor({in, out}), Tensor({out})};
}

LinearParams LinearParams::random(std::size_t in, std::size_t out, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  return {uniform_tensor({in, out}, bound, rng), uniform_tensor({out}, bound, rng)};
}

LayerOutput<LinearCache> linear_forward(const LinearParams& p, const Tensor& x) {
  if (x.size() != p.input_size()) {
    throw DimensionError("linear: input " + x.shape_string() + " does not match weights " +
                         p.W.shape_string());
  }
  Tensor y = p.b;
  detail::add_vec_mat(x.values(), p.W, y.values());
  return {std::move(y), {x}};
}

void linear_backward(const LinearParams& p, const LinearCache& cache, const Tensor& dy,
                     LinearParams& grads, Tensor& dx) {
  if (dx.size() != p.input_size() || dy.size() != p.output_size()) {
    throw DimensionError("linear_backward: dx must hold " + std::to_string(p.input_size()) +
                         " values and dy " + std::to_string(p.output_size()));
  }
  detail::add_outer(cache.x.values(), dy.values(), grads.W);
  detail::add_into(dy.values(), grads.b.values());
  detail::add_mat_vec(p.W, dy.values(), dx.values());
}

// ---- interpolation --------------------------------------------------------

Tensor lerp_upsample(const Tensor& keypoints, std::size_t stride) {
  if (keypoints.rank() != 2) {
    throw DimensionError("lerp_upsample: expects [K x D], got " + keypoints.shape_string());
  }
  const std::size_t count = keypoints.dim(0), width = keypoints.dim(1);
  if (count < 2) throw ConfigError("lerp_upsample: needs at least two keypoints");
  if (stride < 1) throw ConfigError("lerp_upsample: stride must be at least 1");
  const std::size_t n = (count - 1) * stride;
  Tensor out({n, width});
  for (std::size_t t = 0; t < n; ++t) {
    const std::size_t j = t / stride, r = t % stride;
    for (std::size_t d = 0; d < width; ++d) {
      out.at(t, d) = lerp_point(keypoints.at(j, d), keypoints.at(j + 1, d), r, stride);
    }
  }
  return out;
}

Tensor lerp_upsample_backward(const Tensor& d_out, std::size_t keypoints, std::size_t stride) {
  if (keypoints < 2 || stride < 1) throw ConfigError("lerp_upsample_backward: bad geometry");
  if (d_out.rank() != 2 || d_out.dim(0) != (keypoints - 1) * stride) {
    throw DimensionError("lerp_upsample_backward: gradient " + d_out.shape_string() +
                         " does not match " + std::to_string(keypoints) + " keypoints at stride " +
                         std::to_string(stride));
  }
  const std::size_t width = d_out.dim(1);
  Tensor dkp({keypoints, width});
  for (std::size_t t = 0; t < d_out.dim(0); ++t) {
    const std::size_t j = t / stride;
    const double frac = static_cast<double>(t % stride) / static_cast<double>(stride);
    for (std::size_t d = 0; d < width; ++d) {
      dkp.at(j, d) += (1.0 - frac) * d_out.at(t, d);
      dkp.at(j + 1, d) += frac * d_out.at(t, d);
    }
  }
  return dkp;
}

}  // namespace spikedec
