#pragma once

// Feed-forward building blocks of the decoder: temporal convolution, max
// pooling, the fully connected readout and keypoint interpolation.

#include <cstddef>
#include <vector>

#include "spikedec/tensor.hpp"

namespace spikedec {

class Rng;

enum class Activation { none, relu };

/// Stride-1 1-D convolution with symmetric zero padding.
struct Conv1dParams {
  Tensor kernel;  // [out_ch x in_ch x k]
  Tensor bias;    // [out_ch]
  std::size_t padding = 0;

  static Conv1dParams zeros(std::size_t out_ch, std::size_t in_ch, std::size_t k,
                            std::size_t padding);
  static Conv1dParams random(std::size_t out_ch, std::size_t in_ch, std::size_t k,
                             std::size_t padding, Rng& rng);

  std::size_t out_channels() const { return kernel.dim(0); }
  std::size_t in_channels() const { return kernel.dim(1); }
  std::size_t kernel_size() const { return kernel.dim(2); }
  std::size_t parameter_count() const { return kernel.size() + bias.size(); }
  /// L + 2*padding - k + 1; throws ConfigError when that is below one.
  std::size_t output_length(std::size_t input_length) const;
};

struct Conv1dCache {
  Tensor input;  // [in_ch x L], unpadded
  Tensor pre;    // [out_ch x L'] before the activation
  Activation activation = Activation::none;
};

template <typename Cache>
struct LayerOutput {
  Tensor y;
  Cache cache;
};

LayerOutput<Conv1dCache> conv1d_forward(const Conv1dParams& p, const Tensor& x,
                                        Activation activation);
/// Same convolution with the padding ignored: x already carries whatever
/// border it needs. Rounding is identical to conv1d_forward element by element.
Tensor conv1d_valid(const Conv1dParams& p, const Tensor& x, Activation activation);
/// Accumulates kernel/bias gradients into `grads`; writes the input gradient
/// into `dx` when it is non-null.
void conv1d_backward(const Conv1dParams& p, const Conv1dCache& cache, const Tensor& dy,
                     Conv1dParams& grads, Tensor* dx);

struct MaxPoolCache {
  std::vector<std::size_t> argmax;  // flat index into the input per output element
  Tensor::Shape input_shape;
};

/// Non-overlapping max over pairs along the last axis; an odd trailing element is dropped.
LayerOutput<MaxPoolCache> maxpool1d(const Tensor& x);
/// Routes each output gradient to the element that won the max (earlier index on ties).
Tensor maxpool1d_backward(const MaxPoolCache& cache, const Tensor& dy);

/// Fully connected layer y = W^T x + b.
struct LinearParams {
  Tensor W;  // [in x out]
  Tensor b;  // [out]

  static LinearParams zeros(std::size_t in, std::size_t out);
  static LinearParams random(std::size_t in, std::size_t out, Rng& rng);
  std::size_t input_size() const { return W.dim(0); }
  std::size_t output_size() const { return W.dim(1); }
  std::size_t parameter_count() const { return W.size() + b.size(); }
};

struct LinearCache {
  Tensor x;
};

LayerOutput<LinearCache> linear_forward(const LinearParams& p, const Tensor& x);
/// Accumulates into grads and into dx, which must already hold input_size values.
void linear_backward(const LinearParams& p, const LinearCache& cache, const Tensor& dy,
                     LinearParams& grads, Tensor& dx);

/// Value at offset `r` of a segment of `stride` steps running from a to b.
inline double lerp_point(double a, double b, std::size_t r, std::size_t stride) {
  return a + (static_cast<double>(r) / static_cast<double>(stride)) * (b - a);
}

/// Linear interpolation of K keypoints [K x D] to (K-1)*stride rows. Keypoint j
/// lands exactly on row j*stride.
Tensor lerp_upsample(const Tensor& keypoints, std::size_t stride);
/// Adjoint of lerp_upsample: each output row splits its gradient between the
/// two bracketing keypoints with weights (1 - frac) and frac.
Tensor lerp_upsample_backward(const Tensor& d_out, std::size_t keypoints, std::size_t stride);

}  // namespace spikedec
