#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dfmcam/tensor.hpp"

namespace dfmcam {

// Dense layer kernels. Conv weights are laid out [out][in][dz][dy][dx];
// dense weights [out][in]. Backward functions overwrite parameter gradients
// with the batch sum and, when a grad_in pointer is given, write the input
// gradient.

struct Conv3dGeometry {
  int in_channels = 1;
  int out_channels = 1;
  int kernel = 1;
  int padding = 0;
};

Shape5 conv3d_output_shape(const Shape5& in, const Conv3dGeometry& g);

/// Optimized path: row-vectorized, same per-element summation order as the
/// reference (bias, then channel, dz, dy, dx, each term fused), so the two
/// agree bit for bit.
template <typename Real>
void conv3d_forward(const Tensor<Real>& in, std::span<const Real> weights, std::span<const Real> bias,
                    const Conv3dGeometry& g, Tensor<Real>& out);

/// Naive nested-loop definition with a fixed summation order.
template <typename Real>
void conv3d_forward_reference(const Tensor<Real>& in, std::span<const Real> weights,
                              std::span<const Real> bias, const Conv3dGeometry& g, Tensor<Real>& out);

template <typename Real>
void conv3d_backward(const Tensor<Real>& in, std::span<const Real> weights, const Tensor<Real>& grad_out,
                     const Conv3dGeometry& g, Tensor<Real>* grad_in, std::span<Real> grad_weights,
                     std::span<Real> grad_bias);

template <typename Real>
void relu_forward(const Tensor<Real>& in, Tensor<Real>& out);
template <typename Real>
void relu_backward(const Tensor<Real>& in, const Tensor<Real>& grad_out, Tensor<Real>& grad_in);

/// Window 2, stride 2, floor of odd extents. argmax holds, per output
/// element, the flat input index of the first maximum in scan order.
template <typename Real>
void maxpool3d_forward(const Tensor<Real>& in, Tensor<Real>& out, std::vector<std::int64_t>& argmax);
template <typename Real>
void maxpool3d_backward(const Tensor<Real>& grad_out, const std::vector<std::int64_t>& argmax,
                        const Shape5& in_shape, Tensor<Real>& grad_in);

struct BatchNormStats {
  std::vector<double> mean;
  std::vector<double> var;  // biased, over batch and spatial dims
  std::vector<double> inv_std;
  double count = 0.0;       // elements per channel
};

/// Normalizes with batch statistics when use_batch_stats, else with the
/// running estimates.
template <typename Real>
void batchnorm_forward(const Tensor<Real>& in, std::span<const Real> gamma, std::span<const Real> beta,
                       std::span<const Real> running_mean, std::span<const Real> running_var, double eps,
                       bool use_batch_stats, Tensor<Real>& out, BatchNormStats& stats);

/// running = momentum * running + (1 - momentum) * batch, with the unbiased
/// batch variance.
template <typename Real>
void batchnorm_update_running(const BatchNormStats& stats, double momentum, std::span<Real> running_mean,
                              std::span<Real> running_var);
template <typename Real>
void batchnorm_backward(const Tensor<Real>& in, std::span<const Real> gamma, const BatchNormStats& stats,
                        bool used_batch_stats, const Tensor<Real>& grad_out, Tensor<Real>* grad_in,
                        std::span<Real> grad_gamma, std::span<Real> grad_beta);

template <typename Real>
void dense_forward(const Tensor<Real>& in, std::span<const Real> weights, std::span<const Real> bias,
                   int out_dim, Tensor<Real>& out);
template <typename Real>
void dense_backward(const Tensor<Real>& in, std::span<const Real> weights, const Tensor<Real>& grad_out,
                    Tensor<Real>* grad_in, std::span<Real> grad_weights, std::span<Real> grad_bias);

template <typename Real>
void sigmoid_forward(const Tensor<Real>& in, Tensor<Real>& out);
template <typename Real>
void sigmoid_backward(const Tensor<Real>& out, const Tensor<Real>& grad_out, Tensor<Real>& grad_in);

inline constexpr double kBceClamp = 1e-7;

struct BceResult {
  double loss = 0.0;
  double grad = 0.0;  // d loss / d y at the clamped y
};

/// -[t ln y + (1 - t) ln(1 - y)] with y clamped to [1e-7, 1 - 1e-7].
BceResult bce_loss(double y, int label);

}  // namespace dfmcam
