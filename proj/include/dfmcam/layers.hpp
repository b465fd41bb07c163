#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dfmcam/kernels.hpp"
#include "dfmcam/random.hpp"
#include "dfmcam/tensor.hpp"

namespace dfmcam {

enum class LayerKind { Conv3d, Relu, BatchNorm, MaxPool3d, Flatten, Dense, Sigmoid };

std::string_view to_string(LayerKind k);
LayerKind layer_kind_from_string(std::string_view s);

/// Topology of one layer. Only the fields relevant to `kind` are used.
struct LayerSpec {
  LayerKind kind = LayerKind::Relu;
  int in_channels = 0;   // conv3d
  int out_channels = 0;  // conv3d
  int kernel = 0;        // conv3d, cubic side
  int padding = 0;       // conv3d
  int channels = 0;      // batchnorm
  double eps = 1e-5;     // batchnorm
  double momentum = 0.9; // batchnorm
  int in_dim = 0;        // dense
  int out_dim = 0;       // dense

  static LayerSpec conv3d(int in, int out, int k, int pad) {
    LayerSpec s;
    s.kind = LayerKind::Conv3d;
    s.in_channels = in;
    s.out_channels = out;
    s.kernel = k;
    s.padding = pad;
    return s;
  }
  static LayerSpec batchnorm(int c, double eps = 1e-5, double momentum = 0.9) {
    LayerSpec s;
    s.kind = LayerKind::BatchNorm;
    s.channels = c;
    s.eps = eps;
    s.momentum = momentum;
    return s;
  }
  static LayerSpec dense(int in, int out) {
    LayerSpec s;
    s.kind = LayerKind::Dense;
    s.in_dim = in;
    s.out_dim = out;
    return s;
  }
  static LayerSpec simple(LayerKind k) {
    LayerSpec s;
    s.kind = k;
    return s;
  }

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

/// A learnable tensor together with its gradient and ADADELTA accumulators
/// (E[g^2], E[dx^2]), all of the same length.
template <typename Real>
struct Parameter {
  std::string name;
  std::vector<Real> value;
  std::vector<Real> grad;
  std::vector<Real> acc_grad_sq;
  std::vector<Real> acc_delta_sq;

  explicit Parameter(std::string n = {}, std::size_t size = 0)
      : name(std::move(n)), value(size), grad(size), acc_grad_sq(size), acc_delta_sq(size) {}
  std::size_t size() const { return value.size(); }
};

enum class Mode { Training, Inference };

/// Per-layer scratch retained by a forward pass for the matching backward.
struct LayerCache {
  std::vector<std::int64_t> argmax;  // maxpool
  BatchNormStats bn;                 // batchnorm
  bool used_batch_stats = false;
};

template <typename Real>
class Layer {
 public:
  virtual ~Layer() = default;

  virtual const LayerSpec& spec() const = 0;
  virtual Shape5 output_shape(const Shape5& in) const = 0;

  /// Pure: never touches layer state, so a frozen layer may be shared.
  virtual void forward(const Tensor<Real>& in, Tensor<Real>& out, LayerCache& cache, Mode mode) const = 0;

  /// Folds the batch statistics of a training-mode forward into the running
  /// estimates (batchnorm only).
  virtual void update_running(const LayerCache&) {}

  /// Overwrites parameter gradients with the batch sum for this pass.
  virtual void backward(const Tensor<Real>& in, const Tensor<Real>& out, const LayerCache& cache,
                        const Tensor<Real>& grad_out, Tensor<Real>* grad_in) {
    if (grad_in) backward_input(in, out, cache, grad_out, *grad_in);
  }

  /// Input gradient only; leaves parameter gradients untouched.
  virtual void backward_input(const Tensor<Real>& in, const Tensor<Real>& out, const LayerCache& cache,
                              const Tensor<Real>& grad_out, Tensor<Real>& grad_in) const = 0;

  virtual std::vector<Parameter<Real>*> parameters() { return {}; }
  /// Non-learned state saved in checkpoints (batchnorm running statistics).
  virtual std::vector<std::vector<Real>*> buffers() { return {}; }

  virtual void initialize(Rng&) {}
};

template <typename Real>
std::unique_ptr<Layer<Real>> make_layer(const LayerSpec& spec);

}  // namespace dfmcam
