#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "dfmcam/layers.hpp"
#include "dfmcam/tensor.hpp"

namespace dfmcam {

/// Topology plus the input it expects: which voxel channels feed the first
/// convolution and the cubic spatial side of the padded grid.
struct NetworkSpec {
  std::string name;
  std::vector<int> input_channels;
  int input_size = 0;
  std::vector<LayerSpec> layers;

  friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;
};

struct PresetOptions {
  int input_size = 36;
  std::vector<int> channels{8, 16, 32};
  int dense_width = 128;
};

/// "inouts-842" (occupancy only, kernels 8, 4, 2) or "normals-632"
/// (occupancy and normals, kernels 6, 3, 2). Three conv blocks
/// (conv, relu, batchnorm) with pooling after the first and the last, then
/// dense, relu, dense(1), sigmoid.
NetworkSpec make_preset(std::string_view name, const PresetOptions& opt = {});
std::vector<std::string> preset_names();

/// Activation shapes for a batch of n, one per layer boundary (layers + 1).
/// Throws ShapeError unless the chain ends in a single sigmoid output.
std::vector<Shape5> activation_shapes(const NetworkSpec& spec, int n = 1);
void validate(const NetworkSpec& spec);

std::string spec_to_json(const NetworkSpec& spec);
NetworkSpec spec_from_json(const std::string& text);

/// Activations at every layer boundary plus the per-layer caches of one
/// forward pass. acts[0] is the input, acts.back() the sigmoid output.
template <typename Real>
struct ForwardTrace {
  std::vector<Tensor<Real>> acts;
  std::vector<LayerCache> caches;
  Mode mode = Mode::Inference;
};

template <typename Real>
class Network {
 public:
  explicit Network(NetworkSpec spec);
  Network(const Network& other);
  Network& operator=(const Network& other);
  Network(Network&&) noexcept = default;
  Network& operator=(Network&&) noexcept = default;

  const NetworkSpec& spec() const { return spec_; }
  std::size_t num_layers() const { return layers_.size(); }
  Layer<Real>& layer(std::size_t i) { return *layers_[i]; }
  const Layer<Real>& layer(std::size_t i) const { return *layers_[i]; }

  /// Fresh parameters from the seed; accumulators and running stats reset.
  void initialize(std::uint64_t seed);

  ForwardTrace<Real> forward(const Tensor<Real>& input, Mode mode) const;

  /// Runs layers [from, to) starting from the activation at boundary from.
  Tensor<Real> forward_range(const Tensor<Real>& act, std::size_t from, std::size_t to, Mode mode) const;

  /// Folds the batch statistics of a training-mode trace into batchnorm
  /// running estimates.
  void update_running(const ForwardTrace<Real>& trace);

  /// Parameter gradients (batch sums) of every layer below boundary from,
  /// given d loss / d activation at that boundary (default: the output).
  /// Layers at or above from get zero gradients.
  void backward(const ForwardTrace<Real>& trace, const Tensor<Real>& grad, std::size_t from);
  void backward(const ForwardTrace<Real>& trace, const Tensor<Real>& grad_output) {
    backward(trace, grad_output, num_layers());
  }

  /// Gradient with respect to the activation at boundary to, given the
  /// gradient at boundary from (> to). Parameter gradients are untouched.
  Tensor<Real> backprop(const ForwardTrace<Real>& trace, const Tensor<Real>& grad, std::size_t from,
                        std::size_t to) const;

  /// Boundary holding the last convolution's rectified feature maps.
  std::size_t last_conv_boundary() const;
  /// Boundary holding the pre-sigmoid logit.
  std::size_t logit_boundary() const;

  struct ParamRef {
    std::size_t layer;
    Parameter<Real>* param;
  };
  std::vector<ParamRef> parameters();
  std::vector<const Parameter<Real>*> parameters() const;
  std::vector<std::vector<Real>*> buffers();
  std::vector<const std::vector<Real>*> buffers() const;
  std::size_t parameter_count() const;

  /// Values of parameters, accumulators and buffers converted to another
  /// precision.
  template <typename To>
  Network<To> cast() const;

 private:
  NetworkSpec spec_;
  std::vector<std::unique_ptr<Layer<Real>>> layers_;
};

/// Gathers the listed channels of a single voxel tensor sample into slot n of
/// a batch tensor.
template <typename Real>
void gather_channels(const float* voxels, int channels, int spatial_side, const std::vector<int>& select,
                     Tensor<Real>& batch, int n);

}  // namespace dfmcam
