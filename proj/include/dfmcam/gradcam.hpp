#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dfmcam/geometry.hpp"
#include "dfmcam/network.hpp"
#include "dfmcam/scalar_grid.hpp"
#include "dfmcam/voxelizer.hpp"

namespace dfmcam {

struct SaliencyMap {
  Manufacturability target = Manufacturability::NonManufacturable;
  double class_score = 0.0;  // y^c: -logit for non_manufacturable, +logit for manufacturable
  double probability = 0.0;  // sigmoid output, probability of manufacturable
  std::size_t boundary = 0;  // network boundary the feature maps were taken from
  std::vector<double> alpha;
  ScalarGrid raw;        // feature-map resolution
  ScalarGrid upsampled;  // network input resolution
};

/// Class score of sample 0 of the trace.
template <typename Real>
double class_score(const Network<Real>& net, const ForwardTrace<Real>& trace, Manufacturability target);

/// Per-feature-map weights: the gradient of the class score with respect to
/// the activation at `boundary`, averaged over the voxels of each map.
template <typename Real>
std::vector<double> compute_alpha(const Network<Real>& net, const ForwardTrace<Real>& trace,
                                  Manufacturability target, std::size_t boundary);

/// ReLU of the alpha-weighted sum of the feature maps of sample 0.
template <typename Real>
ScalarGrid compute_map(const Tensor<Real>& features, const std::vector<double>& alpha);

/// Corner-aligned trilinear resampling: target index i maps to source
/// coordinate i (S - 1) / (T - 1). A single-voxel source axis is replicated.
ScalarGrid upsample_trilinear(const ScalarGrid& raw, std::array<int, 3> target);

/// Inference-mode forward of a single input, then alpha, map and upsampling.
/// boundary defaults to the last convolution's rectified output.
template <typename Real>
SaliencyMap explain(const Network<Real>& net, const Tensor<Real>& input, Manufacturability target,
                    std::optional<std::size_t> boundary = std::nullopt);

/// C = 1 voxel tensor holding the upsampled map.
VoxelTensor saliency_tensor(const SaliencyMap& map, double voxel_size, const std::string& part_id);

/// class, class_score, probability, predicted label, alpha.
std::string saliency_sidecar(const SaliencyMap& map);

}  // namespace dfmcam
