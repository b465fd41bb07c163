#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <vector>

#include "dfmcam/error.hpp"
#include "dfmcam/voxelizer.hpp"

namespace dfmcam {

/// Scalar volume, z-major like the voxel tensors.
struct ScalarGrid {
  std::array<int, 3> dims{0, 0, 0};  // D, H, W
  std::vector<double> values;

  ScalarGrid() = default;
  ScalarGrid(std::array<int, 3> d, double fill = 0.0)
      : dims(d), values(static_cast<std::size_t>(d[0]) * d[1] * d[2], fill) {}
  std::size_t size() const { return values.size(); }
  std::size_t index(int z, int y, int x) const {
    return (static_cast<std::size_t>(z) * dims[1] + y) * dims[2] + x;
  }
  double at(int z, int y, int x) const { return values[index(z, y, x)]; }
  double& at(int z, int y, int x) { return values[index(z, y, x)]; }
  /// Index of the first maximum in scan order.
  std::size_t argmax() const {
    if (values.empty()) throw ValidationError("argmax of an empty grid");
    return static_cast<std::size_t>(std::max_element(values.begin(), values.end()) - values.begin());
  }
};

/// Channel c of a voxel tensor as doubles.
inline ScalarGrid channel_grid(const VoxelTensor& t, int c) {
  if (c < 0 || c >= t.channels()) throw ShapeError("tensor has no channel " + std::to_string(c));
  ScalarGrid g({t.depth(), t.height(), t.width()});
  const float* src = t.data.data() + static_cast<std::size_t>(c) * t.channel_stride();
  for (std::size_t i = 0; i < g.size(); ++i) g.values[i] = src[i];
  return g;
}

}  // namespace dfmcam
