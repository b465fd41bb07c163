#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dfmcam/geometry.hpp"

namespace dfmcam {

inline constexpr std::uint8_t kLabelUnknown = 255;

/// Dense rank-4 float volume, channel-major then z, y, x.
struct VoxelTensor {
  std::array<int, 4> shape{0, 0, 0, 0};  // C, D, H, W
  std::vector<float> data;
  double voxel_size = 1.0;
  std::string part_id;
  std::uint8_t label = kLabelUnknown;  // 1 manufacturable, 0 not, 255 unknown

  VoxelTensor() = default;
  VoxelTensor(int c, int d, int h, int w, float fill = 0.0f)
      : shape{c, d, h, w}, data(static_cast<std::size_t>(c) * d * h * w, fill) {}

  int channels() const { return shape[0]; }
  int depth() const { return shape[1]; }
  int height() const { return shape[2]; }
  int width() const { return shape[3]; }
  std::size_t channel_stride() const { return static_cast<std::size_t>(shape[1]) * shape[2] * shape[3]; }

  std::size_t index(int c, int z, int y, int x) const {
    return ((static_cast<std::size_t>(c) * shape[1] + z) * shape[2] + y) * shape[3] + x;
  }
  float& at(int c, int z, int y, int x) { return data[index(c, z, y, x)]; }
  float at(int c, int z, int y, int x) const { return data[index(c, z, y, x)]; }

  friend bool operator==(const VoxelTensor&, const VoxelTensor&) = default;
};

/// Cubic model-space box mapped onto an R^3 interior grid with P voxels of
/// zero padding on every side.
struct GridSpec {
  int resolution = 32;
  int padding = 2;
  Vec3 origin{-5.0, -5.0, -5.0};  // min corner of the interior box
  double extent = 10.0;           // side length of the interior box

  double voxel_size() const { return extent / resolution; }
  int padded_size() const { return resolution + 2 * padding; }
  /// Model-space center of padded voxel index (x, y, z).
  Vec3 voxel_center(int x, int y, int z) const;
};

void validate(const GridSpec& grid);

/// Grid centered on the origin whose interior box has side
/// max_dim / (1 - 2 * margin), leaving `margin` of the side free on each end.
GridSpec centered_grid(double max_dim, int resolution, int padding, double margin = 0.05);

/// Scales-and-centers a single part into the grid with a 5% margin.
GridSpec fit_grid(const PartSpec& part, int resolution = 32, int padding = 2);

/// Occupancy plus boundary normals: channel 0 occupancy, channels 1..3 the
/// outward normal on boundary voxels, zero elsewhere.
VoxelTensor voxelize(const PartSpec& part, const GridSpec& grid);

/// Mean of channel 0.
double occupied_fraction(const VoxelTensor& t);

/// Binary set of voxels whose centers lie inside the open bore of a hole
/// (same padded shape as the voxelize output, one flag per voxel).
std::vector<std::uint8_t> hole_voxel_mask(const PartSpec& part, std::size_t hole_index, const GridSpec& grid);

/// Chebyshev dilation of a D*H*W mask by `radius` voxels.
std::vector<std::uint8_t> dilate(const std::vector<std::uint8_t>& mask, std::array<int, 3> dhw, int radius);

inline constexpr std::uint32_t kTensorFormatVersion = 1;

std::string encode_tensor(const VoxelTensor& t);
VoxelTensor decode_tensor(const std::string& bytes, const std::string& what = "tensor");
void save_tensor(const std::filesystem::path& path, const VoxelTensor& t);
VoxelTensor load_tensor(const std::filesystem::path& path);

}  // namespace dfmcam
