#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dfmcam/geometry.hpp"
#include "dfmcam/scalar_grid.hpp"

namespace dfmcam {

// Volumes are placed centred on the origin with one unit per voxel, so a
// D x H x W grid spans [-W/2, W/2] x [-H/2, H/2] x [-D/2, D/2].

struct Camera {
  Vec3 position{0, 0, 100};
  Vec3 look_at{0, 0, 0};
  Vec3 up{0, 1, 0};
  double fov_deg = 45.0;  // vertical
};

enum class Colormap { Heat, Grey };

std::string_view to_string(Colormap c);
Colormap colormap_from_string(std::string_view s);

struct RenderJob {
  ScalarGrid occupancy;
  ScalarGrid saliency;  // empty, or the same dims as occupancy
  double occupancy_weight = 0.15;
  double saliency_weight = 1.0;
  Camera camera;
  int width = 256;
  int height = 256;
  double step = 0.5;
  Colormap colormap = Colormap::Heat;
};

void validate(const RenderJob& job);

struct Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;  // rows top to bottom

  friend bool operator==(const Image&, const Image&) = default;
};

struct Box {
  Vec3 lo, hi;
};

Box volume_box(const std::array<int, 3>& dims);

/// Slab intersection; nullopt when the ray misses or the box lies behind.
/// t_near is clamped to 0 for origins inside the box.
std::optional<std::pair<double, double>> ray_box_intersect(Vec3 origin, Vec3 direction, const Box& box);

/// Trilinear sample at a model-space point, clamped to the outermost voxel
/// centres. Computed on |offset| from the grid centre so mirrored grids
/// sampled at mirrored points agree bit for bit.
double sample_trilinear(const ScalarGrid& grid, Vec3 p);

/// Sum of w_o occupancy + w_s saliency at t_near + i * step,
/// i = 0 .. floor((t_far - t_near) / step). Zero for a missed ray.
double march(const RenderJob& job, Vec3 origin, Vec3 direction);

/// Unit direction of the ray through pixel (px, py).
Vec3 pixel_direction(const Camera& cam, int width, int height, int px, int py);

/// Per-pixel sums, normalised by the frame maximum, mapped through the
/// colormap. A zero frame renders black.
Image render(const RenderJob& job);

/// Raw per-pixel sums before normalisation, row-major.
std::vector<double> render_sums(const RenderJob& job);

std::array<std::uint8_t, 3> apply_colormap(Colormap c, double v);

/// Axis views "+x", "-x", "+y", "-y", "+z", "-z" and "iso", at a distance
/// that keeps the whole volume in frame.
Camera camera_preset(std::string_view name, const std::array<int, 3>& dims, double fov_deg = 45.0);
std::vector<std::string> camera_preset_names();

std::string encode_ppm(const Image& img);
void write_ppm(const std::filesystem::path& path, const Image& img);

}  // namespace dfmcam
