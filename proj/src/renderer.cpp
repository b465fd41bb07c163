#include "dfmcam/renderer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "dfmcam/binary_io.hpp"
#include "dfmcam/parallel.hpp"

namespace dfmcam {

std::string_view to_string(Colormap c) { return c == Colormap::Heat ? "heat" : "grey"; }

Colormap colormap_from_string(std::string_view s) {
  if (s == "heat") return Colormap::Heat;
  if (s == "grey" || s == "gray") return Colormap::Grey;
  throw ValidationError("unknown colormap '" + std::string(s) + "'");
}

void validate(const RenderJob& job) {
  for (int d : job.occupancy.dims)
    if (d < 1) throw ValidationError("render: empty occupancy volume");
  if (!job.saliency.values.empty() && job.saliency.dims != job.occupancy.dims)
    throw ShapeError("render: saliency and occupancy dims differ");
  if (!(job.step > 0.0) || !std::isfinite(job.step)) throw ValidationError("render: step must be positive");
  if (job.width < 1 || job.height < 1) throw ValidationError("render: image dims must be positive");
  if (!(job.camera.fov_deg > 0.0 && job.camera.fov_deg < 180.0))
    throw ValidationError("render: field of view must lie in (0, 180) degrees");
  const Vec3 fwd = job.camera.look_at - job.camera.position;
  if (norm(fwd) == 0.0) throw ValidationError("render: camera position equals look-at point");
  if (norm(cross(fwd, job.camera.up)) == 0.0) throw ValidationError("render: up vector parallel to view direction");
  const Box b = volume_box(job.occupancy.dims);
  const Vec3 p = job.camera.position;
  if (p.x >= b.lo.x && p.x <= b.hi.x && p.y >= b.lo.y && p.y <= b.hi.y && p.z >= b.lo.z && p.z <= b.hi.z)
    throw ValidationError("render: camera inside the volume");
}

Box volume_box(const std::array<int, 3>& dims) {
  const Vec3 half{0.5 * dims[2], 0.5 * dims[1], 0.5 * dims[0]};
  return {-half, half};
}

std::optional<std::pair<double, double>> ray_box_intersect(Vec3 origin, Vec3 direction, const Box& box) {
  double t0 = -std::numeric_limits<double>::infinity();
  double t1 = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    const double o = origin[a], d = direction[a];
    if (d == 0.0) {
      if (o < box.lo[a] || o > box.hi[a]) return std::nullopt;
      continue;
    }
    double ta = (box.lo[a] - o) / d, tb = (box.hi[a] - o) / d;
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
  }
  if (t0 > t1 || t1 < 0.0) return std::nullopt;
  return std::make_pair(std::max(t0, 0.0), t1);
}

namespace {

struct AxisSample {
  int i0, i1;
  double f;
};

// Offset q from the grid centre along an axis of n voxels.
AxisSample axis_sample(double q, int n) {
  const double c = 0.5 * (n - 1);
  const double a = std::min(std::fabs(q), c);
  const double t = c + a;
  int k = static_cast<int>(std::floor(t));
  double f = t - k;
  if (k >= n - 1) {
    k = n - 1;
    f = 0.0;
  }
  const int k1 = std::min(k + 1, n - 1);
  if (q >= 0.0) return {k, k1, f};
  return {n - 1 - k, n - 1 - k1, f};
}

}  // namespace

double sample_trilinear(const ScalarGrid& g, Vec3 p) {
  const AxisSample sx = axis_sample(p.x, g.dims[2]);
  const AxisSample sy = axis_sample(p.y, g.dims[1]);
  const AxisSample sz = axis_sample(p.z, g.dims[0]);
  auto lerp = [](double a, double b, double t) { return a + (b - a) * t; };
  const double c00 = lerp(g.at(sz.i0, sy.i0, sx.i0), g.at(sz.i0, sy.i0, sx.i1), sx.f);
  const double c01 = lerp(g.at(sz.i0, sy.i1, sx.i0), g.at(sz.i0, sy.i1, sx.i1), sx.f);
  const double c10 = lerp(g.at(sz.i1, sy.i0, sx.i0), g.at(sz.i1, sy.i0, sx.i1), sx.f);
  const double c11 = lerp(g.at(sz.i1, sy.i1, sx.i0), g.at(sz.i1, sy.i1, sx.i1), sx.f);
  return lerp(lerp(c00, c01, sy.f), lerp(c10, c11, sy.f), sz.f);
}

double march(const RenderJob& job, Vec3 origin, Vec3 direction) {
  const auto hit = ray_box_intersect(origin, direction, volume_box(job.occupancy.dims));
  if (!hit) return 0.0;
  const auto [tn, tf] = *hit;
  const long count = static_cast<long>(std::floor((tf - tn) / job.step)) + 1;
  const bool has_sal = !job.saliency.values.empty();
  double sum = 0.0;
  for (long i = 0; i < count; ++i) {
    const double t = tn + static_cast<double>(i) * job.step;
    const Vec3 p = origin + t * direction;
    double v = job.occupancy_weight * sample_trilinear(job.occupancy, p);
    if (has_sal) v += job.saliency_weight * sample_trilinear(job.saliency, p);
    sum += v;
  }
  return sum;
}

Vec3 pixel_direction(const Camera& cam, int width, int height, int px, int py) {
  const Vec3 fwd = normalized(cam.look_at - cam.position);
  const Vec3 right = normalized(cross(fwd, cam.up));
  const Vec3 up = cross(right, fwd);
  const double tan_half = std::tan(0.5 * cam.fov_deg * std::numbers::pi / 180.0);
  const double aspect = static_cast<double>(width) / height;
  const double u = static_cast<double>(2 * px + 1 - width) / width * tan_half * aspect;
  const double v = static_cast<double>(height - 2 * py - 1) / height * tan_half;
  return normalized(fwd + u * right + v * up);
}

std::vector<double> render_sums(const RenderJob& job) {
  validate(job);
  std::vector<double> sums(static_cast<std::size_t>(job.width) * job.height, 0.0);
  parallel_for(static_cast<std::size_t>(job.height), 1, [&](std::size_t b, std::size_t e) {
    for (std::size_t py = b; py < e; ++py)
      for (int px = 0; px < job.width; ++px) {
        const Vec3 d = pixel_direction(job.camera, job.width, job.height, px, static_cast<int>(py));
        sums[py * job.width + px] = march(job, job.camera.position, d);
      }
  });
  return sums;
}

std::array<std::uint8_t, 3> apply_colormap(Colormap c, double v) {
  v = std::clamp(std::isfinite(v) ? v : 0.0, 0.0, 1.0);
  auto q = [](double x) { return static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(x, 0.0, 1.0))); };
  if (c == Colormap::Grey) return {q(v), q(v), q(v)};
  // black -> blue -> red -> yellow
  if (v < 1.0 / 3.0) return {0, 0, q(3.0 * v)};
  if (v < 2.0 / 3.0) {
    const double t = 3.0 * v - 1.0;
    return {q(t), 0, q(1.0 - t)};
  }
  return {255, q(3.0 * v - 2.0), 0};
}

Image render(const RenderJob& job) {
  const std::vector<double> sums = render_sums(job);
  const double peak = *std::max_element(sums.begin(), sums.end());
  Image img{job.width, job.height, std::vector<std::uint8_t>(sums.size() * 3, 0)};
  if (!(peak > 0.0)) return img;
  for (std::size_t i = 0; i < sums.size(); ++i) {
    const auto rgb = apply_colormap(job.colormap, sums[i] / peak);
    std::copy(rgb.begin(), rgb.end(), img.rgb.begin() + 3 * i);
  }
  return img;
}

std::vector<std::string> camera_preset_names() { return {"+x", "-x", "+y", "-y", "+z", "-z", "iso"}; }

Camera camera_preset(std::string_view name, const std::array<int, 3>& dims, double fov_deg) {
  const double radius = 0.5 * std::sqrt(static_cast<double>(dims[0]) * dims[0] + static_cast<double>(dims[1]) * dims[1] +
                                        static_cast<double>(dims[2]) * dims[2]);
  const double dist = radius / std::sin(0.5 * fov_deg * std::numbers::pi / 180.0) * 1.05;
  Camera cam;
  cam.fov_deg = fov_deg;
  Vec3 dir;
  cam.up = {0, 1, 0};
  if (name == "+x") dir = {1, 0, 0};
  else if (name == "-x") dir = {-1, 0, 0};
  else if (name == "+y") dir = {0, 1, 0}, cam.up = {0, 0, -1};
  else if (name == "-y") dir = {0, -1, 0}, cam.up = {0, 0, 1};
  else if (name == "+z") dir = {0, 0, 1};
  else if (name == "-z") dir = {0, 0, -1};
  else if (name == "iso") dir = normalized({1, 1, 1});
  else throw ValidationError("unknown camera preset '" + std::string(name) + "'");
  cam.position = dist * dir;
  return cam;
}

std::string encode_ppm(const Image& img) {
  if (img.rgb.size() != static_cast<std::size_t>(img.width) * img.height * 3)
    throw ValidationError("image buffer size does not match its dimensions");
  std::string out = "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  out.append(reinterpret_cast<const char*>(img.rgb.data()), img.rgb.size());
  return out;
}

void write_ppm(const std::filesystem::path& path, const Image& img) { binio::write_file(path, encode_ppm(img)); }

}  // namespace dfmcam
