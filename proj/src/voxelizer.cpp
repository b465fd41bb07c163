#include "dfmcam/voxelizer.hpp"

#include <algorithm>

#include "dfmcam/binary_io.hpp"
#include "dfmcam/error.hpp"
#include "dfmcam/parallel.hpp"

namespace dfmcam {

namespace {
constexpr std::string_view kTensorMagic = "DFMVOXEL";
}

Vec3 GridSpec::voxel_center(int x, int y, int z) const {
  const double vs = voxel_size();
  return {origin.x + (x - padding + 0.5) * vs, origin.y + (y - padding + 0.5) * vs,
          origin.z + (z - padding + 0.5) * vs};
}

void validate(const GridSpec& grid) {
  if (grid.resolution < 4) throw ValidationError("grid resolution must be >= 4");
  if (grid.padding < 1) throw ValidationError("grid padding must be >= 1");
  if (!(grid.extent > 0.0)) throw ValidationError("grid extent must be positive");
}

GridSpec centered_grid(double max_dim, int resolution, int padding, double margin) {
  GridSpec g;
  g.resolution = resolution;
  g.padding = padding;
  g.extent = max_dim / (1.0 - 2.0 * margin);
  g.origin = {-0.5 * g.extent, -0.5 * g.extent, -0.5 * g.extent};
  return g;
}

GridSpec fit_grid(const PartSpec& part, int resolution, int padding) {
  const double max_dim = std::max({part.block_dims.x, part.block_dims.y, part.block_dims.z});
  return centered_grid(max_dim, resolution, padding);
}

VoxelTensor voxelize(const PartSpec& part, const GridSpec& grid) {
  validate(part);
  validate(grid);
  const double tol = 1e-9 * grid.extent;
  for (int a = 0; a < 3; ++a) {
    const double h = 0.5 * part.block_dims[a];
    if (-h < grid.origin[a] - tol || h > grid.origin[a] + grid.extent + tol)
      throw ValidationError("grid extent does not contain part '" + part.id + "'");
  }

  const int n = grid.padded_size();
  const int r = grid.resolution;
  const int p = grid.padding;
  VoxelTensor t(4, n, n, n);
  t.voxel_size = grid.voxel_size();
  t.part_id = part.id;

  parallel_for(static_cast<std::size_t>(r), 1, [&](std::size_t zb, std::size_t ze) {
    for (int z = p + static_cast<int>(zb); z < p + static_cast<int>(ze); ++z)
      for (int y = p; y < p + r; ++y)
        for (int x = p; x < p + r; ++x)
          if (is_inside(part, grid.voxel_center(x, y, z))) t.at(0, z, y, x) = 1.0f;
  });

  const double eps = grid.voxel_size();
  parallel_for(static_cast<std::size_t>(r), 1, [&](std::size_t zb, std::size_t ze) {
    for (int z = p + static_cast<int>(zb); z < p + static_cast<int>(ze); ++z)
      for (int y = p; y < p + r; ++y)
        for (int x = p; x < p + r; ++x) {
          if (t.at(0, z, y, x) == 0.0f) continue;
          const bool boundary = t.at(0, z, y, x - 1) == 0.0f || t.at(0, z, y, x + 1) == 0.0f ||
                                t.at(0, z, y - 1, x) == 0.0f || t.at(0, z, y + 1, x) == 0.0f ||
                                t.at(0, z - 1, y, x) == 0.0f || t.at(0, z + 1, y, x) == 0.0f;
          if (!boundary) continue;
          const auto nrm = boundary_normal(part, grid.voxel_center(x, y, z), eps);
          if (!nrm) continue;
          t.at(1, z, y, x) = static_cast<float>(nrm->x);
          t.at(2, z, y, x) = static_cast<float>(nrm->y);
          t.at(3, z, y, x) = static_cast<float>(nrm->z);
        }
  });
  return t;
}

double occupied_fraction(const VoxelTensor& t) {
  if (t.channels() < 1) throw ValidationError("occupied_fraction: tensor has no channels");
  const std::size_t n = t.channel_stride();
  if (n == 0) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) sum += t.data[i];
  return sum / static_cast<double>(n);
}

std::vector<std::uint8_t> hole_voxel_mask(const PartSpec& part, std::size_t hole_index, const GridSpec& grid) {
  const HoleFrame h = hole_frame(part, hole_index);
  const int n = grid.padded_size();
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(n) * n * n, 0);
  for (int z = 0; z < n; ++z)
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) {
        const Vec3 d = grid.voxel_center(x, y, z) - h.entry;
        const double axial = d[h.axis] * h.direction[h.axis];
        Vec3 off = d;
        off[h.axis] = 0.0;
        if (dot(off, off) < h.radius * h.radius && axial >= 0.0 && axial < h.depth)
          mask[(static_cast<std::size_t>(z) * n + y) * n + x] = 1;
      }
  return mask;
}

std::vector<std::uint8_t> dilate(const std::vector<std::uint8_t>& mask, std::array<int, 3> dhw, int radius) {
  const auto [d, h, w] = dhw;
  if (mask.size() != static_cast<std::size_t>(d) * h * w) throw ShapeError("dilate: mask size mismatch");
  auto idx = [&](int z, int y, int x) { return (static_cast<std::size_t>(z) * h + y) * w + x; };
  // Separable: a Chebyshev ball is the product of three 1D windows.
  std::vector<std::uint8_t> a = mask, b(mask.size(), 0);
  for (int axis = 0; axis < 3; ++axis) {
    std::fill(b.begin(), b.end(), 0);
    for (int z = 0; z < d; ++z)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          if (!a[idx(z, y, x)]) continue;
          for (int o = -radius; o <= radius; ++o) {
            int zz = z, yy = y, xx = x;
            (axis == 0 ? zz : axis == 1 ? yy : xx) += o;
            if (zz < 0 || yy < 0 || xx < 0 || zz >= d || yy >= h || xx >= w) continue;
            b[idx(zz, yy, xx)] = 1;
          }
        }
    std::swap(a, b);
  }
  return a;
}

std::string encode_tensor(const VoxelTensor& t) {
  if (t.data.size() != static_cast<std::size_t>(t.shape[0]) * t.shape[1] * t.shape[2] * t.shape[3])
    throw ShapeError("encode_tensor: data length does not match shape");
  binio::Writer w;
  w.bytes(kTensorMagic);
  w.u32(kTensorFormatVersion);
  for (int s : t.shape) w.u32(static_cast<std::uint32_t>(s));
  w.f64(t.voxel_size);
  w.str(t.part_id);
  w.u8(t.label);
  w.f32_array(t.data);
  return w.release();
}

VoxelTensor decode_tensor(const std::string& bytes, const std::string& what) {
  binio::Reader r(bytes, what);
  if (r.bytes(kTensorMagic.size()) != kTensorMagic) throw IoError(what + ": not a voxel tensor file");
  const auto version = r.u32();
  if (version != kTensorFormatVersion)
    throw IoError(what + ": unsupported tensor format version " + std::to_string(version));
  VoxelTensor t;
  std::size_t count = 1;
  for (int& s : t.shape) {
    s = static_cast<int>(r.u32());
    count *= static_cast<std::size_t>(s);
  }
  t.voxel_size = r.f64();
  t.part_id = r.str();
  t.label = r.u8();
  t.data = r.f32_array(count);
  if (r.remaining() != 0) throw IoError(what + ": trailing bytes after tensor data");
  return t;
}

void save_tensor(const std::filesystem::path& path, const VoxelTensor& t) {
  binio::write_file(path, encode_tensor(t));
}

VoxelTensor load_tensor(const std::filesystem::path& path) {
  return decode_tensor(binio::read_file(path), path.string());
}

}  // namespace dfmcam
