#include "dfmcam/geometry.hpp"

#include <algorithm>

#include "dfmcam/error.hpp"

namespace dfmcam {

namespace {

double half(const PartSpec& part, int axis) { return 0.5 * part.block_dims[axis]; }

std::array<int, 2> other_axes(int axis) {
  switch (axis) {
    case 0: return {1, 2};
    case 1: return {0, 2};
    default: return {0, 1};
  }
}

// Distance from scalar v to the closed interval [lo, hi].
double interval_gap(double v, double lo, double hi) {
  if (v < lo) return lo - v;
  if (v > hi) return v - hi;
  return 0.0;
}

struct HoleLocal {
  double axial = 0;   // signed distance along the drilling direction from the mouth
  double radial = 0;  // distance from the hole axis
  Vec3 offset;        // component of (p - entry) perpendicular to the axis
};

HoleLocal to_local(const HoleFrame& h, Vec3 p) {
  const Vec3 d = p - h.entry;
  HoleLocal out;
  out.axial = d[h.axis] * h.direction[h.axis];
  out.offset = d;
  out.offset[h.axis] = 0.0;
  const auto [b, c] = other_axes(h.axis);
  out.radial = std::sqrt(out.offset[b] * out.offset[b] + out.offset[c] * out.offset[c]);
  return out;
}

// Axial span [lo, hi] of a hole in absolute coordinates along its axis.
std::pair<double, double> axial_span(const HoleFrame& h) {
  const double a0 = h.entry[h.axis];
  const double a1 = a0 + h.direction[h.axis] * h.depth;
  return {std::min(a0, a1), std::max(a0, a1)};
}

struct NearestSurface {
  double distance = std::numeric_limits<double>::infinity();
  Vec3 normal;
};

NearestSurface nearest_surface(const PartSpec& part, Vec3 p) {
  NearestSurface best;
  auto consider = [&](double dist, Vec3 n) {
    if (dist < best.distance) {
      best.distance = dist;
      best.normal = n;
    }
  };

  for (Face f : kAllFaces) {
    const int a = face_axis(f);
    const auto [b, c] = other_axes(a);
    const double da = p[a] - face_sign(f) * half(part, a);
    const double ob = std::max(0.0, std::abs(p[b]) - half(part, b));
    const double oc = std::max(0.0, std::abs(p[c]) - half(part, c));
    consider(std::sqrt(da * da + ob * ob + oc * oc), face_normal(f));
  }

  for (std::size_t i = 0; i < part.holes.size(); ++i) {
    const HoleFrame h = hole_frame(part, i);
    const HoleLocal l = to_local(h, p);

    // Wall: points toward the bore axis.
    const double beyond = std::max({0.0, -l.axial, l.axial - h.depth});
    const double dr = l.radial - h.radius;
    Vec3 inward;
    if (l.radial > 0.0) {
      inward = (-1.0 / l.radial) * l.offset;
    } else {
      inward = Vec3{};
      inward[other_axes(h.axis)[0]] = 1.0;
    }
    consider(std::sqrt(dr * dr + beyond * beyond), inward);

    // Bottom of a blind hole: faces back toward the mouth.
    if (!h.through) {
      const double ds = l.axial - h.depth;
      const double outside = std::max(0.0, l.radial - h.radius);
      consider(std::sqrt(ds * ds + outside * outside), -h.direction);
    }
  }
  return best;
}

}  // namespace

Vec3 face_normal(Face f) {
  Vec3 n;
  n[face_axis(f)] = face_sign(f);
  return n;
}

std::array<int, 2> face_plane_axes(Face f) { return other_axes(face_axis(f)); }

std::string_view to_string(Face f) {
  static constexpr std::array<std::string_view, 6> names{"+x", "-x", "+y", "-y", "+z", "-z"};
  return names[static_cast<int>(f)];
}

Face face_from_string(std::string_view s) {
  for (Face f : kAllFaces)
    if (to_string(f) == s) return f;
  throw ValidationError("unknown face '" + std::string(s) + "' (expected +x,-x,+y,-y,+z,-z)");
}

std::string_view to_string(Manufacturability m) {
  return m == Manufacturability::Manufacturable ? "manufacturable" : "non_manufacturable";
}

Manufacturability manufacturability_from_string(std::string_view s) {
  if (s == "manufacturable") return Manufacturability::Manufacturable;
  if (s == "non_manufacturable") return Manufacturability::NonManufacturable;
  throw ValidationError("unknown label '" + std::string(s) + "'");
}

HoleFrame hole_frame(const PartSpec& part, std::size_t hole_index) {
  if (hole_index >= part.holes.size())
    throw ValidationError("hole index " + std::to_string(hole_index) + " out of range (part has " +
                          std::to_string(part.holes.size()) + " holes)");
  const HoleSpec& hs = part.holes[hole_index];
  HoleFrame h;
  h.axis = face_axis(hs.entry_face);
  h.direction = -face_normal(hs.entry_face);
  const auto [u, v] = face_plane_axes(hs.entry_face);
  h.entry[h.axis] = face_sign(hs.entry_face) * half(part, h.axis);
  h.entry[u] = hs.center_uv[0];
  h.entry[v] = hs.center_uv[1];
  h.radius = 0.5 * hs.diameter;
  const double extent = part.block_dims[h.axis];
  h.through = hs.through || hs.depth >= extent;
  h.depth = h.through ? extent : hs.depth;
  return h;
}

void validate(const DfmRuleSet& rules) {
  if (!(rules.max_depth_diameter_ratio > 0.0) || !(rules.min_wall_thickness > 0.0))
    throw ValidationError("DFM rule thresholds must be positive");
}

void validate(const PartSpec& part) {
  for (int a = 0; a < 3; ++a)
    if (!(part.block_dims[a] > 0.0) || !std::isfinite(part.block_dims[a]))
      throw ValidationError("part '" + part.id + "': block dimensions must be positive");
  for (std::size_t i = 0; i < part.holes.size(); ++i) {
    const HoleSpec& hs = part.holes[i];
    const std::string where = "part '" + part.id + "' hole " + std::to_string(i) + ": ";
    if (!(hs.diameter > 0.0)) throw ValidationError(where + "diameter must be positive");
    const int axis = face_axis(hs.entry_face);
    if (!hs.through) {
      if (!(hs.depth > 0.0)) throw ValidationError(where + "depth must be positive");
      if (hs.depth > part.block_dims[axis])
        throw ValidationError(where + "depth exceeds block extent along the hole axis");
    }
    const auto [u, v] = face_plane_axes(hs.entry_face);
    const double r = 0.5 * hs.diameter;
    if (std::abs(hs.center_uv[0]) + r > half(part, u) || std::abs(hs.center_uv[1]) + r > half(part, v))
      throw ValidationError(where + "hole mouth crosses a block edge");
  }
}

bool is_inside(const PartSpec& part, Vec3 p) {
  for (int a = 0; a < 3; ++a)
    if (std::abs(p[a]) > half(part, a)) return false;
  for (std::size_t i = 0; i < part.holes.size(); ++i) {
    const HoleFrame h = hole_frame(part, i);
    const HoleLocal l = to_local(h, p);
    if (l.radial >= h.radius) continue;
    if (h.through || l.axial < h.depth) return false;
  }
  return true;
}

std::optional<Vec3> boundary_normal(const PartSpec& part, Vec3 p, double eps) {
  if (!(eps > 0.0)) throw ValidationError("boundary_normal: eps must be positive");
  const NearestSurface s = nearest_surface(part, p);
  if (s.distance <= eps) return s.normal;
  return std::nullopt;
}

double boundary_distance(const PartSpec& part, Vec3 p) { return nearest_surface(part, p).distance; }

double depth_diameter_ratio(const PartSpec& part, std::size_t hole_index) {
  const HoleFrame h = hole_frame(part, hole_index);
  return h.depth / (2.0 * h.radius);
}

double min_wall_thickness(const PartSpec& part, std::size_t hole_index) {
  const HoleFrame h = hole_frame(part, hole_index);
  double wall = std::numeric_limits<double>::infinity();
  for (int b : other_axes(h.axis)) wall = std::min(wall, half(part, b) - std::abs(h.entry[b]) - h.radius);

  for (std::size_t j = 0; j < part.holes.size(); ++j) {
    if (j == hole_index) continue;
    const HoleFrame o = hole_frame(part, j);
    double clearance;
    if (o.axis == h.axis) {
      const auto [b, c] = other_axes(h.axis);
      const double db = h.entry[b] - o.entry[b];
      const double dc = h.entry[c] - o.entry[c];
      const double radial = std::sqrt(db * db + dc * dc) - h.radius - o.radius;
      const auto [lo1, hi1] = axial_span(h);
      const auto [lo2, hi2] = axial_span(o);
      const double gap = std::max({0.0, lo2 - hi1, lo1 - hi2});
      if (gap == 0.0) {
        clearance = radial;
      } else {
        const double r = std::max(0.0, radial);
        clearance = std::sqrt(r * r + gap * gap);
      }
    } else {
      // Perpendicular axes: closed-form distance between the two axis segments.
      const int a1 = h.axis;
      const int a2 = o.axis;
      const int c = 3 - a1 - a2;
      const auto [lo1, hi1] = axial_span(h);
      const auto [lo2, hi2] = axial_span(o);
      const double d1 = interval_gap(o.entry[a1], lo1, hi1);
      const double d2 = interval_gap(h.entry[a2], lo2, hi2);
      const double dc = h.entry[c] - o.entry[c];
      clearance = std::sqrt(d1 * d1 + d2 * d2 + dc * dc) - h.radius - o.radius;
    }
    wall = std::min(wall, clearance);
  }
  return wall;
}

RuleReport check_rules(const PartSpec& part, const DfmRuleSet& rules) {
  RuleReport r;
  for (std::size_t i = 0; i < part.holes.size(); ++i) {
    const double ratio = depth_diameter_ratio(part, i);
    const double wall = min_wall_thickness(part, i);
    r.max_ratio = std::max(r.max_ratio, ratio);
    r.min_wall = std::min(r.min_wall, wall);
    const bool bad_ratio = ratio > rules.max_depth_diameter_ratio;
    const bool thin = wall < rules.min_wall_thickness;
    r.ratio_violation = r.ratio_violation || bad_ratio;
    r.thin_wall_violation = r.thin_wall_violation || thin;
    if (bad_ratio || thin) r.offending_holes.push_back(i);
  }
  return r;
}

Manufacturability label(const PartSpec& part, const DfmRuleSet& rules) {
  return check_rules(part, rules).label();
}

}  // namespace dfmcam
