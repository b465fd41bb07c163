#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace dfmcam {

struct Vec3 {
  double x = 0, y = 0, z = 0;

  double operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }
  double& operator[](int i) { return i == 0 ? x : (i == 1 ? y : z); }

  friend Vec3 operator+(Vec3 a, Vec3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
  friend Vec3 operator-(Vec3 a, Vec3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
  friend Vec3 operator-(Vec3 a) { return {-a.x, -a.y, -a.z}; }
  friend Vec3 operator*(double s, Vec3 a) { return {s * a.x, s * a.y, s * a.z}; }
  friend Vec3 operator*(Vec3 a, double s) { return s * a; }
  friend bool operator==(Vec3, Vec3) = default;
};

inline double dot(Vec3 a, Vec3 b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
inline Vec3 cross(Vec3 a, Vec3 b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
inline double norm(Vec3 a) { return std::sqrt(dot(a, a)); }
inline Vec3 normalized(Vec3 a) { return (1.0 / norm(a)) * a; }

/// Block faces in the fixed surface order used for tie-breaking.
enum class Face { PosX = 0, NegX, PosY, NegY, PosZ, NegZ };

inline constexpr std::array<Face, 6> kAllFaces{Face::PosX, Face::NegX, Face::PosY,
                                               Face::NegY, Face::PosZ, Face::NegZ};

/// Axis index (0 = x, 1 = y, 2 = z) the face is perpendicular to.
inline int face_axis(Face f) { return static_cast<int>(f) / 2; }
/// +1 for the positive face on its axis, -1 otherwise.
inline double face_sign(Face f) { return static_cast<int>(f) % 2 == 0 ? 1.0 : -1.0; }
Vec3 face_normal(Face f);
/// The two in-plane axes of a face, ascending: +-x -> (y, z), +-y -> (x, z), +-z -> (x, y).
std::array<int, 2> face_plane_axes(Face f);

std::string_view to_string(Face f);
Face face_from_string(std::string_view s);

/// A drilled cylindrical hole entering one block face along its inward normal.
struct HoleSpec {
  Face entry_face = Face::PosZ;
  std::array<double, 2> center_uv{0.0, 0.0};  // face-local, relative to the face center
  double diameter = 1.0;
  double depth = 1.0;    // ignored when through is set
  bool through = false;
};

/// Axis-aligned block centered at the origin minus a list of holes.
struct PartSpec {
  std::string id;
  Vec3 block_dims{10, 10, 10};
  std::vector<HoleSpec> holes;
};

struct DfmRuleSet {
  double max_depth_diameter_ratio = 5.0;
  double min_wall_thickness = 1.0;
};

enum class Manufacturability { NonManufacturable = 0, Manufacturable = 1 };

std::string_view to_string(Manufacturability m);
Manufacturability manufacturability_from_string(std::string_view s);

/// Resolved placement of a hole in model space.
struct HoleFrame {
  Vec3 entry;      // center of the mouth on the entry face
  Vec3 direction;  // unit drilling direction (into the block)
  int axis = 2;
  double radius = 0.5;
  double depth = 1.0;  // effective depth: block extent for through holes
  bool through = false;
};

HoleFrame hole_frame(const PartSpec& part, std::size_t hole_index);

/// Throws ValidationError describing the first violated invariant.
void validate(const PartSpec& part);
void validate(const DfmRuleSet& rules);

/// Closed-solid membership: boundary points are inside.
bool is_inside(const PartSpec& part, Vec3 p);

/// Outward unit normal of the nearest boundary surface if it lies within eps.
std::optional<Vec3> boundary_normal(const PartSpec& part, Vec3 p, double eps);

/// Distance from p to the nearest boundary surface patch (no eps cutoff).
double boundary_distance(const PartSpec& part, Vec3 p);

double depth_diameter_ratio(const PartSpec& part, std::size_t hole_index);

/// Thinnest material around a hole: side faces perpendicular to the hole
/// axis and the clearance to every other hole wall. Negative when holes
/// intersect.
double min_wall_thickness(const PartSpec& part, std::size_t hole_index);

struct RuleReport {
  double max_ratio = 0.0;                                     // over holes
  double min_wall = std::numeric_limits<double>::infinity();  // over holes
  bool ratio_violation = false;
  bool thin_wall_violation = false;
  std::vector<std::size_t> offending_holes;

  Manufacturability label() const {
    return (ratio_violation || thin_wall_violation) ? Manufacturability::NonManufacturable
                                                    : Manufacturability::Manufacturable;
  }
};

RuleReport check_rules(const PartSpec& part, const DfmRuleSet& rules);

Manufacturability label(const PartSpec& part, const DfmRuleSet& rules);

}  // namespace dfmcam
