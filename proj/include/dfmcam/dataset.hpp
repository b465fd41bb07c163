#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dfmcam/geometry.hpp"
#include "dfmcam/trainer.hpp"
#include "dfmcam/voxelizer.hpp"

namespace dfmcam {

/// Union of closed intervals; sampling picks an interval with probability
/// proportional to its length, then a uniform point inside it.
struct RangeSet {
  std::vector<std::array<double, 2>> intervals;

  RangeSet() = default;
  RangeSet(std::initializer_list<std::array<double, 2>> iv) : intervals(iv) {}

  bool contains(double v) const;
  double min() const;
  double max() const;
  double sample(Rng& rng) const;
};

enum class Split { Train, Val, Test };
inline constexpr std::array<Split, 3> kAllSplits{Split::Train, Split::Val, Split::Test};
std::string_view to_string(Split s);
Split split_from_string(std::string_view s);

/// Geometry bands of one split.
struct SplitGeometry {
  RangeSet block_dims;  // per axis, sampled independently
  RangeSet diameters;
};

struct GeneratorConfig {
  std::uint64_t seed = 1;
  int train_count = 1200;
  int val_count = 200;
  int test_count = 400;
  // Training and validation share bands; the test split draws from bands
  // disjoint from them.
  SplitGeometry train_geometry{{{7.0, 7.45}, {8.05, 8.45}, {9.05, 9.45}},
                               {{0.80, 0.98}, {1.22, 1.38}, {1.62, 1.80}}};
  SplitGeometry test_geometry{{{7.55, 7.95}, {8.55, 8.95}, {9.55, 10.0}}, {{1.02, 1.18}, {1.42, 1.58}}};
  int holes_min = 1;
  int holes_max = 4;
  double near_boundary_fraction = 0.2;
  double near_band = 0.15;          // relative half-width of the band around each threshold
  double through_probability = 0.15;
  double far_ratio_min = 0.5;       // shallowest ratio drawn
  double far_ratio_max = 12.0;      // deepest ratio drawn for far violations
  double far_wall_min = 0.25;       // thinnest wall drawn for far violations, model units
  DfmRuleSet rules;
  int resolution = 32;
  int padding = 2;
  int max_attempts = 100000;
};

void validate(const GeneratorConfig& cfg);

/// One fixed grid for the whole corpus, sized to the largest block any split
/// can draw, so a model-space length maps to the same voxel count in every
/// sample.
GridSpec corpus_grid(const GeneratorConfig& cfg);

std::string config_to_json(const GeneratorConfig& cfg);
GeneratorConfig config_from_json(const std::string& text);

/// Rule family a sample violates or sits closest to.
enum class RuleKind { None, Ratio, ThinWall };
std::string_view to_string(RuleKind r);

struct SampleRecord {
  std::string id;
  Split split = Split::Train;
  std::string tensor_file;  // relative to the dataset root
  std::string part_file;
  Manufacturability label = Manufacturability::Manufacturable;
  std::vector<RuleKind> violations;  // {None} for manufacturable parts
  bool near_boundary = false;
  RuleKind near_rule = RuleKind::None;
  double near_value = 0.0;  // max ratio or min wall the band refers to
  double max_ratio = 0.0;
  double min_wall = 0.0;
  int hole_count = 0;
};

struct DatasetManifest {
  std::uint32_t format_version = 1;
  GeneratorConfig config;
  GridSpec grid;
  std::vector<SampleRecord> samples;  // ordered by split, then index
};

std::string manifest_to_json(const DatasetManifest& m);
DatasetManifest manifest_from_json(const std::string& text);

struct GeneratedPart {
  PartSpec part;
  SampleRecord record;
};

/// Draws sample `index` of a split. Pure in (cfg, split, index): every sample
/// has its own reseeded stream. Even indices target manufacturable parts,
/// odd indices non-manufacturable ones.
GeneratedPart generate_part(const GeneratorConfig& cfg, Split split, int index);

/// All parts of a split, in index order, without touching the file system.
std::vector<GeneratedPart> generate_split(const GeneratorConfig& cfg, Split split);

/// Writes manifest.json plus <split>/<id>.vox and <split>/<id>.part.json.
DatasetManifest generate(const GeneratorConfig& cfg, const std::filesystem::path& root);

DatasetManifest load_manifest(const std::filesystem::path& root);

/// Loads the tensors of one split, checking labels against the manifest.
SampleSet load_split(const std::filesystem::path& root, const DatasetManifest& m, Split split);

}  // namespace dfmcam
