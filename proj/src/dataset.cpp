#include "dfmcam/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include <json.hpp>

#include "dfmcam/binary_io.hpp"
#include "dfmcam/error.hpp"
#include "dfmcam/parallel.hpp"
#include "dfmcam/part_io.hpp"

namespace dfmcam {

using nlohmann::json;

bool RangeSet::contains(double v) const {
  return std::any_of(intervals.begin(), intervals.end(), [v](const auto& iv) { return v >= iv[0] && v <= iv[1]; });
}

double RangeSet::min() const {
  if (intervals.empty()) throw ValidationError("empty range");
  double m = intervals[0][0];
  for (const auto& iv : intervals) m = std::min(m, iv[0]);
  return m;
}

double RangeSet::max() const {
  if (intervals.empty()) throw ValidationError("empty range");
  double m = intervals[0][1];
  for (const auto& iv : intervals) m = std::max(m, iv[1]);
  return m;
}

double RangeSet::sample(Rng& rng) const {
  double total = 0.0;
  for (const auto& iv : intervals) total += iv[1] - iv[0];
  double pick = rng.uniform() * total;
  for (const auto& iv : intervals) {
    const double len = iv[1] - iv[0];
    if (pick < len || &iv == &intervals.back()) return iv[0] + std::min(pick, len);
    pick -= len;
  }
  return intervals.back()[1];
}

std::string_view to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "train";
}

Split split_from_string(std::string_view s) {
  for (Split sp : kAllSplits)
    if (to_string(sp) == s) return sp;
  throw ValidationError("unknown split '" + std::string(s) + "'");
}

std::string_view to_string(RuleKind r) {
  switch (r) {
    case RuleKind::None: return "none";
    case RuleKind::Ratio: return "ratio";
    case RuleKind::ThinWall: return "thin_wall";
  }
  return "none";
}

namespace {

RuleKind rule_kind_from_string(std::string_view s) {
  for (RuleKind r : {RuleKind::None, RuleKind::Ratio, RuleKind::ThinWall})
    if (to_string(r) == s) return r;
  throw ValidationError("unknown rule tag '" + std::string(s) + "'");
}

void validate_range(const RangeSet& r, const std::string& what) {
  if (r.intervals.empty()) throw ValidationError(what + ": range is empty");
  for (const auto& iv : r.intervals)
    if (!(iv[0] > 0.0) || !(iv[1] >= iv[0]) || !std::isfinite(iv[1]))
      throw ValidationError(what + ": intervals must be positive and ordered");
}

bool overlaps(const RangeSet& a, const RangeSet& b) {
  for (const auto& x : a.intervals)
    for (const auto& y : b.intervals)
      if (x[0] <= y[1] && y[0] <= x[1]) return true;
  return false;
}

}  // namespace

void validate(const GeneratorConfig& cfg) {
  if (cfg.train_count < 1 || cfg.val_count < 1 || cfg.test_count < 1)
    throw ValidationError("generator: split counts must be positive");
  validate_range(cfg.train_geometry.block_dims, "train block dims");
  validate_range(cfg.train_geometry.diameters, "train diameters");
  validate_range(cfg.test_geometry.block_dims, "test block dims");
  validate_range(cfg.test_geometry.diameters, "test diameters");
  if (overlaps(cfg.train_geometry.diameters, cfg.test_geometry.diameters) &&
      overlaps(cfg.train_geometry.block_dims, cfg.test_geometry.block_dims))
    throw ValidationError("generator: test geometry bands must be disjoint from the training bands");
  if (cfg.holes_min < 0 || cfg.holes_max < cfg.holes_min || cfg.holes_max > 8)
    throw ValidationError("generator: hole count range must satisfy 0 <= min <= max <= 8");
  if (!(cfg.near_boundary_fraction >= 0.0 && cfg.near_boundary_fraction <= 1.0))
    throw ValidationError("generator: near-boundary fraction must lie in [0, 1]");
  if (!(cfg.near_band > 0.0 && cfg.near_band < 1.0)) throw ValidationError("generator: near band must lie in (0, 1)");
  if (!(cfg.through_probability >= 0.0 && cfg.through_probability <= 1.0))
    throw ValidationError("generator: through-hole probability must lie in [0, 1]");
  validate(cfg.rules);
  const double T = cfg.rules.max_depth_diameter_ratio, W = cfg.rules.min_wall_thickness;
  if (!(cfg.far_ratio_min > 0.0 && cfg.far_ratio_min < (1.0 - cfg.near_band) * T))
    throw ValidationError("generator: far_ratio_min must lie below the near band");
  if (!(cfg.far_ratio_max > (1.0 + cfg.near_band) * T))
    throw ValidationError("generator: far_ratio_max must lie above the near band");
  if (!(cfg.far_wall_min > 0.0 && cfg.far_wall_min < (1.0 - cfg.near_band) * W))
    throw ValidationError("generator: far_wall_min must lie below the near band");
  if (cfg.resolution < 2 || cfg.padding < 0) throw ValidationError("generator: invalid grid resolution or padding");
  if (cfg.max_attempts < 1) throw ValidationError("generator: max_attempts must be positive");
}

GridSpec corpus_grid(const GeneratorConfig& cfg) {
  const double max_dim = std::max(cfg.train_geometry.block_dims.max(), cfg.test_geometry.block_dims.max());
  return centered_grid(max_dim, cfg.resolution, cfg.padding);
}

namespace {

json range_to_json(const RangeSet& r) { return r.intervals; }

RangeSet range_from_json(const json& j) {
  RangeSet r;
  r.intervals = j.get<std::vector<std::array<double, 2>>>();
  return r;
}

json grid_json(const GridSpec& g) {
  return {{"resolution", g.resolution},
          {"padding", g.padding},
          {"origin", {g.origin.x, g.origin.y, g.origin.z}},
          {"extent", g.extent},
          {"voxel_size", g.voxel_size()}};
}

json config_json(const GeneratorConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["counts"] = {{"train", c.train_count}, {"val", c.val_count}, {"test", c.test_count}};
  j["train_geometry"] = {{"block_dims", range_to_json(c.train_geometry.block_dims)},
                         {"diameters", range_to_json(c.train_geometry.diameters)}};
  j["test_geometry"] = {{"block_dims", range_to_json(c.test_geometry.block_dims)},
                        {"diameters", range_to_json(c.test_geometry.diameters)}};
  j["holes"] = {c.holes_min, c.holes_max};
  j["near_boundary_fraction"] = c.near_boundary_fraction;
  j["near_band"] = c.near_band;
  j["through_probability"] = c.through_probability;
  j["far_ratio"] = {c.far_ratio_min, c.far_ratio_max};
  j["far_wall_min"] = c.far_wall_min;
  j["rules"] = {{"max_depth_diameter_ratio", c.rules.max_depth_diameter_ratio},
                {"min_wall_thickness", c.rules.min_wall_thickness}};
  j["resolution"] = c.resolution;
  j["padding"] = c.padding;
  j["max_attempts"] = c.max_attempts;
  return j;
}

// Keys absent from j keep their defaults, so a config file may be partial.
GeneratorConfig config_from(const json& j) {
  GeneratorConfig c;
  auto get = [&j](const char* key, auto& dst) {
    if (j.contains(key)) dst = j.at(key).get<std::decay_t<decltype(dst)>>();
  };
  get("seed", c.seed);
  if (j.contains("counts")) {
    const json& n = j.at("counts");
    if (n.contains("train")) c.train_count = n.at("train");
    if (n.contains("val")) c.val_count = n.at("val");
    if (n.contains("test")) c.test_count = n.at("test");
  }
  for (auto [key, geo] : {std::pair{"train_geometry", &c.train_geometry}, std::pair{"test_geometry", &c.test_geometry}}) {
    if (!j.contains(key)) continue;
    const json& g = j.at(key);
    if (g.contains("block_dims")) geo->block_dims = range_from_json(g.at("block_dims"));
    if (g.contains("diameters")) geo->diameters = range_from_json(g.at("diameters"));
  }
  if (j.contains("holes")) {
    const auto h = j.at("holes").get<std::array<int, 2>>();
    c.holes_min = h[0];
    c.holes_max = h[1];
  }
  get("near_boundary_fraction", c.near_boundary_fraction);
  get("near_band", c.near_band);
  get("through_probability", c.through_probability);
  if (j.contains("far_ratio")) {
    const auto r = j.at("far_ratio").get<std::array<double, 2>>();
    c.far_ratio_min = r[0];
    c.far_ratio_max = r[1];
  }
  get("far_wall_min", c.far_wall_min);
  if (j.contains("rules")) {
    const json& r = j.at("rules");
    if (r.contains("max_depth_diameter_ratio")) c.rules.max_depth_diameter_ratio = r.at("max_depth_diameter_ratio");
    if (r.contains("min_wall_thickness")) c.rules.min_wall_thickness = r.at("min_wall_thickness");
  }
  get("resolution", c.resolution);
  get("padding", c.padding);
  get("max_attempts", c.max_attempts);
  validate(c);
  return c;
}

}  // namespace

std::string config_to_json(const GeneratorConfig& cfg) { return config_json(cfg).dump(2); }

GeneratorConfig config_from_json(const std::string& text) {
  try {
    return config_from(json::parse(text));
  } catch (const json::exception& e) {
    throw ValidationError(std::string("generator config: ") + e.what());
  }
}

namespace {

json record_to_json(const SampleRecord& r) {
  json j;
  j["id"] = r.id;
  j["split"] = std::string(to_string(r.split));
  j["tensor_file"] = r.tensor_file;
  j["part_file"] = r.part_file;
  j["label"] = std::string(to_string(r.label));
  j["violations"] = json::array();
  for (RuleKind v : r.violations) j["violations"].push_back(std::string(to_string(v)));
  j["near_boundary"] = r.near_boundary;
  j["near_rule"] = std::string(to_string(r.near_rule));
  j["near_value"] = r.near_value;
  j["max_ratio"] = r.max_ratio;
  j["min_wall"] = r.min_wall;
  j["hole_count"] = r.hole_count;
  return j;
}

SampleRecord record_from_json(const json& j) {
  SampleRecord r;
  r.id = j.at("id");
  r.split = split_from_string(j.at("split").get<std::string>());
  r.tensor_file = j.at("tensor_file");
  r.part_file = j.at("part_file");
  r.label = manufacturability_from_string(j.at("label").get<std::string>());
  for (const json& v : j.at("violations")) r.violations.push_back(rule_kind_from_string(v.get<std::string>()));
  r.near_boundary = j.at("near_boundary");
  r.near_rule = rule_kind_from_string(j.at("near_rule").get<std::string>());
  r.near_value = j.at("near_value");
  r.max_ratio = j.at("max_ratio");
  r.min_wall = j.at("min_wall");
  r.hole_count = j.at("hole_count");
  return r;
}

}  // namespace

std::string manifest_to_json(const DatasetManifest& m) {
  json j;
  j["format_version"] = m.format_version;
  j["generator"] = config_json(m.config);
  j["grid"] = grid_json(m.grid);
  j["samples"] = json::array();
  for (const SampleRecord& r : m.samples) j["samples"].push_back(record_to_json(r));
  return j.dump(1) + "\n";
}

DatasetManifest manifest_from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    DatasetManifest m;
    m.format_version = j.at("format_version");
    if (m.format_version != 1) throw IoError("manifest: unsupported format version");
    m.config = config_from(j.at("generator"));
    const json& g = j.at("grid");
    m.grid.resolution = g.at("resolution");
    m.grid.padding = g.at("padding");
    const auto o = g.at("origin").get<std::array<double, 3>>();
    m.grid.origin = {o[0], o[1], o[2]};
    m.grid.extent = g.at("extent");
    validate(m.grid);
    for (const json& s : j.at("samples")) m.samples.push_back(record_from_json(s));
    return m;
  } catch (const json::exception& e) {
    throw IoError(std::string("manifest: ") + e.what());
  }
}

namespace {

// Where a measured quantity sits relative to its threshold.
enum class Band { FarPass, NearPass, NearFail, FarFail };

Band ratio_band(double ratio, double T, double b) {
  if (ratio > (1.0 + b) * T) return Band::FarFail;
  if (ratio > T) return Band::NearFail;
  if (ratio >= (1.0 - b) * T) return Band::NearPass;
  return Band::FarPass;
}

Band wall_band(double wall, double W, double b) {
  if (wall < (1.0 - b) * W) return Band::FarFail;
  if (wall < W) return Band::NearFail;
  if (wall <= (1.0 + b) * W) return Band::NearPass;
  return Band::FarPass;
}

struct Interval {
  double lo, hi;
};

Interval ratio_interval(const GeneratorConfig& c, Band band) {
  const double T = c.rules.max_depth_diameter_ratio, b = c.near_band;
  switch (band) {
    case Band::FarPass: return {c.far_ratio_min, (1.0 - b) * T};
    case Band::NearPass: return {(1.0 - b) * T, T};
    case Band::NearFail: return {T, (1.0 + b) * T};
    case Band::FarFail: return {(1.0 + b) * T, c.far_ratio_max};
  }
  return {0, 0};
}

// FarPass has no upper end: the hole only has to keep at least lo clear.
Interval wall_interval(const GeneratorConfig& c, Band band) {
  const double W = c.rules.min_wall_thickness, b = c.near_band;
  switch (band) {
    case Band::FarPass: return {(1.0 + b) * W, std::numeric_limits<double>::infinity()};
    case Band::NearPass: return {W, (1.0 + b) * W};
    case Band::NearFail: return {(1.0 - b) * W, W};
    case Band::FarFail: return {c.far_wall_min, (1.0 - b) * W};
  }
  return {0, 0};
}

std::optional<HoleSpec> draw_hole(const GeneratorConfig& c, const SplitGeometry& geo, const Vec3& dims, Band rb,
                                  Band wb, Rng& rng) {
  HoleSpec h;
  h.entry_face = kAllFaces[rng.below(6)];
  const int axis = face_axis(h.entry_face);
  const double E = dims[axis];
  h.diameter = geo.diameters.sample(rng);
  const double r = 0.5 * h.diameter;

  const Interval ri = ratio_interval(c, rb);
  if (rng.bernoulli(c.through_probability)) {
    const double ratio = E / h.diameter;
    if (ratio < ri.lo || ratio > ri.hi) return std::nullopt;
    h.through = true;
    h.depth = E;
  } else {
    const double hi = std::min(ri.hi, E / h.diameter);
    if (hi <= ri.lo) return std::nullopt;
    h.depth = rng.uniform(ri.lo, hi) * h.diameter;
    if (h.depth >= E) return std::nullopt;
  }

  const auto [ua, va] = face_plane_axes(h.entry_face);
  const double hu = 0.5 * dims[ua], hv = 0.5 * dims[va];
  const Interval wi = wall_interval(c, wb);
  const double keep = wall_interval(c, Band::FarPass).lo;
  if (wb == Band::FarPass) {
    const double mu = hu - r - wi.lo, mv = hv - r - wi.lo;
    if (mu < 0.0 || mv < 0.0) return std::nullopt;
    h.center_uv = {rng.uniform(-mu, mu), rng.uniform(-mv, mv)};
  } else {
    // One side wall gets the target thickness, the other in-plane axis stays
    // clear of the band.
    const double wall = rng.uniform(wi.lo, wi.hi);
    const int side = static_cast<int>(rng.below(4));
    const int along = side / 2;
    const double sign = side % 2 == 0 ? 1.0 : -1.0;
    const double h_along = along == 0 ? hu : hv, h_other = along == 0 ? hv : hu;
    const double pos = h_along - r - wall;
    const double m_other = h_other - r - keep;
    if (pos < 0.0 || m_other < 0.0) return std::nullopt;
    h.center_uv[along] = sign * pos;
    h.center_uv[1 - along] = rng.uniform(-m_other, m_other);
  }
  return h;
}

std::string sample_id(Split split, int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s-%05d", std::string(to_string(split)).c_str(), index);
  return buf;
}

int split_count(const GeneratorConfig& c, Split s) {
  return s == Split::Train ? c.train_count : (s == Split::Val ? c.val_count : c.test_count);
}

}  // namespace

GeneratedPart generate_part(const GeneratorConfig& cfg, Split split, int index) {
  validate(cfg);
  if (index < 0) throw ValidationError("generator: negative sample index");
  const SplitGeometry& geo = split == Split::Test ? cfg.test_geometry : cfg.train_geometry;
  Rng rng = Rng::derive({cfg.seed, 0xDA7A5E7ull, static_cast<std::uint64_t>(split), static_cast<std::uint64_t>(index)});

  const int holes = cfg.holes_min + static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.holes_max - cfg.holes_min + 1)));
  const Manufacturability target =
      (index % 2 == 0 || holes == 0) ? Manufacturability::Manufacturable : Manufacturability::NonManufacturable;
  const bool near = holes > 0 && rng.bernoulli(cfg.near_boundary_fraction);
  RuleKind rule = RuleKind::None;
  if (holes > 0 && (near || target == Manufacturability::NonManufacturable))
    rule = rng.bernoulli(0.5) ? RuleKind::Ratio : RuleKind::ThinWall;

  Band focus = Band::FarPass;
  if (target == Manufacturability::NonManufacturable) focus = near ? Band::NearFail : Band::FarFail;
  else if (near) focus = Band::NearPass;
  const Band ratio_focus = rule == RuleKind::Ratio ? focus : Band::FarPass;
  const Band wall_focus = rule == RuleKind::ThinWall ? focus : Band::FarPass;
  const double T = cfg.rules.max_depth_diameter_ratio, W = cfg.rules.min_wall_thickness;

  for (int attempt = 0; attempt < cfg.max_attempts; ++attempt) {
    PartSpec part;
    part.id = sample_id(split, index);
    part.block_dims = {geo.block_dims.sample(rng), geo.block_dims.sample(rng), geo.block_dims.sample(rng)};
    bool ok = true;
    for (int i = 0; i < holes && ok; ++i) {
      const auto h = i == 0 ? draw_hole(cfg, geo, part.block_dims, ratio_focus, wall_focus, rng)
                            : draw_hole(cfg, geo, part.block_dims, Band::FarPass, Band::FarPass, rng);
      if (h) part.holes.push_back(*h);
      else ok = false;
    }
    if (!ok) continue;
    try {
      validate(part);
    } catch (const ValidationError&) {
      continue;
    }
    const RuleReport rep = check_rules(part, cfg.rules);
    if (holes > 0) {
      if (ratio_band(rep.max_ratio, T, cfg.near_band) != ratio_focus) continue;
      if (wall_band(rep.min_wall, W, cfg.near_band) != wall_focus) continue;
    }
    if (rep.label() != target) continue;
    if (target == Manufacturability::NonManufacturable && rep.offending_holes != std::vector<std::size_t>{0}) continue;

    GeneratedPart g;
    g.part = std::move(part);
    SampleRecord& r = g.record;
    r.id = g.part.id;
    r.split = split;
    r.tensor_file = std::string(to_string(split)) + "/" + r.id + ".vox";
    r.part_file = std::string(to_string(split)) + "/" + r.id + ".part.json";
    r.label = target;
    if (rep.ratio_violation) r.violations.push_back(RuleKind::Ratio);
    if (rep.thin_wall_violation) r.violations.push_back(RuleKind::ThinWall);
    if (r.violations.empty()) r.violations.push_back(RuleKind::None);
    r.near_boundary = near;
    r.near_rule = near ? rule : RuleKind::None;
    r.near_value = rule == RuleKind::Ratio ? rep.max_ratio : (rule == RuleKind::ThinWall ? rep.min_wall : 0.0);
    r.max_ratio = rep.max_ratio;
    r.min_wall = holes > 0 ? rep.min_wall : 0.0;
    r.hole_count = holes;
    return g;
  }
  throw NumericError("generator: no valid part for " + sample_id(split, index) + " after " +
                     std::to_string(cfg.max_attempts) + " attempts");
}

std::vector<GeneratedPart> generate_split(const GeneratorConfig& cfg, Split split) {
  validate(cfg);
  std::vector<GeneratedPart> out(static_cast<std::size_t>(split_count(cfg, split)));
  parallel_for_each(out.size(), [&](std::size_t i) { out[i] = generate_part(cfg, split, static_cast<int>(i)); });
  return out;
}

DatasetManifest generate(const GeneratorConfig& cfg, const std::filesystem::path& root) {
  validate(cfg);
  DatasetManifest m;
  m.config = cfg;
  m.grid = corpus_grid(cfg);
  for (Split split : kAllSplits) {
    std::filesystem::create_directories(root / std::string(to_string(split)));
    std::vector<SampleRecord> records(static_cast<std::size_t>(split_count(cfg, split)));
    parallel_for_each(records.size(), [&](std::size_t i) {
      GeneratedPart g = generate_part(cfg, split, static_cast<int>(i));
      VoxelTensor t = voxelize(g.part, m.grid);
      t.label = g.record.label == Manufacturability::Manufacturable ? 1 : 0;
      save_tensor(root / g.record.tensor_file, t);
      save_part(root / g.record.part_file, g.part, cfg.rules);
      records[i] = std::move(g.record);
    });
    m.samples.insert(m.samples.end(), records.begin(), records.end());
  }
  binio::write_file(root / "manifest.json", manifest_to_json(m));
  return m;
}

DatasetManifest load_manifest(const std::filesystem::path& root) {
  return manifest_from_json(binio::read_file(root / "manifest.json"));
}

SampleSet load_split(const std::filesystem::path& root, const DatasetManifest& m, Split split) {
  std::vector<const SampleRecord*> recs;
  for (const SampleRecord& r : m.samples)
    if (r.split == split) recs.push_back(&r);
  std::vector<Sample> samples(recs.size());
  parallel_for_each(recs.size(), [&](std::size_t i) {
    const SampleRecord& r = *recs[i];
    VoxelTensor t = load_tensor(root / r.tensor_file);
    const std::uint8_t expect = r.label == Manufacturability::Manufacturable ? 1 : 0;
    if (t.part_id != r.id || t.label != expect)
      throw IoError("dataset: tensor " + r.tensor_file + " disagrees with the manifest");
    samples[i] = {r.id, expect, CompactVoxels(t)};
  });
  SampleSet set;
  set.samples = std::move(samples);
  return set;
}

}  // namespace dfmcam
