#include "dfmcam/part_io.hpp"

#include <json.hpp>

#include "dfmcam/binary_io.hpp"
#include "dfmcam/error.hpp"

namespace dfmcam {

using nlohmann::json;

std::string part_to_text(const PartSpec& part, const DfmRuleSet& rules) {
  json holes = json::array();
  for (const HoleSpec& h : part.holes) {
    json jh;
    jh["entry_face"] = std::string(to_string(h.entry_face));
    jh["center_uv"] = {h.center_uv[0], h.center_uv[1]};
    jh["diameter"] = h.diameter;
    jh["through"] = h.through;
    if (!h.through) jh["depth"] = h.depth;
    holes.push_back(std::move(jh));
  }
  const RuleReport report = check_rules(part, rules);
  json j;
  j["format_version"] = kPartFormatVersion;
  j["id"] = part.id;
  j["block_dims"] = {part.block_dims.x, part.block_dims.y, part.block_dims.z};
  j["holes"] = std::move(holes);
  j["rules"] = {{"max_depth_diameter_ratio", rules.max_depth_diameter_ratio},
                {"min_wall_thickness", rules.min_wall_thickness}};
  j["label"] = std::string(to_string(report.label()));
  return j.dump(2) + "\n";
}

PartSpec part_from_text(const std::string& text) {
  try {
    const json j = json::parse(text);
    const int version = j.at("format_version").get<int>();
    if (version != kPartFormatVersion)
      throw ValidationError("unsupported part format version " + std::to_string(version));
    PartSpec part;
    part.id = j.at("id").get<std::string>();
    const auto dims = j.at("block_dims").get<std::vector<double>>();
    if (dims.size() != 3) throw ValidationError("block_dims must have 3 entries");
    part.block_dims = {dims[0], dims[1], dims[2]};
    for (const json& jh : j.at("holes")) {
      HoleSpec h;
      h.entry_face = face_from_string(jh.at("entry_face").get<std::string>());
      const auto uv = jh.at("center_uv").get<std::vector<double>>();
      if (uv.size() != 2) throw ValidationError("center_uv must have 2 entries");
      h.center_uv = {uv[0], uv[1]};
      h.diameter = jh.at("diameter").get<double>();
      h.through = jh.value("through", false);
      h.depth = h.through ? part.block_dims[face_axis(h.entry_face)] : jh.at("depth").get<double>();
      part.holes.push_back(h);
    }
    validate(part);
    return part;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed part record: ") + e.what());
  }
}

void save_part(const std::filesystem::path& path, const PartSpec& part, const DfmRuleSet& rules) {
  binio::write_file(path, part_to_text(part, rules));
}

PartSpec load_part(const std::filesystem::path& path) { return part_from_text(binio::read_file(path)); }

}  // namespace dfmcam
