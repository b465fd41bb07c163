#pragma once

#include <filesystem>
#include <string>

#include "dfmcam/geometry.hpp"

namespace dfmcam {

inline constexpr int kPartFormatVersion = 1;

/// Human-readable JSON record: format version, block dims, hole list and
/// the label derived under the given rules.
std::string part_to_text(const PartSpec& part, const DfmRuleSet& rules);

/// Parses a record produced by part_to_text. The stored label is not trusted;
/// re-derive it with label(). Throws ValidationError on malformed input.
PartSpec part_from_text(const std::string& text);

void save_part(const std::filesystem::path& path, const PartSpec& part, const DfmRuleSet& rules);
PartSpec load_part(const std::filesystem::path& path);

}  // namespace dfmcam
