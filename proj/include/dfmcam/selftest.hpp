#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace dfmcam {

struct CheckResult {
  std::string name;
  bool passed = false;
  double seconds = 0.0;
  std::string detail;
};

/// Gradient checks, the conv oracle, interpolation and renderer fixtures,
/// format round trips and, when given, integrity of a checkpoint file.
std::vector<CheckResult> run_selftest(const std::optional<std::filesystem::path>& checkpoint = std::nullopt);

}  // namespace dfmcam
