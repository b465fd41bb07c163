#pragma once

#include <doctest.h>

#include <filesystem>
#include <string>

#include "grad_check.hpp"

namespace testing {

inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("dfmcam_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace testing
