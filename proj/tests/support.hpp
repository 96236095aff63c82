#pragma once

#include <filesystem>
#include <string>

#include "gridloop/error.hpp"

namespace testing_support {

inline std::filesystem::path source_path(const std::string& relative) {
  return std::filesystem::path(GRIDLOOP_SOURCE_DIR) / relative;
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("gridloop_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

template <class F>
gridloop::ErrorCode error_code_of(F&& f) {
  try {
    f();
  } catch (const gridloop::Error& e) {
    return e.code();
  }
  return static_cast<gridloop::ErrorCode>(0);
}

}  // namespace testing_support
