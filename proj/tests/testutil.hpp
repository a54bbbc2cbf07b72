#pragma once

#include <doctest.h>

#include <filesystem>
#include <functional>
#include <string>

#include "cogenav/errors.hpp"

namespace cogenav::testing {

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("cogenav_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

// Runs `fn` and returns the code of the cogenav::Error it throws.
inline ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected cogenav::Error");
  return ErrorCode::kConfig;
}

}  // namespace cogenav::testing
