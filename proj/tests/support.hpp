#pragma once

#include "wayfinder/gridworld.hpp"

#include <filesystem>
#include <random>
#include <string>

namespace wayfinder::test {

inline std::string fixture(const std::string& rel) { return std::string(WAYFINDER_FIXTURES) + "/" + rel; }

inline GridMap fixture_map(const std::string& id) { return load_map_file(fixture("maps/" + id + ".map")); }

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("wayfinder-test-" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::string str(const std::string& rel = {}) const { return rel.empty() ? path_.string() : (path_ / rel).string(); }

 private:
  std::filesystem::path path_;
};

}  // namespace wayfinder::test
