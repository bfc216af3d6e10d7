#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "rca/dataset.hpp"

namespace fixture {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "rca");
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

std::string slurp(const std::filesystem::path& p);
void spit(const std::filesystem::path& p, const std::string& text);

// Uniform [0, 1) values.
rca::Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed);

// Columns named f0, f1, ...
rca::Dataset named(const rca::Matrix& x, std::vector<int> labels);

// Relative path -> file bytes for every regular file below `dir`.
std::vector<std::pair<std::string, std::string>> snapshot(const std::filesystem::path& dir);

}  // namespace fixture
