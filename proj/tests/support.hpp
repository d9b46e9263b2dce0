// Copyright 2026 The alrnet Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "alrnet/rng.hpp"
#include "alrnet/volgrid.hpp"

namespace alrtest {

namespace fs = std::filesystem;

// Scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "t") {
    static std::atomic<int> counter{0};
    path_ = fs::temp_directory_path() /
            ("alrnet_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const noexcept { return path_; }
  fs::path operator/(const std::string& s) const { return path_ / s; }

 private:
  fs::path path_;
};

inline std::string file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_bytes(const fs::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary);
  out << s;
}

inline alr::VoxelGrid random_grid(alr::Rng& rng, alr::Dims3 d, double p, alr::Vec3 sp = {1.0, 1.0, 1.0}) {
  alr::VoxelGrid g(d, sp);
  for (auto& v : g.data()) v = rng.bernoulli(p) ? 1 : 0;
  return g;
}

// Cylinder of radius `r` voxels along z through the xy center, covering z in [z0, z1).
inline alr::VoxelGrid z_tube(alr::Dims3 d, double r, std::size_t z0, std::size_t z1, alr::Vec3 sp = {1.0, 1.0, 1.0}) {
  alr::VoxelGrid g(d, sp);
  const double cx = (static_cast<double>(d[0]) - 1.0) / 2.0, cy = (static_cast<double>(d[1]) - 1.0) / 2.0;
  for (std::size_t z = z0; z < z1; ++z)
    for (std::size_t y = 0; y < d[1]; ++y)
      for (std::size_t x = 0; x < d[0]; ++x) {
        const double dx = static_cast<double>(x) - cx, dy = static_cast<double>(y) - cy;
        if (dx * dx + dy * dy <= r * r) g.set(x, y, z, true);
      }
  return g;
}

// Relative error with an absolute floor so values near zero compare sensibly.
inline double rel_err(double a, double b, double floor = 1e-8) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

}  // namespace alrtest
