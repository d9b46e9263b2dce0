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

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace alr {

using Dims3 = std::array<std::size_t, 3>;
using Vec3 = std::array<double, 3>;

/// Binary occupancy volume with physical voxel spacing in millimetres.
///
/// Axes: x = left-right, y = anterior-posterior, z = inferior-superior.
/// Storage is x-fastest: index = x + nx * (y + ny * z).
class VoxelGrid {
 public:
  VoxelGrid() = default;
  /// All-zero grid. Throws ConfigError on zero dims or non-positive spacing.
  VoxelGrid(Dims3 dims, Vec3 spacing_mm);
  /// Takes ownership of `data`; every value must be 0 or 1.
  VoxelGrid(Dims3 dims, Vec3 spacing_mm, std::vector<std::uint8_t> data);

  const Dims3& dims() const noexcept { return dims_; }
  const Vec3& spacing() const noexcept { return spacing_; }
  std::size_t size() const noexcept { return data_.size(); }
  Vec3 extent_mm() const noexcept;

  std::size_t index(std::size_t x, std::size_t y, std::size_t z) const noexcept {
    return x + dims_[0] * (y + dims_[1] * z);
  }
  std::uint8_t at(std::size_t x, std::size_t y, std::size_t z) const noexcept { return data_[index(x, y, z)]; }
  void set(std::size_t x, std::size_t y, std::size_t z, bool on) noexcept { data_[index(x, y, z)] = on ? 1 : 0; }

  std::span<const std::uint8_t> data() const noexcept { return data_; }
  std::span<std::uint8_t> data() noexcept { return data_; }

  std::size_t count() const noexcept;

  friend bool operator==(const VoxelGrid&, const VoxelGrid&) = default;

 private:
  Dims3 dims_{0, 0, 0};
  Vec3 spacing_{1.0, 1.0, 1.0};
  std::vector<std::uint8_t> data_;
};

enum class View { Axial, Coronal, Sagittal };

std::string_view view_name(View v) noexcept;      // "axial", "coronal", "sagittal"
std::string_view view_short(View v) noexcept;     // "ax", "cor", "sag"
View parse_view(std::string_view s);              // accepts either form
inline constexpr std::array<View, 3> kAllViews{View::Coronal, View::Sagittal, View::Axial};

/// Three-channel 2-D projection of an airway/lung mask pair along one axis.
/// Channels are airway mean, airway MIP and lung mean; each plane is
/// height x width, row-major.
struct ViewStack {
  static constexpr std::size_t kChannels = 3;
  enum Channel : std::size_t { AirwayMean = 0, AirwayMip = 1, LungMean = 2 };

  View view = View::Coronal;
  std::size_t width = 0;
  std::size_t height = 0;
  std::array<double, 2> pixel_mm{1.0, 1.0};  // (column, row) spacing
  std::vector<double> values;                // channel-major: c * H * W + r * W + col

  ViewStack() = default;
  ViewStack(View v, std::size_t w, std::size_t h);

  double& at(std::size_t c, std::size_t r, std::size_t col) noexcept { return values[(c * height + r) * width + col]; }
  double at(std::size_t c, std::size_t r, std::size_t col) const noexcept { return values[(c * height + r) * width + col]; }
  std::span<const double> channel(std::size_t c) const noexcept {
    return std::span<const double>(values).subspan(c * width * height, width * height);
  }

  friend bool operator==(const ViewStack&, const ViewStack&) = default;
};

// --- MVOL I/O ---------------------------------------------------------------
//
// Layout: the line "MVOL1", one JSON header line
//   {"dims":[nx,ny,nz],"spacing":[sx,sy,sz],"type":"u8"}
// then nx*ny*nz payload values, x-fastest. "u8" is one byte per voxel;
// "f64" is a little-endian IEEE double per voxel (used for projection stacks,
// which add a "view" member to the header).

void write_mvol(const VoxelGrid& grid, const std::filesystem::path& path);
VoxelGrid read_mvol(const std::filesystem::path& path);

/// Stores a ViewStack as an f64 MVOL with dims (width, height, 3).
void write_view_stack(const ViewStack& stack, const std::filesystem::path& path);
ViewStack read_view_stack(const std::filesystem::path& path);

/// 8-bit binary PGM of one channel, values scaled by 255.
void write_pgm(const ViewStack& stack, std::size_t channel, const std::filesystem::path& path);

// --- geometry -----------------------------------------------------------------

/// Zero-pads `grid` symmetrically so its physical extent reaches
/// `target_extent_mm` (to within one voxel). Content is centered; when the
/// added voxel count is odd the extra voxel goes to the high side.
VoxelGrid pad_to_fov(const VoxelGrid& grid, Vec3 target_extent_mm);

/// Nearest-neighbour resampling to `target_dims`, preserving physical extent.
/// Ties between two source centers go to the lower index.
VoxelGrid resample_nn(const VoxelGrid& grid, Dims3 target_dims);

/// Source index chosen by resample_nn for output index `i` along an axis.
std::size_t nearest_source_index(std::size_t i, std::size_t n_in, std::size_t n_out) noexcept;

ViewStack project(const VoxelGrid& airway, const VoxelGrid& lung, View view);

double volume_mm3(const VoxelGrid& grid) noexcept;

}  // namespace alr
