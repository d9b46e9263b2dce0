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
#include <cstdint>
#include <vector>

#include "alrnet/volgrid.hpp"

namespace alr {

struct Voxel {
  std::int32_t x = 0, y = 0, z = 0;
  friend auto operator<=>(const Voxel&, const Voxel&) = default;
};

/// Curve skeleton of a binary mask. Voxels are kept sorted (x, y, z) so
/// lookups are binary searches and output is reproducible.
class Skeleton {
 public:
  Skeleton() = default;
  Skeleton(Dims3 dims, Vec3 spacing, std::vector<Voxel> voxels);

  const Dims3& dims() const noexcept { return dims_; }
  const Vec3& spacing() const noexcept { return spacing_; }
  const std::vector<Voxel>& voxels() const noexcept { return voxels_; }
  std::size_t size() const noexcept { return voxels_.size(); }
  bool empty() const noexcept { return voxels_.empty(); }

  bool contains(const Voxel& v) const noexcept;
  /// 26-neighbours of `v` that belong to the skeleton, in sorted order.
  std::vector<Voxel> neighbors(const Voxel& v) const;

 private:
  Dims3 dims_{0, 0, 0};
  Vec3 spacing_{1.0, 1.0, 1.0};
  std::vector<Voxel> voxels_;
};

/// Directional simple-point thinning: each pass sweeps the six face
/// directions and deletes border voxels that are simple (removal changes
/// neither the 26-connected foreground nor the 6-connected background
/// topology of the 3x3x3 neighbourhood) and are not curve end points.
Skeleton skeletonize(const VoxelGrid& grid);

/// True when deleting the center of the 3x3x3 neighbourhood `nbhd`
/// (index dx+1 + 3(dy+1) + 9(dz+1)) preserves topology.
bool is_simple_point(const std::array<std::uint8_t, 27>& nbhd) noexcept;

/// Number of 26-connected foreground components.
std::size_t count_components_26(const VoxelGrid& grid);
std::size_t count_components_26(const Skeleton& skel);

enum class EndKind { Junction, Terminal };

struct Branch {
  int id = 0;
  std::vector<Voxel> path;
  std::array<EndKind, 2> end_kinds{EndKind::Terminal, EndKind::Terminal};
};

struct BranchGraph {
  std::vector<Branch> branches;
  /// Junction clusters: 26-connected groups of skeleton voxels that have at
  /// least three skeleton neighbours.
  std::vector<std::vector<Voxel>> junctions;
};

BranchGraph extract_branches(const Skeleton& skel);

struct BranchMeasure {
  int branch_id = 0;
  double mean_diameter_mm = 0.0;
  double length_mm = 0.0;
  int n_sections = 0;
};

/// Minimum path length for a diameter measurement.
inline constexpr std::size_t kMinBranchVoxels = 6;

/// Mean lumen diameter from cross-sections along the middle two thirds of
/// the branch. Throws SkippedError when the branch is shorter than
/// kMinBranchVoxels.
BranchMeasure branch_diameter(const VoxelGrid& grid, const Branch& branch);

/// Cross-sectional area (mm^2) of the mask in the plane through `center`
/// with unit normal `normal`, restricted to the region connected to the
/// center and to a disc of radius `cap_mm`.
double cross_section_area(const VoxelGrid& grid, const Vec3& center_mm, const Vec3& normal, double cap_mm);

/// Euclidean distance (mm) from each voxel center to the nearest background
/// voxel center; 0 on background. Voxels outside the grid count as
/// background.
std::vector<double> distance_transform(const VoxelGrid& grid);

inline constexpr std::size_t kProxyMaxBranches = 25;

struct ProxyResult {
  double proxy_alr = 0.0;
  int n_branches_used = 0;
  double mean_diam_mm = 0.0;
  double lung_vol_mm3 = 0.0;
};

/// Mean diameter of the (up to) 25 widest measurable branches over the cube
/// root of the lung volume. Throws DegenerateError if no branch can be
/// measured.
ProxyResult proxy_alr(const VoxelGrid& lung, const VoxelGrid& airway);

}  // namespace alr
