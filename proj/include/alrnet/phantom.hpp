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

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "alrnet/volgrid.hpp"

namespace alr {

/// Number of breadth-first branches averaged into the ground-truth ALR.
inline constexpr std::size_t kAlrBranchCount = 19;

/// Full-lung slice spacing; cardiac crops thin this by the slice factor.
inline constexpr double kFullLungSliceMm = 0.5;
inline constexpr double kCardiacZFraction = 2.0 / 3.0;
inline constexpr std::size_t kCardiacSliceFactor = 5;

/// In-plane spacing used for generator variant `stratum` (the synthetic
/// stand-in for the cardiac scanner model).
double stratum_in_plane_mm(int stratum) noexcept;

struct PhantomSpec {
  std::uint64_t seed = 0;
  Vec3 lung_semi_axes_mm{32.0, 24.0, 44.0};
  double trachea_radius_mm = 3.6;
  int tree_depth = 5;
  double taper = 0.8;             // child radius = taper * parent radius
  double branch_angle_deg = 70.0; // full angle between the two children
  double jitter = 0.1;            // relative geometric perturbation, [0, 0.3]
  int stratum = 0;
  double length_to_diameter = 2.5;
  /// Voxel spacing; defaults to (stratum in-plane, same, kFullLungSliceMm).
  std::optional<Vec3> spacing_mm;

  Vec3 voxel_spacing() const noexcept;
  void validate() const;
};

struct BranchRecord {
  int id = 0;           // breadth-first index, 0 = trachea
  int parent = -1;
  int generation = 0;
  double diameter_mm = 0.0;
  double length_mm = 0.0;
  Vec3 start_mm{};      // grid-centered physical coordinates
  Vec3 end_mm{};
};

struct PhantomPair {
  std::string id;
  VoxelGrid fl_lung, fl_airway;
  VoxelGrid cc_lung, cc_airway;
  double alr_gt = 0.0;
  std::vector<BranchRecord> branch_table;
  int stratum = 0;
};

/// Ground-truth ALR: mean of the first 19 breadth-first analytic diameters
/// (all of them for trees shallower than depth 5) over the cube root of the
/// lung volume.
double analytic_alr(const std::vector<BranchRecord>& branches, double lung_volume_mm3);

/// Branch geometry only (no voxelization).
std::vector<BranchRecord> build_tree(const PhantomSpec& spec);

/// Deterministic paired full-lung / cardiac phantom. Throws ConfigError
/// naming the first failing branch when tubes overlap or are thinner than
/// one voxel.
PhantomPair gen_phantom(const PhantomSpec& spec, std::string id = "P0000");

/// Keeps the inferior `z_fraction` of the slices, then every
/// `slice_factor`-th slice starting at `slice_offset`.
VoxelGrid cardiac_crop(const VoxelGrid& grid, double z_fraction, std::size_t slice_factor,
                       std::size_t slice_offset = 0);

// --- datasets -------------------------------------------------------------------

enum class Split { Train, Val, Test };
std::string_view split_name(Split s) noexcept;
Split parse_split(std::string_view s);

struct ManifestRow {
  std::string id;
  std::filesystem::path fl_lung, fl_airway, cc_lung, cc_airway;  // absolute after load
  double alr_gt = 0.0;
  int stratum = 0;
  Split split = Split::Train;
};

struct Manifest {
  std::filesystem::path path;
  std::vector<ManifestRow> rows;

  std::vector<const ManifestRow*> select(Split s) const;
};

/// Per-stratum split assignment: of each stratum's n members, round(0.2 n)
/// go to test and round(0.2 (n - n_test)) of the remainder to validation.
std::vector<Split> assign_splits(const std::vector<int>& strata, std::uint64_t seed);

struct DatasetOptions {
  std::size_t n = 0;
  std::uint64_t master_seed = 0;
  int strata_count = 1;
  bool rescan = false;  // also write two jittered cardiac crops per subject
};

/// Subject spec drawn from the dataset's default ranges.
PhantomSpec sample_spec(std::uint64_t master_seed, std::size_t index, int stratum, int attempt);

/// Writes volumes under `out_dir/volumes/` and `out_dir/manifest.csv`
/// (plus `rescan.csv` when requested). Returns the manifest path.
std::filesystem::path gen_dataset(const DatasetOptions& opts, const std::filesystem::path& out_dir);

Manifest read_manifest(const std::filesystem::path& path);

struct RescanRow {
  std::string id;
  std::filesystem::path cc_lung_a, cc_airway_a, cc_lung_b, cc_airway_b;
  double alr_gt = 0.0;
  int stratum = 0;
};

std::vector<RescanRow> read_rescan_manifest(const std::filesystem::path& path);

}  // namespace alr
