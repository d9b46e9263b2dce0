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

#include "alrnet/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "alrnet/error.hpp"
#include "alrnet/log.hpp"
#include "alrnet/rng.hpp"
#include "csvutil.hpp"
#include "fmtutil.hpp"
#include "vec3.hpp"

namespace alr {

namespace {

struct Ellipsoid {
  Vec3 center;
  Vec3 axes;
};

// Margin (mm) between the lung surface and the grid border.
constexpr double kGridMarginMm = 2.0;
// Two lungs overlap slightly so the midline carries lung tissue around the
// trachea: centers sit at +-kLungOffset * a.
constexpr double kLungOffset = 0.92;

bool inside_shrunk(const Ellipsoid& e, const Vec3& p, double margin) {
  double s = 0.0;
  for (int k = 0; k < 3; ++k) {
    const double ax = e.axes[k] - margin;
    if (ax <= 0.0) return false;
    const double t = (p[k] - e.center[k]) / ax;
    s += t * t;
  }
  return s <= 1.0;
}

bool inside_lungs(const std::array<Ellipsoid, 2>& lungs, const Vec3& p, double margin) {
  return inside_shrunk(lungs[0], p, margin) || inside_shrunk(lungs[1], p, margin);
}

std::array<Ellipsoid, 2> make_lungs(const PhantomSpec& spec, Rng& rng) {
  std::array<Ellipsoid, 2> lungs;
  for (int side = 0; side < 2; ++side) {
    Vec3 ax = spec.lung_semi_axes_mm;
    for (auto& v : ax) v *= 1.0 + 0.25 * spec.jitter * rng.uniform(-1.0, 1.0);
    const double sign = side == 0 ? -1.0 : 1.0;
    lungs[side] = {{sign * kLungOffset * spec.lung_semi_axes_mm[0], 0.0, 0.0}, ax};
  }
  return lungs;
}

struct Geometry {
  std::array<Ellipsoid, 2> lungs;
  std::vector<BranchRecord> branches;
};

Geometry build_geometry(const PhantomSpec& spec) {
  spec.validate();
  Rng rng(derive_seed(spec.seed, {0x7EEull}));
  Geometry g;
  g.lungs = make_lungs(spec, rng);

  struct Frame {
    Vec3 dir;
    Vec3 split;
    int side;  // -1 / +1 once the tree has chosen a lung, 0 for the trachea
  };
  std::vector<Frame> frames;
  const double c = spec.lung_semi_axes_mm[2];

  BranchRecord root;
  root.id = 0;
  root.generation = 0;
  root.diameter_mm = 2.0 * spec.trachea_radius_mm;
  root.length_mm = spec.length_to_diameter * root.diameter_mm * (1.0 + 0.5 * spec.jitter * rng.uniform(-1.0, 1.0));
  root.start_mm = {0.0, 0.0, 0.25 * c};
  root.end_mm = add(root.start_mm, scale({0.0, 0.0, -1.0}, root.length_mm));
  g.branches.push_back(root);
  frames.push_back({{0.0, 0.0, -1.0}, {1.0, 0.0, 0.0}, 0});

  const double half_angle = 0.5 * spec.branch_angle_deg * M_PI / 180.0;
  for (std::size_t i = 0; i < g.branches.size(); ++i) {
    const BranchRecord parent = g.branches[i];
    const Frame pf = frames[i];
    if (parent.generation + 1 >= spec.tree_depth) continue;
    for (int child = 0; child < 2; ++child) {
      const double sign = child == 0 ? -1.0 : 1.0;
      const double phi = half_angle * (1.0 + 0.5 * spec.jitter * rng.uniform(-1.0, 1.0));
      Vec3 dir = add(scale(pf.dir, std::cos(phi)), scale(pf.split, sign * std::sin(phi)));
      const int side = pf.side != 0 ? pf.side : (dir[0] < 0.0 ? -1 : 1);
      if (parent.generation >= 1) {
        // Pull deeper generations toward the center of their lung.
        const Ellipsoid& lung = g.lungs[side < 0 ? 0 : 1];
        const Vec3 to_center = normalize(sub(lung.center, parent.end_mm));
        dir = normalize(add(dir, scale(to_center, 0.35)));
      }
      Vec3 split = cross(dir, pf.split);
      if (norm(split) < 1e-9) split = cross(dir, {0.0, 1.0, 0.0});
      split = normalize(split);

      BranchRecord b;
      b.id = static_cast<int>(g.branches.size());
      b.parent = parent.id;
      b.generation = parent.generation + 1;
      const double radius_jitter = 1.0 + 0.25 * spec.jitter * rng.uniform(-1.0, 1.0);
      b.diameter_mm = parent.diameter_mm * spec.taper * radius_jitter;
      double len = spec.length_to_diameter * b.diameter_mm * (1.0 + 0.5 * spec.jitter * rng.uniform(-1.0, 1.0));
      b.start_mm = parent.end_mm;
      const double r = 0.5 * b.diameter_mm;
      for (int shrink = 0; shrink < 8; ++shrink) {
        if (inside_lungs(g.lungs, add(b.start_mm, scale(dir, len)), r)) break;
        len *= 0.85;
      }
      b.length_mm = len;
      b.end_mm = add(b.start_mm, scale(dir, len));
      g.branches.push_back(b);
      frames.push_back({dir, split, side});
    }
  }
  return g;
}

double segment_distance(const Vec3& p1, const Vec3& q1, const Vec3& p2, const Vec3& q2) {
  // Closest points between two segments (Ericson, Real-Time Collision Detection 5.1.9).
  const Vec3 d1 = sub(q1, p1), d2 = sub(q2, p2), r = sub(p1, p2);
  const double a = dot(d1, d1), e = dot(d2, d2), f = dot(d2, r);
  double s = 0.0, t = 0.0;
  if (a <= 1e-12 && e <= 1e-12) return norm(r);
  if (a <= 1e-12) {
    t = std::clamp(f / e, 0.0, 1.0);
  } else {
    const double c = dot(d1, r);
    if (e <= 1e-12) {
      s = std::clamp(-c / a, 0.0, 1.0);
    } else {
      const double b = dot(d1, d2), denom = a * e - b * b;
      s = denom > 1e-12 ? std::clamp((b * f - c * e) / denom, 0.0, 1.0) : 0.0;
      t = (b * s + f) / e;
      if (t < 0.0) {
        t = 0.0;
        s = std::clamp(-c / a, 0.0, 1.0);
      } else if (t > 1.0) {
        t = 1.0;
        s = std::clamp((b - c) / a, 0.0, 1.0);
      }
    }
  }
  return norm(sub(add(p1, scale(d1, s)), add(p2, scale(d2, t))));
}

double point_segment_distance2(const Vec3& p, const Vec3& a, const Vec3& b) {
  const Vec3 ab = sub(b, a);
  const double len2 = dot(ab, ab);
  double t = len2 > 0.0 ? dot(sub(p, a), ab) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const Vec3 d = sub(p, add(a, scale(ab, t)));
  return dot(d, d);
}

void check_tree(const std::vector<BranchRecord>& br, const Vec3& spacing) {
  const double vox = std::max({spacing[0], spacing[1], spacing[2]});
  for (const auto& b : br) {
    if (b.diameter_mm < vox)
      throw ConfigError("branch " + std::to_string(b.id) + " is thinner than one voxel (diameter " +
                        fmt_g(b.diameter_mm, 4) + " mm)");
  }
  for (std::size_t i = 0; i < br.size(); ++i) {
    for (std::size_t j = i + 1; j < br.size(); ++j) {
      const auto& a = br[i];
      const auto& b = br[j];
      const bool adjacent = a.id == b.parent || b.id == a.parent || (a.parent == b.parent && a.parent >= 0);
      if (adjacent) continue;
      const double gap = segment_distance(a.start_mm, a.end_mm, b.start_mm, b.end_mm);
      if (gap < 0.5 * (a.diameter_mm + b.diameter_mm) + vox)
        throw ConfigError("branch " + std::to_string(b.id) + " overlaps branch " + std::to_string(a.id));
    }
  }
}

struct GridFrame {
  Dims3 dims;
  Vec3 spacing;
  Vec3 origin;  // physical coordinate of voxel (0,0,0)'s center

  Vec3 center(std::size_t x, std::size_t y, std::size_t z) const {
    return {origin[0] + x * spacing[0], origin[1] + y * spacing[1], origin[2] + z * spacing[2]};
  }
};

GridFrame make_frame(const std::array<Ellipsoid, 2>& lungs, const Vec3& spacing) {
  Vec3 half{};
  for (const auto& e : lungs)
    for (int k = 0; k < 3; ++k) half[k] = std::max(half[k], std::abs(e.center[k]) + e.axes[k]);
  GridFrame f;
  f.spacing = spacing;
  for (int k = 0; k < 3; ++k) {
    f.dims[k] = static_cast<std::size_t>(std::ceil(2.0 * (half[k] + kGridMarginMm) / spacing[k]));
    const double extent = static_cast<double>(f.dims[k]) * spacing[k];
    f.origin[k] = -0.5 * extent + 0.5 * spacing[k];
  }
  return f;
}

VoxelGrid voxelize_lungs(const std::array<Ellipsoid, 2>& lungs, const GridFrame& f) {
  VoxelGrid g(f.dims, f.spacing);
  for (std::size_t z = 0; z < f.dims[2]; ++z)
    for (std::size_t y = 0; y < f.dims[1]; ++y) {
      const Vec3 p0 = f.center(0, y, z);
      for (const auto& e : lungs) {
        const double ty = (p0[1] - e.center[1]) / e.axes[1];
        const double tz = (p0[2] - e.center[2]) / e.axes[2];
        const double rem = 1.0 - ty * ty - tz * tz;
        if (rem < 0.0) continue;
        const double half = e.axes[0] * std::sqrt(rem);
        const double lo = (e.center[0] - half - f.origin[0]) / f.spacing[0];
        const double hi = (e.center[0] + half - f.origin[0]) / f.spacing[0];
        const auto x0 = static_cast<std::ptrdiff_t>(std::ceil(lo));
        const auto x1 = static_cast<std::ptrdiff_t>(std::floor(hi));
        for (std::ptrdiff_t x = std::max<std::ptrdiff_t>(x0, 0);
             x <= std::min<std::ptrdiff_t>(x1, static_cast<std::ptrdiff_t>(f.dims[0]) - 1); ++x)
          g.set(static_cast<std::size_t>(x), y, z, true);
      }
    }
  return g;
}

VoxelGrid voxelize_tree(const std::vector<BranchRecord>& branches, const GridFrame& f) {
  VoxelGrid g(f.dims, f.spacing);
  for (const auto& b : branches) {
    const double r = 0.5 * b.diameter_mm;
    std::array<std::size_t, 3> lo{}, hi{};
    for (int k = 0; k < 3; ++k) {
      const double mn = std::min(b.start_mm[k], b.end_mm[k]) - r;
      const double mx = std::max(b.start_mm[k], b.end_mm[k]) + r;
      const double l = std::ceil((mn - f.origin[k]) / f.spacing[k]);
      const double h = std::floor((mx - f.origin[k]) / f.spacing[k]);
      lo[k] = static_cast<std::size_t>(std::clamp(l, 0.0, static_cast<double>(f.dims[k] - 1)));
      hi[k] = static_cast<std::size_t>(std::clamp(h, 0.0, static_cast<double>(f.dims[k] - 1)));
    }
    const double r2 = r * r;
    for (std::size_t z = lo[2]; z <= hi[2]; ++z)
      for (std::size_t y = lo[1]; y <= hi[1]; ++y)
        for (std::size_t x = lo[0]; x <= hi[0]; ++x)
          if (point_segment_distance2(f.center(x, y, z), b.start_mm, b.end_mm) <= r2) g.set(x, y, z, true);
  }
  return g;
}

std::string csv_real(double v) { return fmt_g9(v); }

}  // namespace

double stratum_in_plane_mm(int stratum) noexcept {
  static constexpr std::array<double, 4> kSpacing{0.547, 0.625, 0.703, 0.781};
  const auto i = static_cast<std::size_t>(((stratum % 4) + 4) % 4);
  return kSpacing[i];
}

Vec3 PhantomSpec::voxel_spacing() const noexcept {
  if (spacing_mm) return *spacing_mm;
  const double s = stratum_in_plane_mm(stratum);
  return {s, s, kFullLungSliceMm};
}

void PhantomSpec::validate() const {
  for (double a : lung_semi_axes_mm)
    if (!(a > 0.0)) throw ConfigError("lung semi-axes must be positive");
  if (!(trachea_radius_mm > 0.0)) throw ConfigError("trachea radius must be positive");
  if (tree_depth < 3) throw ConfigError("tree depth must be at least 3");
  if (!(taper > 0.0 && taper < 1.0)) throw ConfigError("taper must lie in (0,1)");
  if (!(jitter >= 0.0 && jitter <= 0.3)) throw ConfigError("jitter must lie in [0,0.3]");
  if (!(branch_angle_deg > 0.0 && branch_angle_deg < 180.0)) throw ConfigError("branch angle must lie in (0,180)");
  if (!(length_to_diameter > 0.0)) throw ConfigError("length/diameter ratio must be positive");
  for (double s : voxel_spacing())
    if (!(s > 0.0)) throw ConfigError("voxel spacing must be positive");
}

double analytic_alr(const std::vector<BranchRecord>& branches, double lung_volume_mm3) {
  if (branches.empty()) throw DegenerateError("tree has no branches");
  if (!(lung_volume_mm3 > 0.0)) throw DegenerateError("lung volume must be positive");
  const std::size_t k = std::min(branches.size(), kAlrBranchCount);
  double sum = 0.0;
  for (std::size_t i = 0; i < k; ++i) sum += branches[i].diameter_mm;
  return (sum / static_cast<double>(k)) / std::cbrt(lung_volume_mm3);
}

std::vector<BranchRecord> build_tree(const PhantomSpec& spec) { return build_geometry(spec).branches; }

PhantomPair gen_phantom(const PhantomSpec& spec, std::string id) {
  const Geometry geo = build_geometry(spec);
  const Vec3 spacing = spec.voxel_spacing();
  check_tree(geo.branches, spacing);

  const GridFrame frame = make_frame(geo.lungs, spacing);
  PhantomPair p;
  p.id = std::move(id);
  p.stratum = spec.stratum;
  p.branch_table = geo.branches;
  p.fl_lung = voxelize_lungs(geo.lungs, frame);
  p.fl_airway = voxelize_tree(geo.branches, frame);
  p.alr_gt = analytic_alr(geo.branches, volume_mm3(p.fl_lung));
  p.cc_lung = cardiac_crop(p.fl_lung, kCardiacZFraction, kCardiacSliceFactor);
  p.cc_airway = cardiac_crop(p.fl_airway, kCardiacZFraction, kCardiacSliceFactor);
  return p;
}

VoxelGrid cardiac_crop(const VoxelGrid& grid, double z_fraction, std::size_t slice_factor, std::size_t slice_offset) {
  if (!(z_fraction > 0.0 && z_fraction <= 1.0)) throw ConfigError("z_fraction must lie in (0,1]");
  if (slice_factor < 1) throw ConfigError("slice_factor must be >= 1");
  if (slice_offset >= slice_factor) throw ConfigError("slice_offset must be < slice_factor");
  const auto& d = grid.dims();
  const auto keep = static_cast<std::size_t>(std::floor(z_fraction * static_cast<double>(d[2]) + 1e-9));
  std::size_t nz = 0;
  for (std::size_t z = slice_offset; z < keep; z += slice_factor) ++nz;
  if (nz < 2) throw ConfigError("cardiac crop leaves fewer than 2 slices");
  Vec3 sp = grid.spacing();
  sp[2] *= static_cast<double>(slice_factor);
  VoxelGrid out({d[0], d[1], nz}, sp);
  const std::size_t plane = d[0] * d[1];
  for (std::size_t k = 0; k < nz; ++k) {
    const auto src = grid.data().subspan((slice_offset + k * slice_factor) * plane, plane);
    std::copy(src.begin(), src.end(), out.data().begin() + static_cast<std::ptrdiff_t>(k * plane));
  }
  return out;
}

std::string_view split_name(Split s) noexcept {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "?";
}

Split parse_split(std::string_view s) {
  if (s == "train") return Split::Train;
  if (s == "val") return Split::Val;
  if (s == "test") return Split::Test;
  throw ConfigError("unknown split '" + std::string(s) + "'");
}

std::vector<const ManifestRow*> Manifest::select(Split s) const {
  std::vector<const ManifestRow*> out;
  for (const auto& r : rows)
    if (r.split == s) out.push_back(&r);
  return out;
}

std::vector<Split> assign_splits(const std::vector<int>& strata, std::uint64_t seed) {
  std::map<int, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < strata.size(); ++i) members[strata[i]].push_back(i);
  std::vector<Split> out(strata.size(), Split::Train);
  for (auto& [stratum, idx] : members) {
    Rng rng(derive_seed(seed, {0x5B117ull, static_cast<std::uint64_t>(stratum)}));
    rng.shuffle(idx.begin(), idx.end());
    const auto n = idx.size();
    const auto n_test = static_cast<std::size_t>(std::lround(0.2 * static_cast<double>(n)));
    const auto n_val = static_cast<std::size_t>(std::lround(0.2 * static_cast<double>(n - n_test)));
    for (std::size_t k = 0; k < n; ++k) {
      if (k < n_test) out[idx[k]] = Split::Test;
      else if (k < n_test + n_val) out[idx[k]] = Split::Val;
    }
  }
  return out;
}

PhantomSpec sample_spec(std::uint64_t master_seed, std::size_t index, int stratum, int attempt) {
  Rng rng(derive_seed(master_seed, {0x5EC5ull, index, static_cast<std::uint64_t>(attempt)}));
  PhantomSpec s;
  s.seed = rng.next_u64();
  s.stratum = stratum;
  const double size = rng.uniform(0.85, 1.15);
  const Vec3 base{32.0, 24.0, 44.0};
  for (int k = 0; k < 3; ++k) s.lung_semi_axes_mm[k] = base[k] * size * (1.0 + 0.05 * rng.uniform(-1.0, 1.0));
  s.trachea_radius_mm = rng.uniform(3.0, 4.2);
  s.taper = rng.uniform(0.76, 0.84);
  s.branch_angle_deg = rng.uniform(60.0, 80.0);
  s.jitter = 0.1;
  s.tree_depth = 5;
  return s;
}

std::filesystem::path gen_dataset(const DatasetOptions& opts, const std::filesystem::path& out_dir) {
  if (opts.strata_count < 1) throw ConfigError("--strata must be at least 1");
  if (opts.n < static_cast<std::size_t>(opts.strata_count)) throw ConfigError("--n must be at least --strata");
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir / "volumes", ec);
  if (ec) throw IoError("cannot create '" + (out_dir / "volumes").string() + "': " + ec.message());

  std::vector<int> strata(opts.n);
  for (std::size_t i = 0; i < opts.n; ++i) strata[i] = static_cast<int>(i % static_cast<std::size_t>(opts.strata_count));
  const auto splits = assign_splits(strata, opts.master_seed);

  std::ostringstream manifest;
  manifest << "id,fl_lung,fl_airway,cc_lung,cc_airway,alr_gt,stratum,split\n";
  std::ostringstream rescan;
  rescan << "id,cc_lung_a,cc_airway_a,cc_lung_b,cc_airway_b,alr_gt,stratum\n";

  for (std::size_t i = 0; i < opts.n; ++i) {
    char idbuf[16];
    std::snprintf(idbuf, sizeof idbuf, "P%04zu", i);
    const std::string id = idbuf;
    PhantomPair p;
    for (int attempt = 0;; ++attempt) {
      try {
        p = gen_phantom(sample_spec(opts.master_seed, i, strata[i], attempt), id);
        break;
      } catch (const ConfigError& e) {
        if (attempt >= 50) throw;
        log_debug("phantom " + id + " attempt " + std::to_string(attempt) + " rejected: " + e.what());
      }
    }
    const std::string stem = "volumes/" + id;
    write_mvol(p.fl_lung, out_dir / (stem + "_fl_lung.mvol"));
    write_mvol(p.fl_airway, out_dir / (stem + "_fl_airway.mvol"));
    write_mvol(p.cc_lung, out_dir / (stem + "_cc_lung.mvol"));
    write_mvol(p.cc_airway, out_dir / (stem + "_cc_airway.mvol"));
    manifest << id << ',' << stem << "_fl_lung.mvol," << stem << "_fl_airway.mvol," << stem << "_cc_lung.mvol,"
             << stem << "_cc_airway.mvol," << csv_real(p.alr_gt) << ',' << p.stratum << ',' << split_name(splits[i])
             << '\n';

    if (opts.rescan) {
      Rng rng(derive_seed(opts.master_seed, {0x2E5Cull, i}));
      for (const char* tag : {"a", "b"}) {
        const double zf = kCardiacZFraction * (1.0 + 0.05 * rng.uniform(-1.0, 1.0));
        const auto off = static_cast<std::size_t>(rng.below(kCardiacSliceFactor));
        write_mvol(cardiac_crop(p.fl_lung, zf, kCardiacSliceFactor, off), out_dir / (stem + "_rs" + tag + "_lung.mvol"));
        write_mvol(cardiac_crop(p.fl_airway, zf, kCardiacSliceFactor, off),
                   out_dir / (stem + "_rs" + tag + "_airway.mvol"));
      }
      rescan << id << ',' << stem << "_rsa_lung.mvol," << stem << "_rsa_airway.mvol," << stem << "_rsb_lung.mvol,"
             << stem << "_rsb_airway.mvol," << csv_real(p.alr_gt) << ',' << p.stratum << '\n';
    }
    if ((i + 1) % 50 == 0) log_info("generated " + std::to_string(i + 1) + "/" + std::to_string(opts.n) + " phantoms");
  }
  const auto path = out_dir / "manifest.csv";
  write_text_file(path, manifest.str());
  if (opts.rescan) write_text_file(out_dir / "rescan.csv", rescan.str());
  return path;
}

Manifest read_manifest(const std::filesystem::path& path) {
  const auto table = read_csv(path, {"id", "fl_lung", "fl_airway", "cc_lung", "cc_airway", "alr_gt", "stratum", "split"});
  const auto base = path.parent_path();
  Manifest m;
  m.path = path;
  for (const auto& rec : table) {
    ManifestRow r;
    r.id = rec[0];
    r.fl_lung = base / rec[1];
    r.fl_airway = base / rec[2];
    r.cc_lung = base / rec[3];
    r.cc_airway = base / rec[4];
    r.alr_gt = parse_real(rec[5], "alr_gt");
    r.stratum = static_cast<int>(parse_int(rec[6], "stratum"));
    try {
      r.split = parse_split(rec[7]);
    } catch (const ConfigError&) {
      throw FormatError("split", "unknown value '" + rec[7] + "'");
    }
    m.rows.push_back(std::move(r));
  }
  return m;
}

std::vector<RescanRow> read_rescan_manifest(const std::filesystem::path& path) {
  const auto table =
      read_csv(path, {"id", "cc_lung_a", "cc_airway_a", "cc_lung_b", "cc_airway_b", "alr_gt", "stratum"});
  const auto base = path.parent_path();
  std::vector<RescanRow> rows;
  for (const auto& rec : table) {
    RescanRow r;
    r.id = rec[0];
    r.cc_lung_a = base / rec[1];
    r.cc_airway_a = base / rec[2];
    r.cc_lung_b = base / rec[3];
    r.cc_airway_b = base / rec[4];
    r.alr_gt = parse_real(rec[5], "alr_gt");
    r.stratum = static_cast<int>(parse_int(rec[6], "stratum"));
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace alr
