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

#include <algorithm>
#include <bit>
#include <deque>

#include "alrnet/airway.hpp"

namespace alr {

namespace {

// Neighbourhood position p = (dx+1) + 3(dy+1) + 9(dz+1); 13 is the center.
constexpr int kCenter = 13;

struct NbhdTables {
  std::array<std::uint32_t, 27> adj26{};  // 26-adjacent positions within the cube
  std::array<std::uint32_t, 27> adj6{};   // 6-adjacent positions within the cube
  std::uint32_t n18 = 0;                  // 18-neighbourhood (faces + edges), center excluded
  std::uint32_t faces = 0;                // the six face neighbours

  constexpr NbhdTables() {
    for (int p = 0; p < 27; ++p) {
      const int px = p % 3, py = (p / 3) % 3, pz = p / 9;
      for (int q = 0; q < 27; ++q) {
        if (q == p) continue;
        const int qx = q % 3, qy = (q / 3) % 3, qz = q / 9;
        const int ax = px > qx ? px - qx : qx - px;
        const int ay = py > qy ? py - qy : qy - py;
        const int az = pz > qz ? pz - qz : qz - pz;
        if (ax <= 1 && ay <= 1 && az <= 1) adj26[p] |= 1u << q;
        if (ax + ay + az == 1) adj6[p] |= 1u << q;
      }
      const int manhattan = (px == 1 ? 0 : 1) + (py == 1 ? 0 : 1) + (pz == 1 ? 0 : 1);
      if (manhattan == 1) faces |= 1u << p;
      if (manhattan == 1 || manhattan == 2) n18 |= 1u << p;
    }
  }
};

constexpr NbhdTables kTables{};

// Number of connected components of `set` under adjacency `adj`, counting
// only components that intersect `seeds`.
int components(std::uint32_t set, const std::array<std::uint32_t, 27>& adj, std::uint32_t seeds) {
  int n = 0;
  while (set & seeds) {
    const int start = std::countr_zero(set & seeds);
    std::uint32_t comp = 1u << start;
    std::uint32_t frontier = comp;
    while (frontier) {
      std::uint32_t next = 0;
      for (std::uint32_t f = frontier; f; f &= f - 1) next |= adj[std::countr_zero(f)];
      next &= set & ~comp;
      comp |= next;
      frontier = next;
    }
    set &= ~comp;
    ++n;
  }
  return n;
}

// Local working copy of the mask, cropped to the foreground bounding box
// plus a one-voxel background margin so neighbourhood reads stay in bounds.
struct LocalVolume {
  Dims3 dims{};
  std::array<std::int32_t, 3> origin{};  // grid coordinate of local (0,0,0)
  std::vector<std::uint8_t> data;
  std::array<std::ptrdiff_t, 27> offsets{};

  std::size_t index(std::size_t x, std::size_t y, std::size_t z) const { return x + dims[0] * (y + dims[1] * z); }

  std::array<std::uint8_t, 27> nbhd(std::size_t i) const {
    std::array<std::uint8_t, 27> n{};
    for (int p = 0; p < 27; ++p) n[p] = data[static_cast<std::size_t>(static_cast<std::ptrdiff_t>(i) + offsets[p])];
    return n;
  }

  int count_neighbors(std::size_t i) const {
    int c = 0;
    for (int p = 0; p < 27; ++p)
      if (p != kCenter) c += data[static_cast<std::size_t>(static_cast<std::ptrdiff_t>(i) + offsets[p])];
    return c;
  }
};

bool bounding_box(const VoxelGrid& g, std::array<std::size_t, 3>& lo, std::array<std::size_t, 3>& hi) {
  const auto& d = g.dims();
  lo = {d[0], d[1], d[2]};
  hi = {0, 0, 0};
  bool any = false;
  std::size_t i = 0;
  for (std::size_t z = 0; z < d[2]; ++z)
    for (std::size_t y = 0; y < d[1]; ++y)
      for (std::size_t x = 0; x < d[0]; ++x, ++i) {
        if (!g.data()[i]) continue;
        any = true;
        lo = {std::min(lo[0], x), std::min(lo[1], y), std::min(lo[2], z)};
        hi = {std::max(hi[0], x), std::max(hi[1], y), std::max(hi[2], z)};
      }
  return any;
}

LocalVolume make_local(const VoxelGrid& g, const std::array<std::size_t, 3>& lo, const std::array<std::size_t, 3>& hi) {
  LocalVolume v;
  for (int a = 0; a < 3; ++a) {
    v.dims[a] = hi[a] - lo[a] + 3;
    v.origin[a] = static_cast<std::int32_t>(lo[a]) - 1;
  }
  v.data.assign(v.dims[0] * v.dims[1] * v.dims[2], 0);
  for (std::size_t z = lo[2]; z <= hi[2]; ++z)
    for (std::size_t y = lo[1]; y <= hi[1]; ++y)
      for (std::size_t x = lo[0]; x <= hi[0]; ++x)
        v.data[v.index(x - lo[0] + 1, y - lo[1] + 1, z - lo[2] + 1)] = g.at(x, y, z);
  const auto sx = static_cast<std::ptrdiff_t>(1);
  const auto sy = static_cast<std::ptrdiff_t>(v.dims[0]);
  const auto sz = static_cast<std::ptrdiff_t>(v.dims[0] * v.dims[1]);
  for (int p = 0; p < 27; ++p) v.offsets[p] = (p % 3 - 1) * sx + ((p / 3) % 3 - 1) * sy + (p / 9 - 1) * sz;
  return v;
}

}  // namespace

bool is_simple_point(const std::array<std::uint8_t, 27>& nbhd) noexcept {
  std::uint32_t fg = 0;
  for (int p = 0; p < 27; ++p)
    if (p != kCenter && nbhd[p]) fg |= 1u << p;
  const std::uint32_t all26 = ((1u << 27) - 1) & ~(1u << kCenter);
  if (components(fg, kTables.adj26, all26) != 1) return false;
  const std::uint32_t bg = ~fg & kTables.n18;
  return components(bg, kTables.adj6, kTables.faces) == 1;
}

Skeleton::Skeleton(Dims3 dims, Vec3 spacing, std::vector<Voxel> voxels)
    : dims_(dims), spacing_(spacing), voxels_(std::move(voxels)) {
  std::sort(voxels_.begin(), voxels_.end());
  voxels_.erase(std::unique(voxels_.begin(), voxels_.end()), voxels_.end());
}

bool Skeleton::contains(const Voxel& v) const noexcept {
  return std::binary_search(voxels_.begin(), voxels_.end(), v);
}

std::vector<Voxel> Skeleton::neighbors(const Voxel& v) const {
  std::vector<Voxel> out;
  for (int dx = -1; dx <= 1; ++dx)
    for (int dy = -1; dy <= 1; ++dy)
      for (int dz = -1; dz <= 1; ++dz) {
        if (!dx && !dy && !dz) continue;
        const Voxel n{v.x + dx, v.y + dy, v.z + dz};
        if (contains(n)) out.push_back(n);
      }
  return out;
}

Skeleton skeletonize(const VoxelGrid& grid) {
  std::array<std::size_t, 3> lo{}, hi{};
  if (!bounding_box(grid, lo, hi)) return Skeleton(grid.dims(), grid.spacing(), {});
  LocalVolume v = make_local(grid, lo, hi);

  std::vector<std::size_t> fg;
  for (std::size_t i = 0; i < v.data.size(); ++i)
    if (v.data[i]) fg.push_back(i);

  // Face directions as neighbourhood positions: +z, -z, +y, -y, +x, -x.
  constexpr std::array<int, 6> kDirs{22, 4, 16, 10, 14, 12};
  std::vector<std::size_t> candidates;
  bool changed = true;
  while (changed) {
    changed = false;
    for (int dir : kDirs) {
      candidates.clear();
      for (auto i : fg) {
        if (v.data[static_cast<std::size_t>(static_cast<std::ptrdiff_t>(i) + v.offsets[dir])]) continue;
        if (v.count_neighbors(i) <= 1) continue;
        if (is_simple_point(v.nbhd(i))) candidates.push_back(i);
      }
      // Sequential re-check keeps each deletion topology-preserving given the
      // deletions before it.
      bool deleted = false;
      for (auto i : candidates) {
        if (v.count_neighbors(i) <= 1) continue;
        if (!is_simple_point(v.nbhd(i))) continue;
        v.data[i] = 0;
        deleted = true;
      }
      if (deleted) {
        changed = true;
        std::erase_if(fg, [&](std::size_t i) { return v.data[i] == 0; });
      }
    }
  }

  std::vector<Voxel> out;
  out.reserve(fg.size());
  for (auto i : fg) {
    const auto x = static_cast<std::int32_t>(i % v.dims[0]);
    const auto y = static_cast<std::int32_t>((i / v.dims[0]) % v.dims[1]);
    const auto z = static_cast<std::int32_t>(i / (v.dims[0] * v.dims[1]));
    out.push_back({x + v.origin[0], y + v.origin[1], z + v.origin[2]});
  }
  return Skeleton(grid.dims(), grid.spacing(), std::move(out));
}

std::size_t count_components_26(const VoxelGrid& grid) {
  const auto& d = grid.dims();
  std::vector<std::uint8_t> seen(grid.size(), 0);
  std::size_t n = 0;
  std::vector<std::size_t> stack;
  for (std::size_t start = 0; start < grid.size(); ++start) {
    if (!grid.data()[start] || seen[start]) continue;
    ++n;
    seen[start] = 1;
    stack.push_back(start);
    while (!stack.empty()) {
      const auto i = stack.back();
      stack.pop_back();
      const auto x = static_cast<std::ptrdiff_t>(i % d[0]);
      const auto y = static_cast<std::ptrdiff_t>((i / d[0]) % d[1]);
      const auto z = static_cast<std::ptrdiff_t>(i / (d[0] * d[1]));
      for (int dz = -1; dz <= 1; ++dz)
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            const auto nx = x + dx, ny = y + dy, nz = z + dz;
            if (nx < 0 || ny < 0 || nz < 0 || nx >= static_cast<std::ptrdiff_t>(d[0]) ||
                ny >= static_cast<std::ptrdiff_t>(d[1]) || nz >= static_cast<std::ptrdiff_t>(d[2]))
              continue;
            const auto j = grid.index(static_cast<std::size_t>(nx), static_cast<std::size_t>(ny), static_cast<std::size_t>(nz));
            if (grid.data()[j] && !seen[j]) {
              seen[j] = 1;
              stack.push_back(j);
            }
          }
    }
  }
  return n;
}

std::size_t count_components_26(const Skeleton& skel) {
  const auto& vox = skel.voxels();
  std::vector<std::uint8_t> seen(vox.size(), 0);
  auto idx = [&](const Voxel& v) {
    return static_cast<std::size_t>(std::lower_bound(vox.begin(), vox.end(), v) - vox.begin());
  };
  std::size_t n = 0;
  std::vector<Voxel> stack;
  for (std::size_t s = 0; s < vox.size(); ++s) {
    if (seen[s]) continue;
    ++n;
    seen[s] = 1;
    stack.push_back(vox[s]);
    while (!stack.empty()) {
      const Voxel v = stack.back();
      stack.pop_back();
      for (const auto& w : skel.neighbors(v)) {
        const auto j = idx(w);
        if (!seen[j]) {
          seen[j] = 1;
          stack.push_back(w);
        }
      }
    }
  }
  return n;
}

BranchGraph extract_branches(const Skeleton& skel) {
  const auto& vox = skel.voxels();
  const std::size_t n = vox.size();
  auto idx = [&](const Voxel& v) {
    return static_cast<std::size_t>(std::lower_bound(vox.begin(), vox.end(), v) - vox.begin());
  };
  std::vector<std::vector<std::size_t>> nbrs(n);
  for (std::size_t i = 0; i < n; ++i)
    for (const auto& w : skel.neighbors(vox[i])) nbrs[i].push_back(idx(w));

  std::vector<std::uint8_t> is_junction(n, 0);
  for (std::size_t i = 0; i < n; ++i) is_junction[i] = nbrs[i].size() >= 3;

  BranchGraph g;
  // Junction clusters.
  std::vector<std::uint8_t> seen(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    if (!is_junction[i] || seen[i]) continue;
    std::vector<Voxel> cluster;
    std::vector<std::size_t> stack{i};
    seen[i] = 1;
    while (!stack.empty()) {
      const auto k = stack.back();
      stack.pop_back();
      cluster.push_back(vox[k]);
      for (auto j : nbrs[k])
        if (is_junction[j] && !seen[j]) {
          seen[j] = 1;
          stack.push_back(j);
        }
    }
    std::sort(cluster.begin(), cluster.end());
    g.junctions.push_back(std::move(cluster));
  }

  auto touches_junction = [&](std::size_t i) {
    return std::any_of(nbrs[i].begin(), nbrs[i].end(), [&](std::size_t j) { return is_junction[j] != 0; });
  };
  auto next_free = [&](std::size_t i) -> std::ptrdiff_t {
    for (auto j : nbrs[i])
      if (!is_junction[j] && !seen[j]) return static_cast<std::ptrdiff_t>(j);
    return -1;
  };

  for (std::size_t s = 0; s < n; ++s) {
    if (is_junction[s] || seen[s]) continue;
    seen[s] = 1;
    std::deque<std::size_t> chain{s};
    for (std::ptrdiff_t j; (j = next_free(chain.back())) >= 0;) {
      seen[static_cast<std::size_t>(j)] = 1;
      chain.push_back(static_cast<std::size_t>(j));
    }
    for (std::ptrdiff_t j; (j = next_free(chain.front())) >= 0;) {
      seen[static_cast<std::size_t>(j)] = 1;
      chain.push_front(static_cast<std::size_t>(j));
    }
    Branch b;
    for (auto k : chain) b.path.push_back(vox[k]);
    auto kind = [&](std::size_t k) { return touches_junction(k) ? EndKind::Junction : EndKind::Terminal; };
    b.end_kinds = {kind(chain.front()), kind(chain.back())};
    if (b.path.back() < b.path.front()) {
      std::reverse(b.path.begin(), b.path.end());
      std::swap(b.end_kinds[0], b.end_kinds[1]);
    }
    g.branches.push_back(std::move(b));
  }
  std::sort(g.branches.begin(), g.branches.end(),
            [](const Branch& a, const Branch& b) { return a.path.front() < b.path.front(); });
  for (std::size_t i = 0; i < g.branches.size(); ++i) g.branches[i].id = static_cast<int>(i);
  return g;
}

}  // namespace alr
