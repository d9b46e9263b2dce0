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
#include <cmath>
#include <limits>
#include <numeric>

#include "alrnet/airway.hpp"
#include "alrnet/error.hpp"
#include "vec3.hpp"

namespace alr {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Felzenszwalb-Huttenlocher lower envelope of parabolas, in place on `f`
// (squared distances), sample spacing `w`.
void edt_1d(std::vector<double>& f, double w, std::vector<double>& d, std::vector<std::size_t>& v,
            std::vector<double>& z) {
  const std::size_t n = f.size();
  d.resize(n);
  v.resize(n);
  z.resize(n + 1);
  std::size_t k = 0;
  std::size_t first = n;
  for (std::size_t q = 0; q < n; ++q)
    if (std::isfinite(f[q])) {
      first = q;
      break;
    }
  if (first == n) return;  // no sites on this line
  v[0] = first;
  z[0] = -kInf;
  z[1] = kInf;
  const double w2 = w * w;
  for (std::size_t q = first + 1; q < n; ++q) {
    if (!std::isfinite(f[q])) continue;
    double s;
    while (true) {
      const double vq = static_cast<double>(q), vk = static_cast<double>(v[k]);
      s = ((f[q] + w2 * vq * vq) - (f[v[k]] + w2 * vk * vk)) / (2.0 * w2 * (vq - vk));
      if (s <= z[k] && k > 0) {
        --k;
        continue;
      }
      break;
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = kInf;
  }
  k = 0;
  for (std::size_t q = 0; q < n; ++q) {
    while (z[k + 1] < static_cast<double>(q)) ++k;
    const double dq = w * (static_cast<double>(q) - static_cast<double>(v[k]));
    d[q] = dq * dq + f[v[k]];
  }
  f = d;
}

// Exact distance (mm) from voxel `c` to the nearest background voxel center,
// by expanding cubic shells; voxels outside the grid are background.
double local_distance(const VoxelGrid& g, const Voxel& c) {
  const auto& d = g.dims();
  const auto& s = g.spacing();
  const double smin = std::min({s[0], s[1], s[2]});
  auto background = [&](std::int64_t x, std::int64_t y, std::int64_t z) {
    if (x < 0 || y < 0 || z < 0 || x >= static_cast<std::int64_t>(d[0]) || y >= static_cast<std::int64_t>(d[1]) ||
        z >= static_cast<std::int64_t>(d[2]))
      return true;
    return g.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y), static_cast<std::size_t>(z)) == 0;
  };
  if (background(c.x, c.y, c.z)) return 0.0;
  double best2 = kInf;
  for (std::int64_t r = 1;; ++r) {
    // Any voxel on shell r is at least r * smin away.
    const double lower = static_cast<double>(r) * smin;
    if (lower * lower > best2) break;
    for (std::int64_t dz = -r; dz <= r; ++dz)
      for (std::int64_t dy = -r; dy <= r; ++dy)
        for (std::int64_t dx = -r; dx <= r; ++dx) {
          if (std::max({std::abs(dx), std::abs(dy), std::abs(dz)}) != r) continue;
          if (!background(c.x + dx, c.y + dy, c.z + dz)) continue;
          const double ex = dx * s[0], ey = dy * s[1], ez = dz * s[2];
          best2 = std::min(best2, ex * ex + ey * ey + ez * ez);
        }
  }
  return std::sqrt(best2);
}

Vec3 to_mm(const Voxel& v, const Vec3& s) { return {v.x * s[0], v.y * s[1], v.z * s[2]}; }

}  // namespace

std::vector<double> distance_transform(const VoxelGrid& grid) {
  const auto& d = grid.dims();
  const auto& s = grid.spacing();
  // Pad by one background voxel on each side so out-of-grid counts as background.
  const Dims3 p{d[0] + 2, d[1] + 2, d[2] + 2};
  std::vector<double> f(p[0] * p[1] * p[2], 0.0);
  auto pidx = [&](std::size_t x, std::size_t y, std::size_t z) { return x + p[0] * (y + p[1] * z); };
  for (std::size_t z = 0; z < d[2]; ++z)
    for (std::size_t y = 0; y < d[1]; ++y)
      for (std::size_t x = 0; x < d[0]; ++x)
        if (grid.at(x, y, z)) f[pidx(x + 1, y + 1, z + 1)] = kInf;

  std::vector<double> line, out;
  std::vector<std::size_t> v;
  std::vector<double> zbuf;
  const std::array<std::size_t, 3> stride{1, p[0], p[0] * p[1]};
  for (int axis = 0; axis < 3; ++axis) {
    const int a1 = (axis + 1) % 3, a2 = (axis + 2) % 3;
    line.resize(p[axis]);
    for (std::size_t j = 0; j < p[a2]; ++j)
      for (std::size_t i = 0; i < p[a1]; ++i) {
        const std::size_t base = i * stride[a1] + j * stride[a2];
        for (std::size_t k = 0; k < p[axis]; ++k) line[k] = f[base + k * stride[axis]];
        edt_1d(line, s[axis], out, v, zbuf);
        for (std::size_t k = 0; k < p[axis]; ++k) f[base + k * stride[axis]] = line[k];
      }
  }
  std::vector<double> result(grid.size(), 0.0);
  for (std::size_t z = 0; z < d[2]; ++z)
    for (std::size_t y = 0; y < d[1]; ++y)
      for (std::size_t x = 0; x < d[0]; ++x) result[grid.index(x, y, z)] = std::sqrt(f[pidx(x + 1, y + 1, z + 1)]);
  return result;
}

double cross_section_area(const VoxelGrid& grid, const Vec3& center_mm, const Vec3& normal, double cap_mm) {
  const auto& d = grid.dims();
  const auto& s = grid.spacing();
  const Vec3 n = normalize(normal);
  // In-plane basis: start from the axis least aligned with the normal.
  int least = 0;
  for (int a = 1; a < 3; ++a)
    if (std::abs(n[a]) < std::abs(n[least])) least = a;
  Vec3 helper{0.0, 0.0, 0.0};
  helper[least] = 1.0;
  const Vec3 e1 = normalize(cross(n, helper));
  const Vec3 e2 = cross(n, e1);

  const double h = 0.5 * std::min({s[0], s[1], s[2]});
  const auto half = static_cast<std::ptrdiff_t>(std::ceil(cap_mm / h));
  const std::size_t side = static_cast<std::size_t>(2 * half + 1);
  std::vector<std::uint8_t> inside(side * side, 0);
  const double cap2 = cap_mm * cap_mm;
  for (std::ptrdiff_t j = -half; j <= half; ++j)
    for (std::ptrdiff_t i = -half; i <= half; ++i) {
      const double u = static_cast<double>(i) * h, w = static_cast<double>(j) * h;
      if (u * u + w * w > cap2) continue;
      const Vec3 p = add(center_mm, add(scale(e1, u), scale(e2, w)));
      std::array<std::int64_t, 3> q{};
      bool ok = true;
      for (int a = 0; a < 3; ++a) {
        q[a] = static_cast<std::int64_t>(std::floor(p[a] / s[a] + 0.5));
        if (q[a] < 0 || q[a] >= static_cast<std::int64_t>(d[a])) ok = false;
      }
      if (ok && grid.at(static_cast<std::size_t>(q[0]), static_cast<std::size_t>(q[1]), static_cast<std::size_t>(q[2])))
        inside[static_cast<std::size_t>(j + half) * side + static_cast<std::size_t>(i + half)] = 1;
    }

  // Keep the 4-connected region containing the center sample.
  const std::size_t c = static_cast<std::size_t>(half) * side + static_cast<std::size_t>(half);
  if (!inside[c]) return 0.0;
  std::vector<std::size_t> stack{c};
  inside[c] = 2;
  std::size_t count = 0;
  while (!stack.empty()) {
    const auto k = stack.back();
    stack.pop_back();
    ++count;
    const std::size_t r = k / side, col = k % side;
    const std::size_t nb[4] = {r > 0 ? k - side : k, r + 1 < side ? k + side : k, col > 0 ? k - 1 : k,
                               col + 1 < side ? k + 1 : k};
    for (auto m : nb)
      if (inside[m] == 1) {
        inside[m] = 2;
        stack.push_back(m);
      }
  }
  return static_cast<double>(count) * h * h;
}

BranchMeasure branch_diameter(const VoxelGrid& grid, const Branch& branch) {
  const auto& path = branch.path;
  const std::size_t n = path.size();
  if (n < kMinBranchVoxels)
    throw SkippedError("branch " + std::to_string(branch.id) + " has " + std::to_string(n) +
                       " voxels; diameter needs at least " + std::to_string(kMinBranchVoxels));
  const auto& s = grid.spacing();
  BranchMeasure m;
  m.branch_id = branch.id;
  for (std::size_t i = 1; i < n; ++i) m.length_mm += norm(sub(to_mm(path[i], s), to_mm(path[i - 1], s)));

  const std::size_t trim = n / 6;
  double sum = 0.0;
  for (std::size_t i = trim; i < n - trim; ++i) {
    const std::size_t lo = i >= 2 ? i - 2 : 0;
    const std::size_t hi = std::min(i + 2, n - 1);
    const Vec3 tangent = sub(to_mm(path[hi], s), to_mm(path[lo], s));
    const double cap = 4.0 * local_distance(grid, path[i]);
    const double area = cross_section_area(grid, to_mm(path[i], s), tangent, cap);
    sum += 2.0 * std::sqrt(area / M_PI);
    ++m.n_sections;
  }
  m.mean_diameter_mm = sum / static_cast<double>(m.n_sections);
  return m;
}

ProxyResult proxy_alr(const VoxelGrid& lung, const VoxelGrid& airway) {
  const BranchGraph g = extract_branches(skeletonize(airway));
  std::vector<BranchMeasure> measured;
  for (const auto& b : g.branches) {
    try {
      measured.push_back(branch_diameter(airway, b));
    } catch (const SkippedError&) {
    }
  }
  if (measured.empty()) throw DegenerateError("no measurable airway branch");
  std::stable_sort(measured.begin(), measured.end(), [](const BranchMeasure& a, const BranchMeasure& b) {
    return a.mean_diameter_mm > b.mean_diameter_mm;
  });
  const std::size_t k = std::min(measured.size(), kProxyMaxBranches);
  double sum = 0.0;
  for (std::size_t i = 0; i < k; ++i) sum += measured[i].mean_diameter_mm;
  ProxyResult r;
  r.n_branches_used = static_cast<int>(k);
  r.mean_diam_mm = sum / static_cast<double>(k);
  r.lung_vol_mm3 = volume_mm3(lung);
  if (!(r.lung_vol_mm3 > 0.0)) throw DegenerateError("empty lung mask");
  r.proxy_alr = r.mean_diam_mm / std::cbrt(r.lung_vol_mm3);
  return r;
}

}  // namespace alr
