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

#include <doctest.h>

#include <cmath>
#include <map>

#include "alrnet/airway.hpp"
#include "alrnet/error.hpp"
#include "alrnet/phantom.hpp"
#include "support.hpp"

using namespace alr;
using alrtest::TempDir;

namespace {

bool near_lung(const VoxelGrid& lung, std::size_t x, std::size_t y, std::size_t z, int margin) {
  const auto& d = lung.dims();
  for (int dz = -margin; dz <= margin; ++dz)
    for (int dy = -margin; dy <= margin; ++dy)
      for (int dx = -margin; dx <= margin; ++dx) {
        const long X = static_cast<long>(x) + dx, Y = static_cast<long>(y) + dy, Z = static_cast<long>(z) + dz;
        if (X < 0 || Y < 0 || Z < 0 || X >= static_cast<long>(d[0]) || Y >= static_cast<long>(d[1]) ||
            Z >= static_cast<long>(d[2]))
          continue;
        if (lung.at(static_cast<std::size_t>(X), static_cast<std::size_t>(Y), static_cast<std::size_t>(Z))) return true;
      }
  return false;
}

}  // namespace

TEST_SUITE("phantom") {

TEST_CASE("gen_phantom is deterministic") {
  const PhantomSpec s = sample_spec(9, 3, 1, 0);
  const PhantomPair a = gen_phantom(s, "X");
  const PhantomPair b = gen_phantom(s, "X");
  CHECK(a.fl_lung == b.fl_lung);
  CHECK(a.fl_airway == b.fl_airway);
  CHECK(a.cc_lung == b.cc_lung);
  CHECK(a.cc_airway == b.cc_airway);
  CHECK(a.alr_gt == b.alr_gt);
}

TEST_CASE("taper sequence and ground-truth mean") {
  PhantomSpec s;
  s.jitter = 0.0;
  s.trachea_radius_mm = 5.0;
  s.taper = 0.8;
  s.tree_depth = 5;
  const auto tree = build_tree(s);
  REQUIRE(tree.size() == 31);
  const double per_gen[5] = {10.0, 8.0, 6.4, 5.12, 4.096};
  for (const auto& b : tree) CHECK(b.diameter_mm == doctest::Approx(per_gen[b.generation]).epsilon(1e-12));
  // Breadth-first: 1 + 2 + 4 + 8 branches, then 4 of generation 4.
  const double mean19 = (10.0 + 2 * 8.0 + 4 * 6.4 + 8 * 5.12 + 4 * 4.096) / 19.0;
  CHECK(analytic_alr(tree, 1000.0) == doctest::Approx(mean19 / 10.0).epsilon(1e-12));
  for (std::size_t i = 1; i < tree.size(); ++i) CHECK(tree[i].generation >= tree[i - 1].generation);
}

TEST_CASE("shallow trees average every branch") {
  PhantomSpec s;
  s.jitter = 0.0;
  s.trachea_radius_mm = 4.0;
  s.tree_depth = 3;
  const auto tree = build_tree(s);
  REQUIRE(tree.size() == 7);
  const double mean7 = (8.0 + 2 * 6.4 + 4 * 5.12) / 7.0;
  CHECK(analytic_alr(tree, 8000.0) == doctest::Approx(mean7 / 20.0).epsilon(1e-12));
  CHECK_THROWS_AS(analytic_alr({}, 1.0), DegenerateError);
}

TEST_CASE("lung volume matches the ellipsoid pair") {
  PhantomSpec s;
  s.jitter = 0.0;
  s.lung_semi_axes_mm = {60.0, 40.0, 80.0};
  s.spacing_mm = Vec3{1.0, 1.0, 1.0};
  const PhantomPair p = gen_phantom(s);
  const double exact = 2.0 * 4.0 / 3.0 * M_PI * 60.0 * 40.0 * 80.0;
  CHECK(std::abs(volume_mm3(p.fl_lung) - exact) / exact < 0.02);
}

TEST_CASE("spec validation") {
  PhantomSpec s;
  s.tree_depth = 2;
  CHECK_THROWS_AS(gen_phantom(s), ConfigError);
  s = PhantomSpec{};
  s.jitter = 0.5;
  CHECK_THROWS_AS(gen_phantom(s), ConfigError);
  s = PhantomSpec{};
  s.taper = 1.0;
  CHECK_THROWS_AS(gen_phantom(s), ConfigError);
  s = PhantomSpec{};
  s.spacing_mm = Vec3{1.0, 1.0, 6.0};
  s.trachea_radius_mm = 2.0;
  // Distal tubes become thinner than one voxel.
  CHECK_THROWS_AS(gen_phantom(s), ConfigError);
}

TEST_CASE("cardiac_crop") {
  Rng rng(4);
  const VoxelGrid g = alrtest::random_grid(rng, {5, 4, 90}, 0.5, {0.6, 0.6, 0.5});
  SUBCASE("identity") { CHECK(cardiac_crop(g, 1.0, 1) == g); }
  SUBCASE("two thirds of 90 slices") {
    const VoxelGrid c = cardiac_crop(g, 2.0 / 3.0, 1);
    CHECK(c.dims()[2] == 60);
    for (std::size_t z = 0; z < 60; ++z)
      for (std::size_t y = 0; y < 4; ++y)
        for (std::size_t x = 0; x < 5; ++x) CHECK(c.at(x, y, z) == g.at(x, y, z));
  }
  SUBCASE("slice factor 5 on 0.5 mm slices") {
    const VoxelGrid c = cardiac_crop(g, 1.0, 5);
    CHECK(c.spacing()[2] == doctest::Approx(2.5));
    CHECK(c.dims()[2] == 18);
    for (std::size_t z = 0; z < 18; ++z) CHECK(c.at(2, 1, z) == g.at(2, 1, 5 * z));
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(cardiac_crop(g, 0.0, 1), ConfigError);
    CHECK_THROWS_AS(cardiac_crop(g, 0.5, 0), ConfigError);
    CHECK_THROWS_AS(cardiac_crop(g, 0.02, 1), ConfigError);
  }
}

TEST_CASE("cardiac_crop never adds voxels") {
  Rng rng(12);
  for (int t = 0; t < 30; ++t) {
    const VoxelGrid g = alrtest::random_grid(rng, {3, 3, 20 + rng.below(30)}, 0.5);
    const double f = rng.uniform(0.2, 1.0);
    const std::size_t k = 1 + rng.below(4);
    try {
      CHECK(cardiac_crop(g, f, k).count() <= g.count());
    } catch (const ConfigError&) {
    }
  }
}

TEST_CASE("split assignment") {
  SUBCASE("one stratum of 100") {
    const auto s = assign_splits(std::vector<int>(100, 0), 1);
    std::map<Split, int> n;
    for (auto x : s) ++n[x];
    CHECK(n[Split::Train] == 64);
    CHECK(n[Split::Val] == 16);
    CHECK(n[Split::Test] == 20);
  }
  SUBCASE("four strata of 25") {
    std::vector<int> strata;
    for (int i = 0; i < 100; ++i) strata.push_back(i % 4);
    const auto s = assign_splits(strata, 5);
    for (int k = 0; k < 4; ++k) {
      std::map<Split, int> n;
      for (std::size_t i = 0; i < s.size(); ++i)
        if (strata[i] == k) ++n[s[i]];
      // test = round(0.2 * 25), val = round(0.2 * 20).
      CHECK(n[Split::Test] == 5);
      CHECK(n[Split::Val] == 4);
      CHECK(n[Split::Train] == 16);
    }
  }
  SUBCASE("deterministic in the seed") { CHECK(assign_splits(std::vector<int>(30, 0), 8) == assign_splits(std::vector<int>(30, 0), 8)); }
}

TEST_CASE("generated subjects respect the anatomical envelope") {
  for (std::size_t i = 0; i < 12; ++i) {
    PhantomPair p;
    for (int attempt = 0;; ++attempt) {
      try {
        p = gen_phantom(sample_spec(77, i, static_cast<int>(i % 3), attempt));
        break;
      } catch (const ConfigError&) {
        REQUIRE(attempt < 50);
      }
    }
    CHECK(p.alr_gt > 0.01);
    CHECK(p.alr_gt < 0.3);
    CHECK(count_components_26(p.fl_airway) == 1);
    CHECK(volume_mm3(p.cc_lung) < volume_mm3(p.fl_lung));
    CHECK(p.cc_airway.count() <= p.fl_airway.count());
    const auto& d = p.fl_airway.dims();
    std::size_t outside = 0;
    for (std::size_t z = 0; z < d[2]; ++z)
      for (std::size_t y = 0; y < d[1]; ++y)
        for (std::size_t x = 0; x < d[0]; ++x)
          if (p.fl_airway.at(x, y, z) && !near_lung(p.fl_lung, x, y, z, 2)) ++outside;
    CHECK(outside == 0);
  }
}

TEST_CASE("stratum spacing stays in the scanner range") {
  for (int k = 0; k < 8; ++k) {
    CHECK(stratum_in_plane_mm(k) >= 0.547);
    CHECK(stratum_in_plane_mm(k) <= 0.781);
  }
}

TEST_CASE("gen_dataset writes a deterministic manifest") {
  TempDir a("ph"), b("ph");
  DatasetOptions o;
  o.n = 6;
  o.master_seed = 3;
  o.strata_count = 2;
  o.rescan = true;
  gen_dataset(o, a.path());
  gen_dataset(o, b.path());
  CHECK(alrtest::file_bytes(a / "manifest.csv") == alrtest::file_bytes(b / "manifest.csv"));
  CHECK(alrtest::file_bytes(a / "rescan.csv") == alrtest::file_bytes(b / "rescan.csv"));
  for (const auto& e : std::filesystem::directory_iterator(a / "volumes"))
    CHECK(alrtest::file_bytes(e.path()) == alrtest::file_bytes(b / "volumes" / e.path().filename().string()));

  const std::string text = alrtest::file_bytes(a / "manifest.csv");
  CHECK(text.rfind("id,fl_lung,fl_airway,cc_lung,cc_airway,alr_gt,stratum,split\n", 0) == 0);
  CHECK(text.find('\r') == std::string::npos);

  const Manifest m = read_manifest(a / "manifest.csv");
  REQUIRE(m.rows.size() == 6);
  for (const auto& r : m.rows) {
    CHECK(std::filesystem::exists(r.cc_lung));
    CHECK(std::filesystem::exists(r.fl_airway));
    CHECK((r.alr_gt > 0.01 && r.alr_gt < 0.3));
  }
  // Reals carry nine significant digits.
  const auto line2 = text.substr(text.find('\n') + 1);
  std::vector<std::string> cols;
  std::stringstream ls(line2.substr(0, line2.find('\n')));
  for (std::string c; std::getline(ls, c, ',');) cols.push_back(c);
  REQUIRE(cols.size() == 8);
  std::string mant;
  for (char c : cols[5].substr(0, cols[5].find('e')))
    if (std::isdigit(static_cast<unsigned char>(c))) mant += c;
  CHECK(mant.substr(mant.find_first_not_of('0')).size() <= 9);
  const auto rescans = read_rescan_manifest(a / "rescan.csv");
  CHECK(rescans.size() == 6);
  for (const auto& r : rescans) CHECK(!(read_mvol(r.cc_lung_a) == read_mvol(r.cc_lung_b)));
}

TEST_CASE("gen_dataset option errors") {
  TempDir a("ph");
  DatasetOptions o;
  o.n = 1;
  o.strata_count = 2;
  CHECK_THROWS_AS(gen_dataset(o, a.path()), ConfigError);
  o.strata_count = 0;
  CHECK_THROWS_AS(gen_dataset(o, a.path()), ConfigError);
}

TEST_CASE("manifest reader reports malformed rows") {
  TempDir a("ph");
  alrtest::write_bytes(a / "m.csv", "id,fl_lung,fl_airway,cc_lung,cc_airway,alr_gt,stratum,split\nP0,a,b,c,d,zz,0,train\n");
  CHECK_THROWS_AS(read_manifest(a / "m.csv"), IoError);
  alrtest::write_bytes(a / "n.csv", "id,fl_lung,fl_airway,cc_lung,cc_airway,alr_gt,stratum,split\nP0,a,b,c,d,0.1,0,holdout\n");
  CHECK_THROWS_AS(read_manifest(a / "n.csv"), Error);
  CHECK_THROWS_AS(read_manifest(a / "absent.csv"), IoError);
}

}  // TEST_SUITE
