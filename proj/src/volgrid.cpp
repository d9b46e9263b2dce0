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

#include "alrnet/volgrid.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "alrnet/error.hpp"
#include "fmtutil.hpp"

namespace alr {

namespace {

void check_geometry(const Dims3& dims, const Vec3& spacing) {
  for (int a = 0; a < 3; ++a) {
    if (dims[a] == 0) throw ConfigError("grid dims must be positive");
    if (!(spacing[a] > 0.0) || !std::isfinite(spacing[a]))
      throw ConfigError("grid spacing must be positive and finite");
  }
}

std::size_t voxel_count(const Dims3& d) { return d[0] * d[1] * d[2]; }

constexpr std::string_view kMagic = "MVOL1";

struct MvolHeader {
  Dims3 dims{};
  Vec3 spacing{};
  std::string type;
  std::string view;
};

std::string header_line(const Dims3& dims, const Vec3& spacing, std::string_view type, std::string_view view) {
  std::ostringstream os;
  os << "{\"dims\":[" << dims[0] << ',' << dims[1] << ',' << dims[2] << "],\"spacing\":["
     << fmt_g17(spacing[0]) << ',' << fmt_g17(spacing[1]) << ',' << fmt_g17(spacing[2]) << "],\"type\":\"" << type
     << '"';
  if (!view.empty()) os << ",\"view\":\"" << view << '"';
  os << '}';
  return os.str();
}

// Reads magic and header; leaves `in` positioned at the payload.
MvolHeader read_header(std::istream& in) {
  std::string magic;
  if (!std::getline(in, magic) || magic != kMagic) throw FormatError("magic", "expected 'MVOL1'");
  std::string line;
  if (!std::getline(in, line)) throw FormatError("header", "missing header line");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("header", e.what());
  }
  MvolHeader h;
  auto need = [&](const char* key) -> const nlohmann::json& {
    if (!j.contains(key)) throw FormatError(key, "missing");
    return j.at(key);
  };
  const auto& dims = need("dims");
  const auto& spacing = need("spacing");
  if (!dims.is_array() || dims.size() != 3) throw FormatError("dims", "expected 3 integers");
  if (!spacing.is_array() || spacing.size() != 3) throw FormatError("spacing", "expected 3 reals");
  for (int a = 0; a < 3; ++a) {
    if (!dims[a].is_number_unsigned() || dims[a].get<std::uint64_t>() == 0)
      throw FormatError("dims", "expected positive integers");
    if (!spacing[a].is_number()) throw FormatError("spacing", "expected reals");
    h.dims[a] = dims[a].get<std::size_t>();
    h.spacing[a] = spacing[a].get<double>();
    if (!(h.spacing[a] > 0.0) || !std::isfinite(h.spacing[a])) throw FormatError("spacing", "must be positive");
  }
  const auto& type = need("type");
  if (!type.is_string()) throw FormatError("type", "expected string");
  h.type = type.get<std::string>();
  if (h.type != "u8" && h.type != "f64") throw FormatError("type", "unsupported voxel type '" + h.type + "'");
  if (j.contains("view")) h.view = j.at("view").get<std::string>();
  return h;
}

std::vector<char> read_payload(std::istream& in, std::size_t expected_bytes) {
  std::vector<char> buf(expected_bytes);
  in.read(buf.data(), static_cast<std::streamsize>(expected_bytes));
  const auto got = static_cast<std::size_t>(in.gcount());
  if (got != expected_bytes || in.peek() != std::char_traits<char>::eof()) {
    std::size_t total = got;
    if (got == expected_bytes) {
      while (in.get() != std::char_traits<char>::eof()) ++total;
    }
    throw FormatError("payload", "size mismatch: header implies " + std::to_string(expected_bytes) +
                                     " bytes, file holds " + std::to_string(total));
  }
  return buf;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  return in;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  return out;
}

}  // namespace

VoxelGrid::VoxelGrid(Dims3 dims, Vec3 spacing_mm) : dims_(dims), spacing_(spacing_mm) {
  check_geometry(dims, spacing_mm);
  data_.assign(voxel_count(dims), 0);
}

VoxelGrid::VoxelGrid(Dims3 dims, Vec3 spacing_mm, std::vector<std::uint8_t> data)
    : dims_(dims), spacing_(spacing_mm), data_(std::move(data)) {
  check_geometry(dims, spacing_mm);
  if (data_.size() != voxel_count(dims)) throw ConfigError("grid data length does not match dims");
  for (auto v : data_)
    if (v > 1) throw ConfigError("grid data must be binary");
}

Vec3 VoxelGrid::extent_mm() const noexcept {
  return {dims_[0] * spacing_[0], dims_[1] * spacing_[1], dims_[2] * spacing_[2]};
}

std::size_t VoxelGrid::count() const noexcept {
  return static_cast<std::size_t>(std::count(data_.begin(), data_.end(), std::uint8_t{1}));
}

std::string_view view_name(View v) noexcept {
  switch (v) {
    case View::Axial: return "axial";
    case View::Coronal: return "coronal";
    case View::Sagittal: return "sagittal";
  }
  return "?";
}

std::string_view view_short(View v) noexcept {
  switch (v) {
    case View::Axial: return "ax";
    case View::Coronal: return "cor";
    case View::Sagittal: return "sag";
  }
  return "?";
}

View parse_view(std::string_view s) {
  for (View v : kAllViews)
    if (s == view_name(v) || s == view_short(v)) return v;
  throw ConfigError("unknown view '" + std::string(s) + "' (expected cor, sag or ax)");
}

ViewStack::ViewStack(View v, std::size_t w, std::size_t h)
    : view(v), width(w), height(h), values(kChannels * w * h, 0.0) {}

void write_mvol(const VoxelGrid& grid, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << kMagic << '\n' << header_line(grid.dims(), grid.spacing(), "u8", {}) << '\n';
  const auto d = grid.data();
  out.write(reinterpret_cast<const char*>(d.data()), static_cast<std::streamsize>(d.size()));
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

VoxelGrid read_mvol(const std::filesystem::path& path) {
  auto in = open_in(path);
  const auto h = read_header(in);
  if (h.type != "u8") throw FormatError("type", "mask volumes must be u8");
  auto raw = read_payload(in, voxel_count(h.dims));
  std::vector<std::uint8_t> data(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const auto v = static_cast<std::uint8_t>(raw[i]);
    if (v > 1) throw FormatError("payload", "non-binary voxel value " + std::to_string(v) + " at index " + std::to_string(i));
    data[i] = v;
  }
  return VoxelGrid(h.dims, h.spacing, std::move(data));
}

void write_view_stack(const ViewStack& stack, const std::filesystem::path& path) {
  auto out = open_out(path);
  const Dims3 dims{stack.width, stack.height, ViewStack::kChannels};
  const Vec3 spacing{stack.pixel_mm[0], stack.pixel_mm[1], 1.0};
  out << kMagic << '\n' << header_line(dims, spacing, "f64", view_name(stack.view)) << '\n';
  std::vector<char> buf(stack.values.size() * 8);
  for (std::size_t i = 0; i < stack.values.size(); ++i) {
    auto bits = std::bit_cast<std::uint64_t>(stack.values[i]);
    for (int b = 0; b < 8; ++b) buf[i * 8 + b] = static_cast<char>((bits >> (8 * b)) & 0xFF);
  }
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

ViewStack read_view_stack(const std::filesystem::path& path) {
  auto in = open_in(path);
  const auto h = read_header(in);
  if (h.type != "f64") throw FormatError("type", "projection stacks must be f64");
  if (h.dims[2] != ViewStack::kChannels) throw FormatError("dims", "projection stacks need exactly 3 channels");
  if (h.view.empty()) throw FormatError("view", "missing");
  ViewStack s(parse_view(h.view), h.dims[0], h.dims[1]);
  s.pixel_mm = {h.spacing[0], h.spacing[1]};
  auto raw = read_payload(in, s.values.size() * 8);
  for (std::size_t i = 0; i < s.values.size(); ++i) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) bits |= std::uint64_t(static_cast<unsigned char>(raw[i * 8 + b])) << (8 * b);
    const double v = std::bit_cast<double>(bits);
    if (!(v >= 0.0 && v <= 1.0)) throw FormatError("payload", "pixel value outside [0,1] at index " + std::to_string(i));
    s.values[i] = v;
  }
  return s;
}

void write_pgm(const ViewStack& stack, std::size_t channel, const std::filesystem::path& path) {
  if (channel >= ViewStack::kChannels) throw ConfigError("channel index out of range");
  auto out = open_out(path);
  out << "P5\n" << stack.width << ' ' << stack.height << "\n255\n";
  for (double v : stack.channel(channel)) out.put(static_cast<char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)));
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

VoxelGrid pad_to_fov(const VoxelGrid& grid, Vec3 target_extent_mm) {
  const auto& d = grid.dims();
  const auto& s = grid.spacing();
  Dims3 nd{};
  Dims3 off{};
  for (int a = 0; a < 3; ++a) {
    const double voxels = target_extent_mm[a] / s[a];
    if (!std::isfinite(voxels) || voxels < static_cast<double>(d[a]) * (1.0 - 1e-12))
      throw ConfigError("target extent smaller than grid extent on axis " + std::string(1, "xyz"[a]));
    nd[a] = std::max<std::size_t>(d[a], static_cast<std::size_t>(std::ceil(voxels - 1e-9)));
    off[a] = (nd[a] - d[a]) / 2;
  }
  VoxelGrid out(nd, s);
  for (std::size_t z = 0; z < d[2]; ++z)
    for (std::size_t y = 0; y < d[1]; ++y) {
      const auto src = grid.data().subspan(grid.index(0, y, z), d[0]);
      std::copy(src.begin(), src.end(), out.data().begin() + static_cast<std::ptrdiff_t>(out.index(off[0], y + off[1], z + off[2])));
    }
  return out;
}

std::size_t nearest_source_index(std::size_t i, std::size_t n_in, std::size_t n_out) noexcept {
  // Output center (i + 1/2) * n_in / n_out in source voxel units; nearest
  // source center j + 1/2, i.e. j = ceil(x - 1/2) with x = ((2i+1) n_in - n_out) / (2 n_out).
  // The ceil maps exact halves to the lower index.
  const auto num = static_cast<std::int64_t>((2 * i + 1) * n_in) - static_cast<std::int64_t>(n_out);
  const auto den = static_cast<std::int64_t>(2 * n_out);
  const std::int64_t q = 2 * num - den;   // (x - 1/2) = q / (2 den)
  const std::int64_t d2 = 2 * den;
  std::int64_t j = q >= 0 ? (q + d2 - 1) / d2 : -((-q) / d2);
  j = std::clamp<std::int64_t>(j, 0, static_cast<std::int64_t>(n_in) - 1);
  return static_cast<std::size_t>(j);
}

VoxelGrid resample_nn(const VoxelGrid& grid, Dims3 target_dims) {
  const auto& d = grid.dims();
  Vec3 ns{};
  std::array<std::vector<std::size_t>, 3> map;
  for (int a = 0; a < 3; ++a) {
    if (target_dims[a] == 0) throw ConfigError("target dims must be positive");
    ns[a] = static_cast<double>(d[a]) * grid.spacing()[a] / static_cast<double>(target_dims[a]);
    map[a].resize(target_dims[a]);
    for (std::size_t i = 0; i < target_dims[a]; ++i) map[a][i] = nearest_source_index(i, d[a], target_dims[a]);
  }
  if (target_dims == d) return grid;
  VoxelGrid out(target_dims, ns);
  auto od = out.data();
  std::size_t k = 0;
  for (std::size_t z = 0; z < target_dims[2]; ++z)
    for (std::size_t y = 0; y < target_dims[1]; ++y) {
      const std::size_t row = grid.index(0, map[1][y], map[2][z]);
      for (std::size_t x = 0; x < target_dims[0]; ++x) od[k++] = grid.data()[row + map[0][x]];
    }
  return out;
}

ViewStack project(const VoxelGrid& airway, const VoxelGrid& lung, View view) {
  if (airway.dims() != lung.dims()) throw ConfigError("airway and lung grids differ in dims");
  if (airway.spacing() != lung.spacing()) throw ConfigError("airway and lung grids differ in spacing");
  const auto& d = airway.dims();
  const auto& s = airway.spacing();

  // Image axes (column axis, row axis) and the projected axis. Rows of
  // coronal and sagittal images run superior to inferior.
  int col_axis = 0, row_axis = 1, depth_axis = 2;
  bool flip_rows = false;
  switch (view) {
    case View::Axial: col_axis = 0; row_axis = 1; depth_axis = 2; break;
    case View::Coronal: col_axis = 0; row_axis = 2; depth_axis = 1; flip_rows = true; break;
    case View::Sagittal: col_axis = 1; row_axis = 2; depth_axis = 0; flip_rows = true; break;
  }
  ViewStack out(view, d[col_axis], d[row_axis]);
  out.pixel_mm = {s[col_axis], s[row_axis]};
  const std::size_t depth = d[depth_axis];
  const double inv_depth = 1.0 / static_cast<double>(depth);

  std::array<std::size_t, 3> c{};
  for (std::size_t r = 0; r < out.height; ++r) {
    const std::size_t row_idx = flip_rows ? out.height - 1 - r : r;
    for (std::size_t col = 0; col < out.width; ++col) {
      std::size_t aw = 0, lg = 0;
      std::uint8_t mx = 0;
      c[col_axis] = col;
      c[row_axis] = row_idx;
      for (std::size_t k = 0; k < depth; ++k) {
        c[depth_axis] = k;
        const auto i = airway.index(c[0], c[1], c[2]);
        const auto a = airway.data()[i];
        aw += a;
        mx = std::max(mx, a);
        lg += lung.data()[i];
      }
      out.at(ViewStack::AirwayMean, r, col) = static_cast<double>(aw) * inv_depth;
      out.at(ViewStack::AirwayMip, r, col) = mx;
      out.at(ViewStack::LungMean, r, col) = static_cast<double>(lg) * inv_depth;
    }
  }
  return out;
}

double volume_mm3(const VoxelGrid& grid) noexcept {
  const auto& s = grid.spacing();
  return static_cast<double>(grid.count()) * s[0] * s[1] * s[2];
}

}  // namespace alr
