#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ctbody/core.hpp"
#include "ctbody/mesh.hpp"

namespace ctbody {

/// Orthographic top-view camera. The image plane is horizontal; the camera
/// looks straight down -z. Pixel (i,j) center sits at world
/// (origin_x + (i+0.5)*pitch_x, origin_y + (j+0.5)*pitch_y); a pixel's depth
/// value is the distance from the sensor plane z = camera_z down to the
/// surface, so world z = camera_z - depth.
struct OrthoCamera {
  double pitch_x_mm = 2.0;
  double pitch_y_mm = 2.0;
  double origin_x_mm = 0.0;  // world x of the outer corner of pixel (0,0)
  double origin_y_mm = 0.0;
  double camera_z_mm = 2000.0;
  double near_mm = 1.0;
  double far_mm = 1.0e7;
};

/// Range image. Values are millimeters unless `normalized` is set, in which
/// case they live in [0,1] and norm_min/norm_max recover millimeters as
/// mm = norm_min + value * (norm_max - norm_min).
struct DepthMap {
  int width = 0;
  int height = 0;
  std::vector<double> depth;
  std::vector<std::uint8_t> valid;
  std::optional<OrthoCamera> camera;
  bool normalized = false;
  double norm_min_mm = 0.0;
  double norm_max_mm = 0.0;

  size_t index(int x, int y) const {
    return static_cast<size_t>(y) * static_cast<size_t>(width) + static_cast<size_t>(x);
  }
  double at(int x, int y) const { return depth[index(x, y)]; }
  bool is_valid(int x, int y) const { return valid[index(x, y)] != 0; }
  size_t valid_count() const {
    size_t n = 0;
    for (auto v : valid) n += v != 0;
    return n;
  }
  static DepthMap empty(int w, int h) {
    DepthMap d;
    d.width = w;
    d.height = h;
    d.depth.assign(static_cast<size_t>(w) * static_cast<size_t>(h), 0.0);
    d.valid.assign(static_cast<size_t>(w) * static_cast<size_t>(h), 0);
    return d;
  }
};

namespace detail {
inline nlohmann::json camera_to_json(const OrthoCamera& cam) {
  return {{"pitch_x_mm", cam.pitch_x_mm},   {"pitch_y_mm", cam.pitch_y_mm},
          {"origin_x_mm", cam.origin_x_mm}, {"origin_y_mm", cam.origin_y_mm},
          {"camera_z_mm", cam.camera_z_mm}, {"near_mm", cam.near_mm},
          {"far_mm", cam.far_mm}};
}
inline OrthoCamera camera_from_json(const nlohmann::json& j) {
  OrthoCamera cam;
  cam.pitch_x_mm = j.at("pitch_x_mm").get<double>();
  cam.pitch_y_mm = j.at("pitch_y_mm").get<double>();
  cam.origin_x_mm = j.at("origin_x_mm").get<double>();
  cam.origin_y_mm = j.at("origin_y_mm").get<double>();
  cam.camera_z_mm = j.at("camera_z_mm").get<double>();
  cam.near_mm = j.at("near_mm").get<double>();
  cam.far_mm = j.at("far_mm").get<double>();
  if (cam.pitch_x_mm <= 0 || cam.pitch_y_mm <= 0 || cam.near_mm >= cam.far_mm) {
    throw Error(ErrorCode::Config, "bad camera: pitch must be > 0 and near < far");
  }
  return cam;
}
}  // namespace detail

// ---------------------------------------------------------------------------
// Raw depth format: "DEPTH16\0" magic, u32 width, u32 height, then
// width*height little-endian u16 millimeter values (0 = invalid), plus a
// JSON sidecar (same stem, .json) carrying the camera. Normalized maps are
// converted back to millimeters before quantization.
// ---------------------------------------------------------------------------

inline constexpr char kDepthMagic[8] = {'D', 'E', 'P', 'T', 'H', '1', '6', '\0'};

inline DepthMap denormalize(const DepthMap& d) {
  if (!d.normalized) return d;
  DepthMap out = d;
  const double span = d.norm_max_mm - d.norm_min_mm;
  for (size_t i = 0; i < out.depth.size(); ++i) {
    if (out.valid[i]) out.depth[i] = d.norm_min_mm + out.depth[i] * span;
  }
  out.normalized = false;
  out.norm_min_mm = out.norm_max_mm = 0.0;
  return out;
}

inline void save_depth(const DepthMap& dmap, const std::string& raw_path) {
  const DepthMap d = denormalize(dmap);
  std::ofstream raw(raw_path, std::ios::binary);
  if (!raw) throw Error(ErrorCode::Io, "cannot open for writing: " + raw_path);
  raw.write(kDepthMagic, 8);
  const std::uint32_t w = static_cast<std::uint32_t>(d.width);
  const std::uint32_t h = static_cast<std::uint32_t>(d.height);
  raw.write(reinterpret_cast<const char*>(&w), 4);
  raw.write(reinterpret_cast<const char*>(&h), 4);
  std::vector<std::uint16_t> buf(d.depth.size());
  for (size_t i = 0; i < buf.size(); ++i) {
    if (!d.valid[i]) {
      buf[i] = 0;
    } else {
      const double mm = std::clamp(std::round(d.depth[i]), 1.0, 65535.0);
      buf[i] = static_cast<std::uint16_t>(mm);
    }
  }
  raw.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * 2));
  if (!raw) throw Error(ErrorCode::Io, "depth write failed: " + raw_path);

  nlohmann::json j;
  j["width"] = d.width;
  j["height"] = d.height;
  if (d.camera) j["camera"] = detail::camera_to_json(*d.camera);
  const auto sidecar = std::filesystem::path(raw_path).replace_extension(".json");
  std::ofstream side(sidecar);
  if (!side) throw Error(ErrorCode::Io, "cannot open for writing: " + sidecar.string());
  side << j.dump(2) << "\n";
}

inline DepthMap load_depth(const std::string& raw_path) {
  std::ifstream raw(raw_path, std::ios::binary);
  if (!raw) throw Error(ErrorCode::Io, "cannot open: " + raw_path);
  char magic[8];
  raw.read(magic, 8);
  if (!raw || std::memcmp(magic, kDepthMagic, 8) != 0) {
    throw Error(ErrorCode::Io, "not a depth file: " + raw_path);
  }
  std::uint32_t w = 0, h = 0;
  raw.read(reinterpret_cast<char*>(&w), 4);
  raw.read(reinterpret_cast<char*>(&h), 4);
  if (!raw || w == 0 || h == 0) throw Error(ErrorCode::Io, "bad depth header: " + raw_path);
  DepthMap d = DepthMap::empty(static_cast<int>(w), static_cast<int>(h));
  std::vector<std::uint16_t> buf(static_cast<size_t>(w) * h);
  raw.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * 2));
  if (!raw) throw Error(ErrorCode::Io, "truncated depth data: " + raw_path);
  for (size_t i = 0; i < buf.size(); ++i) {
    d.depth[i] = buf[i];
    d.valid[i] = buf[i] != 0;
  }
  const auto sidecar = std::filesystem::path(raw_path).replace_extension(".json");
  std::ifstream side(sidecar);
  if (side) {
    nlohmann::json j;
    try {
      side >> j;
    } catch (const std::exception& e) {
      throw Error(ErrorCode::Io, std::string("bad depth sidecar: ") + e.what());
    }
    if (j.contains("camera")) d.camera = detail::camera_from_json(j.at("camera"));
  }
  return d;
}

// ---------------------------------------------------------------------------
// Preprocessing: normalize -> median filter -> bilinear resize
// ---------------------------------------------------------------------------

struct DepthPreprocessConfig {
  int median_filter_radius = 1;
  int target_width = 128;
  int target_height = 54;
};

/// Min-max normalizes valid depths to [0,1]; the affine constants are kept on
/// the map so backprojection can undo the mapping. A constant map maps to 0.
inline DepthMap normalize_depth(const DepthMap& d) {
  if (d.width == 0 || d.height == 0) throw Error(ErrorCode::EmptyDepthMap, "empty depth map");
  if (d.normalized) return d;
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (size_t i = 0; i < d.depth.size(); ++i) {
    if (!d.valid[i]) continue;
    lo = std::min(lo, d.depth[i]);
    hi = std::max(hi, d.depth[i]);
  }
  DepthMap out = d;
  if (!(lo <= hi)) {  // no valid pixels: keep zeros, record a degenerate range
    lo = hi = 0.0;
  }
  const double span = hi - lo;
  for (size_t i = 0; i < out.depth.size(); ++i) {
    out.depth[i] = (out.valid[i] && span > 0.0) ? (out.depth[i] - lo) / span : 0.0;
  }
  out.normalized = true;
  out.norm_min_mm = lo;
  out.norm_max_mm = hi;
  return out;
}

/// Median filter over the (2r+1)^2 window, using only valid pixels. Invalid
/// pixels stay invalid. Even-sized windows take the lower median.
inline DepthMap median_filter_depth(const DepthMap& d, int radius) {
  if (d.width == 0 || d.height == 0) throw Error(ErrorCode::EmptyDepthMap, "empty depth map");
  if (radius < 0) throw Error(ErrorCode::InvalidRange, "median radius must be >= 0");
  if (radius == 0) return d;
  DepthMap out = d;
  std::vector<double> window;
  window.reserve(static_cast<size_t>(2 * radius + 1) * static_cast<size_t>(2 * radius + 1));
  for (int y = 0; y < d.height; ++y) {
    for (int x = 0; x < d.width; ++x) {
      if (!d.is_valid(x, y)) continue;
      window.clear();
      for (int dy = -radius; dy <= radius; ++dy) {
        for (int dx = -radius; dx <= radius; ++dx) {
          const int xx = x + dx, yy = y + dy;
          if (xx < 0 || xx >= d.width || yy < 0 || yy >= d.height) continue;
          if (d.is_valid(xx, yy)) window.push_back(d.at(xx, yy));
        }
      }
      const size_t mid = (window.size() - 1) / 2;
      std::nth_element(window.begin(), window.begin() + static_cast<std::ptrdiff_t>(mid),
                       window.end());
      out.depth[out.index(x, y)] = window[mid];
    }
  }
  return out;
}

/// Bilinear resize preserving the world footprint of the image: the camera
/// pitch is rescaled, the origin is unchanged. A destination pixel is invalid
/// iff all four bilinear sources are invalid.
inline DepthMap resize_depth(const DepthMap& d, int new_width, int new_height) {
  if (d.width == 0 || d.height == 0) throw Error(ErrorCode::EmptyDepthMap, "empty depth map");
  if (new_width <= 0 || new_height <= 0) {
    throw Error(ErrorCode::InvalidRange, "resize target must be positive");
  }
  DepthMap out = DepthMap::empty(new_width, new_height);
  out.normalized = d.normalized;
  out.norm_min_mm = d.norm_min_mm;
  out.norm_max_mm = d.norm_max_mm;
  const double sx = static_cast<double>(d.width) / new_width;
  const double sy = static_cast<double>(d.height) / new_height;
  if (d.camera) {
    OrthoCamera cam = *d.camera;
    cam.pitch_x_mm *= sx;
    cam.pitch_y_mm *= sy;
    out.camera = cam;
  }
  for (int y = 0; y < new_height; ++y) {
    const double fy = (y + 0.5) * sy - 0.5;
    const int y0 = static_cast<int>(std::floor(fy));
    const double wy = fy - y0;
    for (int x = 0; x < new_width; ++x) {
      const double fx = (x + 0.5) * sx - 0.5;
      const int x0 = static_cast<int>(std::floor(fx));
      const double wx = fx - x0;
      const int xs[2] = {std::clamp(x0, 0, d.width - 1), std::clamp(x0 + 1, 0, d.width - 1)};
      const int ys[2] = {std::clamp(y0, 0, d.height - 1), std::clamp(y0 + 1, 0, d.height - 1)};
      const double wgt[2][2] = {{(1 - wx) * (1 - wy), wx * (1 - wy)},
                                {(1 - wx) * wy, wx * wy}};
      double acc = 0.0, wsum = 0.0, vsum = 0.0;
      int valid_n = 0;
      for (int b = 0; b < 2; ++b) {
        for (int a = 0; a < 2; ++a) {
          if (!d.is_valid(xs[a], ys[b])) continue;
          ++valid_n;
          acc += wgt[b][a] * d.at(xs[a], ys[b]);
          wsum += wgt[b][a];
          vsum += d.at(xs[a], ys[b]);
        }
      }
      if (valid_n == 0) continue;
      out.valid[out.index(x, y)] = 1;
      out.depth[out.index(x, y)] = wsum > 1e-12 ? acc / wsum : vsum / valid_n;
    }
  }
  return out;
}

/// Preprocessing chain: normalize, median filter, resize to the working size.
inline DepthMap preprocess_depth(const DepthMap& d, const DepthPreprocessConfig& cfg = {}) {
  if (d.width == 0 || d.height == 0) throw Error(ErrorCode::EmptyDepthMap, "empty depth map");
  DepthMap out = normalize_depth(d);
  out = median_filter_depth(out, cfg.median_filter_radius);
  out = resize_depth(out, cfg.target_width, cfg.target_height);
  return out;
}

/// One 3D point (meters) per valid pixel via the orthographic inverse map,
/// in row-major pixel scan order. Normalization is undone first.
inline PointCloud backproject(const DepthMap& dmap) {
  if (!dmap.camera) throw Error(ErrorCode::MissingCamera, "depth map has no camera metadata");
  const OrthoCamera& cam = *dmap.camera;
  const double span = dmap.norm_max_mm - dmap.norm_min_mm;
  std::vector<Vec3> pts;
  pts.reserve(dmap.valid_count());
  for (int y = 0; y < dmap.height; ++y) {
    for (int x = 0; x < dmap.width; ++x) {
      if (!dmap.is_valid(x, y)) continue;
      double depth_mm = dmap.at(x, y);
      if (dmap.normalized) depth_mm = dmap.norm_min_mm + depth_mm * span;
      const double wx = cam.origin_x_mm + (x + 0.5) * cam.pitch_x_mm;
      const double wy = cam.origin_y_mm + (y + 0.5) * cam.pitch_y_mm;
      const double wz = cam.camera_z_mm - depth_mm;
      pts.emplace_back(wx * 1e-3, wy * 1e-3, wz * 1e-3);
    }
  }
  PointCloud cloud;
  cloud.points.resize(static_cast<Eigen::Index>(pts.size()), 3);
  for (size_t i = 0; i < pts.size(); ++i) {
    cloud.points.row(static_cast<Eigen::Index>(i)) = pts[i];
  }
  cloud.source = "depth";
  return cloud;
}

}  // namespace ctbody
