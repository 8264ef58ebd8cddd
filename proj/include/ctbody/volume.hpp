#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "ctbody/core.hpp"

namespace ctbody {

/// Scalar voxel grid (HU). Linear index runs x fastest: x + nx*(y + ny*z).
/// Voxel (i,j,k) center sits at origin + spacing .* (i+0.5, j+0.5, k+0.5) mm.
struct Volume {
  std::array<int, 3> dims{0, 0, 0};
  std::array<double, 3> spacing_mm{1.0, 1.0, 1.0};
  std::array<double, 3> origin_mm{0.0, 0.0, 0.0};
  std::vector<float> intensities;

  size_t voxel_count() const {
    return static_cast<size_t>(dims[0]) * static_cast<size_t>(dims[1]) *
           static_cast<size_t>(dims[2]);
  }
  size_t index(int x, int y, int z) const {
    return static_cast<size_t>(x) +
           static_cast<size_t>(dims[0]) * (static_cast<size_t>(y) +
                                           static_cast<size_t>(dims[1]) * static_cast<size_t>(z));
  }
  Vec3 voxel_center_mm(int x, int y, int z) const {
    return Vec3(origin_mm[0] + spacing_mm[0] * (x + 0.5), origin_mm[1] + spacing_mm[1] * (y + 0.5),
                origin_mm[2] + spacing_mm[2] * (z + 0.5));
  }
};

struct BinaryMask {
  std::array<int, 3> dims{0, 0, 0};
  std::array<double, 3> spacing_mm{1.0, 1.0, 1.0};
  std::array<double, 3> origin_mm{0.0, 0.0, 0.0};
  std::vector<std::uint8_t> bits;

  size_t voxel_count() const {
    return static_cast<size_t>(dims[0]) * static_cast<size_t>(dims[1]) *
           static_cast<size_t>(dims[2]);
  }
  size_t index(int x, int y, int z) const {
    return static_cast<size_t>(x) +
           static_cast<size_t>(dims[0]) * (static_cast<size_t>(y) +
                                           static_cast<size_t>(dims[1]) * static_cast<size_t>(z));
  }
  bool at(int x, int y, int z) const { return bits[index(x, y, z)] != 0; }
  size_t count() const {
    size_t n = 0;
    for (auto b : bits) n += b != 0;
    return n;
  }
  Vec3 voxel_center_mm(int x, int y, int z) const {
    return Vec3(origin_mm[0] + spacing_mm[0] * (x + 0.5), origin_mm[1] + spacing_mm[1] * (y + 0.5),
                origin_mm[2] + spacing_mm[2] * (z + 0.5));
  }
  static BinaryMask like(const Volume& vol) {
    BinaryMask m;
    m.dims = vol.dims;
    m.spacing_mm = vol.spacing_mm;
    m.origin_mm = vol.origin_mm;
    m.bits.assign(vol.voxel_count(), 0);
    return m;
  }
};

// ---------------------------------------------------------------------------
// Volume file format: <name>.json sidecar + raw little-endian voxel blob.
// Sidecar: {"dims":[nx,ny,nz],"spacing_mm":[...],"origin_mm":[...],
//           "dtype":"i16"|"f32"|"f64","data":"relative/blob/path"}
// ---------------------------------------------------------------------------

inline void save_volume(const Volume& vol, const std::string& sidecar_path,
                        const std::string& dtype = "i16") {
  const std::filesystem::path sp(sidecar_path);
  const std::string blob_name = sp.stem().string() + ".raw";
  nlohmann::json j;
  j["dims"] = vol.dims;
  j["spacing_mm"] = vol.spacing_mm;
  j["origin_mm"] = vol.origin_mm;
  j["dtype"] = dtype;
  j["data"] = blob_name;
  std::ofstream side(sidecar_path);
  if (!side) throw Error(ErrorCode::Io, "cannot open for writing: " + sidecar_path);
  side << j.dump(2) << "\n";

  std::ofstream blob(sp.parent_path() / blob_name, std::ios::binary);
  if (!blob) throw Error(ErrorCode::Io, "cannot open blob for writing");
  if (dtype == "i16") {
    std::vector<std::int16_t> buf(vol.intensities.size());
    for (size_t i = 0; i < buf.size(); ++i) buf[i] = static_cast<std::int16_t>(vol.intensities[i]);
    blob.write(reinterpret_cast<const char*>(buf.data()),
               static_cast<std::streamsize>(buf.size() * 2));
  } else if (dtype == "f32") {
    blob.write(reinterpret_cast<const char*>(vol.intensities.data()),
               static_cast<std::streamsize>(vol.intensities.size() * 4));
  } else if (dtype == "f64") {
    std::vector<double> buf(vol.intensities.begin(), vol.intensities.end());
    blob.write(reinterpret_cast<const char*>(buf.data()),
               static_cast<std::streamsize>(buf.size() * 8));
  } else {
    throw Error(ErrorCode::Config, "unknown volume dtype: " + dtype);
  }
  if (!blob) throw Error(ErrorCode::Io, "blob write failed");
}

inline Volume load_volume(const std::string& sidecar_path) {
  std::ifstream side(sidecar_path);
  if (!side) throw Error(ErrorCode::Io, "cannot open: " + sidecar_path);
  nlohmann::json j;
  try {
    side >> j;
  } catch (const std::exception& e) {
    throw Error(ErrorCode::Io, std::string("bad volume sidecar: ") + e.what());
  }
  Volume vol;
  vol.dims = j.at("dims").get<std::array<int, 3>>();
  vol.spacing_mm = j.at("spacing_mm").get<std::array<double, 3>>();
  vol.origin_mm = j.at("origin_mm").get<std::array<double, 3>>();
  for (int d = 0; d < 3; ++d) {
    if (vol.dims[static_cast<size_t>(d)] <= 0 || vol.spacing_mm[static_cast<size_t>(d)] <= 0) {
      throw Error(ErrorCode::Config, "volume dims and spacing must be positive");
    }
  }
  const std::string dtype = j.at("dtype").get<std::string>();
  const auto blob_path =
      std::filesystem::path(sidecar_path).parent_path() / j.at("data").get<std::string>();
  std::ifstream blob(blob_path, std::ios::binary);
  if (!blob) throw Error(ErrorCode::Io, "cannot open blob: " + blob_path.string());
  const size_t n = vol.voxel_count();
  vol.intensities.resize(n);
  if (dtype == "i16") {
    std::vector<std::int16_t> buf(n);
    blob.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n * 2));
    for (size_t i = 0; i < n; ++i) vol.intensities[i] = static_cast<float>(buf[i]);
  } else if (dtype == "f32") {
    blob.read(reinterpret_cast<char*>(vol.intensities.data()), static_cast<std::streamsize>(n * 4));
  } else if (dtype == "f64") {
    std::vector<double> buf(n);
    blob.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n * 8));
    for (size_t i = 0; i < n; ++i) vol.intensities[i] = static_cast<float>(buf[i]);
  } else {
    throw Error(ErrorCode::Io, "unknown volume dtype: " + dtype);
  }
  if (!blob) throw Error(ErrorCode::Io, "truncated volume blob: " + blob_path.string());
  return vol;
}

// ---------------------------------------------------------------------------
// Segmentation primitives
// ---------------------------------------------------------------------------

/// Mask bit set iff lo <= intensity <= hi. Infinite bounds act as open ends.
inline BinaryMask threshold(const Volume& vol, double lo_hu, double hi_hu) {
  if (lo_hu > hi_hu) throw Error(ErrorCode::InvalidRange, "threshold requires lo <= hi");
  BinaryMask mask = BinaryMask::like(vol);
  const size_t n = vol.voxel_count();
  for (size_t i = 0; i < n; ++i) {
    const double v = vol.intensities[i];
    mask.bits[i] = (v >= lo_hu && v <= hi_hu) ? 1 : 0;
  }
  return mask;
}

namespace detail {

// Felzenszwalb-Huttenlocher 1D squared distance transform.
inline void edt_1d(std::vector<double>& f, std::vector<double>& d, std::vector<int>& v,
                   std::vector<double>& z, int n) {
  int k = 0;
  v[0] = 0;
  z[0] = -std::numeric_limits<double>::infinity();
  z[1] = std::numeric_limits<double>::infinity();
  for (int q = 1; q < n; ++q) {
    double s;
    while (true) {
      const int p = v[static_cast<size_t>(k)];
      s = ((f[static_cast<size_t>(q)] + q * q) - (f[static_cast<size_t>(p)] + p * p)) /
          (2.0 * q - 2.0 * p);
      if (s <= z[static_cast<size_t>(k)]) {
        --k;
      } else {
        break;
      }
    }
    ++k;
    v[static_cast<size_t>(k)] = q;
    z[static_cast<size_t>(k)] = s;
    z[static_cast<size_t>(k) + 1] = std::numeric_limits<double>::infinity();
  }
  k = 0;
  for (int q = 0; q < n; ++q) {
    while (z[static_cast<size_t>(k) + 1] < q) ++k;
    const int p = v[static_cast<size_t>(k)];
    d[static_cast<size_t>(q)] = (q - p) * static_cast<double>(q - p) + f[static_cast<size_t>(p)];
  }
}

// Exact squared Euclidean distance (in voxels) to the nearest set voxel.
inline std::vector<double> squared_edt(const BinaryMask& mask) {
  const int nx = mask.dims[0], ny = mask.dims[1], nz = mask.dims[2];
  const double inf = 1e18;
  std::vector<double> dist(mask.voxel_count());
  for (size_t i = 0; i < dist.size(); ++i) dist[i] = mask.bits[i] ? 0.0 : inf;
  const int nmax = std::max({nx, ny, nz});
  std::vector<double> f(static_cast<size_t>(nmax)), d(static_cast<size_t>(nmax)),
      z(static_cast<size_t>(nmax) + 1);
  std::vector<int> v(static_cast<size_t>(nmax));
  // x pass
  for (int zz = 0; zz < nz; ++zz) {
    for (int y = 0; y < ny; ++y) {
      const size_t base = mask.index(0, y, zz);
      for (int x = 0; x < nx; ++x) f[static_cast<size_t>(x)] = dist[base + static_cast<size_t>(x)];
      edt_1d(f, d, v, z, nx);
      for (int x = 0; x < nx; ++x) dist[base + static_cast<size_t>(x)] = d[static_cast<size_t>(x)];
    }
  }
  // y pass
  for (int zz = 0; zz < nz; ++zz) {
    for (int x = 0; x < nx; ++x) {
      for (int y = 0; y < ny; ++y) f[static_cast<size_t>(y)] = dist[mask.index(x, y, zz)];
      edt_1d(f, d, v, z, ny);
      for (int y = 0; y < ny; ++y) dist[mask.index(x, y, zz)] = d[static_cast<size_t>(y)];
    }
  }
  // z pass
  for (int y = 0; y < ny; ++y) {
    for (int x = 0; x < nx; ++x) {
      for (int zz = 0; zz < nz; ++zz) f[static_cast<size_t>(zz)] = dist[mask.index(x, y, zz)];
      edt_1d(f, d, v, z, nz);
      for (int zz = 0; zz < nz; ++zz) dist[mask.index(x, y, zz)] = d[static_cast<size_t>(zz)];
    }
  }
  return dist;
}

inline BinaryMask complement(const BinaryMask& mask) {
  BinaryMask out = mask;
  for (auto& b : out.bits) b = b ? 0 : 1;
  return out;
}

// Dilation by the discrete ball {d : |d|^2 <= r^2}; voxels outside the grid
// are background. Implemented through the exact EDT, which is equivalent to
// stamping the ball over every set voxel.
inline BinaryMask dilate_ball(const BinaryMask& mask, int radius) {
  if (radius <= 0) return mask;
  const auto dist = squared_edt(mask);
  BinaryMask out = mask;
  const double r2 = static_cast<double>(radius) * radius;
  for (size_t i = 0; i < out.bits.size(); ++i) out.bits[i] = dist[i] <= r2 ? 1 : 0;
  return out;
}

inline BinaryMask erode_ball(const BinaryMask& mask, int radius) {
  if (radius <= 0) return mask;
  return complement(dilate_ball(complement(mask), radius));
}

}  // namespace detail

enum class MorphOp { Open, Close };

/// Binary opening/closing with a discrete ball structuring element.
/// Radius 0 is the identity.
inline BinaryMask morph(const BinaryMask& mask, MorphOp op, int radius_voxels) {
  if (radius_voxels < 0) throw Error(ErrorCode::InvalidRange, "morph radius must be >= 0");
  if (radius_voxels == 0) return mask;
  if (op == MorphOp::Open) {
    return detail::dilate_ball(detail::erode_ball(mask, radius_voxels), radius_voxels);
  }
  return detail::erode_ball(detail::dilate_ball(mask, radius_voxels), radius_voxels);
}

/// Connected-component labels under 6-connectivity; 0 = background,
/// components numbered from 1 in discovery (linear scan) order.
inline std::vector<std::int32_t> connected_components(const BinaryMask& mask, int* num_out = nullptr) {
  const int nx = mask.dims[0], ny = mask.dims[1], nz = mask.dims[2];
  std::vector<std::int32_t> labels(mask.voxel_count(), 0);
  std::vector<size_t> stack;
  std::int32_t next = 0;
  for (int z = 0; z < nz; ++z) {
    for (int y = 0; y < ny; ++y) {
      for (int x = 0; x < nx; ++x) {
        const size_t i = mask.index(x, y, z);
        if (!mask.bits[i] || labels[i]) continue;
        ++next;
        labels[i] = next;
        stack.assign(1, i);
        while (!stack.empty()) {
          const size_t cur = stack.back();
          stack.pop_back();
          const int cx = static_cast<int>(cur % static_cast<size_t>(nx));
          const int cy = static_cast<int>((cur / static_cast<size_t>(nx)) % static_cast<size_t>(ny));
          const int cz = static_cast<int>(cur / (static_cast<size_t>(nx) * static_cast<size_t>(ny)));
          const int nbr[6][3] = {{cx - 1, cy, cz}, {cx + 1, cy, cz}, {cx, cy - 1, cz},
                                 {cx, cy + 1, cz}, {cx, cy, cz - 1}, {cx, cy, cz + 1}};
          for (const auto& nb : nbr) {
            if (nb[0] < 0 || nb[0] >= nx || nb[1] < 0 || nb[1] >= ny || nb[2] < 0 || nb[2] >= nz) {
              continue;
            }
            const size_t ni = mask.index(nb[0], nb[1], nb[2]);
            if (mask.bits[ni] && !labels[ni]) {
              labels[ni] = next;
              stack.push_back(ni);
            }
          }
        }
      }
    }
  }
  if (num_out) *num_out = next;
  return labels;
}

/// Keeps only the largest 6-connected component; ties go to the component
/// whose first voxel has the smaller linear index (i.e. discovered first).
inline BinaryMask remove_bed(const BinaryMask& mask) {
  int num = 0;
  const auto labels = connected_components(mask, &num);
  if (num == 0) throw Error(ErrorCode::EmptyMask, "remove_bed on empty mask");
  std::vector<size_t> sizes(static_cast<size_t>(num) + 1, 0);
  for (auto l : labels) {
    if (l) ++sizes[static_cast<size_t>(l)];
  }
  std::int32_t best = 1;
  for (std::int32_t l = 2; l <= num; ++l) {
    if (sizes[static_cast<size_t>(l)] > sizes[static_cast<size_t>(best)]) best = l;
  }
  BinaryMask out = mask;
  for (size_t i = 0; i < out.bits.size(); ++i) out.bits[i] = labels[i] == best ? 1 : 0;
  return out;
}

/// Keeps voxels whose center plane coordinate is below the cutoff; helper for
/// scenes where bed and body touch and component analysis cannot split them.
inline BinaryMask cut_above_plane(const BinaryMask& mask, Axis axis, double cutoff_mm,
                                  bool keep_below = true) {
  BinaryMask out = mask;
  const int nx = mask.dims[0], ny = mask.dims[1], nz = mask.dims[2];
  for (int z = 0; z < nz; ++z) {
    for (int y = 0; y < ny; ++y) {
      for (int x = 0; x < nx; ++x) {
        const size_t i = mask.index(x, y, z);
        if (!out.bits[i]) continue;
        const double c = mask.voxel_center_mm(x, y, z)(axis_index(axis));
        const bool below = c <= cutoff_mm;
        if (below != keep_below) out.bits[i] = 0;
      }
    }
  }
  return out;
}

}  // namespace ctbody
