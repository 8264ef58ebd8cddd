#pragma once

#include <optional>

#include "ctbody/core.hpp"
#include "ctbody/marching_cubes.hpp"
#include "ctbody/mesh.hpp"
#include "ctbody/sampling.hpp"
#include "ctbody/volume.hpp"

namespace ctbody {

/// Axis-aligned crop box in world mm; voxels with centers outside are cleared.
struct CropBox {
  Vec3 min_mm{-1e30, -1e30, -1e30};
  Vec3 max_mm{1e30, 1e30, 1e30};
};

struct CtPipelineConfig {
  double threshold_lo_hu = -300.0;
  double threshold_hi_hu = 2000.0;
  int morph_open_radius = 1;
  int morph_close_radius = 1;
  bool keep_largest_component = true;
  int smooth_iterations = 10;
  int sample_count = 5000;
  std::uint64_t seed = 0;
  std::optional<CropBox> crop;
};

inline BinaryMask apply_crop(const BinaryMask& mask, const CropBox& box) {
  BinaryMask out = mask;
  for (int z = 0; z < mask.dims[2]; ++z) {
    for (int y = 0; y < mask.dims[1]; ++y) {
      for (int x = 0; x < mask.dims[0]; ++x) {
        const size_t i = mask.index(x, y, z);
        if (!out.bits[i]) continue;
        const Vec3 c = mask.voxel_center_mm(x, y, z);
        if ((c.array() < box.min_mm.array()).any() || (c.array() > box.max_mm.array()).any()) {
          out.bits[i] = 0;
        }
      }
    }
  }
  return out;
}

/// Body segmentation: HU window -> crop -> opening/closing -> largest
/// component (drops bed/couch structures).
inline BinaryMask segment_body(const Volume& volume, const CtPipelineConfig& cfg) {
  BinaryMask mask = threshold(volume, cfg.threshold_lo_hu, cfg.threshold_hi_hu);
  if (cfg.crop) mask = apply_crop(mask, *cfg.crop);
  mask = morph(mask, MorphOp::Open, cfg.morph_open_radius);
  mask = morph(mask, MorphOp::Close, cfg.morph_close_radius);
  if (cfg.keep_largest_component) mask = remove_bed(mask);
  if (mask.count() == 0) throw Error(ErrorCode::EmptyMask, "segmentation produced empty mask");
  return mask;
}

/// Surface mesh (world mm) of the segmented body.
inline TriMesh surface_from_volume(const Volume& volume, const CtPipelineConfig& cfg) {
  const BinaryMask mask = segment_body(volume, cfg);
  TriMesh mesh = extract_surface(mask);
  if (cfg.smooth_iterations > 0) mesh = smooth_mesh_taubin(mesh, cfg.smooth_iterations);
  return mesh;
}

/// Full shape-side front end: CT volume to a uniform surface point cloud in
/// meters, ready for model registration.
inline PointCloud cloud_from_volume(const Volume& volume, const CtPipelineConfig& cfg) {
  const TriMesh mesh = surface_from_volume(volume, cfg);
  PointCloud cloud = sample_surface(mesh, cfg.sample_count, cfg.seed);
  cloud.source = "ct";
  return cloud;
}

}  // namespace ctbody
