#include <catch2/catch_amalgamated.hpp>

#include <map>
#include <set>

#include "ctbody/ct_pipeline.hpp"
#include "ctbody/marching_cubes.hpp"

using namespace ctbody;

namespace {

Volume sphere_volume(double radius_mm, double spacing_mm, double inside_hu = 100.0) {
  const double pad = 4.0 * spacing_mm;
  const int n = static_cast<int>(std::ceil(2.0 * (radius_mm + pad) / spacing_mm));
  Volume vol;
  vol.dims = {n, n, n};
  vol.spacing_mm = {spacing_mm, spacing_mm, spacing_mm};
  const double half = 0.5 * n * spacing_mm;
  vol.origin_mm = {-half, -half, -half};
  vol.intensities.assign(vol.voxel_count(), -1000.0f);
  for (int z = 0; z < n; ++z) {
    for (int y = 0; y < n; ++y) {
      for (int x = 0; x < n; ++x) {
        if (vol.voxel_center_mm(x, y, z).norm() <= radius_mm) {
          vol.intensities[vol.index(x, y, z)] = static_cast<float>(inside_hu);
        }
      }
    }
  }
  return vol;
}

// Counts how many faces share each undirected edge; 2 everywhere on a closed
// manifold surface.
std::map<std::pair<int, int>, int> edge_counts(const TriMesh& mesh) {
  std::map<std::pair<int, int>, int> counts;
  for (const auto& f : mesh.faces) {
    for (int e = 0; e < 3; ++e) {
      int a = f[static_cast<size_t>(e)];
      int b = f[static_cast<size_t>((e + 1) % 3)];
      if (a > b) std::swap(a, b);
      ++counts[{a, b}];
    }
  }
  return counts;
}

}  // namespace

TEST_CASE("extracted surface is closed, welded, and outward") {
  BinaryMask mask;
  mask.dims = {6, 5, 4};
  mask.spacing_mm = {2.0, 2.0, 2.0};
  mask.origin_mm = {10.0, -4.0, 0.0};
  mask.bits.assign(mask.voxel_count(), 0);
  // An L-shaped blob including boundary voxels.
  for (int z = 0; z < 2; ++z) {
    for (int y = 0; y < 3; ++y) {
      for (int x = 0; x < 6; ++x) mask.bits[mask.index(x, y, z)] = 1;
    }
  }
  for (int z = 2; z < 4; ++z) mask.bits[mask.index(0, 0, z)] = 1;

  const TriMesh surf = extract_surface(mask);
  REQUIRE(surf.vertex_count() > 0);

  for (const auto& [edge, n] : edge_counts(surf)) {
    (void)edge;
    REQUIRE(n == 2);
  }

  // Vertices are welded: no duplicated coordinates.
  std::set<std::array<double, 3>> unique_pts;
  for (int v = 0; v < surf.vertex_count(); ++v) {
    unique_pts.insert({surf.vertices(v, 0), surf.vertices(v, 1), surf.vertices(v, 2)});
  }
  REQUIRE(unique_pts.size() == static_cast<size_t>(surf.vertex_count()));

  // Outward winding gives positive enclosed volume, close to the voxel sum.
  const double vol = mesh_signed_volume(surf);
  const double voxel_vol = static_cast<double>(mask.count()) * 8.0;
  REQUIRE(vol > 0.0);
  REQUIRE(vol == Catch::Approx(voxel_vol).epsilon(0.35));
}

TEST_CASE("surface of a single voxel is a closed octahedron-like shell") {
  BinaryMask mask;
  mask.dims = {1, 1, 1};
  mask.spacing_mm = {3.0, 3.0, 3.0};
  mask.bits = {1};
  const TriMesh surf = extract_surface(mask);
  REQUIRE(surf.face_count() > 0);
  for (const auto& [edge, n] : edge_counts(surf)) {
    (void)edge;
    REQUIRE(n == 2);
  }
  REQUIRE(mesh_signed_volume(surf) > 0.0);
  // Every vertex sits on an edge midpoint around the voxel center.
  const Vec3 center = mask.voxel_center_mm(0, 0, 0);
  for (int v = 0; v < surf.vertex_count(); ++v) {
    REQUIRE((surf.vertices.row(v).transpose() - center).norm() == Catch::Approx(1.5));
  }
}

TEST_CASE("empty mask yields an empty surface") {
  BinaryMask mask;
  mask.dims = {3, 3, 3};
  mask.bits.assign(27, 0);
  const TriMesh surf = extract_surface(mask);
  REQUIRE(surf.face_count() == 0);
}

TEST_CASE("segment_body windows and keeps the main component") {
  Volume vol = sphere_volume(30.0, 3.0);
  // A detached dense lump: one bright voxel away from the sphere.
  vol.intensities[vol.index(1, 1, 1)] = 500.0f;

  CtPipelineConfig cfg;
  cfg.morph_open_radius = 0;
  cfg.morph_close_radius = 0;
  const BinaryMask mask = segment_body(vol, cfg);
  REQUIRE_FALSE(mask.at(1, 1, 1));  // small blob removed
  const int mid = vol.dims[0] / 2;
  REQUIRE(mask.at(mid, mid, mid));

  cfg.keep_largest_component = false;
  const BinaryMask all = segment_body(vol, cfg);
  REQUIRE(all.at(1, 1, 1));

  // Windowing alone cuts off the lump when it is out of range.
  cfg.threshold_hi_hu = 400.0;
  cfg.keep_largest_component = false;
  const BinaryMask windowed = segment_body(vol, cfg);
  REQUIRE_FALSE(windowed.at(1, 1, 1));
}

TEST_CASE("segment_body crop clears voxels outside the box") {
  const Volume vol = sphere_volume(30.0, 3.0);
  CtPipelineConfig cfg;
  cfg.morph_open_radius = 0;
  cfg.morph_close_radius = 0;
  CropBox box;
  box.min_mm = Vec3(0.0, -1e30, -1e30);  // keep only the +x half
  cfg.crop = box;
  const BinaryMask half = segment_body(vol, cfg);
  for (int z = 0; z < vol.dims[2]; ++z) {
    for (int y = 0; y < vol.dims[1]; ++y) {
      for (int x = 0; x < vol.dims[0]; ++x) {
        if (half.at(x, y, z)) REQUIRE(half.voxel_center_mm(x, y, z).x() >= 0.0);
      }
    }
  }
  REQUIRE(half.count() > 0);
}

TEST_CASE("segment_body rejects an all-background volume") {
  Volume vol;
  vol.dims = {4, 4, 4};
  vol.intensities.assign(64, -1000.0f);
  CtPipelineConfig cfg;
  try {
    segment_body(vol, cfg);
    FAIL("expected empty segmentation to throw");
  } catch (const Error& e) {
    REQUIRE(e.code() == ErrorCode::EmptyMask);
  }
}

TEST_CASE("surface_from_volume applies smoothing") {
  const Volume vol = sphere_volume(40.0, 4.0);
  CtPipelineConfig cfg;
  cfg.morph_open_radius = 0;
  cfg.morph_close_radius = 0;

  CtPipelineConfig raw_cfg = cfg;
  raw_cfg.smooth_iterations = 0;
  const TriMesh raw = surface_from_volume(vol, raw_cfg);
  const TriMesh smooth = surface_from_volume(vol, cfg);
  REQUIRE(raw.vertex_count() == smooth.vertex_count());
  REQUIRE((raw.vertices - smooth.vertices).cwiseAbs().maxCoeff() > 0.1);

  // Smoothing tightens the jagged shell toward the true sphere area.
  const double true_area = 4.0 * kPi * 40.0 * 40.0;
  const double raw_err = std::abs(mesh_surface_area(raw) - true_area);
  const double smooth_err = std::abs(mesh_surface_area(smooth) - true_area);
  REQUIRE(smooth_err < raw_err);
}

TEST_CASE("sphere volume survives the full surface pipeline") {
  const Volume vol = sphere_volume(50.0, 3.0);
  CtPipelineConfig cfg;
  const TriMesh surf = surface_from_volume(vol, cfg);
  const double true_vol = 4.0 / 3.0 * kPi * 50.0 * 50.0 * 50.0;
  REQUIRE(mesh_signed_volume(surf) == Catch::Approx(true_vol).epsilon(0.05));
}

TEST_CASE("cloud_from_volume samples the surface in meters") {
  const Volume vol = sphere_volume(60.0, 4.0);
  CtPipelineConfig cfg;
  cfg.sample_count = 700;
  cfg.seed = 5;
  const PointCloud cloud = cloud_from_volume(vol, cfg);
  REQUIRE(cloud.size() == 700);
  REQUIRE(cloud.source == "ct");
  // All samples lie near a 60 mm = 0.06 m radius shell around the origin.
  for (int i = 0; i < cloud.size(); ++i) {
    REQUIRE(cloud.points.row(i).norm() == Catch::Approx(0.060).margin(0.01));
  }

  const PointCloud again = cloud_from_volume(vol, cfg);
  REQUIRE((cloud.points - again.points).norm() == 0.0);
  cfg.seed = 6;
  const PointCloud other = cloud_from_volume(vol, cfg);
  REQUIRE((cloud.points - other.points).norm() > 0.0);
}
