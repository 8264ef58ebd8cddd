#include <catch2/catch_amalgamated.hpp>

#include "ctbody/synth.hpp"

using namespace ctbody;

namespace {

const ToyModel& toy() {
  static const ToyModel model = make_toy_model();
  return model;
}

}  // namespace

TEST_CASE("toy model satisfies the structural contract") {
  REQUIRE_NOTHROW(validate_spec(toy().spec));
  REQUIRE(toy().spec.shape_dim() == 4);
  REQUIRE(toy().spec.joint_count() == 12);
  REQUIRE(toy().spec.vertex_count() > 0);
  REQUIRE(toy().spec.parent[0] == -1);
  for (int j = 1; j < toy().spec.joint_count(); ++j) {
    REQUIRE(toy().spec.parent[static_cast<size_t>(j)] >= 0);
    REQUIRE(toy().spec.parent[static_cast<size_t>(j)] < j);
  }
  REQUIRE(toy().landmark_vertices.size() == toy().landmark_names.size());
  REQUIRE(toy().landmark_vertices.size() >= 5);
  for (const int v : toy().landmark_vertices) {
    REQUIRE(v >= 0);
    REQUIRE(v < toy().spec.vertex_count());
  }
  REQUIRE_FALSE(toy().torso_mask.empty());
  for (const int v : toy().torso_mask) {
    REQUIRE(v >= 0);
    REQUIRE(v < toy().spec.vertex_count());
  }
}

TEST_CASE("toy model rest height is human scaled") {
  const BodyMesh rest = forward(toy().spec, BodyParams::rest(4, 12));
  const double h = body_height(rest, toy().body_axis);
  REQUIRE(h > 1.4);
  REQUIRE(h < 2.1);
}

TEST_CASE("toy model construction is deterministic") {
  const ToyModel a = make_toy_model();
  const ToyModel b = make_toy_model();
  REQUIRE((a.spec.template_vertices - b.spec.template_vertices).norm() == 0.0);
  REQUIRE((a.spec.shape_basis - b.spec.shape_basis).norm() == 0.0);
  ToySpec seeded;
  seeded.seed = 9;
  const ToyModel c = make_toy_model(seeded);
  REQUIRE((a.spec.template_vertices - c.spec.template_vertices).norm() > 0.0);
}

TEST_CASE("toy spec validation") {
  ToySpec bad;
  bad.shape_dim = 3;
  REQUIRE_THROWS_AS(make_toy_model(bad), Error);
  bad = ToySpec{};
  bad.ring_vertices = 2;
  REQUIRE_THROWS_AS(make_toy_model(bad), Error);
  bad = ToySpec{};
  bad.rings_per_segment = 0;
  REQUIRE_THROWS_AS(make_toy_model(bad), Error);
}

TEST_CASE("shape dimensions act as documented") {
  const BodyParams rest = BodyParams::rest(4, 12);
  const BodyMesh base = forward(toy().spec, rest);
  const double h0 = body_height(base, toy().body_axis);

  BodyParams scale_up = rest;
  scale_up.beta(0) = 1.0;
  const double h_scaled = body_height(forward(toy().spec, scale_up), toy().body_axis);
  REQUIRE(h_scaled > h0 * 1.05);

  BodyParams girth = rest;
  girth.beta(1) = 1.0;
  const BodyMesh wide = forward(toy().spec, girth);
  // Torso girth leaves the overall height nearly unchanged...
  REQUIRE(body_height(wide, toy().body_axis) == Catch::Approx(h0).epsilon(0.02));
  // ...but widens the torso cross-section.
  double base_spread = 0.0, wide_spread = 0.0;
  for (const int v : toy().torso_mask) {
    base_spread += std::hypot(base.vertices(v, 1), base.vertices(v, 2));
    wide_spread += std::hypot(wide.vertices(v, 1), wide.vertices(v, 2));
  }
  REQUIRE(wide_spread > base_spread * 1.05);
}

TEST_CASE("random supine parameters stay in range") {
  Rng rng(15);
  for (int t = 0; t < 20; ++t) {
    const BodyParams p = random_supine_params(toy(), rng, 0.8, 0.25);
    REQUIRE(p.beta.cwiseAbs().maxCoeff() <= 0.8);
    REQUIRE(p.theta.cwiseAbs().maxCoeff() <= 0.25 + 1e-12);
    REQUIRE(std::abs(p.trans.x()) <= 0.05);
    REQUIRE(std::abs(p.trans.z()) <= 0.01);
    // The root never rotates: the body stays supine.
    REQUIRE(p.theta.row(0).norm() == 0.0);
  }
}

TEST_CASE("voxelize fills a box exactly") {
  // A 40 x 20 x 20 mm box, voxelized at 2 mm.
  TriMesh box;
  box.vertices.resize(8, 3);
  box.vertices << 0, 0, 0, 40, 0, 0, 40, 20, 0, 0, 20, 0, 0, 0, 20, 40, 0, 20, 40, 20, 20, 0, 20, 20;
  box.faces = {{0, 2, 1}, {0, 3, 2}, {4, 5, 6}, {4, 6, 7}, {0, 1, 5}, {0, 5, 4},
               {2, 3, 7}, {2, 7, 6}, {0, 4, 7}, {0, 7, 3}, {1, 2, 6}, {1, 6, 5}};
  VoxelizeOptions opt;
  opt.spacing_mm = 2.0;
  opt.bed = false;
  const Volume vol = voxelize_mesh(box, opt);

  size_t inside = 0;
  for (const float hu : vol.intensities) {
    if (hu > 0.0f) ++inside;
  }
  const double vol_mm3 = static_cast<double>(inside) * 8.0;
  REQUIRE(vol_mm3 == Catch::Approx(40.0 * 20.0 * 20.0).epsilon(0.1));

  // Inside voxels carry the body HU; all others are air.
  bool saw_air = false;
  for (const float hu : vol.intensities) {
    REQUIRE((hu == Catch::Approx(opt.inside_hu) || hu == Catch::Approx(opt.air_hu)));
    if (hu < 0.0f) saw_air = true;
  }
  REQUIRE(saw_air);
}

TEST_CASE("voxelize adds a bed slab below the body") {
  TriMesh box;
  box.vertices.resize(8, 3);
  box.vertices << 0, 0, 0, 40, 0, 0, 40, 20, 0, 0, 20, 0, 0, 0, 20, 40, 0, 20, 40, 20, 20, 0, 20, 20;
  box.faces = {{0, 2, 1}, {0, 3, 2}, {4, 5, 6}, {4, 6, 7}, {0, 1, 5}, {0, 5, 4},
               {2, 3, 7}, {2, 7, 6}, {0, 4, 7}, {0, 7, 3}, {1, 2, 6}, {1, 6, 5}};
  VoxelizeOptions opt;
  opt.spacing_mm = 2.0;
  opt.bed = true;
  const Volume with_bed = voxelize_mesh(box, opt);
  opt.bed = false;
  const Volume without = voxelize_mesh(box, opt);

  // Same lattice either way, so CT geometry does not depend on the bed flag.
  REQUIRE(with_bed.dims == without.dims);
  REQUIRE(with_bed.origin_mm == without.origin_mm);

  size_t bed_voxels = 0;
  double bed_top = -1e30, bed_bottom = 1e30;
  for (int z = 0; z < with_bed.dims[2]; ++z) {
    for (int y = 0; y < with_bed.dims[1]; ++y) {
      for (int x = 0; x < with_bed.dims[0]; ++x) {
        const float hu = with_bed.intensities[with_bed.index(x, y, z)];
        if (hu == Catch::Approx(opt.bed_hu)) {
          ++bed_voxels;
          const double zc = with_bed.voxel_center_mm(x, y, z).z();
          bed_top = std::max(bed_top, zc);
          bed_bottom = std::min(bed_bottom, zc);
        }
      }
    }
  }
  REQUIRE(bed_voxels > 0);
  // The slab sits below the body with the configured gap, within a voxel.
  REQUIRE(bed_top <= 0.0 - opt.bed_gap_mm + opt.spacing_mm);
  REQUIRE(bed_top - bed_bottom <= opt.bed_thickness_mm + opt.spacing_mm);
}

TEST_CASE("gen_entry is deterministic and self-consistent") {
  Rng rng(33);
  const BodyParams p = random_supine_params(toy(), rng, 0.6, 0.1);
  GenOptions opt;
  opt.voxel.spacing_mm = 8.0;
  opt.depth_width = 128;
  opt.depth_height = 54;
  opt.seed = 123;

  const DatasetEntry a = gen_entry(toy(), p, opt);
  const DatasetEntry b = gen_entry(toy(), p, opt);
  REQUIRE((a.vertices_m - b.vertices_m).norm() == 0.0);
  REQUIRE(a.depth.depth == b.depth.depth);
  REQUIRE(a.volume.intensities == b.volume.intensities);

  REQUIRE(a.height_m == Catch::Approx(body_height(forward(toy().spec, p), toy().body_axis)));
  REQUIRE(a.depth.width == 128);
  REQUIRE(a.depth.height == 54);
  REQUIRE(a.depth.camera);
  REQUIRE(a.depth.valid_count() > 0);
  REQUIRE_FALSE(a.draped);

  // Landmarks are noise-free posed vertex positions.
  REQUIRE(a.landmarks.size() == toy().landmark_vertices.size());
  for (const Landmark& lm : a.landmarks) {
    REQUIRE((a.vertices_m.row(lm.vertex).transpose() - lm.target_m).norm() == 0.0);
  }
}

TEST_CASE("draping lowers no depth and covers at least the body") {
  Rng rng(44);
  const BodyParams p = random_supine_params(toy(), rng, 0.5, 0.1);
  GenOptions opt;
  opt.voxel.spacing_mm = 8.0;
  opt.seed = 5;

  const DatasetEntry bare = gen_entry(toy(), p, opt);
  opt.drape = true;
  const DatasetEntry draped = gen_entry(toy(), p, opt);
  REQUIRE(draped.draped);

  // The cloth only ever moves surfaces toward the camera (smaller depth) and
  // never invalidates a pixel.
  size_t closer = 0;
  for (int y = 0; y < bare.depth.height; ++y) {
    for (int x = 0; x < bare.depth.width; ++x) {
      if (!bare.depth.is_valid(x, y)) continue;
      REQUIRE(draped.depth.is_valid(x, y));
      REQUIRE(draped.depth.at(x, y) <= bare.depth.at(x, y) + 1e-9);
      if (draped.depth.at(x, y) < bare.depth.at(x, y) - 1e-9) ++closer;
    }
  }
  // The drape also extends past the silhouette onto new pixels.
  REQUIRE(draped.depth.valid_count() > bare.depth.valid_count());
  REQUIRE(closer > 0);

  // The volume never sees the drape.
  REQUIRE(draped.volume.intensities == bare.volume.intensities);
}

TEST_CASE("depth noise is seed-controlled and leaves geometry untouched") {
  Rng rng(55);
  const BodyParams p = random_supine_params(toy(), rng, 0.5, 0.1);
  GenOptions opt;
  opt.voxel.spacing_mm = 8.0;
  opt.seed = 77;

  const DatasetEntry clean = gen_entry(toy(), p, opt);
  opt.noise_sigma_mm = 3.0;
  const DatasetEntry noisy = gen_entry(toy(), p, opt);
  REQUIRE(noisy.depth.valid == clean.depth.valid);
  REQUIRE(noisy.depth.depth != clean.depth.depth);
  REQUIRE(noisy.volume.intensities == clean.volume.intensities);
  REQUIRE((noisy.vertices_m - clean.vertices_m).norm() == 0.0);

  double max_dev = 0.0;
  for (size_t i = 0; i < clean.depth.depth.size(); ++i) {
    if (!clean.depth.valid[i]) continue;
    max_dev = std::max(max_dev, std::abs(noisy.depth.depth[i] - clean.depth.depth[i]));
  }
  REQUIRE(max_dev > 0.1);
  REQUIRE(max_dev < 6.0 * opt.noise_sigma_mm);

  // Same geometry under a different seed gives different noise.
  opt.seed = 78;
  const DatasetEntry other = gen_entry(toy(), p, opt);
  REQUIRE(other.depth.depth != noisy.depth.depth);
}
