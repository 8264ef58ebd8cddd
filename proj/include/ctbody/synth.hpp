#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "ctbody/body_model.hpp"
#include "ctbody/core.hpp"
#include "ctbody/mesh.hpp"
#include "ctbody/pose_fit.hpp"
#include "ctbody/render.hpp"
#include "ctbody/volume.hpp"

namespace ctbody {

/// Construction parameters of the capsule-limbed toy body. Only the default
/// parameter counts (B=4, K=12) are supported; density knobs control mesh
/// resolution.
struct ToySpec {
  int rings_per_segment = 4;  // cross-section rings per capsule segment
  int ring_vertices = 10;
  int shape_dim = 4;
  int joint_count = 12;
  double jitter_m = 2e-4;  // symmetry-breaking vertex noise
  std::uint64_t seed = 0;
};

enum ToyJoint {
  kPelvis = 0,
  kSpine = 1,
  kChest = 2,
  kHead = 3,
  kLShoulder = 4,
  kLElbow = 5,
  kRShoulder = 6,
  kRElbow = 7,
  kLHip = 8,
  kLKnee = 9,
  kRHip = 10,
  kRKnee = 11,
};

/// Toy body model plus the annotations the evaluation protocol needs. The
/// body lies supine along +x (head towards +x), z up.
struct ToyModel {
  BodyModelSpec spec;
  std::vector<int> torso_mask;
  std::vector<int> landmark_vertices;
  std::vector<std::string> landmark_names;
  Axis body_axis = Axis::X;
};

namespace detail {

// Every segment voxelizes as a closed capsule (both ends get cap cones, the
// interior ones simply stay buried inside the neighbouring segment), which
// keeps the winding number well defined on the composite surface.
struct ToySegment {
  Vec3 a, b;
  double ra, rb;
  int joint_a, joint_b;  // skin joints at both ends (equal = rigid binding)
  bool torso = false;      // member of the torso region / girth dim
  int limb_root = -1;      // joint index anchoring the limb-length dim
  double length_anchor_x;  // rest x driving the torso-length dim; < 0 = vertex's own x
};

struct ToyBuilder {
  const ToySpec& cfg;
  Pts joints;  // K x 3 intended rest joints
  std::vector<Vec3> verts;
  std::vector<std::array<int, 3>> faces;
  std::vector<std::array<double, 2>> skin;  // weight on (joint_a, joint_b)
  std::vector<std::array<int, 2>> skin_joint;
  std::vector<Vec3> girth_dir;     // radial unit or zero
  std::vector<double> limb_s;      // axial distance from limb root (0 = off)
  std::vector<Vec3> limb_dir;      // limb stretch direction
  std::vector<double> length_f;    // torso-length factor in [0,1]
  std::vector<bool> torso_flag;
  std::vector<std::vector<int>> joint_rings;  // regressor support per joint

  explicit ToyBuilder(const ToySpec& c, const Pts& j)
      : cfg(c), joints(j), joint_rings(static_cast<size_t>(c.joint_count)) {}

  int add_vertex(const Vec3& p, int ja, int jb, double wb, const Vec3& girth, double ls,
                 const Vec3& ldir, double anchor_x, bool torso) {
    verts.push_back(p);
    skin.push_back({1.0 - wb, wb});
    skin_joint.push_back({ja, jb});
    girth_dir.push_back(girth);
    limb_s.push_back(ls);
    limb_dir.push_back(ldir);
    length_f.push_back(anchor_x < 0.0 ? p.x() : anchor_x);
    torso_flag.push_back(torso);
    return static_cast<int>(verts.size()) - 1;
  }

  // Blend fully onto joint_b over the last quarter of the segment.
  static double blend_weight(double s, bool blend) {
    if (!blend) return 0.0;
    const double t = std::clamp((s - 0.75) / 0.25, 0.0, 1.0);
    return t * t * (3.0 - 2.0 * t);
  }

  void add_segment(const ToySegment& seg, int register_joint_at_a = -1,
                   int register_joint_at_b = -1) {
    const Vec3 axis = seg.b - seg.a;
    const double len = axis.norm();
    const Vec3 u = axis / len;
    const Vec3 ref = std::abs(u.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
    const Vec3 p = (ref - ref.dot(u) * u).normalized();
    const Vec3 q = u.cross(p);
    const int n_rings = std::max(2, cfg.rings_per_segment + 1);
    const int n_around = cfg.ring_vertices;
    const bool blend = seg.joint_b != seg.joint_a;

    std::vector<int> prev_ring;
    std::vector<int> ring(static_cast<size_t>(n_around));
    for (int r = 0; r < n_rings; ++r) {
      const double s = static_cast<double>(r) / (n_rings - 1);
      const Vec3 center = seg.a + s * axis;
      const double radius = seg.ra + s * (seg.rb - seg.ra);
      const double wb = blend_weight(s, blend);
      for (int i = 0; i < n_around; ++i) {
        const double phi = 2.0 * kPi * i / n_around;
        const Vec3 radial = std::cos(phi) * p + std::sin(phi) * q;
        const double ls =
            seg.limb_root >= 0 ? (center - joints.row(seg.limb_root).transpose()).norm() : 0.0;
        ring[static_cast<size_t>(i)] =
            add_vertex(center + radius * radial, seg.joint_a, seg.joint_b, wb,
                       seg.torso ? radial : Vec3::Zero(), ls, seg.limb_root >= 0 ? u : Vec3::Zero(),
                       seg.length_anchor_x, seg.torso);
      }
      if (r == 0 && register_joint_at_a >= 0) {
        joint_rings[static_cast<size_t>(register_joint_at_a)] = ring;
      }
      if (r == n_rings - 1 && register_joint_at_b >= 0) {
        joint_rings[static_cast<size_t>(register_joint_at_b)] = ring;
      }
      if (r > 0) {
        for (int i = 0; i < n_around; ++i) {
          const int i2 = (i + 1) % n_around;
          const int a0 = prev_ring[static_cast<size_t>(i)], b0 = prev_ring[static_cast<size_t>(i2)];
          const int c0 = ring[static_cast<size_t>(i2)], d0 = ring[static_cast<size_t>(i)];
          faces.push_back({a0, b0, d0});
          faces.push_back({b0, c0, d0});
        }
      }
      if (r == 0) {
        const Vec3 apex_pos = seg.a - seg.ra * u;
        const double ls =
            seg.limb_root >= 0 ? (apex_pos - joints.row(seg.limb_root).transpose()).norm() : 0.0;
        const int apex = add_vertex(apex_pos, seg.joint_a, seg.joint_b, blend_weight(0.0, blend),
                                    Vec3::Zero(), ls, seg.limb_root >= 0 ? u : Vec3::Zero(),
                                    seg.length_anchor_x, seg.torso);
        for (int i = 0; i < n_around; ++i) {
          const int i2 = (i + 1) % n_around;
          faces.push_back({ring[static_cast<size_t>(i2)], ring[static_cast<size_t>(i)], apex});
        }
      }
      if (r == n_rings - 1) {
        const Vec3 apex_pos = seg.b + seg.rb * u;
        const double ls =
            seg.limb_root >= 0 ? (apex_pos - joints.row(seg.limb_root).transpose()).norm() : 0.0;
        const int apex = add_vertex(apex_pos, seg.joint_a, seg.joint_b, blend_weight(1.0, blend),
                                    Vec3::Zero(), ls, seg.limb_root >= 0 ? u : Vec3::Zero(),
                                    seg.length_anchor_x, seg.torso);
        for (int i = 0; i < n_around; ++i) {
          const int i2 = (i + 1) % n_around;
          faces.push_back({ring[static_cast<size_t>(i)], ring[static_cast<size_t>(i2)], apex});
        }
      }
      prev_ring = ring;
    }
  }
};

}  // namespace detail

inline ToyModel make_toy_model(const ToySpec& cfg = {}) {
  if (cfg.shape_dim != 4 || cfg.joint_count != 12) {
    throw Error(ErrorCode::Config, "toy model supports shape_dim=4, joint_count=12 only");
  }
  if (cfg.rings_per_segment < 1 || cfg.ring_vertices < 3) {
    throw Error(ErrorCode::Config, "toy model needs rings_per_segment >= 1, ring_vertices >= 3");
  }

  Pts joints(12, 3);
  joints << 0.00, 0.00, 0.00,   // pelvis
      0.15, 0.00, 0.01,         // spine
      0.32, 0.00, 0.02,         // chest
      0.55, 0.00, 0.02,         // head
      0.47, 0.19, 0.02,         // l_shoulder
      0.18, 0.24, 0.00,         // l_elbow
      0.47, -0.19, 0.02,        // r_shoulder
      0.18, -0.24, 0.00,        // r_elbow
      -0.02, 0.09, 0.00,        // l_hip
      -0.47, 0.10, 0.00,        // l_knee
      -0.02, -0.09, 0.00,       // r_hip
      -0.47, -0.10, 0.00;       // r_knee
  const std::vector<int> parent = {-1, 0, 1, 2, 2, 4, 2, 6, 0, 8, 0, 10};

  detail::ToyBuilder b(cfg, joints);
  const auto jrow = [&](int j) { return Vec3(joints.row(j).transpose()); };

  using detail::ToySegment;
  // Torso column: buttocks, pelvis->spine->chest, shoulder-girdle taper.
  b.add_segment({jrow(kPelvis) - Vec3(0.14, 0, 0), jrow(kPelvis), 0.10, 0.145, kPelvis, kPelvis,
                 true, -1, -1.0});
  b.add_segment({jrow(kPelvis), jrow(kSpine), 0.145, 0.150, kPelvis, kSpine, true, -1, -1.0},
                kPelvis);
  b.add_segment({jrow(kSpine), jrow(kChest), 0.150, 0.155, kSpine, kChest, true, -1, -1.0}, kSpine,
                kChest);
  b.add_segment({jrow(kChest), jrow(kChest) + Vec3(0.08, 0, 0), 0.155, 0.085, kChest, kChest, true,
                 -1, -1.0});
  // Neck and head.
  b.add_segment({jrow(kChest) + Vec3(0.08, 0, 0), jrow(kHead), 0.052, 0.056, kChest, kHead, false,
                 -1, -1.0});
  b.add_segment({jrow(kHead), jrow(kHead) + Vec3(0.17, 0, 0.0), 0.078, 0.068, kHead, kHead, false,
                 -1, -1.0},
                kHead);
  // Clavicle connectors keep the arms attached to the torso in CT space.
  b.add_segment({jrow(kChest) + Vec3(0.08, 0, 0.01), jrow(kLShoulder), 0.055, 0.048, kChest,
                 kLShoulder, false, -1, -1.0});
  b.add_segment({jrow(kChest) + Vec3(0.08, 0, 0.01), jrow(kRShoulder), 0.055, 0.048, kChest,
                 kRShoulder, false, -1, -1.0});
  // Arms: upper arm shoulder->elbow, forearm beyond the elbow.
  b.add_segment({jrow(kLShoulder), jrow(kLElbow), 0.046, 0.040, kLShoulder, kLElbow, false,
                 kLShoulder, 0.47},
                kLShoulder, kLElbow);
  b.add_segment({jrow(kLElbow), jrow(kLElbow) + Vec3(-0.28, 0.02, 0), 0.040, 0.034, kLElbow,
                 kLElbow, false, kLShoulder, 0.47});
  b.add_segment({jrow(kRShoulder), jrow(kRElbow), 0.046, 0.040, kRShoulder, kRElbow, false,
                 kRShoulder, 0.47},
                kRShoulder, kRElbow);
  b.add_segment({jrow(kRElbow), jrow(kRElbow) + Vec3(-0.28, -0.02, 0), 0.040, 0.034, kRElbow,
                 kRElbow, false, kRShoulder, 0.47});
  // Legs: thigh hip->knee, shin beyond the knee.
  b.add_segment({jrow(kLHip), jrow(kLKnee), 0.076, 0.060, kLHip, kLKnee, false, kLHip, 0.0}, kLHip,
                kLKnee);
  b.add_segment({jrow(kLKnee), jrow(kLKnee) + Vec3(-0.43, 0.01, -0.005), 0.055, 0.044, kLKnee,
                 kLKnee, false, kLHip, 0.0});
  b.add_segment({jrow(kRHip), jrow(kRKnee), 0.076, 0.060, kRHip, kRKnee, false, kRHip, 0.0}, kRHip,
                kRKnee);
  b.add_segment({jrow(kRKnee), jrow(kRKnee) + Vec3(-0.43, -0.01, -0.005), 0.055, 0.044, kRKnee,
                 kRKnee, false, kRHip, 0.0});

  const int m_count = static_cast<int>(b.verts.size());

  // Symmetry-breaking jitter, applied before the shape basis is derived so
  // every shape dim acts on the jittered rest geometry.
  Rng rng(cfg.seed ^ 0x746f79ULL);
  for (auto& v : b.verts) {
    for (int c = 0; c < 3; ++c) v(c) += cfg.jitter_m * rng.normal();
  }

  ToyModel model;
  BodyModelSpec& spec = model.spec;
  spec.template_vertices.resize(m_count, 3);
  for (int v = 0; v < m_count; ++v) spec.template_vertices.row(v) = b.verts[static_cast<size_t>(v)];
  spec.faces = b.faces;
  spec.parent = parent;

  spec.skin_weights = MatX::Zero(m_count, 12);
  for (int v = 0; v < m_count; ++v) {
    const auto& jw = b.skin[static_cast<size_t>(v)];
    const auto& jj = b.skin_joint[static_cast<size_t>(v)];
    spec.skin_weights(v, jj[0]) += jw[0];
    spec.skin_weights(v, jj[1]) += jw[1];
  }

  spec.joint_regressor = MatX::Zero(12, m_count);
  for (int j = 0; j < 12; ++j) {
    const auto& ring = b.joint_rings[static_cast<size_t>(j)];
    if (ring.empty()) throw Error(ErrorCode::Numeric, "toy joint has no regressor ring");
    for (int v : ring) spec.joint_regressor(j, v) = 1.0 / static_cast<double>(ring.size());
  }

  // Shape dims: 0 overall scale, 1 torso girth, 2 limb length, 3 torso length.
  spec.shape_basis = MatX::Zero(3 * m_count, 4);
  for (int v = 0; v < m_count; ++v) {
    const Vec3 pos = spec.template_vertices.row(v).transpose();
    spec.shape_basis.block<3, 1>(3 * v, 0) = 0.10 * pos;
    spec.shape_basis.block<3, 1>(3 * v, 1) = 0.03 * b.girth_dir[static_cast<size_t>(v)];
    spec.shape_basis.block<3, 1>(3 * v, 2) =
        0.08 * b.limb_s[static_cast<size_t>(v)] * b.limb_dir[static_cast<size_t>(v)];
    const double f = std::clamp(b.length_f[static_cast<size_t>(v)] / 0.55, 0.0, 1.0);
    spec.shape_basis.block<3, 1>(3 * v, 3) = 0.07 * f * Vec3::UnitX();
  }

  for (int v = 0; v < m_count; ++v) {
    if (b.torso_flag[static_cast<size_t>(v)]) model.torso_mask.push_back(v);
  }

  // Landmarks: topmost vertex of characteristic rings plus the head apex.
  const auto top_of_ring = [&](const std::vector<int>& ring) {
    int best = ring[0];
    for (int v : ring) {
      if (spec.template_vertices(v, 2) > spec.template_vertices(best, 2)) best = v;
    }
    return best;
  };
  // Head apex is the cap vertex of the head segment: the vertex with max x.
  int head_apex = 0;
  for (int v = 1; v < m_count; ++v) {
    if (spec.template_vertices(v, 0) > spec.template_vertices(head_apex, 0)) head_apex = v;
  }
  model.landmark_vertices = {head_apex,
                             top_of_ring(b.joint_rings[kChest]),
                             top_of_ring(b.joint_rings[kPelvis]),
                             top_of_ring(b.joint_rings[kLShoulder]),
                             top_of_ring(b.joint_rings[kRShoulder]),
                             top_of_ring(b.joint_rings[kLKnee]),
                             top_of_ring(b.joint_rings[kRKnee])};
  model.landmark_names = {"head", "chest", "pelvis", "l_shoulder", "r_shoulder", "l_knee", "r_knee"};

  validate_spec(spec);
  return model;
}

// ---------------------------------------------------------------------------
// Voxelization
// ---------------------------------------------------------------------------

struct VoxelizeOptions {
  double spacing_mm = 5.0;
  double margin_mm = 40.0;
  double inside_hu = 40.0;
  double air_hu = -1000.0;
  bool bed = false;
  double bed_hu = 150.0;
  double bed_gap_mm = 30.0;
  double bed_thickness_mm = 12.0;
  double bed_extra_xy_mm = 15.0;
};

/// Scan-converts a closed (possibly self-overlapping) triangle mesh into a
/// HU volume by counting signed surface crossings along x and applying the
/// nonzero winding rule; capsule overlaps therefore voxelize as their union.
/// The grid always reserves space for the bed slab below the body so volumes
/// generated with and without a bed share the same lattice.
inline Volume voxelize_mesh(const TriMesh& mesh_mm, const VoxelizeOptions& opt) {
  if (mesh_mm.vertices.rows() == 0 || mesh_mm.faces.empty()) {
    throw Error(ErrorCode::EmptyMesh, "voxelize on empty mesh");
  }
  const Aabb box = bounding_box(mesh_mm.vertices);
  const double bed_space = opt.bed_gap_mm + opt.bed_thickness_mm;
  Vec3 lo = box.lo.array() - opt.margin_mm;
  lo.z() = box.lo.z() - bed_space - opt.margin_mm;
  const Vec3 hi = box.hi.array() + opt.margin_mm;

  Volume vol;
  vol.spacing_mm = {opt.spacing_mm, opt.spacing_mm, opt.spacing_mm};
  vol.origin_mm = {lo.x(), lo.y(), lo.z()};
  for (int c = 0; c < 3; ++c) {
    vol.dims[static_cast<size_t>(c)] =
        std::max(1, static_cast<int>(std::ceil((hi(c) - lo(c)) / opt.spacing_mm)));
  }
  vol.intensities.assign(vol.voxel_count(), static_cast<float>(opt.air_hu));

  // Per-face projected data for ray tests in the (y,z) plane.
  struct Face2d {
    double y[3], z[3];
    double y_lo, y_hi, z_lo, z_hi;
    Vec3 v0, e1, e2;
    double nx;  // crossing sign from the x component of the face normal
  };
  std::vector<Face2d> tris;
  tris.reserve(mesh_mm.faces.size());
  for (const auto& f : mesh_mm.faces) {
    Face2d t;
    const Vec3 a = mesh_mm.vertices.row(f[0]).transpose();
    const Vec3 bb = mesh_mm.vertices.row(f[1]).transpose();
    const Vec3 c = mesh_mm.vertices.row(f[2]).transpose();
    t.v0 = a;
    t.e1 = bb - a;
    t.e2 = c - a;
    const Vec3 n = t.e1.cross(t.e2);
    if (std::abs(n.x()) < 1e-12) continue;  // parallel to the ray direction
    t.nx = n.x();
    const Vec3 vs[3] = {a, bb, c};
    for (int i = 0; i < 3; ++i) {
      t.y[i] = vs[i].y();
      t.z[i] = vs[i].z();
    }
    t.y_lo = std::min({t.y[0], t.y[1], t.y[2]});
    t.y_hi = std::max({t.y[0], t.y[1], t.y[2]});
    t.z_lo = std::min({t.z[0], t.z[1], t.z[2]});
    t.z_hi = std::max({t.z[0], t.z[1], t.z[2]});
    tris.push_back(t);
  }

  // Tiny fixed offsets keep ray positions away from exact vertex/edge hits.
  const double jy = 1.2345e-4 * opt.spacing_mm;
  const double jz = 2.3456e-4 * opt.spacing_mm;

  struct Crossing {
    double x;
    int sign;
  };
  std::vector<Crossing> hits;
  for (int iz = 0; iz < vol.dims[2]; ++iz) {
    const double rz = vol.origin_mm[2] + (iz + 0.5) * opt.spacing_mm + jz;
    for (int iy = 0; iy < vol.dims[1]; ++iy) {
      const double ry = vol.origin_mm[1] + (iy + 0.5) * opt.spacing_mm + jy;
      hits.clear();
      for (const auto& t : tris) {
        if (ry < t.y_lo || ry > t.y_hi || rz < t.z_lo || rz > t.z_hi) continue;
        const double d0y = t.y[1] - t.y[0], d0z = t.z[1] - t.z[0];
        const double d1y = t.y[2] - t.y[0], d1z = t.z[2] - t.z[0];
        const double det = d0y * d1z - d0z * d1y;
        if (det == 0.0) continue;
        const double py = ry - t.y[0], pz = rz - t.z[0];
        const double u = (py * d1z - pz * d1y) / det;
        const double v = (d0y * pz - d0z * py) / det;
        if (u < 0.0 || v < 0.0 || u + v > 1.0) continue;
        const double x = t.v0.x() + u * t.e1.x() + v * t.e2.x();
        hits.push_back({x, t.nx > 0.0 ? 1 : -1});
      }
      if (hits.empty()) continue;
      std::sort(hits.begin(), hits.end(), [](const Crossing& a, const Crossing& b) { return a.x < b.x; });
      size_t h = 0;
      int winding = 0;
      for (int ix = 0; ix < vol.dims[0]; ++ix) {
        const double rx = vol.origin_mm[0] + (ix + 0.5) * opt.spacing_mm;
        while (h < hits.size() && hits[h].x <= rx) winding += hits[h++].sign;
        if (winding != 0) {
          vol.intensities[vol.index(ix, iy, iz)] = static_cast<float>(opt.inside_hu);
        }
      }
    }
  }

  if (opt.bed) {
    const double bed_top = box.lo.z() - opt.bed_gap_mm;
    const double bed_bot = bed_top - opt.bed_thickness_mm;
    const double x_lo = box.lo.x() - opt.bed_extra_xy_mm, x_hi = box.hi.x() + opt.bed_extra_xy_mm;
    const double y_lo = box.lo.y() - opt.bed_extra_xy_mm, y_hi = box.hi.y() + opt.bed_extra_xy_mm;
    for (int iz = 0; iz < vol.dims[2]; ++iz) {
      const double cz = vol.origin_mm[2] + (iz + 0.5) * opt.spacing_mm;
      if (cz < bed_bot || cz > bed_top) continue;
      for (int iy = 0; iy < vol.dims[1]; ++iy) {
        const double cy = vol.origin_mm[1] + (iy + 0.5) * opt.spacing_mm;
        if (cy < y_lo || cy > y_hi) continue;
        for (int ix = 0; ix < vol.dims[0]; ++ix) {
          const double cx = vol.origin_mm[0] + (ix + 0.5) * opt.spacing_mm;
          if (cx < x_lo || cx > x_hi) continue;
          vol.intensities[vol.index(ix, iy, iz)] = static_cast<float>(opt.bed_hu);
        }
      }
    }
  }
  return vol;
}

// ---------------------------------------------------------------------------
// Paired dataset entries
// ---------------------------------------------------------------------------

struct GenOptions {
  VoxelizeOptions voxel;
  int depth_width = 256;
  int depth_height = 108;
  double camera_margin_mm = 80.0;
  double noise_sigma_mm = 0.0;
  bool drape = false;
  double drape_slope = 0.35;     // cloth drop per mm of lateral distance
  double drape_lift_mm = 8.0;    // cloth rides this high above the skin
  double drape_margin_mm = 40.0; // region extension beyond the body silhouette
  std::uint64_t seed = 0;
};

struct DatasetEntry {
  BodyParams params;
  Pts vertices_m;  // posed ground-truth surface
  Pts joints_m;
  std::vector<std::array<int, 3>> faces;
  double height_m = 0.0;
  Volume volume;
  DepthMap depth;
  std::vector<Landmark> landmarks;
  bool draped = false;
  bool has_bed = false;
};

namespace detail {

/// Cloth cone envelope: at every pixel, the lowest "tent" over the body
/// surface with the given slope, computed by two chamfer sweeps.
inline std::vector<double> drape_envelope(const DepthMap& d, double slope) {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> env(d.depth.size(), kInf);
  for (size_t i = 0; i < env.size(); ++i) {
    if (d.valid[i]) env[i] = d.depth[i];
  }
  const double px = d.camera ? d.camera->pitch_x_mm : 1.0;
  const double py = d.camera ? d.camera->pitch_y_mm : 1.0;
  const double dd = std::hypot(px, py);
  const auto relax = [&](int x, int y, int nx, int ny, double step) {
    if (nx < 0 || nx >= d.width || ny < 0 || ny >= d.height) return;
    const double cand = env[d.index(nx, ny)] + slope * step;
    double& cur = env[d.index(x, y)];
    if (cand < cur) cur = cand;
  };
  for (int y = 0; y < d.height; ++y) {
    for (int x = 0; x < d.width; ++x) {
      relax(x, y, x - 1, y, px);
      relax(x, y, x, y - 1, py);
      relax(x, y, x - 1, y - 1, dd);
      relax(x, y, x + 1, y - 1, dd);
    }
  }
  for (int y = d.height - 1; y >= 0; --y) {
    for (int x = d.width - 1; x >= 0; --x) {
      relax(x, y, x + 1, y, px);
      relax(x, y, x, y + 1, py);
      relax(x, y, x + 1, y + 1, dd);
      relax(x, y, x - 1, y + 1, dd);
    }
  }
  return env;
}

}  // namespace detail

/// Generates one paired synthetic observation: HU volume (never draped),
/// top-view depth map (optionally draped and noised), landmarks, height.
inline DatasetEntry gen_entry(const ToyModel& model, const BodyParams& params,
                              const GenOptions& opt) {
  DatasetEntry entry;
  entry.params = params;
  const BodyMesh posed = forward(model.spec, params);
  entry.vertices_m = posed.vertices;
  entry.joints_m = posed.joints;
  entry.faces = model.spec.faces;
  entry.height_m = body_height(posed, model.body_axis);
  entry.draped = opt.drape;
  entry.has_bed = opt.voxel.bed;

  TriMesh mesh_mm;
  mesh_mm.vertices = posed.vertices * 1000.0;
  mesh_mm.faces = model.spec.faces;
  entry.volume = voxelize_mesh(mesh_mm, opt.voxel);

  const Aabb box = bounding_box(mesh_mm.vertices);
  const OrthoCamera cam =
      fit_top_camera(box, opt.depth_width, opt.depth_height, opt.camera_margin_mm);
  entry.depth = render_depth(mesh_mm, cam, opt.depth_width, opt.depth_height);

  if (opt.drape) {
    DepthMap& d = entry.depth;
    const std::vector<double> env = detail::drape_envelope(d, opt.drape_slope);
    const double bed_top_z = box.lo.z() - opt.voxel.bed_gap_mm;
    const double bed_depth = cam.camera_z_mm - bed_top_z;
    // Drape region: body silhouette bounding box plus a margin.
    int px_lo = d.width, px_hi = -1, py_lo = d.height, py_hi = -1;
    for (int y = 0; y < d.height; ++y) {
      for (int x = 0; x < d.width; ++x) {
        if (!d.is_valid(x, y)) continue;
        px_lo = std::min(px_lo, x);
        px_hi = std::max(px_hi, x);
        py_lo = std::min(py_lo, y);
        py_hi = std::max(py_hi, y);
      }
    }
    const int mx = static_cast<int>(std::ceil(opt.drape_margin_mm / cam.pitch_x_mm));
    const int my = static_cast<int>(std::ceil(opt.drape_margin_mm / cam.pitch_y_mm));
    px_lo = std::max(0, px_lo - mx);
    px_hi = std::min(d.width - 1, px_hi + mx);
    py_lo = std::max(0, py_lo - my);
    py_hi = std::min(d.height - 1, py_hi + my);
    for (int y = py_lo; y <= py_hi; ++y) {
      for (int x = px_lo; x <= px_hi; ++x) {
        const size_t i = d.index(x, y);
        const double cloth = env[i] - opt.drape_lift_mm;
        d.depth[i] = std::min(cloth, bed_depth);
        d.valid[i] = 1;
      }
    }
  }

  if (opt.noise_sigma_mm > 0.0) {
    Rng rng(opt.seed ^ 0x64657074ULL);
    for (size_t i = 0; i < entry.depth.depth.size(); ++i) {
      if (entry.depth.valid[i]) entry.depth.depth[i] += opt.noise_sigma_mm * rng.normal();
    }
  }

  for (size_t i = 0; i < model.landmark_vertices.size(); ++i) {
    Landmark lm;
    lm.vertex = model.landmark_vertices[i];
    lm.target_m = posed.vertices.row(lm.vertex).transpose();
    entry.landmarks.push_back(lm);
  }
  return entry;
}

/// Mildly random supine pose and shape for benchmark entries: small in-plane
/// limb swings, slight elbow/knee bends, small root offset.
inline BodyParams random_supine_params(const ToyModel& model, Rng& rng, double beta_range = 0.8,
                                       double pose_range = 0.25) {
  BodyParams p = BodyParams::rest(model.spec.shape_dim(), model.spec.joint_count());
  for (Eigen::Index i = 0; i < p.beta.size(); ++i) p.beta(i) = rng.uniform(-beta_range, beta_range);
  const int swing[] = {kLShoulder, kRShoulder, kLElbow, kRElbow, kLHip, kRHip, kLKnee, kRKnee};
  for (int j : swing) {
    p.theta(j, 2) = rng.uniform(-pose_range, pose_range);       // in-plane swing
    p.theta(j, 1) = rng.uniform(-0.3, 0.3) * pose_range;        // slight lift
  }
  p.theta(kSpine, 2) = rng.uniform(-0.4, 0.4) * pose_range;
  p.trans = Vec3(rng.uniform(-0.05, 0.05), rng.uniform(-0.05, 0.05), rng.uniform(-0.01, 0.01));
  return p;
}

}  // namespace ctbody
