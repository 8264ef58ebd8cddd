#pragma once

#include <algorithm>
#include <array>
#include <limits>
#include <string>
#include <vector>

#include "ctbody/core.hpp"

namespace ctbody {

/// Triangle surface mesh. CT-derived meshes carry coordinates in mm,
/// body-model meshes in meters; functions document which they expect.
struct TriMesh {
  Pts vertices;                             // N x 3
  std::vector<std::array<int, 3>> faces;    // CCW, outward-facing

  int vertex_count() const { return static_cast<int>(vertices.rows()); }
  int face_count() const { return static_cast<int>(faces.size()); }
  bool empty() const { return vertices.rows() == 0 || faces.empty(); }
};

/// Unordered 3D point set in meters.
struct PointCloud {
  Pts points;          // N x 3
  std::string source;  // provenance tag ("ct", "depth", ...)

  int size() const { return static_cast<int>(points.rows()); }
};

inline double triangle_area(const Vec3& a, const Vec3& b, const Vec3& c) {
  return 0.5 * (b - a).cross(c - a).norm();
}

inline double mesh_surface_area(const TriMesh& mesh) {
  double area = 0.0;
  for (const auto& f : mesh.faces) {
    area += triangle_area(mesh.vertices.row(f[0]), mesh.vertices.row(f[1]),
                          mesh.vertices.row(f[2]));
  }
  return area;
}

/// Signed enclosed volume by the divergence theorem; positive for
/// outward-oriented closed surfaces.
inline double mesh_signed_volume(const TriMesh& mesh) {
  double vol = 0.0;
  for (const auto& f : mesh.faces) {
    const Vec3 a = mesh.vertices.row(f[0]);
    const Vec3 b = mesh.vertices.row(f[1]);
    const Vec3 c = mesh.vertices.row(f[2]);
    vol += a.dot(b.cross(c)) / 6.0;
  }
  return vol;
}

struct Aabb {
  Vec3 lo{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
          std::numeric_limits<double>::infinity()};
  Vec3 hi{-std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity(),
          -std::numeric_limits<double>::infinity()};
  bool valid() const { return lo.x() <= hi.x(); }
  Vec3 extent() const { return hi - lo; }
};

inline Aabb bounding_box(const Pts& pts) {
  Aabb box;
  if (pts.rows() == 0) return box;
  box.lo = pts.colwise().minCoeff();
  box.hi = pts.colwise().maxCoeff();
  return box;
}

/// Area-weighted vertex normals (not normalized faces assumed CCW outward).
inline Pts vertex_normals(const Pts& vertices, const std::vector<std::array<int, 3>>& faces) {
  Pts normals = Pts::Zero(vertices.rows(), 3);
  for (const auto& f : faces) {
    const Vec3 a = vertices.row(f[0]);
    const Vec3 b = vertices.row(f[1]);
    const Vec3 c = vertices.row(f[2]);
    const Vec3 n = (b - a).cross(c - a);  // magnitude = 2*area
    for (int k = 0; k < 3; ++k) normals.row(f[k]) += n.transpose();
  }
  for (int i = 0; i < normals.rows(); ++i) {
    const double len = normals.row(i).norm();
    if (len > 1e-20) normals.row(i) /= len;
  }
  return normals;
}

/// Drops zero-area triangles and faces with repeated indices.
inline TriMesh drop_degenerate_faces(const TriMesh& mesh, double min_area = 1e-12) {
  TriMesh out;
  out.vertices = mesh.vertices;
  out.faces.reserve(mesh.faces.size());
  for (const auto& f : mesh.faces) {
    if (f[0] == f[1] || f[1] == f[2] || f[0] == f[2]) continue;
    if (triangle_area(mesh.vertices.row(f[0]), mesh.vertices.row(f[1]),
                      mesh.vertices.row(f[2])) <= min_area) {
      continue;
    }
    out.faces.push_back(f);
  }
  return out;
}

/// Taubin lambda/mu smoothing with uniform weights. Keeps volume roughly
/// intact while flattening voxelization staircase.
inline TriMesh smooth_mesh_taubin(const TriMesh& mesh, int iters, double lambda = 0.5,
                                  double mu = -0.53) {
  if (mesh.empty() || iters <= 0) return mesh;
  const int n = mesh.vertex_count();
  std::vector<std::vector<int>> adj(static_cast<size_t>(n));
  auto link = [&](int a, int b) {
    auto& row = adj[static_cast<size_t>(a)];
    if (std::find(row.begin(), row.end(), b) == row.end()) row.push_back(b);
  };
  for (const auto& f : mesh.faces) {
    link(f[0], f[1]);
    link(f[1], f[0]);
    link(f[1], f[2]);
    link(f[2], f[1]);
    link(f[2], f[0]);
    link(f[0], f[2]);
  }
  TriMesh out = mesh;
  Pts tmp = out.vertices;
  auto pass = [&](double w) {
    for (int i = 0; i < n; ++i) {
      const auto& nbrs = adj[static_cast<size_t>(i)];
      if (nbrs.empty()) {
        tmp.row(i) = out.vertices.row(i);
        continue;
      }
      Vec3 avg = Vec3::Zero();
      for (int j : nbrs) avg += out.vertices.row(j).transpose();
      avg /= static_cast<double>(nbrs.size());
      tmp.row(i) = out.vertices.row(i) + w * (avg - out.vertices.row(i).transpose()).transpose();
    }
    out.vertices.swap(tmp);
  };
  for (int it = 0; it < iters; ++it) {
    pass(lambda);
    pass(mu);
  }
  return out;
}

}  // namespace ctbody
