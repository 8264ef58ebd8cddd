#pragma once

#include <vector>

#include "ctbody/core.hpp"
#include "ctbody/mesh.hpp"

namespace ctbody {

/// Draws exactly n points uniformly over the mesh surface (area-weighted
/// face choice + uniform barycentric point). Input mesh is in mm, output
/// cloud in meters. Fully determined by the seed.
inline PointCloud sample_surface(const TriMesh& mesh, int n, std::uint64_t seed) {
  if (mesh.vertices.rows() == 0 || mesh.faces.empty()) {
    throw Error(ErrorCode::EmptyMesh, "sample_surface on empty mesh");
  }
  if (n <= 0) throw Error(ErrorCode::InvalidRange, "sample count must be positive");

  std::vector<double> cum(mesh.faces.size());
  double total = 0.0;
  for (size_t f = 0; f < mesh.faces.size(); ++f) {
    const auto& fc = mesh.faces[f];
    total += triangle_area(mesh.vertices.row(fc[0]), mesh.vertices.row(fc[1]),
                           mesh.vertices.row(fc[2]));
    cum[f] = total;
  }
  if (!(total > 0.0)) throw Error(ErrorCode::EmptyMesh, "mesh has zero surface area");

  Rng rng(seed);
  PointCloud cloud;
  cloud.points.resize(n, 3);
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform() * total;
    const auto it = std::lower_bound(cum.begin(), cum.end(), u);
    const size_t f = it == cum.end() ? cum.size() - 1 : static_cast<size_t>(it - cum.begin());
    const auto& fc = mesh.faces[f];
    double r1 = rng.uniform();
    double r2 = rng.uniform();
    if (r1 + r2 > 1.0) {  // reflect into the unit triangle
      r1 = 1.0 - r1;
      r2 = 1.0 - r2;
    }
    const Vec3 a = mesh.vertices.row(fc[0]);
    const Vec3 b = mesh.vertices.row(fc[1]);
    const Vec3 c = mesh.vertices.row(fc[2]);
    cloud.points.row(i) = mm_to_m(a + r1 * (b - a) + r2 * (c - a)).transpose();
  }
  cloud.source = "mesh_surface";
  return cloud;
}

}  // namespace ctbody
