#pragma once

#include <algorithm>
#include <cmath>
#include <limits>

#include "ctbody/body_model.hpp"
#include "ctbody/depth.hpp"
#include "ctbody/mesh.hpp"

namespace ctbody {

/// Rasterizes a triangle soup (mm coordinates) into a top-view depth map.
/// Z-buffer semantics: the nearest surface (largest z, smallest depth) wins;
/// exact depth ties keep the lower face index because faces are processed in
/// order and only strictly nearer fragments overwrite.
inline DepthMap render_depth(const Pts& vertices_mm, const std::vector<std::array<int, 3>>& faces,
                             const OrthoCamera& cam, int width, int height) {
  if (vertices_mm.rows() == 0 || faces.empty()) {
    throw Error(ErrorCode::EmptyMesh, "render_depth on empty mesh");
  }
  if (width <= 0 || height <= 0) throw Error(ErrorCode::InvalidRange, "image dims must be positive");
  DepthMap d = DepthMap::empty(width, height);
  d.camera = cam;
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> zbuf(d.depth.size(), kInf);

  for (const auto& f : faces) {
    // Continuous pixel coordinates of the triangle corners (pixel centers at
    // integer coordinates).
    double px[3], py[3], pz[3];
    for (int k = 0; k < 3; ++k) {
      const Vec3 v = vertices_mm.row(f[static_cast<size_t>(k)]);
      px[k] = (v.x() - cam.origin_x_mm) / cam.pitch_x_mm - 0.5;
      py[k] = (v.y() - cam.origin_y_mm) / cam.pitch_y_mm - 0.5;
      pz[k] = v.z();
    }
    const double area = (px[1] - px[0]) * (py[2] - py[0]) - (px[2] - px[0]) * (py[1] - py[0]);
    if (area == 0.0) continue;
    const int x_lo = std::max(0, static_cast<int>(std::ceil(std::min({px[0], px[1], px[2]}))));
    const int x_hi = std::min(width - 1, static_cast<int>(std::floor(std::max({px[0], px[1], px[2]}))));
    const int y_lo = std::max(0, static_cast<int>(std::ceil(std::min({py[0], py[1], py[2]}))));
    const int y_hi = std::min(height - 1, static_cast<int>(std::floor(std::max({py[0], py[1], py[2]}))));
    for (int y = y_lo; y <= y_hi; ++y) {
      for (int x = x_lo; x <= x_hi; ++x) {
        const double w0 = ((px[1] - x) * (py[2] - y) - (px[2] - x) * (py[1] - y)) / area;
        const double w1 = ((px[2] - x) * (py[0] - y) - (px[0] - x) * (py[2] - y)) / area;
        const double w2 = 1.0 - w0 - w1;
        if (w0 < 0.0 || w1 < 0.0 || w2 < 0.0) continue;
        const double z = w0 * pz[0] + w1 * pz[1] + w2 * pz[2];
        const double depth = cam.camera_z_mm - z;
        if (depth < cam.near_mm || depth > cam.far_mm) continue;
        const size_t i = d.index(x, y);
        if (depth < zbuf[i]) {
          zbuf[i] = depth;
          d.depth[i] = depth;
          d.valid[i] = 1;
        }
      }
    }
  }
  return d;
}

inline DepthMap render_depth(const TriMesh& mesh_mm, const OrthoCamera& cam, int width,
                             int height) {
  return render_depth(mesh_mm.vertices, mesh_mm.faces, cam, width, height);
}

/// Body meshes carry meter coordinates; converted to mm for rasterization.
inline DepthMap render_depth(const BodyMesh& body, const OrthoCamera& cam, int width, int height) {
  if (!body.faces) throw Error(ErrorCode::EmptyMesh, "body mesh has no faces");
  const Pts verts_mm = body.vertices * 1000.0;
  return render_depth(verts_mm, *body.faces, cam, width, height);
}

/// Builds a top-view camera whose frame covers the given bounds (mm) plus a
/// margin, with the sensor plane `clearance` above the highest point.
inline OrthoCamera fit_top_camera(const Aabb& bounds_mm, int width, int height,
                                  double margin_mm = 50.0, double clearance_mm = 500.0) {
  OrthoCamera cam;
  cam.origin_x_mm = bounds_mm.lo.x() - margin_mm;
  cam.origin_y_mm = bounds_mm.lo.y() - margin_mm;
  cam.pitch_x_mm = (bounds_mm.hi.x() - bounds_mm.lo.x() + 2.0 * margin_mm) / width;
  cam.pitch_y_mm = (bounds_mm.hi.y() - bounds_mm.lo.y() + 2.0 * margin_mm) / height;
  cam.camera_z_mm = bounds_mm.hi.z() + clearance_mm;
  cam.near_mm = 1.0;
  cam.far_mm = cam.camera_z_mm - bounds_mm.lo.z() + 10.0 * clearance_mm;
  return cam;
}

}  // namespace ctbody
