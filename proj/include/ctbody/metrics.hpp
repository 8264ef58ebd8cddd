#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <json.hpp>

#include "ctbody/body_model.hpp"
#include "ctbody/core.hpp"
#include "ctbody/mesh.hpp"

namespace ctbody {

/// Mean per-joint position error in mm (inputs in meters).
inline double mpjpe(const Pts& pred_joints, const Pts& gt_joints) {
  if (pred_joints.rows() != gt_joints.rows()) {
    throw Error(ErrorCode::DimensionMismatch, "joint counts differ");
  }
  if (pred_joints.rows() == 0) throw Error(ErrorCode::DimensionMismatch, "no joints");
  return m_to_mm((pred_joints - gt_joints).rowwise().norm().mean());
}

/// Mean per-vertex error in mm, optionally restricted to a vertex subset.
inline double pve(const Pts& pred_vertices, const Pts& gt_vertices,
                  const std::vector<int>* mask = nullptr) {
  if (pred_vertices.rows() != gt_vertices.rows()) {
    throw Error(ErrorCode::DimensionMismatch, "vertex counts differ");
  }
  if (!mask) {
    if (pred_vertices.rows() == 0) throw Error(ErrorCode::DimensionMismatch, "no vertices");
    return m_to_mm((pred_vertices - gt_vertices).rowwise().norm().mean());
  }
  if (mask->empty()) throw Error(ErrorCode::BadMask, "empty region mask");
  double acc = 0.0;
  for (int v : *mask) {
    if (v < 0 || v >= pred_vertices.rows()) {
      throw Error(ErrorCode::BadMask, "region mask index out of range");
    }
    acc += (pred_vertices.row(v) - gt_vertices.row(v)).norm();
  }
  return m_to_mm(acc / static_cast<double>(mask->size()));
}

struct SliceSpec {
  std::string name;       // chest | waist | hip (free-form allowed)
  double height_fraction;  // of body height along the up axis, in (0,1)
};

inline std::vector<SliceSpec> default_slices() {
  return {{"chest", 0.72}, {"waist", 0.62}, {"hip", 0.52}};
}

namespace detail {

// Monotone-chain convex hull perimeter of a 2D point set.
inline double hull_perimeter(std::vector<Eigen::Vector2d> pts) {
  if (pts.size() < 2) return 0.0;
  std::sort(pts.begin(), pts.end(), [](const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
    return a.x() != b.x() ? a.x() < b.x() : a.y() < b.y();
  });
  pts.erase(std::unique(pts.begin(), pts.end(),
                        [](const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
                          return a.x() == b.x() && a.y() == b.y();
                        }),
            pts.end());
  if (pts.size() == 1) return 0.0;
  const auto cross = [](const Eigen::Vector2d& o, const Eigen::Vector2d& a,
                        const Eigen::Vector2d& b) {
    return (a.x() - o.x()) * (b.y() - o.y()) - (a.y() - o.y()) * (b.x() - o.x());
  };
  std::vector<Eigen::Vector2d> hull(2 * pts.size());
  size_t k = 0;
  for (size_t i = 0; i < pts.size(); ++i) {
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0.0) --k;
    hull[k++] = pts[i];
  }
  const size_t lower = k + 1;
  for (size_t i = pts.size() - 1; i-- > 0;) {
    while (k >= lower && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0.0) --k;
    hull[k++] = pts[i];
  }
  hull.resize(k - 1);
  double per = 0.0;
  for (size_t i = 0; i < hull.size(); ++i) {
    per += (hull[(i + 1) % hull.size()] - hull[i]).norm();
  }
  return per;
}

}  // namespace detail

/// Convex-hull perimeter (cm) of the mesh cross-section with the plane
/// through `point` with unit `normal` (mesh vertices in meters). The hull
/// emulates a tape measure bridging concavities between body parts.
inline double slice_circumference(const Pts& vertices_m, const std::vector<std::array<int, 3>>& faces,
                                  const Vec3& point, const Vec3& normal) {
  const Vec3 n = normal.normalized();
  // In-plane orthonormal basis.
  Vec3 seed = std::abs(n.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
  const Vec3 e1 = (seed - seed.dot(n) * n).normalized();
  const Vec3 e2 = n.cross(e1);

  std::vector<Eigen::Vector2d> pts;
  for (const auto& f : faces) {
    const Vec3 v[3] = {vertices_m.row(f[0]).transpose(), vertices_m.row(f[1]).transpose(),
                       vertices_m.row(f[2]).transpose()};
    double s[3];
    for (int i = 0; i < 3; ++i) s[i] = n.dot(v[i] - point);
    for (int i = 0; i < 3; ++i) {
      const int j = (i + 1) % 3;
      if ((s[i] > 0.0 && s[j] > 0.0) || (s[i] < 0.0 && s[j] < 0.0)) continue;
      const double denom = s[i] - s[j];
      if (denom == 0.0) {  // edge lies in the plane
        if (s[i] == 0.0) {
          pts.emplace_back(e1.dot(v[i] - point), e2.dot(v[i] - point));
          pts.emplace_back(e1.dot(v[j] - point), e2.dot(v[j] - point));
        }
        continue;
      }
      const double t = s[i] / denom;
      if (t < 0.0 || t > 1.0) continue;
      const Vec3 p = v[i] + t * (v[j] - v[i]);
      pts.emplace_back(e1.dot(p - point), e2.dot(p - point));
    }
  }
  if (pts.size() < 3) {
    throw Error(ErrorCode::NoIntersection, "slicing plane does not intersect the mesh");
  }
  return 100.0 * detail::hull_perimeter(std::move(pts));
}

/// Circumference (cm) at an anatomical landmark given as a fraction of body
/// height along the up axis.
inline double circumference(const BodyMesh& mesh, const SliceSpec& spec, Axis up_axis) {
  if (!(spec.height_fraction > 0.0 && spec.height_fraction < 1.0)) {
    throw Error(ErrorCode::InvalidRange, "slice height fraction must be in (0,1)");
  }
  if (!mesh.faces) throw Error(ErrorCode::EmptyMesh, "mesh has no faces");
  const int u = axis_index(up_axis);
  const double lo = mesh.vertices.col(u).minCoeff();
  const double hi = mesh.vertices.col(u).maxCoeff();
  Vec3 point = Vec3::Zero();
  point(u) = lo + spec.height_fraction * (hi - lo);
  Vec3 normal = Vec3::Zero();
  normal(u) = 1.0;
  return slice_circumference(mesh.vertices, *mesh.faces, point, normal);
}

struct MetricsConfig {
  std::vector<SliceSpec> slices = default_slices();
  std::vector<int> torso_mask;  // empty -> torso V2V omitted
  Axis up_axis = Axis::X;       // body axis for circumference landmarks
};

struct CircumferenceEntry {
  std::string name;
  double pred_cm = 0.0;
  double gt_cm = 0.0;
  double abs_error_cm = 0.0;
};

struct MetricsReport {
  double mpjpe_mm = 0.0;
  double pve_mm = 0.0;
  double torso_v2v_mm = -1.0;  // negative when no torso mask given
  std::vector<CircumferenceEntry> circumferences;
};

inline MetricsReport evaluate(const BodyModelSpec& spec, const BodyParams& pred,
                              const BodyParams& gt, const MetricsConfig& cfg = {}) {
  const BodyMesh mesh_pred = forward(spec, pred);
  const BodyMesh mesh_gt = forward(spec, gt);
  MetricsReport report;
  report.mpjpe_mm = mpjpe(mesh_pred.joints, mesh_gt.joints);
  report.pve_mm = pve(mesh_pred.vertices, mesh_gt.vertices);
  if (!cfg.torso_mask.empty()) {
    report.torso_v2v_mm = pve(mesh_pred.vertices, mesh_gt.vertices, &cfg.torso_mask);
  }
  for (const auto& slice : cfg.slices) {
    CircumferenceEntry entry;
    entry.name = slice.name;
    entry.pred_cm = circumference(mesh_pred, slice, cfg.up_axis);
    entry.gt_cm = circumference(mesh_gt, slice, cfg.up_axis);
    entry.abs_error_cm = std::abs(entry.pred_cm - entry.gt_cm);
    report.circumferences.push_back(entry);
  }
  return report;
}

inline nlohmann::json metrics_to_json(const MetricsReport& r) {
  nlohmann::json j;
  j["mpjpe_mm"] = r.mpjpe_mm;
  j["pve_mm"] = r.pve_mm;
  if (r.torso_v2v_mm >= 0.0) j["torso_v2v_mm"] = r.torso_v2v_mm;
  nlohmann::json circ = nlohmann::json::object();
  for (const auto& c : r.circumferences) {
    circ[c.name] = {{"pred_cm", c.pred_cm}, {"gt_cm", c.gt_cm}, {"abs_error_cm", c.abs_error_cm}};
  }
  j["circumference"] = circ;
  return j;
}

/// One-line-per-report CSV emitter mirroring the evaluation table columns.
inline std::string metrics_csv_header(const MetricsReport& r) {
  std::string s = "mpjpe_mm,pve_mm,torso_v2v_mm";
  for (const auto& c : r.circumferences) s += "," + c.name + "_err_cm";
  return s;
}

inline std::string metrics_csv_row(const MetricsReport& r) {
  char buf[64];
  const auto fmt = [&buf](double v) {
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return std::string(buf);
  };
  std::string s = fmt(r.mpjpe_mm) + "," + fmt(r.pve_mm) + "," +
                  (r.torso_v2v_mm >= 0.0 ? fmt(r.torso_v2v_mm) : std::string(""));
  for (const auto& c : r.circumferences) s += "," + fmt(c.abs_error_cm);
  return s;
}

}  // namespace ctbody
