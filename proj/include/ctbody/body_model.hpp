#pragma once

#include <array>
#include <cmath>
#include <vector>

#include "ctbody/core.hpp"
#include "ctbody/mesh.hpp"

namespace ctbody {

/// Parametric body model definition: a template mesh deformed by a linear
/// shape basis, with joints regressed from vertices, posed by forward
/// kinematics over a tree and skinned with linear blend weights.
///
/// Units: template/basis in meters. Pose blendshape correctives are not part
/// of the deformation model; the file format reserves a slot for them so
/// richer assets load cleanly (the extra field is ignored).
struct BodyModelSpec {
  Pts template_vertices;                  // M x 3, rest pose (meters)
  std::vector<std::array<int, 3>> faces;  // triangle indices
  MatX shape_basis;                       // 3M x B, rows = xyz per vertex
  MatX joint_regressor;                   // K x M, rows sum to 1
  std::vector<int> parent;                // K, parent[0] == -1
  MatX skin_weights;                      // M x K, rows sum to 1

  int vertex_count() const { return static_cast<int>(template_vertices.rows()); }
  int joint_count() const { return static_cast<int>(parent.size()); }
  int shape_dim() const { return static_cast<int>(shape_basis.cols()); }
};

struct BodyParams {
  VecX beta;   // B
  MatX theta;  // K x 3 axis-angle (radians)
  Vec3 trans = Vec3::Zero();

  static BodyParams rest(int shape_dim, int joint_count) {
    BodyParams p;
    p.beta = VecX::Zero(shape_dim);
    p.theta = MatX::Zero(joint_count, 3);
    p.trans.setZero();
    return p;
  }

  VecX theta_flat() const {
    VecX out(theta.rows() * 3);
    for (int k = 0; k < theta.rows(); ++k) out.segment<3>(3 * k) = theta.row(k).transpose();
    return out;
  }
};

struct BodyMesh {
  Pts vertices;  // M x 3 (meters)
  Pts joints;    // K x 3 (meters)
  const std::vector<std::array<int, 3>>* faces = nullptr;  // shared with spec
};

/// Axis-angle to rotation matrix. Angles below 1e-8 use the second-order
/// series so the map stays smooth through zero.
inline Mat3 rodrigues(const Vec3& axis_angle) {
  const double theta2 = axis_angle.squaredNorm();
  const double theta = std::sqrt(theta2);
  Mat3 K;
  K << 0, -axis_angle.z(), axis_angle.y(),
       axis_angle.z(), 0, -axis_angle.x(),
       -axis_angle.y(), axis_angle.x(), 0;
  double a, b;
  if (theta < 1e-8) {
    a = 1.0 - theta2 / 6.0;
    b = 0.5 - theta2 / 24.0;
  } else {
    a = std::sin(theta) / theta;
    b = (1.0 - std::cos(theta)) / theta2;
  }
  return Mat3::Identity() + a * K + b * K * K;
}

/// Partial derivatives of rodrigues() w.r.t. the three axis-angle
/// components (Gallego-Yezzi closed form away from zero).
inline std::array<Mat3, 3> rodrigues_jacobian(const Vec3& w) {
  std::array<Mat3, 3> out;
  const double n2 = w.squaredNorm();
  auto hat = [](const Vec3& v) {
    Mat3 m;
    m << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
    return m;
  };
  if (n2 < 1e-16) {
    const Mat3 W = hat(w);
    for (int a = 0; a < 3; ++a) {
      Vec3 e = Vec3::Zero();
      e(a) = 1.0;
      const Mat3 E = hat(e);
      out[static_cast<size_t>(a)] = E + 0.5 * (E * W + W * E);
    }
    return out;
  }
  const Mat3 R = rodrigues(w);
  for (int a = 0; a < 3; ++a) {
    Vec3 e = Vec3::Zero();
    e(a) = 1.0;
    const Vec3 v = w.cross((Mat3::Identity() - R) * e);
    out[static_cast<size_t>(a)] = ((w(a) * hat(w) + hat(v)) / n2) * R;
  }
  return out;
}

/// Wraps the rotation angle into [0, pi], flipping the axis as needed.
inline Vec3 canonicalize_axis_angle(const Vec3& w) {
  double theta = w.norm();
  if (theta < 1e-12) return Vec3::Zero();
  const Vec3 axis = w / theta;
  theta = std::fmod(theta, 2.0 * M_PI);
  if (theta > M_PI) theta -= 2.0 * M_PI;  // now in (-pi, pi]; negative flips the axis
  return theta * axis;
}

inline void canonicalize(BodyParams& params) {
  for (int k = 0; k < params.theta.rows(); ++k) {
    params.theta.row(k) = canonicalize_axis_angle(params.theta.row(k).transpose()).transpose();
  }
}

namespace detail {

inline void check_dims(const BodyModelSpec& spec, const BodyParams& params) {
  if (params.beta.size() != spec.shape_dim()) {
    throw Error(ErrorCode::DimensionMismatch, "beta has " + std::to_string(params.beta.size()) +
                                                  " entries, model expects " +
                                                  std::to_string(spec.shape_dim()));
  }
  if (params.theta.rows() != spec.joint_count() || params.theta.cols() != 3) {
    throw Error(ErrorCode::DimensionMismatch, "theta must be K x 3 with K = " +
                                                  std::to_string(spec.joint_count()));
  }
}

struct FkState {
  Pts shaped;                 // M x 3 rest vertices at beta
  Pts rest_joints;            // K x 3
  std::vector<Mat4> local;    // A_k
  std::vector<Mat4> global;   // G_k = G_parent * A_k
};

inline FkState run_fk(const BodyModelSpec& spec, const BodyParams& params) {
  const int m = spec.vertex_count();
  const int k = spec.joint_count();
  FkState st;
  st.shaped = spec.template_vertices;
  if (spec.shape_dim() > 0) {
    const VecX disp = spec.shape_basis * params.beta;  // 3M
    for (int i = 0; i < m; ++i) st.shaped.row(i) += disp.segment<3>(3 * i).transpose();
  }
  st.rest_joints = spec.joint_regressor * st.shaped;  // K x 3
  st.local.resize(static_cast<size_t>(k));
  st.global.resize(static_cast<size_t>(k));
  for (int j = 0; j < k; ++j) {
    const Mat3 r = rodrigues(params.theta.row(j).transpose());
    Vec3 offset = st.rest_joints.row(j);
    if (spec.parent[static_cast<size_t>(j)] >= 0) {
      offset -= st.rest_joints.row(spec.parent[static_cast<size_t>(j)]).transpose();
    }
    Mat4 a = Mat4::Identity();
    a.topLeftCorner<3, 3>() = r;
    a.topRightCorner<3, 1>() = offset;
    st.local[static_cast<size_t>(j)] = a;
    const int p = spec.parent[static_cast<size_t>(j)];
    st.global[static_cast<size_t>(j)] =
        (p >= 0) ? Mat4(st.global[static_cast<size_t>(p)] * a) : a;
  }
  return st;
}

}  // namespace detail

/// Poses the model: shape blendshapes, joint regression, forward kinematics,
/// linear blend skinning, global translation.
inline BodyMesh forward(const BodyModelSpec& spec, const BodyParams& params) {
  detail::check_dims(spec, params);
  const int m = spec.vertex_count();
  const int k = spec.joint_count();
  const detail::FkState st = detail::run_fk(spec, params);

  // Skinning transforms relative to the rest joints.
  std::vector<Eigen::Matrix<double, 3, 4>> skin(static_cast<size_t>(k));
  for (int j = 0; j < k; ++j) {
    const Mat3 rot = st.global[static_cast<size_t>(j)].topLeftCorner<3, 3>();
    const Vec3 tr = st.global[static_cast<size_t>(j)].topRightCorner<3, 1>();
    skin[static_cast<size_t>(j)].leftCols<3>() = rot;
    skin[static_cast<size_t>(j)].col(3) = tr - rot * st.rest_joints.row(j).transpose();
  }

  BodyMesh mesh;
  mesh.vertices.resize(m, 3);
  mesh.joints.resize(k, 3);
  mesh.faces = &spec.faces;
  for (int i = 0; i < m; ++i) {
    Eigen::Matrix<double, 3, 4> blend = Eigen::Matrix<double, 3, 4>::Zero();
    for (int j = 0; j < k; ++j) {
      const double w = spec.skin_weights(i, j);
      if (w != 0.0) blend += w * skin[static_cast<size_t>(j)];
    }
    const Vec3 v = st.shaped.row(i);
    mesh.vertices.row(i) = (blend.leftCols<3>() * v + blend.col(3) + params.trans).transpose();
  }
  for (int j = 0; j < k; ++j) {
    mesh.joints.row(j) =
        (st.global[static_cast<size_t>(j)].topRightCorner<3, 1>() + params.trans).transpose();
  }
  return mesh;
}

/// forward() plus analytic Jacobians of vertices and joints w.r.t. pose and
/// shape. Row layout: 3 rows per vertex/joint (xyz), columns follow
/// theta_flat() / beta order. d/dtrans is identity per point and not stored.
struct ForwardJacobians {
  BodyMesh mesh;
  MatX dv_dtheta;  // 3M x 3K
  MatX dv_dbeta;   // 3M x B
  MatX dj_dtheta;  // 3K x 3K
  MatX dj_dbeta;   // 3K x B
};

inline ForwardJacobians forward_with_jacobians(const BodyModelSpec& spec,
                                               const BodyParams& params) {
  detail::check_dims(spec, params);
  const int m = spec.vertex_count();
  const int k = spec.joint_count();
  const int b = spec.shape_dim();
  const detail::FkState st = detail::run_fk(spec, params);

  ForwardJacobians out;
  out.dv_dtheta = MatX::Zero(3 * m, 3 * k);
  out.dv_dbeta = MatX::Zero(3 * m, b);
  out.dj_dtheta = MatX::Zero(3 * k, 3 * k);
  out.dj_dbeta = MatX::Zero(3 * k, b);

  // Children lists in topological order (parent[j] < j enforced by loaders).
  std::vector<std::vector<int>> children(static_cast<size_t>(k));
  for (int j = 1; j < k; ++j) children[static_cast<size_t>(spec.parent[static_cast<size_t>(j)])].push_back(j);

  // Pose derivatives: for each source dof, push d(global) down the subtree.
  std::vector<Mat4> dglobal(static_cast<size_t>(k));
  std::vector<char> touched(static_cast<size_t>(k));
  for (int d = 0; d < k; ++d) {
    const std::array<Mat3, 3> dr = rodrigues_jacobian(params.theta.row(d).transpose());
    for (int a = 0; a < 3; ++a) {
      std::fill(touched.begin(), touched.end(), 0);
      Mat4 da = Mat4::Zero();
      da.topLeftCorner<3, 3>() = dr[static_cast<size_t>(a)];
      const int p = spec.parent[static_cast<size_t>(d)];
      dglobal[static_cast<size_t>(d)] =
          (p >= 0) ? Mat4(st.global[static_cast<size_t>(p)] * da) : da;
      touched[static_cast<size_t>(d)] = 1;
      for (int j = d + 1; j < k; ++j) {
        const int pj = spec.parent[static_cast<size_t>(j)];
        if (!touched[static_cast<size_t>(pj)]) continue;
        dglobal[static_cast<size_t>(j)] =
            dglobal[static_cast<size_t>(pj)] * st.local[static_cast<size_t>(j)];
        touched[static_cast<size_t>(j)] = 1;
      }
      const int col = 3 * d + a;
      for (int j = 0; j < k; ++j) {
        if (!touched[static_cast<size_t>(j)]) continue;
        out.dj_dtheta.block<3, 1>(3 * j, col) = dglobal[static_cast<size_t>(j)].topRightCorner<3, 1>();
      }
      for (int i = 0; i < m; ++i) {
        Vec3 acc = Vec3::Zero();
        for (int j = 0; j < k; ++j) {
          const double w = spec.skin_weights(i, j);
          if (w == 0.0 || !touched[static_cast<size_t>(j)]) continue;
          const Vec3 rel = st.shaped.row(i).transpose() - st.rest_joints.row(j).transpose();
          acc += w * (dglobal[static_cast<size_t>(j)].topLeftCorner<3, 3>() * rel +
                      dglobal[static_cast<size_t>(j)].topRightCorner<3, 1>());
        }
        out.dv_dtheta.block<3, 1>(3 * i, col) = acc;
      }
    }
  }

  // Shape derivatives: rest joints shift with beta, so the FK translations
  // change even at fixed theta.
  for (int col = 0; col < b; ++col) {
    Pts dshaped(m, 3);
    for (int i = 0; i < m; ++i) dshaped.row(i) = spec.shape_basis.block<3, 1>(3 * i, col).transpose();
    const Pts drest = spec.joint_regressor * dshaped;  // K x 3
    for (int j = 0; j < k; ++j) {
      Vec3 doffset = drest.row(j);
      const int p = spec.parent[static_cast<size_t>(j)];
      if (p >= 0) doffset -= drest.row(p).transpose();
      Mat4 da = Mat4::Zero();
      da.topRightCorner<3, 1>() = doffset;
      dglobal[static_cast<size_t>(j)] =
          (p >= 0)
              ? Mat4(dglobal[static_cast<size_t>(p)] * st.local[static_cast<size_t>(j)] +
                     st.global[static_cast<size_t>(p)] * da)
              : da;
      out.dj_dbeta.block<3, 1>(3 * j, col) = dglobal[static_cast<size_t>(j)].topRightCorner<3, 1>();
    }
    for (int i = 0; i < m; ++i) {
      Vec3 acc = Vec3::Zero();
      for (int j = 0; j < k; ++j) {
        const double w = spec.skin_weights(i, j);
        if (w == 0.0) continue;
        const Vec3 rel = st.shaped.row(i).transpose() - st.rest_joints.row(j).transpose();
        const Vec3 drel = dshaped.row(i).transpose() - drest.row(j).transpose();
        acc += w * (dglobal[static_cast<size_t>(j)].topLeftCorner<3, 3>() * rel +
                    dglobal[static_cast<size_t>(j)].topRightCorner<3, 1>() +
                    st.global[static_cast<size_t>(j)].topLeftCorner<3, 3>() * drel);
      }
      out.dv_dbeta.block<3, 1>(3 * i, col) = acc;
    }
  }

  // Reuse the FK state for the mesh itself.
  std::vector<Eigen::Matrix<double, 3, 4>> skin(static_cast<size_t>(k));
  for (int j = 0; j < k; ++j) {
    const Mat3 rot = st.global[static_cast<size_t>(j)].topLeftCorner<3, 3>();
    const Vec3 tr = st.global[static_cast<size_t>(j)].topRightCorner<3, 1>();
    skin[static_cast<size_t>(j)].leftCols<3>() = rot;
    skin[static_cast<size_t>(j)].col(3) = tr - rot * st.rest_joints.row(j).transpose();
  }
  out.mesh.vertices.resize(m, 3);
  out.mesh.joints.resize(k, 3);
  out.mesh.faces = &spec.faces;
  for (int i = 0; i < m; ++i) {
    Eigen::Matrix<double, 3, 4> blend = Eigen::Matrix<double, 3, 4>::Zero();
    for (int j = 0; j < k; ++j) {
      const double w = spec.skin_weights(i, j);
      if (w != 0.0) blend += w * skin[static_cast<size_t>(j)];
    }
    const Vec3 v = st.shaped.row(i);
    out.mesh.vertices.row(i) = (blend.leftCols<3>() * v + blend.col(3) + params.trans).transpose();
  }
  for (int j = 0; j < k; ++j) {
    out.mesh.joints.row(j) =
        (st.global[static_cast<size_t>(j)].topRightCorner<3, 1>() + params.trans).transpose();
  }
  return out;
}

/// Max minus min vertex coordinate along the given axis, in meters.
inline double body_height(const BodyMesh& mesh, Axis up_axis) {
  if (mesh.vertices.rows() == 0) throw Error(ErrorCode::EmptyMesh, "body_height on empty mesh");
  const int a = axis_index(up_axis);
  return mesh.vertices.col(a).maxCoeff() - mesh.vertices.col(a).minCoeff();
}

/// Composes an extra root rotation and world translation onto params so that
/// forward(compose_rigid(p, R, d)) == R * forward(p) + d.
inline BodyParams compose_rigid(const BodyModelSpec& spec, const BodyParams& params, const Mat3& r,
                                const Vec3& d) {
  detail::check_dims(spec, params);
  BodyParams out = params;
  const Mat3 root = rodrigues(params.theta.row(0).transpose());
  const Mat3 combined = r * root;
  Eigen::AngleAxisd aa(combined);
  out.theta.row(0) = (aa.angle() * aa.axis()).transpose();
  const detail::FkState st = detail::run_fk(spec, params);
  const Vec3 j0 = st.rest_joints.row(0);
  out.trans = r * (j0 + params.trans) + d - j0;
  return out;
}

/// Structural validation of a model spec. Throws on violated invariants.
inline void validate_spec(const BodyModelSpec& spec) {
  const int m = spec.vertex_count();
  const int k = spec.joint_count();
  if (m == 0) throw Error(ErrorCode::EmptyMesh, "model has no vertices");
  if (k == 0) throw Error(ErrorCode::DimensionMismatch, "model has no joints");
  if (spec.shape_basis.rows() != 3 * m) {
    throw Error(ErrorCode::DimensionMismatch, "shape basis must have 3M rows");
  }
  if (spec.joint_regressor.rows() != k || spec.joint_regressor.cols() != m) {
    throw Error(ErrorCode::DimensionMismatch, "joint regressor must be K x M");
  }
  if (spec.skin_weights.rows() != m || spec.skin_weights.cols() != k) {
    throw Error(ErrorCode::DimensionMismatch, "skin weights must be M x K");
  }
  if (spec.parent[0] != -1) throw Error(ErrorCode::Config, "joint 0 must be the root");
  for (int j = 1; j < k; ++j) {
    const int p = spec.parent[static_cast<size_t>(j)];
    if (p < 0 || p >= j) {
      throw Error(ErrorCode::Config, "parent indices must form a tree with parent[j] < j");
    }
  }
  for (int i = 0; i < m; ++i) {
    if (std::abs(spec.skin_weights.row(i).sum() - 1.0) > 1e-6) {
      throw Error(ErrorCode::Config, "skin weight row " + std::to_string(i) + " does not sum to 1");
    }
    if (spec.skin_weights.row(i).minCoeff() < -1e-12) {
      throw Error(ErrorCode::Config, "skin weights must be nonnegative");
    }
  }
  for (int j = 0; j < k; ++j) {
    if (std::abs(spec.joint_regressor.row(j).sum() - 1.0) > 1e-6) {
      throw Error(ErrorCode::Config, "joint regressor row " + std::to_string(j) + " does not sum to 1");
    }
    if (spec.joint_regressor.row(j).minCoeff() < -1e-12) {
      throw Error(ErrorCode::Config, "joint regressor must be nonnegative");
    }
  }
  for (const auto& f : spec.faces) {
    for (int idx : f) {
      if (idx < 0 || idx >= m) throw Error(ErrorCode::Config, "face index out of range");
    }
  }
}

}  // namespace ctbody
