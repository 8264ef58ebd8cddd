#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <vector>

#include <json.hpp>

#include "ctbody/body_model.hpp"
#include "ctbody/core.hpp"
#include "ctbody/depth.hpp"
#include "ctbody/mesh.hpp"
#include "ctbody/shape_fit.hpp"

namespace ctbody {

/// Gaussian mixture prior over flattened pose vectors (3K dims), with
/// per-component diagonal covariances.
struct GmmPrior {
  VecX weights;    // C, sums to 1
  MatX means;      // C x D
  MatX variances;  // C x D, diagonal entries

  Eigen::Index components() const { return weights.size(); }
  Eigen::Index dims() const { return means.cols(); }
};

/// Single Gaussian centered at the rest pose; variance per degree of freedom.
inline GmmPrior default_pose_prior(int joint_count, double variance = 0.25) {
  GmmPrior prior;
  const int d = 3 * joint_count;
  prior.weights = VecX::Ones(1);
  prior.means = MatX::Zero(1, d);
  prior.variances = MatX::Constant(1, d, variance);
  return prior;
}

/// Negative log density of the mixture at theta, log-sum-exp stabilized.
/// Optionally returns the gradient and the per-component responsibilities.
inline double gmm_prior_nll(const GmmPrior& prior, const VecX& theta_flat, VecX* grad = nullptr,
                            VecX* responsibilities = nullptr) {
  const Eigen::Index c_count = prior.components();
  const Eigen::Index d = prior.dims();
  if (theta_flat.size() != d || prior.means.rows() != c_count || prior.variances.rows() != c_count ||
      prior.variances.cols() != d) {
    throw Error(ErrorCode::DimensionMismatch, "pose prior dimension mismatch");
  }
  VecX log_terms(c_count);
  for (Eigen::Index c = 0; c < c_count; ++c) {
    if (!(prior.weights(c) > 0.0) || (prior.variances.row(c).array() <= 0.0).any()) {
      throw Error(ErrorCode::NonPositiveVariance, "prior weights and variances must be positive");
    }
    const auto diff = (theta_flat.transpose() - prior.means.row(c)).array();
    const auto var = prior.variances.row(c).array();
    log_terms(c) = std::log(prior.weights(c)) - 0.5 * d * std::log(2.0 * kPi) -
                   0.5 * var.log().sum() - 0.5 * (diff.square() / var).sum();
  }
  const double peak = log_terms.maxCoeff();
  const double lse = peak + std::log((log_terms.array() - peak).exp().sum());
  if (grad || responsibilities) {
    const VecX resp = (log_terms.array() - lse).exp();
    if (responsibilities) *responsibilities = resp;
    if (grad) {
      grad->setZero(d);
      for (Eigen::Index c = 0; c < c_count; ++c) {
        *grad += resp(c) *
                 ((theta_flat.transpose() - prior.means.row(c)).array() / prior.variances.row(c).array())
                     .matrix()
                     .transpose();
      }
    }
  }
  return -lse;
}

struct PoseFitConfig {
  double lambda1 = 1.0;  // vertex-to-vertex weight in the supervised loss
  double lambda2 = 0.1;  // height weight (loss evaluator and fit objective)
  double chamfer_weight = 1.0e4;
  double landmark_weight = 1.0e4;
  double pose_prior_weight = 1.0;
  double shape_prior_weight = 0.0;
  GmmPrior pose_prior;  // empty -> default rest-pose prior
  int iterations = 120;
  int stage1_iterations = 40;
  double step_init = 0.1;
  double step_min = 1e-12;
  double tol = 1e-9;  // relative objective change
  int median_filter_radius = 1;
  int target_width = 128;
  int target_height = 54;
  Axis height_axis = Axis::X;  // body axis used for the height term
};

struct Landmark {
  int vertex = 0;
  Vec3 target_m = Vec3::Zero();
};

struct PoseTerms {
  double chamfer = 0.0;
  double landmark = 0.0;
  double pose_prior = 0.0;
  double height = 0.0;
  double shape_prior = 0.0;
  double total = 0.0;
};

struct PoseFitResult {
  MatX theta;
  Vec3 trans = Vec3::Zero();
  std::vector<double> objective_trace;
  PoseTerms terms;
  int iterations = 0;
  bool converged = false;
};

struct LossBreakdown {
  double total = 0.0;
  double l_params = 0.0;
  double l_v2v = 0.0;
  double l_height = 0.0;
};

/// Supervised parameter loss: L = L_params + lambda1 * L_v2v + lambda2 * L_height
/// with L_params the mean squared error over concatenated (beta, theta, t),
/// L_v2v the mean per-vertex Euclidean distance, and L_height the absolute
/// body-height error against the known height (meters).
inline LossBreakdown supervised_loss(const BodyModelSpec& spec, const BodyParams& pred,
                              const BodyParams& gt, double lambda1, double lambda2,
                              double gt_height_m, Axis height_axis = Axis::X) {
  if (pred.beta.size() != gt.beta.size() || pred.theta.rows() != gt.theta.rows()) {
    throw Error(ErrorCode::DimensionMismatch, "pred/gt parameter dims differ");
  }
  const BodyMesh mesh_pred = forward(spec, pred);
  const BodyMesh mesh_gt = forward(spec, gt);

  LossBreakdown out;
  const double dim = static_cast<double>(pred.beta.size() + pred.theta.size() + 3);
  double sq = (pred.beta - gt.beta).squaredNorm();
  sq += (pred.theta - gt.theta).squaredNorm();
  sq += (pred.trans - gt.trans).squaredNorm();
  out.l_params = sq / dim;
  out.l_v2v = (mesh_pred.vertices - mesh_gt.vertices).rowwise().norm().mean();
  out.l_height = std::abs(body_height(mesh_pred, height_axis) - gt_height_m);
  out.total = out.l_params + lambda1 * out.l_v2v + lambda2 * out.l_height;
  return out;
}

/// Mean nearest-neighbor distance from each point of `from` to `to` (meters).
inline double chamfer_distance(const Pts& from, const Pts& to) {
  if (from.rows() == 0 || to.rows() == 0) {
    throw Error(ErrorCode::InvalidRange, "chamfer over empty point set");
  }
  double acc = 0.0;
  for (Eigen::Index n = 0; n < from.rows(); ++n) {
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index m = 0; m < to.rows(); ++m) {
      best = std::min(best, (from.row(n) - to.row(m)).squaredNorm());
    }
    acc += std::sqrt(best);
  }
  return acc / static_cast<double>(from.rows());
}

namespace detail {

/// Mean squared nearest-neighbor distance from sorted cloud points to the
/// visible vertex subset; smooth almost everywhere, so it serves as the
/// gradient-friendly data term. Sorting makes the reduction order (and hence
/// the value, bit for bit) independent of input point order.
struct ChamferTerm {
  double value = 0.0;
  std::vector<int> nearest;  // visible-list index per cloud point
};

inline ChamferTerm chamfer_sq(const Pts& cloud_sorted, const Pts& verts,
                              const std::vector<int>& visible) {
  ChamferTerm out;
  out.nearest.assign(static_cast<size_t>(cloud_sorted.rows()), -1);
  if (visible.empty() || cloud_sorted.rows() == 0) return out;
  double acc = 0.0;
  for (Eigen::Index n = 0; n < cloud_sorted.rows(); ++n) {
    double best = std::numeric_limits<double>::infinity();
    int best_i = 0;
    for (size_t i = 0; i < visible.size(); ++i) {
      const double d2 = (cloud_sorted.row(n) - verts.row(visible[i])).squaredNorm();
      if (d2 < best) {
        best = d2;
        best_i = static_cast<int>(i);
      }
    }
    out.nearest[static_cast<size_t>(n)] = best_i;
    acc += best;
  }
  out.value = acc / static_cast<double>(cloud_sorted.rows());
  return out;
}

inline std::vector<int> camera_facing_vertices(const BodyMesh& mesh) {
  const Pts normals = vertex_normals(mesh.vertices, *mesh.faces);
  std::vector<int> visible;
  for (Eigen::Index v = 0; v < normals.rows(); ++v) {
    if (normals(v, 2) > 0.0) visible.push_back(static_cast<int>(v));
  }
  return visible;
}

}  // namespace detail

/// One-directional squared chamfer data term (cloud -> visible vertices),
/// invariant to the order of cloud points.
inline double pose_data_term(const Pts& cloud, const Pts& verts, const std::vector<int>& visible) {
  Pts sorted = cloud;
  detail::sort_rows_lexicographic(sorted);
  return detail::chamfer_sq(sorted, verts, visible).value;
}

namespace detail {

struct PoseObjective {
  const BodyModelSpec* spec;
  const PoseFitConfig* cfg;
  const GmmPrior* prior;
  Pts cloud;  // sorted, meters
  const std::vector<Landmark>* landmarks;
  std::optional<double> gt_height;
  VecX beta;
  double beta_sq = 0.0;

  int joint_count() const { return spec->joint_count(); }
  int dof() const { return 3 * joint_count() + 3; }

  BodyParams unpack(const VecX& x) const {
    BodyParams p;
    p.beta = beta;
    p.theta = MatX::Zero(joint_count(), 3);
    for (int k = 0; k < joint_count(); ++k) p.theta.row(k) = x.segment<3>(3 * k).transpose();
    p.trans = x.tail<3>();
    return p;
  }

  double value(const VecX& x, PoseTerms* terms = nullptr) const {
    const BodyParams p = unpack(x);
    const BodyMesh mesh = forward(*spec, p);
    return assemble(mesh, p, nullptr, nullptr, terms);
  }

  double value_grad(const VecX& x, VecX& grad, PoseTerms* terms = nullptr) const {
    const BodyParams p = unpack(x);
    const ForwardJacobians fj = forward_with_jacobians(*spec, p);
    grad.setZero(dof());
    return assemble(fj.mesh, p, &fj, &grad, terms);
  }

 private:
  // Accumulates d(objective)/d(vertex v) contributions into the (theta, t)
  // gradient via the forward Jacobians.
  static void chain_vertex(const ForwardJacobians& fj, int v, const Vec3& dv, VecX& grad) {
    const Eigen::Index dof_theta = fj.dv_dtheta.cols();
    grad.head(dof_theta).noalias() += fj.dv_dtheta.middleRows(3 * v, 3).transpose() * dv;
    grad.tail<3>() += dv;  // translation moves every vertex identically
  }

  double assemble(const BodyMesh& mesh, const BodyParams& p, const ForwardJacobians* fj,
                  VecX* grad, PoseTerms* terms) const {
    PoseTerms t;
    t.shape_prior = cfg->shape_prior_weight * beta_sq;

    const std::vector<int> visible = camera_facing_vertices(mesh);
    if (!visible.empty() && cloud.rows() > 0) {
      const ChamferTerm ch = chamfer_sq(cloud, mesh.vertices, visible);
      t.chamfer = cfg->chamfer_weight * ch.value;
      if (grad) {
        const double scale = 2.0 * cfg->chamfer_weight / static_cast<double>(cloud.rows());
        for (Eigen::Index n = 0; n < cloud.rows(); ++n) {
          const int v = visible[static_cast<size_t>(ch.nearest[static_cast<size_t>(n)])];
          const Vec3 dv = scale * (mesh.vertices.row(v) - cloud.row(n)).transpose();
          chain_vertex(*fj, v, dv, *grad);
        }
      }
    }

    if (landmarks && !landmarks->empty()) {
      double acc = 0.0;
      for (const Landmark& lm : *landmarks) {
        if (lm.vertex < 0 || lm.vertex >= mesh.vertices.rows()) {
          throw Error(ErrorCode::InvalidRange, "landmark vertex index out of range");
        }
        const Vec3 r = mesh.vertices.row(lm.vertex).transpose() - lm.target_m;
        acc += r.squaredNorm();
        if (grad) chain_vertex(*fj, lm.vertex, 2.0 * cfg->landmark_weight * r, *grad);
      }
      t.landmark = cfg->landmark_weight * acc;
    }

    {
      VecX theta_flat(3 * p.theta.rows());
      for (Eigen::Index k = 0; k < p.theta.rows(); ++k) {
        theta_flat.segment<3>(3 * k) = p.theta.row(k).transpose();
      }
      VecX pg;
      const double nll = gmm_prior_nll(*prior, theta_flat, grad ? &pg : nullptr);
      t.pose_prior = cfg->pose_prior_weight * nll;
      if (grad) grad->head(theta_flat.size()) += cfg->pose_prior_weight * pg;
    }

    if (gt_height) {
      const int u = axis_index(cfg->height_axis);
      Eigen::Index v_max = 0, v_min = 0;
      mesh.vertices.col(u).maxCoeff(&v_max);
      mesh.vertices.col(u).minCoeff(&v_min);
      const double h = mesh.vertices(v_max, u) - mesh.vertices(v_min, u);
      t.height = cfg->lambda2 * std::abs(h - *gt_height);
      if (grad) {
        const double sgn = h >= *gt_height ? 1.0 : -1.0;
        Vec3 dv = Vec3::Zero();
        dv(u) = cfg->lambda2 * sgn;
        chain_vertex(*fj, static_cast<int>(v_max), dv, *grad);
        chain_vertex(*fj, static_cast<int>(v_min), -dv, *grad);
      }
    }

    t.total = t.chamfer + t.landmark + t.pose_prior + t.height + t.shape_prior;
    if (terms) *terms = t;
    return t.total;
  }
};

}  // namespace detail

/// Estimates (theta, t) from a top-view depth map with beta frozen.
/// The depth map is preprocessed (normalize, median, resize), backprojected
/// to a cloud, and the objective
///   chamfer_weight * mean squared cloud->visible-vertex distance
///   + landmark_weight * sum of squared landmark residuals
///   + pose_prior_weight * prior NLL + lambda2 * |height - gt| (+ const)
/// is minimized by two-stage projected gradient descent with backtracking:
/// first translation + root rotation, then all joints.
inline PoseFitResult fit_pose(const BodyModelSpec& spec, const DepthMap& depth,
                              const VecX& beta_fixed, const PoseFitConfig& cfg,
                              const std::vector<Landmark>& landmarks = {},
                              std::optional<double> gt_height_m = std::nullopt,
                              std::optional<BodyParams> init = std::nullopt) {
  if (beta_fixed.size() != spec.shape_dim()) {
    throw Error(ErrorCode::DimensionMismatch, "beta_fixed does not match model shape dim");
  }

  DepthPreprocessConfig pre;
  pre.median_filter_radius = cfg.median_filter_radius;
  pre.target_width = cfg.target_width;
  pre.target_height = cfg.target_height;
  const DepthMap processed = preprocess_depth(depth, pre);
  const PointCloud cloud = backproject(processed);
  if (cloud.points.rows() == 0) {
    throw Error(ErrorCode::NoValidPixels, "depth map has no valid pixels");
  }

  detail::PoseObjective obj;
  obj.spec = &spec;
  obj.cfg = &cfg;
  const GmmPrior prior =
      cfg.pose_prior.components() > 0 ? cfg.pose_prior : default_pose_prior(spec.joint_count());
  obj.prior = &prior;
  obj.cloud = cloud.points;
  detail::sort_rows_lexicographic(obj.cloud);
  obj.landmarks = &landmarks;
  obj.gt_height = gt_height_m;
  obj.beta = beta_fixed;
  obj.beta_sq = beta_fixed.squaredNorm();

  const int k = spec.joint_count();
  BodyParams start = init ? *init : BodyParams::rest(spec.shape_dim(), k);
  start.beta = beta_fixed;
  if (!init) {
    // Rough default: place the model under the cloud centroid.
    const BodyMesh rest_mesh = forward(spec, start);
    const Vec3 delta = obj.cloud.colwise().mean().transpose() -
                       rest_mesh.vertices.colwise().mean().transpose();
    start.trans.head<2>() = delta.head<2>();
  }

  VecX x(obj.dof());
  for (int j = 0; j < k; ++j) x.segment<3>(3 * j) = start.theta.row(j).transpose();
  x.tail<3>() = start.trans;

  PoseFitResult result;
  result.objective_trace.push_back(obj.value(x, &result.terms));

  if (cfg.iterations > 0) {
    const auto run_stage = [&](const std::vector<int>& active, int iters) {
      VecX grad(obj.dof());
      double f = result.objective_trace.back();
      double alpha = cfg.step_init;
      for (int it = 0; it < iters; ++it) {
        obj.value_grad(x, grad);
        VecX dir = VecX::Zero(obj.dof());
        for (int i : active) dir(i) = grad(i);
        const double gnorm = dir.norm();
        if (gnorm < 1e-14) return true;
        dir /= gnorm;
        bool accepted = false;
        double f_new = f;
        VecX x_new;
        while (alpha >= cfg.step_min) {
          x_new = x - alpha * dir;
          f_new = obj.value(x_new);
          if (f_new <= f - 1e-4 * alpha * gnorm) {
            accepted = true;
            break;
          }
          alpha *= 0.5;
        }
        if (!accepted) return true;  // no descent possible at the step floor
        const double drop = f - f_new;
        x = x_new;
        f = f_new;
        result.objective_trace.push_back(f);
        alpha = std::min(alpha * 1.3, 1.0);
        if (drop <= cfg.tol * std::max(1.0, std::abs(f))) return true;
      }
      return false;
    };

    std::vector<int> stage1 = {0, 1, 2};  // root rotation
    for (int i = 0; i < 3; ++i) stage1.push_back(3 * k + i);
    std::vector<int> stage2(static_cast<size_t>(obj.dof()));
    std::iota(stage2.begin(), stage2.end(), 0);

    run_stage(stage1, cfg.stage1_iterations);
    result.converged = run_stage(stage2, cfg.iterations);
  }

  BodyParams fitted = obj.unpack(x);
  canonicalize(fitted);
  result.theta = fitted.theta;
  result.trans = fitted.trans;
  result.iterations = static_cast<int>(result.objective_trace.size()) - 1;
  obj.value(x, &result.terms);
  return result;
}

inline nlohmann::json pose_fit_to_json(const PoseFitResult& r) {
  nlohmann::json j;
  std::vector<std::vector<double>> theta;
  for (Eigen::Index k = 0; k < r.theta.rows(); ++k) {
    theta.push_back({r.theta(k, 0), r.theta(k, 1), r.theta(k, 2)});
  }
  j["theta"] = theta;
  j["trans"] = {r.trans.x(), r.trans.y(), r.trans.z()};
  j["objective_trace"] = r.objective_trace;
  j["terms"] = {{"chamfer", r.terms.chamfer},       {"landmark", r.terms.landmark},
                {"pose_prior", r.terms.pose_prior}, {"height", r.terms.height},
                {"shape_prior", r.terms.shape_prior}, {"total", r.terms.total}};
  j["iterations"] = r.iterations;
  j["converged"] = r.converged;
  return j;
}

}  // namespace ctbody
