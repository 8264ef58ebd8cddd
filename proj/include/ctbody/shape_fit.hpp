#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "ctbody/body_model.hpp"
#include "ctbody/core.hpp"
#include "ctbody/mesh.hpp"

namespace ctbody {

struct GmmConfig {
  double outlier_weight = 0.05;  // uniform mixture component weight
  double sigma2_init = 0.0;      // m²; <= 0 selects the auto heuristic
  int max_em_iters = 60;
  double em_tol = 1e-6;  // relative NLL change for convergence
  double beta_prior_weight = 0.0;
  bool estimate_scale = false;
  double scale_min = 0.5;
  double scale_max = 2.0;
  int max_inner_rounds = 10;  // beta <-> alignment alternation per M-step
  std::uint64_t seed = 0;
};

/// Soft correspondences: posterior(m,n) is the responsibility of centroid m
/// for cloud point n; outlier(n) is the uniform component's share. Columns
/// sum to 1.
struct Correspondences {
  MatX posterior;
  VecX outlier;
};

/// Similarity transform x -> scale * R * x + t applied to the model frame.
struct Similarity {
  double scale = 1.0;
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  Vec3 apply(const Vec3& p) const { return scale * (rotation * p) + translation; }
  Pts apply_points(const Pts& pts) const {
    Pts out = (pts * rotation.transpose()) * scale;
    out.rowwise() += translation.transpose();
    return out;
  }
};

struct MStepResult {
  VecX beta;
  Similarity similarity;
  double sigma2 = 0.0;
};

struct ShapeFitResult {
  VecX beta;
  Similarity similarity;
  double sigma2 = 0.0;
  std::vector<double> nll_trace;
  int iterations = 0;
  bool converged = false;
};

namespace detail {

/// Squared Euclidean distances, centroids x cloud.
inline MatX pairwise_sqdist(const Pts& centroids, const Pts& cloud) {
  const VecX cn = centroids.rowwise().squaredNorm();
  const VecX xn = cloud.rowwise().squaredNorm();
  MatX d2 = -2.0 * (centroids * cloud.transpose());
  d2.colwise() += cn;
  d2.rowwise() += xn.transpose();
  return d2.cwiseMax(0.0);
}

inline void sort_rows_lexicographic(Pts& pts) {
  std::vector<Eigen::Index> order(static_cast<size_t>(pts.rows()));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    if (pts(a, 0) != pts(b, 0)) return pts(a, 0) < pts(b, 0);
    if (pts(a, 1) != pts(b, 1)) return pts(a, 1) < pts(b, 1);
    return pts(a, 2) < pts(b, 2);
  });
  Pts sorted(pts.rows(), 3);
  for (size_t i = 0; i < order.size(); ++i) sorted.row(static_cast<Eigen::Index>(i)) = pts.row(order[i]);
  pts = std::move(sorted);
}

/// Rest centroids plus their shape-basis rows, possibly a vertex subset.
struct CentroidModel {
  Pts rest;    // M x 3
  MatX basis;  // 3M x B, rows grouped per centroid (x,y,z)

  Eigen::Index count() const { return rest.rows(); }
  Eigen::Index shape_dim() const { return basis.cols(); }

  Pts shaped(const VecX& beta) const {
    Pts out = rest;
    if (beta.size() > 0) {
      const VecX offs = basis * beta;
      for (Eigen::Index m = 0; m < rest.rows(); ++m) {
        out.row(m) += offs.segment<3>(3 * m).transpose();
      }
    }
    return out;
  }
};

inline CentroidModel make_centroid_model(const BodyModelSpec& spec,
                                         const std::vector<int>* vertex_mask) {
  CentroidModel model;
  if (!vertex_mask) {
    model.rest = spec.template_vertices;
    model.basis = spec.shape_basis;
    return model;
  }
  if (vertex_mask->empty()) throw Error(ErrorCode::BadMask, "vertex mask is empty");
  model.rest.resize(static_cast<Eigen::Index>(vertex_mask->size()), 3);
  model.basis.resize(3 * static_cast<Eigen::Index>(vertex_mask->size()), spec.shape_basis.cols());
  for (size_t i = 0; i < vertex_mask->size(); ++i) {
    const int v = (*vertex_mask)[i];
    if (v < 0 || v >= spec.template_vertices.rows()) {
      throw Error(ErrorCode::BadMask, "vertex mask index out of range");
    }
    model.rest.row(static_cast<Eigen::Index>(i)) = spec.template_vertices.row(v);
    model.basis.middleRows(3 * static_cast<Eigen::Index>(i), 3) = spec.shape_basis.middleRows(3 * v, 3);
  }
  // Non-degenerate support: at least 4 non-coplanar centroids.
  if (model.count() < 4) throw Error(ErrorCode::BadMask, "vertex mask needs >= 4 vertices");
  const Pts centered = model.rest.rowwise() - model.rest.colwise().mean();
  Eigen::JacobiSVD<MatX> svd(centered);
  if (svd.singularValues()(2) < 1e-12) {
    throw Error(ErrorCode::BadMask, "vertex mask vertices are coplanar");
  }
  return model;
}

struct MStepCore {
  VecX beta;
  Similarity sim;
  double sigma2 = 0.0;
};

inline MStepCore m_step_core(const CentroidModel& model, const Pts& cloud,
                             const Correspondences& corr, const GmmConfig& cfg,
                             const VecX& beta_init, const Similarity& sim_init) {
  const Eigen::Index m_count = model.count();
  const Eigen::Index b_dim = model.shape_dim();
  if (corr.posterior.rows() != m_count || corr.posterior.cols() != cloud.rows()) {
    throw Error(ErrorCode::DimensionMismatch, "correspondence dims do not match model/cloud");
  }

  const VecX w = corr.posterior.rowwise().sum();       // per-centroid mass
  const MatX u = corr.posterior * cloud;               // M x 3, P-weighted point sums
  const VecX q = corr.posterior.colwise().sum();       // per-point inlier mass
  const double np = w.sum();
  if (!(np > 1e-12)) {
    throw Error(ErrorCode::SingularNormalEquations, "no effective correspondences");
  }

  // Normal-equation pieces independent of the alignment.
  MatX c_mat = MatX::Zero(b_dim, b_dim);
  for (Eigen::Index m = 0; m < m_count; ++m) {
    const auto s_m = model.basis.middleRows(3 * m, 3);
    c_mat.noalias() += w(m) * (s_m.transpose() * s_m);
  }
  if (cfg.beta_prior_weight <= 0.0 && b_dim > 0) {
    Eigen::SelfAdjointEigenSolver<MatX> eig(c_mat);
    const double lo = eig.eigenvalues().minCoeff();
    const double hi = eig.eigenvalues().maxCoeff();
    if (lo < 1e-12 * std::max(1.0, hi)) {
      throw Error(ErrorCode::SingularNormalEquations, "shape basis normal equations are singular");
    }
  }

  VecX beta = beta_init.size() == b_dim ? beta_init : VecX::Zero(b_dim);
  Similarity sim = sim_init;

  for (int round = 0; round < std::max(1, cfg.max_inner_rounds); ++round) {
    const VecX beta_prev = beta;
    const Similarity sim_prev = sim;

    // Beta given alignment: linear least squares in the residual
    // sum_m w_m || xbar_m - (s R (y0_m + S_m beta) + t) ||².
    if (b_dim > 0) {
      const double s = sim.scale;
      const Mat3 rt = sim.rotation.transpose();
      MatX a_mat = s * s * c_mat;
      a_mat.diagonal().array() += cfg.beta_prior_weight;
      VecX b_vec = VecX::Zero(b_dim);
      for (Eigen::Index m = 0; m < m_count; ++m) {
        if (w(m) <= 0.0) continue;
        const auto s_m = model.basis.middleRows(3 * m, 3);
        const Vec3 lhs = rt * (u.row(m).transpose() - w(m) * sim.translation) -
                         s * w(m) * model.rest.row(m).transpose();
        b_vec.noalias() += s * (s_m.transpose() * lhs);
      }
      beta = a_mat.ldlt().solve(b_vec);
    }

    // Alignment given beta: weighted similarity Procrustes onto the
    // P-weighted point targets.
    const Pts shaped = model.shaped(beta);
    const Vec3 mu_y = (shaped.transpose() * w) / np;
    const Vec3 mu_x = u.colwise().sum().transpose() / np;
    Mat3 h = Mat3::Zero();
    double var_y = 0.0;
    for (Eigen::Index m = 0; m < m_count; ++m) {
      if (w(m) <= 0.0) continue;
      const Vec3 dy = shaped.row(m).transpose() - mu_y;
      h.noalias() += dy * (u.row(m).transpose() - w(m) * mu_x).transpose();
      var_y += w(m) * dy.squaredNorm();
    }
    Eigen::JacobiSVD<Mat3> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Vec3 d_fix = Vec3::Ones();
    d_fix(2) = (svd.matrixV() * svd.matrixU().transpose()).determinant() >= 0.0 ? 1.0 : -1.0;
    sim.rotation = svd.matrixV() * d_fix.asDiagonal() * svd.matrixU().transpose();
    if (cfg.estimate_scale && var_y > 1e-18) {
      const double s_est = (svd.singularValues().array() * d_fix.array()).sum() / var_y;
      sim.scale = std::clamp(s_est, cfg.scale_min, cfg.scale_max);
    } else {
      sim.scale = sim_init.scale;
    }
    sim.translation = mu_x - sim.scale * (sim.rotation * mu_y);

    const double delta = (beta - beta_prev).norm() + (sim.translation - sim_prev.translation).norm() +
                         (sim.rotation - sim_prev.rotation).norm() + std::abs(sim.scale - sim_prev.scale);
    if (delta < 1e-12) break;
  }

  // sigma² = P-weighted mean squared residual / 3 at the updated parameters.
  const Pts posed = sim.apply_points(model.shaped(beta));
  double sq = (cloud.rowwise().squaredNorm().transpose() * q).value();
  sq -= 2.0 * (posed.array() * u.array()).sum();
  sq += (posed.rowwise().squaredNorm().transpose() * w).value();
  MStepCore out;
  out.beta = beta;
  out.sim = sim;
  out.sigma2 = std::max(sq / (3.0 * np), 1e-12);
  return out;
}

}  // namespace detail

/// Soft-assignment E-step of the centroid mixture
///   p(v_n) = (1-mu) * sum_m pi_m N(v_n | y_m, sigma2 I) + mu / N,
/// computed in the log domain. Component priors default to uniform 1/M.
/// If `nll_out` is given it receives -sum_n log p(v_n).
inline Correspondences e_step(const Pts& centroids, const PointCloud& cloud, double sigma2,
                              double mu, const VecX* priors = nullptr,
                              double* nll_out = nullptr) {
  if (!(sigma2 > 0.0)) throw Error(ErrorCode::NonPositiveVariance, "sigma2 must be positive");
  if (mu < 0.0 || mu >= 1.0) throw Error(ErrorCode::InvalidRange, "outlier weight must be in [0,1)");
  const Eigen::Index m_count = centroids.rows();
  const Eigen::Index n_count = cloud.points.rows();
  if (priors && priors->size() != m_count) {
    throw Error(ErrorCode::DimensionMismatch, "component prior length mismatch");
  }

  const MatX d2 = detail::pairwise_sqdist(centroids, cloud.points);
  const double log_norm = -1.5 * std::log(2.0 * kPi * sigma2);
  VecX log_w(m_count);
  for (Eigen::Index m = 0; m < m_count; ++m) {
    const double pi_m = priors ? (*priors)(m) : 1.0 / static_cast<double>(m_count);
    log_w(m) = pi_m > 0.0 ? std::log1p(-mu) + std::log(pi_m) : -std::numeric_limits<double>::infinity();
  }
  const double log_outlier =
      mu > 0.0 ? std::log(mu / static_cast<double>(n_count)) : -std::numeric_limits<double>::infinity();

  Correspondences corr;
  corr.posterior = (-1.0 / (2.0 * sigma2)) * d2;
  corr.posterior.colwise() += log_w + VecX::Constant(m_count, log_norm);
  corr.outlier.resize(n_count);
  double nll = 0.0;
  for (Eigen::Index n = 0; n < n_count; ++n) {
    const double peak = std::max(log_outlier, corr.posterior.col(n).maxCoeff());
    if (!std::isfinite(peak)) {  // nothing explains this point: all outlier
      corr.posterior.col(n).setZero();
      corr.outlier(n) = 1.0;
      continue;
    }
    corr.posterior.col(n) = (corr.posterior.col(n).array() - peak).exp();
    const double out_term = std::exp(log_outlier - peak);
    const double sum = corr.posterior.col(n).sum() + out_term;
    corr.posterior.col(n) /= sum;
    corr.outlier(n) = out_term > 0.0 ? out_term / sum : 0.0;
    nll -= peak + std::log(sum);
  }
  if (nll_out) *nll_out = nll;
  return corr;
}

/// Closed-form M-step: beta via weighted normal equations and the model-frame
/// similarity via weighted Procrustes, alternated from the previous estimates
/// to a fixed point; sigma² from the weighted residual.
inline MStepResult m_step(const BodyModelSpec& spec, const PointCloud& cloud,
                          const Correspondences& corr, const GmmConfig& cfg,
                          const VecX& beta_init = VecX(), const Similarity& sim_init = {}) {
  const detail::CentroidModel model = detail::make_centroid_model(spec, nullptr);
  const detail::MStepCore core =
      detail::m_step_core(model, cloud.points, corr, cfg, beta_init, sim_init);
  return {core.beta, core.sim, core.sigma2};
}

/// EM shape fit: model vertices (optionally a subset) act as mixture
/// centroids; alternates e_step / m_step until the relative NLL change drops
/// below em_tol. The input cloud is sorted internally, making the result
/// invariant to point order.
inline ShapeFitResult fit_shape(const BodyModelSpec& spec, const PointCloud& cloud,
                                const GmmConfig& cfg,
                                const std::vector<int>* vertex_mask = nullptr) {
  if (cloud.points.rows() < 10) {
    throw Error(ErrorCode::InvalidRange, "shape fit needs at least 10 cloud points");
  }
  const detail::CentroidModel model = detail::make_centroid_model(spec, vertex_mask);

  PointCloud sorted = cloud;
  detail::sort_rows_lexicographic(sorted.points);
  const Eigen::Index n_count = sorted.points.rows();

  ShapeFitResult result;
  result.beta = VecX::Zero(model.shape_dim());
  if (cfg.max_em_iters == 0) {
    result.sigma2 = cfg.sigma2_init > 0.0
                        ? cfg.sigma2_init
                        : detail::pairwise_sqdist(model.rest, sorted.points).mean() / 3.0;
    return result;
  }

  Similarity sim;
  sim.translation =
      sorted.points.colwise().mean().transpose() - model.rest.colwise().mean().transpose();
  double sigma2 = cfg.sigma2_init;
  if (!(sigma2 > 0.0)) {
    sigma2 = detail::pairwise_sqdist(sim.apply_points(model.rest), sorted.points).mean() / 3.0;
    sigma2 = std::max(sigma2, 1e-12);
  }

  VecX beta = VecX::Zero(model.shape_dim());
  for (int iter = 0; iter < cfg.max_em_iters; ++iter) {
    const Pts centroids = sim.apply_points(model.shaped(beta));
    double nll = 0.0;
    const Correspondences corr = e_step(centroids, sorted, sigma2, cfg.outlier_weight, nullptr, &nll);
    result.nll_trace.push_back(nll);
    if (result.nll_trace.size() >= 2) {
      const double prev = result.nll_trace[result.nll_trace.size() - 2];
      if (std::abs(prev - nll) <= cfg.em_tol * std::max(1.0, std::abs(prev))) {
        result.converged = true;
        break;
      }
    }
    const detail::MStepCore core =
        detail::m_step_core(model, sorted.points, corr, cfg, beta, sim);
    beta = core.beta;
    sim = core.sim;
    sigma2 = core.sigma2;
  }

  result.beta = beta;
  result.similarity = sim;
  result.sigma2 = sigma2;
  result.iterations = static_cast<int>(result.nll_trace.size());
  return result;
}

inline nlohmann::json similarity_to_json(const Similarity& sim) {
  nlohmann::json j;
  j["scale"] = sim.scale;
  j["rotation"] = std::vector<std::vector<double>>{
      {sim.rotation(0, 0), sim.rotation(0, 1), sim.rotation(0, 2)},
      {sim.rotation(1, 0), sim.rotation(1, 1), sim.rotation(1, 2)},
      {sim.rotation(2, 0), sim.rotation(2, 1), sim.rotation(2, 2)}};
  j["translation"] = {sim.translation.x(), sim.translation.y(), sim.translation.z()};
  return j;
}

inline nlohmann::json shape_fit_to_json(const ShapeFitResult& r) {
  nlohmann::json j;
  j["beta"] = std::vector<double>(r.beta.data(), r.beta.data() + r.beta.size());
  j["similarity"] = similarity_to_json(r.similarity);
  j["sigma2"] = r.sigma2;
  j["nll_trace"] = r.nll_trace;
  j["iterations"] = r.iterations;
  j["converged"] = r.converged;
  return j;
}

}  // namespace ctbody
