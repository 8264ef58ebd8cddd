#pragma once

#include <fstream>
#include <initializer_list>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ctbody/core.hpp"
#include "ctbody/ct_pipeline.hpp"
#include "ctbody/metrics.hpp"
#include "ctbody/mixing.hpp"
#include "ctbody/pose_fit.hpp"
#include "ctbody/shape_fit.hpp"
#include "ctbody/synth.hpp"
#include "ctbody/version.hpp"

namespace ctbody {

using nlohmann::json;

inline const char* axis_to_name(Axis a) {
  switch (a) {
    case Axis::X: return "x";
    case Axis::Y: return "y";
    default: return "z";
  }
}

inline Axis axis_from_name(const std::string& s) {
  if (s == "x") return Axis::X;
  if (s == "y") return Axis::Y;
  if (s == "z") return Axis::Z;
  throw Error(ErrorCode::Config, "unknown axis name: " + s);
}

struct PathsConfig {
  std::string model;
  std::string volume;
  std::string depth;
  std::string landmarks;     // optional landmark file for fit-pose
  std::string params;        // input / predicted params file
  std::string gt_params;     // ground-truth params file for evaluate
  std::string mesh;          // input mesh for render-depth
  std::string shape_ct;      // fit-shape result feeding mix / fit-pose
  std::string shape_depth;
  std::string output = "out";
};

struct SynthGenConfig {
  int entries = 1;
  double spacing_mm = 5.0;
  double noise_sigma_mm = 0.0;
  bool drape = false;
  bool bed = true;
  int depth_width = 256;
  int depth_height = 108;
  double drape_slope = 0.35;
  double drape_lift_mm = 8.0;
  double beta_range = 0.8;
  double pose_range = 0.25;
};

struct PipelineConfig {
  std::uint64_t seed = 0;
  PathsConfig paths;
  CtPipelineConfig ct;
  GmmConfig shape;
  PoseFitConfig pose;
  MixPolicy mix = MixPolicy::Average;
  MetricsConfig metrics;
  SynthGenConfig synth;
};

namespace detail {

inline void check_keys(const json& j, std::initializer_list<const char*> allowed,
                       const std::string& where) {
  if (!j.is_object()) throw Error(ErrorCode::Config, where + " must be a JSON object");
  for (const auto& item : j.items()) {
    bool known = false;
    for (const char* k : allowed) {
      if (item.key() == k) {
        known = true;
        break;
      }
    }
    if (!known) throw Error(ErrorCode::Config, "unknown config key: " + where + "." + item.key());
  }
}

template <typename T>
void read_if(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    j.at(key).get_to(out);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Config, "bad value for " + where + "." + key + ": " + e.what());
  }
}

inline void read_axis(const json& j, const char* key, Axis& out, const std::string& where) {
  if (!j.contains(key)) return;
  std::string s;
  read_if(j, key, s, where);
  out = axis_from_name(s);
}

inline json vec3_to_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

inline Vec3 vec3_from_json(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 3) {
    throw Error(ErrorCode::Config, where + " must be an array of 3 numbers");
  }
  return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

}  // namespace detail

// --- per-section (de)serialization ------------------------------------------

inline json paths_to_json(const PathsConfig& p) {
  return json{{"model", p.model},         {"volume", p.volume},
              {"depth", p.depth},         {"landmarks", p.landmarks},
              {"params", p.params},       {"gt_params", p.gt_params},
              {"mesh", p.mesh},           {"shape_ct", p.shape_ct},
              {"shape_depth", p.shape_depth}, {"output", p.output}};
}

inline PathsConfig paths_from_json(const json& j) {
  detail::check_keys(j,
                     {"model", "volume", "depth", "landmarks", "params", "gt_params", "mesh",
                      "shape_ct", "shape_depth", "output"},
                     "paths");
  PathsConfig p;
  detail::read_if(j, "model", p.model, "paths");
  detail::read_if(j, "volume", p.volume, "paths");
  detail::read_if(j, "depth", p.depth, "paths");
  detail::read_if(j, "landmarks", p.landmarks, "paths");
  detail::read_if(j, "params", p.params, "paths");
  detail::read_if(j, "gt_params", p.gt_params, "paths");
  detail::read_if(j, "mesh", p.mesh, "paths");
  detail::read_if(j, "shape_ct", p.shape_ct, "paths");
  detail::read_if(j, "shape_depth", p.shape_depth, "paths");
  detail::read_if(j, "output", p.output, "paths");
  return p;
}

inline json ct_to_json(const CtPipelineConfig& c) {
  json j{{"threshold_lo_hu", c.threshold_lo_hu},
         {"threshold_hi_hu", c.threshold_hi_hu},
         {"morph_open_radius", c.morph_open_radius},
         {"morph_close_radius", c.morph_close_radius},
         {"keep_largest_component", c.keep_largest_component},
         {"smooth_iterations", c.smooth_iterations},
         {"sample_count", c.sample_count},
         {"seed", c.seed}};
  if (c.crop) {
    j["crop"] = json{{"min_mm", detail::vec3_to_json(c.crop->min_mm)},
                     {"max_mm", detail::vec3_to_json(c.crop->max_mm)}};
  } else {
    j["crop"] = nullptr;
  }
  return j;
}

inline CtPipelineConfig ct_from_json(const json& j) {
  detail::check_keys(j,
                     {"threshold_lo_hu", "threshold_hi_hu", "morph_open_radius",
                      "morph_close_radius", "keep_largest_component", "smooth_iterations",
                      "sample_count", "seed", "crop"},
                     "ct");
  CtPipelineConfig c;
  detail::read_if(j, "threshold_lo_hu", c.threshold_lo_hu, "ct");
  detail::read_if(j, "threshold_hi_hu", c.threshold_hi_hu, "ct");
  detail::read_if(j, "morph_open_radius", c.morph_open_radius, "ct");
  detail::read_if(j, "morph_close_radius", c.morph_close_radius, "ct");
  detail::read_if(j, "keep_largest_component", c.keep_largest_component, "ct");
  detail::read_if(j, "smooth_iterations", c.smooth_iterations, "ct");
  detail::read_if(j, "sample_count", c.sample_count, "ct");
  detail::read_if(j, "seed", c.seed, "ct");
  if (j.contains("crop") && !j.at("crop").is_null()) {
    detail::check_keys(j.at("crop"), {"min_mm", "max_mm"}, "ct.crop");
    CropBox box;
    if (j.at("crop").contains("min_mm")) {
      box.min_mm = detail::vec3_from_json(j.at("crop").at("min_mm"), "ct.crop.min_mm");
    }
    if (j.at("crop").contains("max_mm")) {
      box.max_mm = detail::vec3_from_json(j.at("crop").at("max_mm"), "ct.crop.max_mm");
    }
    c.crop = box;
  }
  return c;
}

inline json shape_to_json(const GmmConfig& c) {
  return json{{"outlier_weight", c.outlier_weight},
              {"sigma2_init", c.sigma2_init},
              {"max_em_iters", c.max_em_iters},
              {"em_tol", c.em_tol},
              {"beta_prior_weight", c.beta_prior_weight},
              {"estimate_scale", c.estimate_scale},
              {"scale_min", c.scale_min},
              {"scale_max", c.scale_max},
              {"max_inner_rounds", c.max_inner_rounds},
              {"seed", c.seed}};
}

inline GmmConfig shape_from_json(const json& j) {
  detail::check_keys(j,
                     {"outlier_weight", "sigma2_init", "max_em_iters", "em_tol",
                      "beta_prior_weight", "estimate_scale", "scale_min", "scale_max",
                      "max_inner_rounds", "seed"},
                     "shape");
  GmmConfig c;
  detail::read_if(j, "outlier_weight", c.outlier_weight, "shape");
  detail::read_if(j, "sigma2_init", c.sigma2_init, "shape");
  detail::read_if(j, "max_em_iters", c.max_em_iters, "shape");
  detail::read_if(j, "em_tol", c.em_tol, "shape");
  detail::read_if(j, "beta_prior_weight", c.beta_prior_weight, "shape");
  detail::read_if(j, "estimate_scale", c.estimate_scale, "shape");
  detail::read_if(j, "scale_min", c.scale_min, "shape");
  detail::read_if(j, "scale_max", c.scale_max, "shape");
  detail::read_if(j, "max_inner_rounds", c.max_inner_rounds, "shape");
  detail::read_if(j, "seed", c.seed, "shape");
  return c;
}

inline json gmm_prior_to_json(const GmmPrior& p) {
  json weights = json::array();
  json means = json::array();
  json variances = json::array();
  for (Eigen::Index c = 0; c < p.weights.size(); ++c) {
    weights.push_back(p.weights(c));
    json mu = json::array(), var = json::array();
    for (Eigen::Index d = 0; d < p.means.cols(); ++d) {
      mu.push_back(p.means(c, d));
      var.push_back(p.variances(c, d));
    }
    means.push_back(mu);
    variances.push_back(var);
  }
  return json{{"weights", weights}, {"means", means}, {"variances", variances}};
}

inline GmmPrior gmm_prior_from_json(const json& j, const std::string& where) {
  detail::check_keys(j, {"weights", "means", "variances"}, where);
  std::vector<double> weights;
  std::vector<std::vector<double>> means, variances;
  detail::read_if(j, "weights", weights, where);
  detail::read_if(j, "means", means, where);
  detail::read_if(j, "variances", variances, where);
  if (means.size() != weights.size() || variances.size() != weights.size()) {
    throw Error(ErrorCode::Config, where + ": weights/means/variances lengths differ");
  }
  GmmPrior p;
  const Eigen::Index c_count = static_cast<Eigen::Index>(weights.size());
  const Eigen::Index dim = c_count > 0 ? static_cast<Eigen::Index>(means[0].size()) : 0;
  p.weights = VecX::Zero(c_count);
  p.means = MatX::Zero(c_count, dim);
  p.variances = MatX::Zero(c_count, dim);
  for (Eigen::Index c = 0; c < c_count; ++c) {
    const auto& mu = means[static_cast<size_t>(c)];
    const auto& var = variances[static_cast<size_t>(c)];
    if (static_cast<Eigen::Index>(mu.size()) != dim ||
        static_cast<Eigen::Index>(var.size()) != dim) {
      throw Error(ErrorCode::Config, where + ": ragged component rows");
    }
    p.weights(c) = weights[static_cast<size_t>(c)];
    for (Eigen::Index d = 0; d < dim; ++d) {
      p.means(c, d) = mu[static_cast<size_t>(d)];
      p.variances(c, d) = var[static_cast<size_t>(d)];
    }
  }
  return p;
}

inline json pose_to_json(const PoseFitConfig& c) {
  return json{{"lambda1", c.lambda1},
              {"lambda2", c.lambda2},
              {"chamfer_weight", c.chamfer_weight},
              {"landmark_weight", c.landmark_weight},
              {"pose_prior_weight", c.pose_prior_weight},
              {"shape_prior_weight", c.shape_prior_weight},
              {"pose_prior", gmm_prior_to_json(c.pose_prior)},
              {"iterations", c.iterations},
              {"stage1_iterations", c.stage1_iterations},
              {"step_init", c.step_init},
              {"step_min", c.step_min},
              {"tol", c.tol},
              {"median_filter_radius", c.median_filter_radius},
              {"target_width", c.target_width},
              {"target_height", c.target_height},
              {"height_axis", axis_to_name(c.height_axis)}};
}

inline PoseFitConfig pose_from_json(const json& j) {
  detail::check_keys(j,
                     {"lambda1", "lambda2", "chamfer_weight", "landmark_weight",
                      "pose_prior_weight", "shape_prior_weight", "pose_prior", "iterations",
                      "stage1_iterations", "step_init", "step_min", "tol", "median_filter_radius",
                      "target_width", "target_height", "height_axis"},
                     "pose");
  PoseFitConfig c;
  detail::read_if(j, "lambda1", c.lambda1, "pose");
  detail::read_if(j, "lambda2", c.lambda2, "pose");
  detail::read_if(j, "chamfer_weight", c.chamfer_weight, "pose");
  detail::read_if(j, "landmark_weight", c.landmark_weight, "pose");
  detail::read_if(j, "pose_prior_weight", c.pose_prior_weight, "pose");
  detail::read_if(j, "shape_prior_weight", c.shape_prior_weight, "pose");
  if (j.contains("pose_prior")) {
    c.pose_prior = gmm_prior_from_json(j.at("pose_prior"), "pose.pose_prior");
  }
  detail::read_if(j, "iterations", c.iterations, "pose");
  detail::read_if(j, "stage1_iterations", c.stage1_iterations, "pose");
  detail::read_if(j, "step_init", c.step_init, "pose");
  detail::read_if(j, "step_min", c.step_min, "pose");
  detail::read_if(j, "tol", c.tol, "pose");
  detail::read_if(j, "median_filter_radius", c.median_filter_radius, "pose");
  detail::read_if(j, "target_width", c.target_width, "pose");
  detail::read_if(j, "target_height", c.target_height, "pose");
  detail::read_axis(j, "height_axis", c.height_axis, "pose");
  return c;
}

inline json metrics_to_json_cfg(const MetricsConfig& c) {
  json slices = json::array();
  for (const auto& s : c.slices) {
    slices.push_back(json{{"name", s.name}, {"height_fraction", s.height_fraction}});
  }
  return json{{"slices", slices},
              {"torso_mask", c.torso_mask},
              {"up_axis", axis_to_name(c.up_axis)}};
}

inline MetricsConfig metrics_from_json(const json& j) {
  detail::check_keys(j, {"slices", "torso_mask", "up_axis"}, "metrics");
  MetricsConfig c;
  if (j.contains("slices")) {
    c.slices.clear();
    for (const auto& s : j.at("slices")) {
      detail::check_keys(s, {"name", "height_fraction"}, "metrics.slices[]");
      SliceSpec spec;
      detail::read_if(s, "name", spec.name, "metrics.slices[]");
      detail::read_if(s, "height_fraction", spec.height_fraction, "metrics.slices[]");
      c.slices.push_back(spec);
    }
  }
  detail::read_if(j, "torso_mask", c.torso_mask, "metrics");
  detail::read_axis(j, "up_axis", c.up_axis, "metrics");
  return c;
}

inline json synth_to_json(const SynthGenConfig& c) {
  return json{{"entries", c.entries},
              {"spacing_mm", c.spacing_mm},
              {"noise_sigma_mm", c.noise_sigma_mm},
              {"drape", c.drape},
              {"bed", c.bed},
              {"depth_width", c.depth_width},
              {"depth_height", c.depth_height},
              {"drape_slope", c.drape_slope},
              {"drape_lift_mm", c.drape_lift_mm},
              {"beta_range", c.beta_range},
              {"pose_range", c.pose_range}};
}

inline SynthGenConfig synth_from_json(const json& j) {
  detail::check_keys(j,
                     {"entries", "spacing_mm", "noise_sigma_mm", "drape", "bed", "depth_width",
                      "depth_height", "drape_slope", "drape_lift_mm", "beta_range", "pose_range"},
                     "synth");
  SynthGenConfig c;
  detail::read_if(j, "entries", c.entries, "synth");
  detail::read_if(j, "spacing_mm", c.spacing_mm, "synth");
  detail::read_if(j, "noise_sigma_mm", c.noise_sigma_mm, "synth");
  detail::read_if(j, "drape", c.drape, "synth");
  detail::read_if(j, "bed", c.bed, "synth");
  detail::read_if(j, "depth_width", c.depth_width, "synth");
  detail::read_if(j, "depth_height", c.depth_height, "synth");
  detail::read_if(j, "drape_slope", c.drape_slope, "synth");
  detail::read_if(j, "drape_lift_mm", c.drape_lift_mm, "synth");
  detail::read_if(j, "beta_range", c.beta_range, "synth");
  detail::read_if(j, "pose_range", c.pose_range, "synth");
  return c;
}

inline json config_to_json(const PipelineConfig& c) {
  return json{{"seed", c.seed},
              {"paths", paths_to_json(c.paths)},
              {"ct", ct_to_json(c.ct)},
              {"shape", shape_to_json(c.shape)},
              {"pose", pose_to_json(c.pose)},
              {"mix", mix_policy_name(c.mix)},
              {"metrics", metrics_to_json_cfg(c.metrics)},
              {"synth", synth_to_json(c.synth)}};
}

inline PipelineConfig config_from_json(const json& j) {
  detail::check_keys(j, {"seed", "paths", "ct", "shape", "pose", "mix", "metrics", "synth"},
                     "config");
  PipelineConfig c;
  detail::read_if(j, "seed", c.seed, "config");
  if (j.contains("paths")) c.paths = paths_from_json(j.at("paths"));
  if (j.contains("ct")) c.ct = ct_from_json(j.at("ct"));
  if (j.contains("shape")) c.shape = shape_from_json(j.at("shape"));
  if (j.contains("pose")) c.pose = pose_from_json(j.at("pose"));
  if (j.contains("mix")) {
    std::string name;
    detail::read_if(j, "mix", name, "config");
    c.mix = mix_policy_from_name(name);
  }
  if (j.contains("metrics")) c.metrics = metrics_from_json(j.at("metrics"));
  if (j.contains("synth")) c.synth = synth_from_json(j.at("synth"));
  return c;
}

inline PipelineConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open config file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Config, "config parse error in " + path + ": " + e.what());
  }
  return config_from_json(j);
}

/// Hash of the fully-populated canonical serialization: formatting and key
/// order do not matter, any semantic field change does.
inline std::uint64_t config_hash(const PipelineConfig& c) {
  return fnv1a64(config_to_json(c).dump());
}

inline json run_manifest(const std::string& subcommand, const PipelineConfig& cfg,
                         const std::vector<std::string>& inputs,
                         const std::vector<std::string>& outputs) {
  return json{{"tool", "ctbody"},
              {"version", kVersionString},
              {"format_versions",
               {{"model", kModelFormatVersion},
                {"volume", kVolumeFormatVersion},
                {"depth", kDepthFormatVersion}}},
              {"subcommand", subcommand},
              {"seed", cfg.seed},
              {"config_hash", to_hex(config_hash(cfg))},
              {"config", config_to_json(cfg)},
              {"inputs", inputs},
              {"outputs", outputs}};
}

}  // namespace ctbody
