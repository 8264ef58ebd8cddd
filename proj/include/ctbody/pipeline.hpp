#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "ctbody/config.hpp"
#include "ctbody/ct_pipeline.hpp"
#include "ctbody/depth.hpp"
#include "ctbody/mesh_io.hpp"
#include "ctbody/metrics.hpp"
#include "ctbody/mixing.hpp"
#include "ctbody/model_io.hpp"
#include "ctbody/pose_fit.hpp"
#include "ctbody/shape_fit.hpp"
#include "ctbody/synth.hpp"

namespace ctbody {

namespace fs = std::filesystem;

namespace detail {

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, "cannot open for writing: " + path);
  out << text;
  if (!out) throw Error(ErrorCode::Io, "write failed: " + path);
}

inline void write_json_file(const std::string& path, const json& j) {
  write_text(path, j.dump(2) + "\n");
}

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Io, "JSON parse error in " + path + ": " + e.what());
  }
  return j;
}

inline std::string require_path(const std::string& value, const std::string& name) {
  if (value.empty()) throw Error(ErrorCode::Config, "missing required path: " + name);
  if (!fs::exists(value)) {
    throw Error(ErrorCode::Config, "configured " + name + " does not exist: " + value);
  }
  return value;
}

inline std::string ensure_output_dir(const std::string& dir) {
  if (dir.empty()) throw Error(ErrorCode::Config, "missing required path: output");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::Io, "cannot create output dir " + dir + ": " + ec.message());
  return dir;
}

}  // namespace detail

// --- point cloud files -------------------------------------------------------

inline void save_cloud(const PointCloud& cloud, const std::string& path) {
  json pts = json::array();
  for (Eigen::Index i = 0; i < cloud.points.rows(); ++i) {
    pts.push_back({cloud.points(i, 0), cloud.points(i, 1), cloud.points(i, 2)});
  }
  detail::write_json_file(path, json{{"source", cloud.source},
                                     {"count", cloud.points.rows()},
                                     {"points_m", pts}});
}

inline PointCloud load_cloud(const std::string& path) {
  const json j = detail::read_json_file(path);
  if (!j.contains("points_m") || !j.at("points_m").is_array()) {
    throw Error(ErrorCode::Io, "cloud file missing points_m array: " + path);
  }
  PointCloud cloud;
  if (j.contains("source")) cloud.source = j.at("source").get<std::string>();
  const auto& pts = j.at("points_m");
  cloud.points.resize(static_cast<Eigen::Index>(pts.size()), 3);
  for (size_t i = 0; i < pts.size(); ++i) {
    const auto& p = pts[i];
    if (!p.is_array() || p.size() != 3) {
      throw Error(ErrorCode::Io, "cloud file row is not an [x,y,z] triple: " + path);
    }
    for (int c = 0; c < 3; ++c) {
      cloud.points(static_cast<Eigen::Index>(i), c) = p[static_cast<size_t>(c)].get<double>();
    }
  }
  return cloud;
}

// --- landmark files ----------------------------------------------------------

inline void save_landmarks(const std::vector<Landmark>& landmarks,
                           const std::vector<std::string>& names, const std::string& path) {
  json arr = json::array();
  for (size_t i = 0; i < landmarks.size(); ++i) {
    json item{{"vertex", landmarks[i].vertex},
              {"target_m",
               {landmarks[i].target_m.x(), landmarks[i].target_m.y(), landmarks[i].target_m.z()}}};
    if (i < names.size()) item["name"] = names[i];
    arr.push_back(item);
  }
  detail::write_json_file(path, json{{"landmarks", arr}});
}

inline std::vector<Landmark> load_landmarks(const std::string& path) {
  const json j = detail::read_json_file(path);
  if (!j.contains("landmarks")) {
    throw Error(ErrorCode::Io, "landmark file missing landmarks array: " + path);
  }
  std::vector<Landmark> out;
  for (const auto& item : j.at("landmarks")) {
    Landmark lm;
    lm.vertex = item.at("vertex").get<int>();
    const auto& t = item.at("target_m");
    lm.target_m = Vec3(t[0].get<double>(), t[1].get<double>(), t[2].get<double>());
    out.push_back(lm);
  }
  return out;
}

// --- subcommand bodies -------------------------------------------------------
// Each run_* validates and loads every input before writing anything, so a
// config/io failure leaves no partial outputs behind.

inline PointCloud run_ct2cloud(const PipelineConfig& cfg) {
  const std::string vol_path = detail::require_path(cfg.paths.volume, "volume");
  const Volume vol = load_volume(vol_path);
  CtPipelineConfig ct = cfg.ct;
  ct.seed = cfg.seed;
  const PointCloud cloud = cloud_from_volume(vol, ct);

  const std::string dir = detail::ensure_output_dir(cfg.paths.output);
  save_cloud(cloud, dir + "/cloud_ct.json");
  detail::write_json_file(dir + "/run_manifest.json",
                          run_manifest("ct2cloud", cfg, {vol_path}, {dir + "/cloud_ct.json"}));
  return cloud;
}

/// Fits shape to the CT cloud when a volume path is set, otherwise to the
/// backprojected depth cloud.
inline ShapeFitResult run_fit_shape(const PipelineConfig& cfg) {
  const std::string model_path = detail::require_path(cfg.paths.model, "model");
  const BodyModelSpec spec = load_model(model_path);

  PointCloud cloud;
  std::string input;
  if (!cfg.paths.volume.empty()) {
    input = detail::require_path(cfg.paths.volume, "volume");
    CtPipelineConfig ct = cfg.ct;
    ct.seed = cfg.seed;
    cloud = cloud_from_volume(load_volume(input), ct);
  } else {
    input = detail::require_path(cfg.paths.depth, "depth");
    DepthPreprocessConfig pre;
    pre.median_filter_radius = cfg.pose.median_filter_radius;
    pre.target_width = cfg.pose.target_width;
    pre.target_height = cfg.pose.target_height;
    cloud = backproject(preprocess_depth(load_depth(input), pre));
  }
  GmmConfig gmm = cfg.shape;
  gmm.seed = cfg.seed;
  const ShapeFitResult result = fit_shape(spec, cloud, gmm);

  const std::string dir = detail::ensure_output_dir(cfg.paths.output);
  const std::string out = dir + "/shape_fit.json";
  detail::write_json_file(out, shape_fit_to_json(result));
  detail::write_json_file(dir + "/run_manifest.json",
                          run_manifest("fit-shape", cfg, {model_path, input}, {out}));
  return result;
}

namespace detail {

inline VecX beta_from_shape_file(const std::string& path, int shape_dim) {
  const json j = read_json_file(path);
  if (!j.contains("beta")) throw Error(ErrorCode::Io, "shape result missing beta: " + path);
  const auto vals = j.at("beta").get<std::vector<double>>();
  if (static_cast<int>(vals.size()) != shape_dim) {
    throw Error(ErrorCode::DimensionMismatch, "beta in " + path + " has wrong dimension");
  }
  VecX beta(shape_dim);
  for (int i = 0; i < shape_dim; ++i) beta(i) = vals[static_cast<size_t>(i)];
  return beta;
}

}  // namespace detail

inline PoseFitResult run_fit_pose(const PipelineConfig& cfg) {
  const std::string model_path = detail::require_path(cfg.paths.model, "model");
  const std::string depth_path = detail::require_path(cfg.paths.depth, "depth");
  const BodyModelSpec spec = load_model(model_path);
  const DepthMap depth = load_depth(depth_path);

  std::vector<std::string> inputs{model_path, depth_path};
  VecX beta = VecX::Zero(spec.shape_dim());
  if (!cfg.paths.shape_ct.empty()) {
    inputs.push_back(detail::require_path(cfg.paths.shape_ct, "shape_ct"));
    beta = detail::beta_from_shape_file(cfg.paths.shape_ct, spec.shape_dim());
  } else if (!cfg.paths.shape_depth.empty()) {
    inputs.push_back(detail::require_path(cfg.paths.shape_depth, "shape_depth"));
    beta = detail::beta_from_shape_file(cfg.paths.shape_depth, spec.shape_dim());
  }
  std::vector<Landmark> landmarks;
  if (!cfg.paths.landmarks.empty()) {
    inputs.push_back(detail::require_path(cfg.paths.landmarks, "landmarks"));
    landmarks = load_landmarks(cfg.paths.landmarks);
  }
  const PoseFitResult result = fit_pose(spec, depth, beta, cfg.pose, landmarks);

  const std::string dir = detail::ensure_output_dir(cfg.paths.output);
  const std::string out = dir + "/pose_fit.json";
  detail::write_json_file(out, pose_fit_to_json(result));
  BodyParams fitted;
  fitted.beta = beta;
  fitted.theta = result.theta;
  fitted.trans = result.trans;
  save_params(fitted, dir + "/params_fit.json");
  detail::write_json_file(
      dir + "/run_manifest.json",
      run_manifest("fit-pose", cfg, inputs, {out, dir + "/params_fit.json"}));
  return result;
}

inline BodyParams run_mix(const PipelineConfig& cfg) {
  std::vector<std::string> inputs;
  std::optional<VecX> beta_ct, beta_depth;
  json shape_ct, shape_depth;
  if (!cfg.paths.shape_ct.empty()) {
    inputs.push_back(detail::require_path(cfg.paths.shape_ct, "shape_ct"));
    shape_ct = detail::read_json_file(cfg.paths.shape_ct);
    const auto vals = shape_ct.at("beta").get<std::vector<double>>();
    beta_ct = Eigen::Map<const VecX>(vals.data(), static_cast<Eigen::Index>(vals.size()));
  }
  if (!cfg.paths.shape_depth.empty()) {
    inputs.push_back(detail::require_path(cfg.paths.shape_depth, "shape_depth"));
    shape_depth = detail::read_json_file(cfg.paths.shape_depth);
    const auto vals = shape_depth.at("beta").get<std::vector<double>>();
    beta_depth = Eigen::Map<const VecX>(vals.data(), static_cast<Eigen::Index>(vals.size()));
  }
  const std::string params_path = detail::require_path(cfg.paths.params, "params");
  inputs.push_back(params_path);
  const BodyParams pose = load_params(params_path);

  const BodyParams mixed = mix(beta_ct, beta_depth, pose.theta, pose.trans, cfg.mix);

  const std::string dir = detail::ensure_output_dir(cfg.paths.output);
  const std::string out = dir + "/params_mixed.json";
  save_params(mixed, out);
  detail::write_json_file(dir + "/run_manifest.json", run_manifest("mix", cfg, inputs, {out}));
  return mixed;
}

/// Renders a top-view depth map either from a mesh file or from model +
/// params; the camera is auto-fit over the scene.
inline DepthMap run_render_depth(const PipelineConfig& cfg) {
  TriMesh mesh_mm;
  std::vector<std::string> inputs;
  if (!cfg.paths.mesh.empty()) {
    inputs.push_back(detail::require_path(cfg.paths.mesh, "mesh"));
    mesh_mm = import_mesh(cfg.paths.mesh);
  } else {
    const std::string model_path = detail::require_path(cfg.paths.model, "model");
    const std::string params_path = detail::require_path(cfg.paths.params, "params");
    inputs = {model_path, params_path};
    const BodyModelSpec spec = load_model(model_path);
    const BodyMesh posed = forward(spec, load_params(params_path));
    mesh_mm.vertices = posed.vertices * 1000.0;
    mesh_mm.faces = spec.faces;
  }
  const Aabb box = bounding_box(mesh_mm.vertices);
  const OrthoCamera cam =
      fit_top_camera(box, cfg.synth.depth_width, cfg.synth.depth_height, 80.0);
  const DepthMap depth =
      render_depth(mesh_mm, cam, cfg.synth.depth_width, cfg.synth.depth_height);

  const std::string dir = detail::ensure_output_dir(cfg.paths.output);
  const std::string out = dir + "/depth.d16";
  save_depth(depth, out);
  detail::write_json_file(dir + "/run_manifest.json",
                          run_manifest("render-depth", cfg, inputs, {out}));
  return depth;
}

inline MetricsReport run_evaluate(const PipelineConfig& cfg, const std::string& format = "json") {
  const std::string model_path = detail::require_path(cfg.paths.model, "model");
  const std::string pred_path = detail::require_path(cfg.paths.params, "params");
  const std::string gt_path = detail::require_path(cfg.paths.gt_params, "gt_params");
  const BodyModelSpec spec = load_model(model_path);
  const BodyParams pred = load_params(pred_path);
  const BodyParams gt = load_params(gt_path);
  const MetricsReport report = evaluate(spec, pred, gt, cfg.metrics);

  const std::string dir = detail::ensure_output_dir(cfg.paths.output);
  std::vector<std::string> outputs;
  if (format == "csv") {
    outputs.push_back(dir + "/metrics.csv");
    detail::write_text(outputs.back(), metrics_csv_header(report) + "\n" + metrics_csv_row(report) + "\n");
  } else {
    outputs.push_back(dir + "/metrics.json");
    detail::write_json_file(outputs.back(), metrics_to_json(report));
  }
  detail::write_json_file(
      dir + "/run_manifest.json",
      run_manifest("evaluate", cfg, {model_path, pred_path, gt_path}, outputs));
  return report;
}

// --- synthetic dataset generation --------------------------------------------

inline void write_entry(const DatasetEntry& entry, const ToyModel& model, const std::string& dir) {
  detail::ensure_output_dir(dir);
  save_params(entry.params, dir + "/params.json");
  save_volume(entry.volume, dir + "/volume.json");
  save_depth(entry.depth, dir + "/depth.d16");
  TriMesh mesh_mm;
  mesh_mm.vertices = entry.vertices_m * 1000.0;
  mesh_mm.faces = entry.faces;
  export_mesh(mesh_mm, dir + "/mesh_gt.ply", MeshFormat::Ply);
  save_landmarks(entry.landmarks, model.landmark_names, dir + "/landmarks.json");
  detail::write_json_file(dir + "/meta.json", json{{"height_m", entry.height_m},
                                                   {"draped", entry.draped},
                                                   {"bed", entry.has_bed}});
}

inline std::vector<DatasetEntry> run_synth_gen(const PipelineConfig& cfg) {
  const std::string dir = detail::ensure_output_dir(cfg.paths.output);

  ToySpec toy;
  toy.seed = cfg.seed;
  const ToyModel model = make_toy_model(toy);
  save_model(model.spec, dir + "/model.ctbm");
  detail::write_json_file(dir + "/torso_mask.json", json{{"vertices", model.torso_mask}});

  GenOptions gen;
  gen.voxel.spacing_mm = cfg.synth.spacing_mm;
  gen.voxel.bed = cfg.synth.bed;
  gen.noise_sigma_mm = cfg.synth.noise_sigma_mm;
  gen.drape = cfg.synth.drape;
  gen.drape_slope = cfg.synth.drape_slope;
  gen.drape_lift_mm = cfg.synth.drape_lift_mm;
  gen.depth_width = cfg.synth.depth_width;
  gen.depth_height = cfg.synth.depth_height;

  std::vector<DatasetEntry> entries;
  std::vector<std::string> outputs{dir + "/model.ctbm"};
  Rng rng(cfg.seed);
  for (int i = 0; i < cfg.synth.entries; ++i) {
    const BodyParams params =
        random_supine_params(model, rng, cfg.synth.beta_range, cfg.synth.pose_range);
    gen.seed = cfg.seed * 1000003ULL + static_cast<std::uint64_t>(i);
    const DatasetEntry entry = gen_entry(model, params, gen);
    char name[32];
    std::snprintf(name, sizeof(name), "entry_%04d", i);
    const std::string entry_dir = dir + "/" + name;
    write_entry(entry, model, entry_dir);
    outputs.push_back(entry_dir);
    entries.push_back(entry);
  }
  detail::write_json_file(dir + "/run_manifest.json",
                          run_manifest("synth-gen", cfg, {}, outputs));
  return entries;
}

// --- full chain ---------------------------------------------------------------

struct PipelineOutcome {
  BodyParams params;
  std::optional<ShapeFitResult> shape_ct;
  std::optional<ShapeFitResult> shape_depth;
  PoseFitResult pose;
  std::optional<MetricsReport> metrics;
};

/// CT + depth -> final body params, mesh and (when ground truth is supplied)
/// metrics. Shape comes from the CT cloud and/or the depth cloud per the mix
/// policy; pose always comes from the depth map.
inline PipelineOutcome run_pipeline(const PipelineConfig& cfg, const std::string& format = "json") {
  const std::string model_path = detail::require_path(cfg.paths.model, "model");
  const std::string vol_path = detail::require_path(cfg.paths.volume, "volume");
  const std::string depth_path = detail::require_path(cfg.paths.depth, "depth");
  std::vector<std::string> inputs{model_path, vol_path, depth_path};

  const BodyModelSpec spec = load_model(model_path);
  const Volume volume = load_volume(vol_path);
  const DepthMap depth = load_depth(depth_path);
  std::vector<Landmark> landmarks;
  if (!cfg.paths.landmarks.empty()) {
    inputs.push_back(detail::require_path(cfg.paths.landmarks, "landmarks"));
    landmarks = load_landmarks(cfg.paths.landmarks);
  }
  std::optional<BodyParams> gt;
  if (!cfg.paths.gt_params.empty()) {
    inputs.push_back(detail::require_path(cfg.paths.gt_params, "gt_params"));
    gt = load_params(cfg.paths.gt_params);
  }

  GmmConfig gmm = cfg.shape;
  gmm.seed = cfg.seed;

  PipelineOutcome outcome;
  std::optional<VecX> beta_ct, beta_depth;
  PointCloud cloud_ct;
  if (cfg.mix != MixPolicy::DepthOnly) {
    CtPipelineConfig ct = cfg.ct;
    ct.seed = cfg.seed;
    cloud_ct = cloud_from_volume(volume, ct);
    outcome.shape_ct = fit_shape(spec, cloud_ct, gmm);
    beta_ct = outcome.shape_ct->beta;
  }
  if (cfg.mix != MixPolicy::CtOnly) {
    DepthPreprocessConfig pre;
    pre.median_filter_radius = cfg.pose.median_filter_radius;
    pre.target_width = cfg.pose.target_width;
    pre.target_height = cfg.pose.target_height;
    const PointCloud cloud_depth = backproject(preprocess_depth(depth, pre));
    outcome.shape_depth = fit_shape(spec, cloud_depth, gmm);
    beta_depth = outcome.shape_depth->beta;
  }
  const VecX beta_final =
      mix(beta_ct, beta_depth, MatX::Zero(spec.joint_count(), 3), Vec3::Zero(), cfg.mix).beta;

  std::optional<double> gt_height;
  if (gt) gt_height = body_height(forward(spec, *gt), cfg.pose.height_axis);
  outcome.pose = fit_pose(spec, depth, beta_final, cfg.pose, landmarks, gt_height);

  outcome.params.beta = beta_final;
  outcome.params.theta = outcome.pose.theta;
  outcome.params.trans = outcome.pose.trans;

  if (gt) outcome.metrics = evaluate(spec, outcome.params, *gt, cfg.metrics);

  // All inputs resolved and all stages done; emit artifacts.
  const std::string dir = detail::ensure_output_dir(cfg.paths.output);
  std::vector<std::string> outputs;
  const auto emit = [&](const std::string& name, const json& j) {
    outputs.push_back(dir + "/" + name);
    detail::write_json_file(outputs.back(), j);
  };
  if (cloud_ct.points.rows() > 0) {
    outputs.push_back(dir + "/cloud_ct.json");
    save_cloud(cloud_ct, outputs.back());
  }
  if (outcome.shape_ct) emit("shape_ct.json", shape_fit_to_json(*outcome.shape_ct));
  if (outcome.shape_depth) emit("shape_depth.json", shape_fit_to_json(*outcome.shape_depth));
  emit("pose_fit.json", pose_fit_to_json(outcome.pose));
  outputs.push_back(dir + "/params_final.json");
  save_params(outcome.params, outputs.back());

  const BodyMesh final_mesh = forward(spec, outcome.params);
  TriMesh mesh_mm;
  mesh_mm.vertices = final_mesh.vertices * 1000.0;
  mesh_mm.faces = spec.faces;
  outputs.push_back(dir + "/mesh_final.ply");
  export_mesh(mesh_mm, outputs.back(), MeshFormat::Ply);

  if (outcome.metrics) {
    if (format == "csv") {
      outputs.push_back(dir + "/metrics.csv");
      detail::write_text(outputs.back(),
                         metrics_csv_header(*outcome.metrics) + "\n" +
                             metrics_csv_row(*outcome.metrics) + "\n");
    } else {
      emit("metrics.json", metrics_to_json(*outcome.metrics));
    }
  }
  detail::write_json_file(dir + "/run_manifest.json",
                          run_manifest("pipeline", cfg, inputs, outputs));
  return outcome;
}

}  // namespace ctbody
