#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "ctbody/config.hpp"
#include "ctbody/mixing.hpp"
#include "ctbody/model_io.hpp"
#include "ctbody/pipeline.hpp"
#include "ctbody/synth.hpp"

using namespace ctbody;

namespace {

const ToyModel& toy() {
  static const ToyModel model = make_toy_model();
  return model;
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("model file round trip is bit exact") {
  const std::string path = temp_path("ctbody_model_rt.ctbm");
  save_model(toy().spec, path);
  const BodyModelSpec back = load_model(path);
  REQUIRE((back.template_vertices - toy().spec.template_vertices).norm() == 0.0);
  REQUIRE((back.shape_basis - toy().spec.shape_basis).norm() == 0.0);
  REQUIRE((back.joint_regressor - toy().spec.joint_regressor).norm() == 0.0);
  REQUIRE((back.skin_weights - toy().spec.skin_weights).norm() == 0.0);
  REQUIRE(back.parent == toy().spec.parent);
  REQUIRE(back.faces == toy().spec.faces);
  std::remove(path.c_str());
}

TEST_CASE("model loader rejects corrupt files") {
  const std::string path = temp_path("ctbody_model_bad.ctbm");
  {
    std::ofstream out(path, std::ios::binary);
    out << "WRONGMAGIC and then some";
  }
  REQUIRE_THROWS_AS(load_model(path), Error);

  // Valid file truncated halfway through the payload.
  save_model(toy().spec, path);
  const auto full = std::filesystem::file_size(path);
  std::filesystem::resize_file(path, full / 2);
  REQUIRE_THROWS_AS(load_model(path), Error);
  std::remove(path.c_str());

  REQUIRE_THROWS_AS(load_model(temp_path("ctbody_model_absent.ctbm")), Error);
}

TEST_CASE("params json round trip") {
  BodyParams p = BodyParams::rest(4, 12);
  Rng rng(3);
  for (Eigen::Index i = 0; i < p.beta.size(); ++i) p.beta(i) = rng.normal();
  for (Eigen::Index i = 0; i < p.theta.size(); ++i) p.theta(i) = rng.normal();
  p.trans = Vec3(0.01, -0.02, 0.3);

  const BodyParams q = params_from_json(params_to_json(p));
  REQUIRE((q.beta - p.beta).norm() == 0.0);
  REQUIRE((q.theta - p.theta).norm() == 0.0);
  REQUIRE((q.trans - p.trans).norm() == 0.0);

  const std::string path = temp_path("ctbody_params_rt.json");
  save_params(p, path);
  const BodyParams r = load_params(path);
  REQUIRE((r.beta - p.beta).norm() < 1e-15);
  REQUIRE((r.theta - p.theta).norm() < 1e-15);
  std::remove(path.c_str());

  const std::string bad = temp_path("ctbody_params_bad.json");
  {
    std::ofstream out(bad);
    out << "{ not json";
  }
  REQUIRE_THROWS_AS(load_params(bad), Error);
  std::remove(bad.c_str());
}

TEST_CASE("config json round trips non-default values") {
  PipelineConfig cfg;
  cfg.seed = 42;
  cfg.paths.model = "m.ctbm";
  cfg.paths.output = "out";
  cfg.ct.threshold_lo_hu = -250.0;
  cfg.ct.sample_count = 1234;
  CropBox crop;
  crop.min_mm = Vec3(-10, -20, -30);
  crop.max_mm = Vec3(10, 20, 30);
  cfg.ct.crop = crop;
  cfg.shape.outlier_weight = 0.10;
  cfg.shape.estimate_scale = true;
  cfg.pose.iterations = 33;
  cfg.pose.height_axis = Axis::Z;
  cfg.mix = MixPolicy::CtOnly;
  cfg.synth.entries = 3;

  const PipelineConfig back = config_from_json(config_to_json(cfg));
  REQUIRE(back.seed == 42);
  REQUIRE(back.paths.model == "m.ctbm");
  REQUIRE(back.ct.threshold_lo_hu == -250.0);
  REQUIRE(back.ct.sample_count == 1234);
  REQUIRE(back.ct.crop);
  REQUIRE((back.ct.crop->min_mm - crop.min_mm).norm() == 0.0);
  REQUIRE(back.shape.outlier_weight == 0.10);
  REQUIRE(back.shape.estimate_scale);
  REQUIRE(back.pose.iterations == 33);
  REQUIRE(back.pose.height_axis == Axis::Z);
  REQUIRE(back.mix == MixPolicy::CtOnly);
  REQUIRE(back.synth.entries == 3);
}

TEST_CASE("config parser rejects unknown keys per section") {
  REQUIRE_THROWS_WITH(config_from_json({{"sede", 1}}),
                      Catch::Matchers::ContainsSubstring("unknown config key"));
  REQUIRE_THROWS_WITH(config_from_json({{"ct", {{"threshold", -300}}}}),
                      Catch::Matchers::ContainsSubstring("ct.threshold"));
  REQUIRE_THROWS_WITH(config_from_json({{"shape", {{"sigma", 1.0}}}}),
                      Catch::Matchers::ContainsSubstring("shape.sigma"));
  REQUIRE_THROWS_WITH(config_from_json({{"pose", {{"steps", 5}}}}),
                      Catch::Matchers::ContainsSubstring("pose.steps"));
  REQUIRE_THROWS_WITH(config_from_json({{"paths", {{"vol", "x"}}}}),
                      Catch::Matchers::ContainsSubstring("paths.vol"));
}

TEST_CASE("config parser validates enum-like fields") {
  REQUIRE_THROWS_AS(config_from_json({{"mix", "blend"}}), Error);
  REQUIRE_THROWS_AS(config_from_json({{"pose", {{"height_axis", "w"}}}}), Error);
  REQUIRE(config_from_json({{"mix", "depth_only"}}).mix == MixPolicy::DepthOnly);
  REQUIRE(config_from_json({{"pose", {{"height_axis", "y"}}}}).pose.height_axis == Axis::Y);

  // Crop accepts null (absent) or a box object.
  REQUIRE_FALSE(config_from_json({{"ct", {{"crop", nullptr}}}}).ct.crop.has_value());
  const PipelineConfig with_crop = config_from_json(
      {{"ct", {{"crop", {{"min_mm", {0, 0, 0}}, {"max_mm", {1, 2, 3}}}}}}});
  REQUIRE(with_crop.ct.crop.has_value());
  REQUIRE(with_crop.ct.crop->max_mm.z() == 3.0);
}

TEST_CASE("mix policy names round trip") {
  REQUIRE(mix_policy_from_name("ct_only") == MixPolicy::CtOnly);
  REQUIRE(mix_policy_from_name("depth_only") == MixPolicy::DepthOnly);
  REQUIRE(mix_policy_from_name("average") == MixPolicy::Average);
  REQUIRE_THROWS_AS(mix_policy_from_name("median"), Error);
  REQUIRE(std::string(mix_policy_name(MixPolicy::Average)) == "average");
}

TEST_CASE("mix selects or averages the shape vectors") {
  VecX a(2), b(2);
  a << 1.0, 2.0;
  b << 3.0, 6.0;
  const MatX theta = MatX::Constant(3, 3, 0.1);
  const Vec3 trans(0.5, 0.0, -0.5);

  const BodyParams ct = mix(a, b, theta, trans, MixPolicy::CtOnly);
  REQUIRE((ct.beta - a).norm() == 0.0);
  REQUIRE((ct.theta - theta).norm() == 0.0);
  REQUIRE((ct.trans - trans).norm() == 0.0);

  const BodyParams dp = mix(a, b, theta, trans, MixPolicy::DepthOnly);
  REQUIRE((dp.beta - b).norm() == 0.0);

  const BodyParams avg = mix(a, b, theta, trans, MixPolicy::Average);
  REQUIRE(avg.beta(0) == 2.0);
  REQUIRE(avg.beta(1) == 4.0);

  try {
    mix(std::nullopt, b, theta, trans, MixPolicy::CtOnly);
    FAIL("expected missing CT beta to throw");
  } catch (const Error& e) {
    REQUIRE(e.code() == ErrorCode::MissingBeta);
  }
  REQUIRE_THROWS_AS(mix(a, std::nullopt, theta, trans, MixPolicy::Average), Error);
  VecX c(3);
  c.setZero();
  REQUIRE_THROWS_AS(mix(a, c, theta, trans, MixPolicy::Average), Error);
}

TEST_CASE("config hash tracks content") {
  PipelineConfig a;
  PipelineConfig b;
  REQUIRE(config_hash(a) == config_hash(b));
  b.seed = 1;
  REQUIRE(config_hash(a) != config_hash(b));
  b = a;
  b.ct.sample_count += 1;
  REQUIRE(config_hash(a) != config_hash(b));
}

TEST_CASE("run manifest records provenance") {
  PipelineConfig cfg;
  cfg.seed = 7;
  const nlohmann::json m =
      run_manifest("fit-shape", cfg, {"in/cloud.json"}, {"out/shape_fit.json"});
  REQUIRE(m.at("tool").get<std::string>() == "ctbody");
  REQUIRE(m.contains("version"));
  REQUIRE(m.at("subcommand").get<std::string>() == "fit-shape");
  REQUIRE(m.at("seed").get<std::uint64_t>() == 7);
  REQUIRE(m.at("config_hash").get<std::string>().size() == 16);
  REQUIRE(m.at("inputs")[0].get<std::string>() == "in/cloud.json");
  REQUIRE(m.at("outputs")[0].get<std::string>() == "out/shape_fit.json");
  REQUIRE(m.contains("config"));
  REQUIRE(m.at("format_versions").contains("model"));
}

TEST_CASE("point cloud files round trip") {
  PointCloud cloud;
  cloud.source = "ct";
  cloud.points.resize(3, 3);
  cloud.points << 0.1, 0.2, 0.3, -0.4, 0.5, -0.6, 1e-7, 0.0, 2.5;
  const std::string path = temp_path("ctbody_cloud_rt.json");
  save_cloud(cloud, path);
  const PointCloud back = load_cloud(path);
  REQUIRE(back.source == "ct");
  REQUIRE(back.size() == 3);
  REQUIRE((back.points - cloud.points).cwiseAbs().maxCoeff() < 1e-15);
  std::remove(path.c_str());

  const std::string bad = temp_path("ctbody_cloud_bad.json");
  {
    std::ofstream out(bad);
    out << R"({"source": "ct"})";
  }
  REQUIRE_THROWS_AS(load_cloud(bad), Error);
  {
    std::ofstream out(bad);
    out << R"({"points_m": [[1, 2]]})";
  }
  REQUIRE_THROWS_AS(load_cloud(bad), Error);
  std::remove(bad.c_str());
}

TEST_CASE("landmark files round trip") {
  std::vector<Landmark> lms = {{3, Vec3(0.1, 0.2, 0.3)}, {17, Vec3(-1.0, 0.0, 0.5)}};
  const std::string path = temp_path("ctbody_landmarks_rt.json");
  save_landmarks(lms, {"head", "hip"}, path);
  const std::vector<Landmark> back = load_landmarks(path);
  REQUIRE(back.size() == 2);
  REQUIRE(back[0].vertex == 3);
  REQUIRE((back[0].target_m - lms[0].target_m).norm() == 0.0);
  REQUIRE(back[1].vertex == 17);
  std::remove(path.c_str());
}

TEST_CASE("load_config reads a file and rejects bad json") {
  const std::string path = temp_path("ctbody_cfg.json");
  {
    std::ofstream out(path);
    out << R"({"seed": 11, "ct": {"sample_count": 600}})";
  }
  const PipelineConfig cfg = load_config(path);
  REQUIRE(cfg.seed == 11);
  REQUIRE(cfg.ct.sample_count == 600);
  std::remove(path.c_str());

  const std::string bad = temp_path("ctbody_cfg_bad.json");
  {
    std::ofstream out(bad);
    out << "{]";
  }
  REQUIRE_THROWS_AS(load_config(bad), Error);
  std::remove(bad.c_str());
  REQUIRE_THROWS_AS(load_config(temp_path("ctbody_cfg_absent.json")), Error);
}
