#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "ctbody/pipeline.hpp"
#include "ctbody/version.hpp"

namespace {

enum class LogLevel { Debug = 0, Info = 1, Warn = 2, Error = 3 };

LogLevel log_level() {
  static const LogLevel level = [] {
    const char* env = std::getenv("CTBODY_LOG");
    if (!env) return LogLevel::Warn;
    const std::string s(env);
    if (s == "debug") return LogLevel::Debug;
    if (s == "info") return LogLevel::Info;
    if (s == "error") return LogLevel::Error;
    return LogLevel::Warn;
  }();
  return level;
}

void log_info(const std::string& msg) {
  if (log_level() <= LogLevel::Info) std::cerr << "[info] " << msg << "\n";
}

struct Options {
  std::string config_path;
  std::string output;
  std::string format = "json";
  std::uint64_t seed = 0;
  bool seed_set = false;
  bool dump_config = false;
  bool require_convergence = false;
};

ctbody::PipelineConfig effective_config(const Options& opt) {
  ctbody::PipelineConfig cfg;
  if (!opt.config_path.empty()) cfg = ctbody::load_config(opt.config_path);
  if (opt.seed_set) cfg.seed = opt.seed;
  if (!opt.output.empty()) cfg.paths.output = opt.output;
  return cfg;
}

void check_converged(bool converged, bool required, const std::string& what) {
  if (required && !converged) {
    throw ctbody::Error(ctbody::ErrorCode::NotConverged, what + " did not converge");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Body mesh reconstruction from CT volumes and top-view depth maps"};
  app.set_version_flag("--version", ctbody::kVersionString);
  app.fallthrough();

  Options opt;
  app.add_option("--config", opt.config_path, "JSON config file");
  app.add_option("--output", opt.output, "output directory (overrides config)");
  app.add_option("--format", opt.format, "report format")
      ->check(CLI::IsMember({"json", "csv"}));
  app.add_option("--seed", opt.seed, "seed override")->each([&](const std::string&) {
    opt.seed_set = true;
  });
  app.add_flag("--dump-config", opt.dump_config, "print the effective config and exit");
  app.add_flag("--require-convergence", opt.require_convergence,
               "treat non-converged fits as errors");

  CLI::App* ct2cloud = app.add_subcommand("ct2cloud", "CT volume -> surface point cloud");
  CLI::App* fit_shape = app.add_subcommand("fit-shape", "fit shape coefficients to a cloud");
  CLI::App* fit_pose = app.add_subcommand("fit-pose", "fit pose to a depth map");
  CLI::App* mix = app.add_subcommand("mix", "combine CT / depth shape estimates");
  CLI::App* render = app.add_subcommand("render-depth", "render a top-view depth map");
  CLI::App* evaluate = app.add_subcommand("evaluate", "compare predicted vs ground-truth params");
  CLI::App* synth_gen = app.add_subcommand("synth-gen", "generate a synthetic dataset");
  CLI::App* pipeline = app.add_subcommand("pipeline", "full CT + depth -> mesh + metrics chain");

  CLI11_PARSE(app, argc, argv);

  try {
    if (opt.dump_config) {
      std::cout << ctbody::config_to_json(effective_config(opt)).dump(2) << "\n";
      return 0;
    }
    if (app.get_subcommands().empty()) {
      std::cerr << "error[config]: no subcommand given (see --help)\n";
      return static_cast<int>(ctbody::ErrorCategory::Config);
    }
    const ctbody::PipelineConfig cfg = effective_config(opt);

    if (ct2cloud->parsed()) {
      const auto cloud = ctbody::run_ct2cloud(cfg);
      log_info("ct2cloud: " + std::to_string(cloud.size()) + " points");
    } else if (fit_shape->parsed()) {
      const auto result = ctbody::run_fit_shape(cfg);
      check_converged(result.converged, opt.require_convergence, "shape fit");
      log_info("fit-shape: " + std::to_string(result.iterations) + " iterations");
    } else if (fit_pose->parsed()) {
      const auto result = ctbody::run_fit_pose(cfg);
      check_converged(result.converged, opt.require_convergence, "pose fit");
      log_info("fit-pose: " + std::to_string(result.iterations) + " iterations");
    } else if (mix->parsed()) {
      ctbody::run_mix(cfg);
      log_info("mix: wrote params_mixed.json");
    } else if (render->parsed()) {
      const auto depth = ctbody::run_render_depth(cfg);
      log_info("render-depth: " + std::to_string(depth.valid_count()) + " valid pixels");
    } else if (evaluate->parsed()) {
      const auto report = ctbody::run_evaluate(cfg, opt.format);
      log_info("evaluate: MPJPE " + std::to_string(report.mpjpe_mm) + " mm");
    } else if (synth_gen->parsed()) {
      const auto entries = ctbody::run_synth_gen(cfg);
      log_info("synth-gen: " + std::to_string(entries.size()) + " entries");
    } else if (pipeline->parsed()) {
      const auto outcome = ctbody::run_pipeline(cfg, opt.format);
      check_converged(outcome.pose.converged, opt.require_convergence, "pose fit");
      if (outcome.metrics) {
        log_info("pipeline: MPJPE " + std::to_string(outcome.metrics->mpjpe_mm) + " mm");
      }
    }
    return 0;
  } catch (const ctbody::Error& e) {
    const auto category = ctbody::error_category(e.code());
    std::cerr << "error[" << ctbody::error_category_name(category) << "]: " << e.what() << "\n";
    return static_cast<int>(category);
  } catch (const std::exception& e) {
    std::cerr << "error[numeric]: " << e.what() << "\n";
    return static_cast<int>(ctbody::ErrorCategory::Numeric);
  }
}
