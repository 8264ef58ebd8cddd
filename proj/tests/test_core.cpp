#include <catch2/catch_amalgamated.hpp>

#include "ctbody/config.hpp"
#include "ctbody/pipeline.hpp"

using namespace ctbody;

TEST_CASE("rng is deterministic per seed") {
  Rng a(42), b(42), c(43);
  for (int i = 0; i < 100; ++i) {
    const double x = a.uniform();
    REQUIRE(x == b.uniform());
    REQUIRE(x >= 0.0);
    REQUIRE(x < 1.0);
  }
  bool differs = false;
  Rng a2(42);
  for (int i = 0; i < 10; ++i) differs = differs || a2.uniform() != c.uniform();
  REQUIRE(differs);
}

TEST_CASE("error categories map to exit codes") {
  REQUIRE(static_cast<int>(error_category(ErrorCode::Config)) == 2);
  REQUIRE(static_cast<int>(error_category(ErrorCode::Io)) == 3);
  REQUIRE(static_cast<int>(error_category(ErrorCode::Numeric)) == 4);
  REQUIRE(static_cast<int>(error_category(ErrorCode::NotConverged)) == 5);
}

TEST_CASE("config round trip and hashing") {
  PipelineConfig cfg;
  const json j = config_to_json(cfg);
  const PipelineConfig back = config_from_json(j);
  REQUIRE(config_to_json(back) == j);
  REQUIRE(config_hash(back) == config_hash(cfg));

  PipelineConfig changed = cfg;
  changed.shape.outlier_weight = 0.2;
  REQUIRE(config_hash(changed) != config_hash(cfg));
}
