#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Geometry>

#include "ctbody/metrics.hpp"
#include "ctbody/synth.hpp"

using namespace ctbody;

namespace {

const ToyModel& toy() {
  static const ToyModel model = make_toy_model();
  return model;
}

// Closed prism around a regular polygon in the yz plane, axis along x.
TriMesh polygon_prism(int sides, double radius_m, double length_m) {
  TriMesh m;
  m.vertices.resize(2 * sides + 2, 3);
  for (int i = 0; i < sides; ++i) {
    const double a = 2.0 * kPi * i / sides;
    m.vertices.row(i) << 0.0, radius_m * std::cos(a), radius_m * std::sin(a);
    m.vertices.row(sides + i) << length_m, radius_m * std::cos(a), radius_m * std::sin(a);
  }
  m.vertices.row(2 * sides) << 0.0, 0.0, 0.0;
  m.vertices.row(2 * sides + 1) << length_m, 0.0, 0.0;
  for (int i = 0; i < sides; ++i) {
    const int j = (i + 1) % sides;
    m.faces.push_back({i, sides + i, j});
    m.faces.push_back({j, sides + i, sides + j});
    m.faces.push_back({2 * sides, j, i});
    m.faces.push_back({2 * sides + 1, sides + i, sides + j});
  }
  return m;
}

}  // namespace

TEST_CASE("mpjpe and pve are zero on identical inputs") {
  Rng rng(61);
  BodyParams p = BodyParams::rest(toy().spec.shape_dim(), toy().spec.joint_count());
  for (Eigen::Index i = 0; i < p.beta.size(); ++i) p.beta(i) = rng.uniform(-0.5, 0.5);
  const BodyMesh mesh = forward(toy().spec, p);
  REQUIRE(mpjpe(mesh.joints, mesh.joints) == 0.0);
  REQUIRE(pve(mesh.vertices, mesh.vertices) == 0.0);
}

TEST_CASE("a pure translation yields its exact length in millimeters") {
  const BodyMesh mesh = forward(toy().spec, BodyParams::rest(toy().spec.shape_dim(),
                                                             toy().spec.joint_count()));
  const Vec3 d = mm_to_m(Vec3(30.0, 0.0, 40.0));  // 3-4-5 triangle: 50 mm
  const Pts moved_j = mesh.joints.rowwise() + d.transpose();
  const Pts moved_v = mesh.vertices.rowwise() + d.transpose();
  REQUIRE(mpjpe(moved_j, mesh.joints) == Catch::Approx(50.0).margin(1e-9));
  REQUIRE(pve(moved_v, mesh.vertices) == Catch::Approx(50.0).margin(1e-9));
}

TEST_CASE("pve with a vertex mask averages only those vertices") {
  Pts gt(3, 3);
  gt.setZero();
  Pts pred = gt;
  pred(0, 0) = 0.001;  // 1 mm
  pred(1, 0) = 0.003;  // 3 mm
  pred(2, 0) = 0.100;  // excluded
  const std::vector<int> mask = {0, 1};
  REQUIRE(pve(pred, gt, &mask) == Catch::Approx(2.0).margin(1e-12));

  const std::vector<int> empty;
  REQUIRE_THROWS_AS(pve(pred, gt, &empty), Error);
  const std::vector<int> oob = {0, 3};
  REQUIRE_THROWS_AS(pve(pred, gt, &oob), Error);
}

TEST_CASE("dimension mismatches are rejected") {
  Pts a(2, 3), b(3, 3);
  a.setZero();
  b.setZero();
  REQUIRE_THROWS_AS(mpjpe(a, b), Error);
  REQUIRE_THROWS_AS(pve(a, b), Error);
  REQUIRE_THROWS_AS(mpjpe(Pts(0, 3), Pts(0, 3)), Error);
}

TEST_CASE("hull perimeter of an axis-aligned square") {
  std::vector<Eigen::Vector2d> pts = {{0, 0}, {1, 0}, {1, 1}, {0, 1}, {0.5, 0.5}, {0.2, 0.7}};
  REQUIRE(detail::hull_perimeter(pts) == Catch::Approx(4.0));
  std::vector<Eigen::Vector2d> single = {{3, 2}};
  REQUIRE(detail::hull_perimeter(single) == 0.0);
  std::vector<Eigen::Vector2d> repeated = {{3, 2}, {3, 2}, {3, 2}};
  REQUIRE(detail::hull_perimeter(repeated) == 0.0);
}

TEST_CASE("slice circumference of a polygonal prism is its perimeter") {
  const int sides = 64;
  const double r = 0.12;
  const TriMesh prism = polygon_prism(sides, r, 0.4);
  const double c_cm =
      slice_circumference(prism.vertices, prism.faces, Vec3(0.2, 0.0, 0.0), Vec3::UnitX());
  const double expect_cm = 100.0 * 2.0 * sides * r * std::sin(kPi / sides);
  REQUIRE(c_cm == Catch::Approx(expect_cm).epsilon(1e-9));

  // A plane beyond the caps intersects nothing.
  REQUIRE_THROWS_AS(
      slice_circumference(prism.vertices, prism.faces, Vec3(0.9, 0.0, 0.0), Vec3::UnitX()),
      Error);
}

TEST_CASE("slice circumference is invariant under rigid motion") {
  const TriMesh prism = polygon_prism(48, 0.1, 0.5);
  const Vec3 point(0.3, 0.0, 0.0);
  const Vec3 normal = Vec3::UnitX();
  const double base = slice_circumference(prism.vertices, prism.faces, point, normal);

  Rng rng(71);
  for (int t = 0; t < 5; ++t) {
    const Vec3 axis = Vec3(rng.normal(), rng.normal(), rng.normal()).normalized();
    const Mat3 rot = Eigen::AngleAxisd(rng.uniform(-3.0, 3.0), axis).toRotationMatrix();
    const Vec3 d(rng.normal(), rng.normal(), rng.normal());
    const Pts moved = (prism.vertices * rot.transpose()).rowwise() + d.transpose();
    const double c = slice_circumference(moved, prism.faces, rot * point + d, rot * normal);
    REQUIRE(std::abs(c - base) / base < 1e-9);
  }
}

TEST_CASE("body circumference slices at a height fraction") {
  const BodyMesh mesh = forward(toy().spec, BodyParams::rest(toy().spec.shape_dim(),
                                                             toy().spec.joint_count()));
  const double c = circumference(mesh, {"waist", 0.62}, Axis::X);
  REQUIRE(c > 10.0);   // sanity: a human-scaled torso measured in cm
  REQUIRE(c < 200.0);

  REQUIRE_THROWS_AS(circumference(mesh, {"bad", 0.0}, Axis::X), Error);
  REQUIRE_THROWS_AS(circumference(mesh, {"bad", 1.0}, Axis::X), Error);
  BodyMesh no_faces = mesh;
  no_faces.faces = nullptr;
  REQUIRE_THROWS_AS(circumference(no_faces, {"waist", 0.62}, Axis::X), Error);
}

TEST_CASE("evaluate on identical parameters reports zeros") {
  Rng rng(83);
  const BodyParams p = random_supine_params(toy(), rng);
  MetricsConfig cfg;
  cfg.torso_mask = toy().torso_mask;
  const MetricsReport rep = evaluate(toy().spec, p, p, cfg);
  REQUIRE(rep.mpjpe_mm == 0.0);
  REQUIRE(rep.pve_mm == 0.0);
  REQUIRE(rep.torso_v2v_mm == 0.0);
  REQUIRE(rep.circumferences.size() == 3);
  for (const auto& c : rep.circumferences) {
    REQUIRE(c.abs_error_cm == Catch::Approx(0.0).margin(1e-12));
    REQUIRE(c.pred_cm == Catch::Approx(c.gt_cm));
  }
}

TEST_CASE("evaluate without a torso mask omits the torso metric") {
  const BodyParams p = BodyParams::rest(toy().spec.shape_dim(), toy().spec.joint_count());
  const MetricsReport rep = evaluate(toy().spec, p, p);
  REQUIRE(rep.torso_v2v_mm < 0.0);
  const nlohmann::json j = metrics_to_json(rep);
  REQUIRE_FALSE(j.contains("torso_v2v_mm"));
  REQUIRE(j.contains("mpjpe_mm"));
  REQUIRE(j.at("circumference").size() == 3);

  const std::string header = metrics_csv_header(rep);
  const std::string row = metrics_csv_row(rep);
  REQUIRE(header ==
          "mpjpe_mm,pve_mm,torso_v2v_mm,chest_err_cm,waist_err_cm,hip_err_cm");
  // Empty torso field between the second and third commas.
  REQUIRE(row.find(",,") != std::string::npos);
  REQUIRE(std::count(row.begin(), row.end(), ',') ==
          std::count(header.begin(), header.end(), ','));
}

TEST_CASE("metrics json carries circumference entries by name") {
  MetricsReport r;
  r.mpjpe_mm = 1.5;
  r.pve_mm = 2.5;
  r.torso_v2v_mm = 3.5;
  r.circumferences.push_back({"waist", 80.0, 78.0, 2.0});
  const nlohmann::json j = metrics_to_json(r);
  REQUIRE(j.at("torso_v2v_mm").get<double>() == 3.5);
  REQUIRE(j.at("circumference").at("waist").at("pred_cm").get<double>() == 80.0);
  REQUIRE(j.at("circumference").at("waist").at("abs_error_cm").get<double>() == 2.0);
}
