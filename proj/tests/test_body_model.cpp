#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Geometry>

#include "ctbody/body_model.hpp"
#include "ctbody/synth.hpp"

using namespace ctbody;

namespace {

const ToyModel& toy() {
  static const ToyModel model = make_toy_model();
  return model;
}

BodyParams random_params(std::uint64_t seed, double theta_scale = 0.3) {
  Rng rng(seed);
  BodyParams p = BodyParams::rest(toy().spec.shape_dim(), toy().spec.joint_count());
  for (Eigen::Index i = 0; i < p.beta.size(); ++i) p.beta(i) = rng.uniform(-0.8, 0.8);
  for (Eigen::Index k = 0; k < p.theta.rows(); ++k) {
    for (int c = 0; c < 3; ++c) p.theta(k, c) = theta_scale * rng.normal();
  }
  p.trans = 0.05 * Vec3(rng.normal(), rng.normal(), rng.normal());
  return p;
}

}  // namespace

TEST_CASE("rodrigues matches the angle-axis rotation") {
  Rng rng(7);
  for (int t = 0; t < 20; ++t) {
    Vec3 w(rng.normal(), rng.normal(), rng.normal());
    w *= rng.uniform(0.0, 2.5);
    const Mat3 r = rodrigues(w);
    Mat3 expect = Mat3::Identity();
    const double angle = w.norm();
    if (angle > 0.0) expect = Eigen::AngleAxisd(angle, w / angle).toRotationMatrix();
    REQUIRE((r - expect).norm() < 1e-12);
    REQUIRE((r * r.transpose() - Mat3::Identity()).norm() < 1e-12);
    REQUIRE(r.determinant() == Catch::Approx(1.0).margin(1e-12));
  }
}

TEST_CASE("rodrigues is smooth through zero") {
  REQUIRE((rodrigues(Vec3::Zero()) - Mat3::Identity()).norm() == 0.0);
  // The series branch must agree with the exact formula near the switch.
  for (const double eps : {1e-12, 1e-9, 1e-8, 2e-8, 1e-6}) {
    const Vec3 w = eps * Vec3(1, 2, -2).normalized();
    const Mat3 r = rodrigues(w);
    const Mat3 expect = Eigen::AngleAxisd(eps, Vec3(1, 2, -2).normalized()).toRotationMatrix();
    REQUIRE((r - expect).norm() < 1e-14);
  }
}

TEST_CASE("rodrigues jacobian matches central differences") {
  const double h = 1e-6;
  Rng rng(11);
  for (int t = 0; t < 10; ++t) {
    Vec3 w(rng.normal(), rng.normal(), rng.normal());
    if (t == 0) w.setZero();  // series branch
    if (t == 1) w *= 1e-10;   // just above zero
    const auto jac = rodrigues_jacobian(w);
    for (int c = 0; c < 3; ++c) {
      Vec3 wp = w, wm = w;
      wp(c) += h;
      wm(c) -= h;
      const Mat3 fd = (rodrigues(wp) - rodrigues(wm)) / (2.0 * h);
      REQUIRE((fd - jac[static_cast<size_t>(c)]).norm() < 1e-7);
    }
  }
}

TEST_CASE("canonicalize bounds the angle by pi without changing the rotation") {
  Rng rng(13);
  for (int t = 0; t < 25; ++t) {
    const Vec3 axis = Vec3(rng.normal(), rng.normal(), rng.normal()).normalized();
    const double angle = rng.uniform(0.0, 6.0 * kPi);
    const Vec3 w = angle * axis;
    const Vec3 cw = canonicalize_axis_angle(w);
    REQUIRE(cw.norm() <= kPi + 1e-12);
    REQUIRE((rodrigues(cw) - rodrigues(w)).norm() < 1e-9);
  }
  REQUIRE(canonicalize_axis_angle(Vec3::Zero()).norm() == 0.0);
  // 2*pi - 0.3 wraps to 0.3 around the flipped axis.
  const Vec3 w = (2.0 * kPi - 0.3) * Vec3::UnitZ();
  const Vec3 cw = canonicalize_axis_angle(w);
  REQUIRE(cw.norm() == Catch::Approx(0.3).margin(1e-12));
  REQUIRE(cw.z() < 0.0);
}

TEST_CASE("forward at rest reproduces the template") {
  const BodyParams rest = BodyParams::rest(toy().spec.shape_dim(), toy().spec.joint_count());
  const BodyMesh mesh = forward(toy().spec, rest);
  REQUIRE((mesh.vertices - toy().spec.template_vertices).norm() < 1e-12);
  const Pts expect_joints = toy().spec.joint_regressor * toy().spec.template_vertices;
  REQUIRE((mesh.joints - expect_joints).norm() < 1e-12);
  REQUIRE(mesh.faces == &toy().spec.faces);
}

TEST_CASE("shape displacements are linear at rest pose") {
  Rng rng(17);
  BodyParams p = BodyParams::rest(toy().spec.shape_dim(), toy().spec.joint_count());
  for (Eigen::Index i = 0; i < p.beta.size(); ++i) p.beta(i) = rng.uniform(-1.0, 1.0);
  const BodyMesh mesh = forward(toy().spec, p);
  const VecX disp = toy().spec.shape_basis * p.beta;
  for (int v = 0; v < toy().spec.vertex_count(); ++v) {
    const Vec3 expect =
        toy().spec.template_vertices.row(v).transpose() + disp.segment<3>(3 * v);
    REQUIRE((mesh.vertices.row(v).transpose() - expect).norm() < 1e-12);
  }
}

TEST_CASE("translation shifts vertices and joints uniformly") {
  BodyParams p = random_params(19);
  const BodyMesh base = forward(toy().spec, p);
  const Vec3 d(0.21, -0.07, 0.4);
  p.trans += d;
  const BodyMesh moved = forward(toy().spec, p);
  REQUIRE((moved.vertices - (base.vertices.rowwise() + d.transpose())).norm() < 1e-12);
  REQUIRE((moved.joints - (base.joints.rowwise() + d.transpose())).norm() < 1e-12);
}

TEST_CASE("compose_rigid pre-rotates the posed body exactly") {
  Rng rng(23);
  for (int t = 0; t < 5; ++t) {
    const BodyParams p = random_params(100 + static_cast<std::uint64_t>(t));
    const Vec3 axis = Vec3(rng.normal(), rng.normal(), rng.normal()).normalized();
    const Mat3 r = Eigen::AngleAxisd(rng.uniform(-2.0, 2.0), axis).toRotationMatrix();
    const Vec3 d(rng.normal(), rng.normal(), rng.normal());

    const BodyParams composed = compose_rigid(toy().spec, p, r, d);
    const BodyMesh direct = forward(toy().spec, p);
    const BodyMesh via = forward(toy().spec, composed);
    const Pts expect = (direct.vertices * r.transpose()).rowwise() + d.transpose();
    REQUIRE((via.vertices - expect).norm() < 1e-9);
  }
}

TEST_CASE("vertex jacobians match central differences") {
  const double h = 1e-6;
  for (int t = 0; t < 2; ++t) {
    const BodyParams p = random_params(200 + static_cast<std::uint64_t>(t));
    const ForwardJacobians fj = forward_with_jacobians(toy().spec, p);
    REQUIRE((fj.mesh.vertices - forward(toy().spec, p).vertices).norm() == 0.0);

    for (int k = 0; k < toy().spec.joint_count(); ++k) {
      for (int c = 0; c < 3; ++c) {
        BodyParams pp = p, pm = p;
        pp.theta(k, c) += h;
        pm.theta(k, c) -= h;
        const BodyMesh mp = forward(toy().spec, pp);
        const BodyMesh mm = forward(toy().spec, pm);
        const Pts fdv = (mp.vertices - mm.vertices) / (2.0 * h);
        const Pts fdj = (mp.joints - mm.joints) / (2.0 * h);
        double num_v = 0.0, den_v = 0.0, num_j = 0.0, den_j = 0.0;
        for (Eigen::Index v = 0; v < fdv.rows(); ++v) {
          const Vec3 an = fj.dv_dtheta.block<3, 1>(3 * v, 3 * k + c);
          num_v += (fdv.row(v).transpose() - an).squaredNorm();
          den_v += an.squaredNorm();
        }
        for (Eigen::Index j = 0; j < fdj.rows(); ++j) {
          const Vec3 an = fj.dj_dtheta.block<3, 1>(3 * j, 3 * k + c);
          num_j += (fdj.row(j).transpose() - an).squaredNorm();
          den_j += an.squaredNorm();
        }
        REQUIRE(std::sqrt(num_v) / std::max(1.0, std::sqrt(den_v)) < 1e-4);
        REQUIRE(std::sqrt(num_j) / std::max(1.0, std::sqrt(den_j)) < 1e-4);
      }
    }
    for (int b = 0; b < toy().spec.shape_dim(); ++b) {
      BodyParams pp = p, pm = p;
      pp.beta(b) += h;
      pm.beta(b) -= h;
      const Pts fd = (forward(toy().spec, pp).vertices - forward(toy().spec, pm).vertices) / (2.0 * h);
      double num = 0.0, den = 0.0;
      for (Eigen::Index v = 0; v < fd.rows(); ++v) {
        const Vec3 an = fj.dv_dbeta.block<3, 1>(3 * v, b);
        num += (fd.row(v).transpose() - an).squaredNorm();
        den += an.squaredNorm();
      }
      REQUIRE(std::sqrt(num) / std::max(1.0, std::sqrt(den)) < 1e-4);
    }
  }
}

TEST_CASE("body height spans the extreme vertices") {
  Pts verts(3, 3);
  verts << 0.0, 0.0, 0.0, 1.7, 0.2, -0.1, 0.4, -0.5, 0.9;
  BodyMesh mesh;
  mesh.vertices = verts;
  REQUIRE(body_height(mesh, Axis::X) == Catch::Approx(1.7));
  REQUIRE(body_height(mesh, Axis::Y) == Catch::Approx(0.7));
  REQUIRE(body_height(mesh, Axis::Z) == Catch::Approx(1.0));
  BodyMesh empty;
  empty.vertices.resize(0, 3);
  REQUIRE_THROWS_AS(body_height(empty, Axis::X), Error);
}

TEST_CASE("theta_flat lays joints out in row order") {
  BodyParams p = BodyParams::rest(0, 3);
  p.theta << 1, 2, 3, 4, 5, 6, 7, 8, 9;
  const VecX flat = p.theta_flat();
  REQUIRE(flat.size() == 9);
  for (int i = 0; i < 9; ++i) REQUIRE(flat(i) == static_cast<double>(i + 1));
}

TEST_CASE("validate_spec rejects broken models") {
  const BodyModelSpec good = toy().spec;
  REQUIRE_NOTHROW(validate_spec(good));

  BodyModelSpec s = good;
  s.shape_basis.resize(3 * good.vertex_count() - 3, good.shape_dim());
  REQUIRE_THROWS_AS(validate_spec(s), Error);

  s = good;
  s.parent[0] = 0;
  REQUIRE_THROWS_AS(validate_spec(s), Error);

  s = good;
  s.parent[5] = 7;  // forward reference breaks topological order
  REQUIRE_THROWS_AS(validate_spec(s), Error);

  s = good;
  s.skin_weights(0, 0) += 0.5;
  REQUIRE_THROWS_AS(validate_spec(s), Error);

  s = good;
  s.joint_regressor.row(2) *= 2.0;
  REQUIRE_THROWS_AS(validate_spec(s), Error);

  s = good;
  s.faces[0][1] = good.vertex_count();
  REQUIRE_THROWS_AS(validate_spec(s), Error);
}

TEST_CASE("forward rejects mismatched parameter dims") {
  BodyParams p = BodyParams::rest(toy().spec.shape_dim() + 1, toy().spec.joint_count());
  REQUIRE_THROWS_AS(forward(toy().spec, p), Error);
  BodyParams q = BodyParams::rest(toy().spec.shape_dim(), toy().spec.joint_count() - 1);
  REQUIRE_THROWS_AS(forward(toy().spec, q), Error);
}
