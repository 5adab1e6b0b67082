// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "kinediff/errors.hpp"
#include "kinediff/kinematics.hpp"
#include "kinediff/rng.hpp"

using namespace kinediff;

namespace {

constexpr double kPi = 3.14159265358979323846;

Vec3 random_unit(Rng& rng) {
  for (;;) {
    Vec3 v(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
    const double n = v.norm();
    if (n > 1e-3) return v / n;
  }
}

Mat3 random_rotation(Rng& rng) {
  return rodrigues(random_unit(rng), rng.uniform(-kPi, kPi));
}

// 30-term series for exp(theta * skew(d)); independent oracle.
Mat3 expm_series(const Vec3& d, double theta) {
  const Mat3 a = Mat3::skew(d) * theta;
  Mat3 term = Mat3::identity();
  Mat3 acc = Mat3::identity();
  for (int k = 1; k <= 30; ++k) {
    term = term * a * (1.0 / k);
    acc = acc + term;
  }
  return acc;
}

double mat_max_abs_diff(const Mat3& a, const Mat3& b) {
  double worst = 0.0;
  for (int i = 0; i < 9; ++i) worst = std::max(worst, std::fabs(a.m[i] - b.m[i]));
  return worst;
}

}  // namespace

TEST_CASE("rodrigues trivial cases") {
  const Mat3 r0 = rodrigues(Vec3(0, 0, 1), 0.0);
  CHECK(mat_max_abs_diff(r0, Mat3::identity()) == doctest::Approx(0.0));

  const Mat3 q = rodrigues(Vec3(0, 0, 1), kPi / 2);
  const Mat3 expect = Mat3::from_rows({0, -1, 0}, {1, 0, 0}, {0, 0, 1});
  CHECK(mat_max_abs_diff(q, expect) < 1e-15);

  CHECK_THROWS_AS(rodrigues(Vec3(0, 0, 2), 0.3), DegeneracyError);
}

TEST_CASE("rodrigues matches the matrix exponential series oracle") {
  Rng rng(101);
  for (int trial = 0; trial < 50; ++trial) {
    const Vec3 d = random_unit(rng);
    const double theta = rng.uniform(-kPi, kPi);
    CHECK(mat_max_abs_diff(rodrigues(d, theta), expm_series(d, theta)) < 1e-9);
  }
}

TEST_CASE("rodrigues axis additivity") {
  Rng rng(5);
  for (int trial = 0; trial < 30; ++trial) {
    const Vec3 d = random_unit(rng);
    const double t1 = rng.uniform(-2, 2), t2 = rng.uniform(-2, 2);
    const Mat3 lhs = rodrigues(d, t1) * rodrigues(d, t2);
    const Mat3 rhs = rodrigues(d, t1 + t2);
    CHECK(mat_max_abs_diff(lhs, rhs) < 1e-9);
  }
}

TEST_CASE("rot6d decode basics") {
  const Mat3 i = rot6d_to_matrix({Vec3(1, 0, 0), Vec3(0, 1, 0)});
  CHECK(mat_max_abs_diff(i, Mat3::identity()) == doctest::Approx(0.0));

  // scale invariance of Gram-Schmidt
  const Mat3 scaled = rot6d_to_matrix({Vec3(7, 0, 0), Vec3(0, 1, 0)});
  CHECK(mat_max_abs_diff(scaled, Mat3::identity()) < 1e-15);

  CHECK_THROWS_AS(rot6d_to_matrix({Vec3(0, 0, 0), Vec3(0, 1, 0)}), DegeneracyError);
  CHECK_THROWS_AS(rot6d_to_matrix({Vec3(1, 0, 0), Vec3(2, 0, 0)}), DegeneracyError);
}

TEST_CASE("matrix_to_rot6d reads columns and round trips") {
  const Rot6D ri = matrix_to_rot6d(Mat3::identity());
  CHECK(ri.a1.x == 1.0);
  CHECK(ri.a2.y == 1.0);

  const Mat3 q = rodrigues(Vec3(0, 0, 1), kPi / 2);
  const Rot6D rq = matrix_to_rot6d(q);
  CHECK(rq.a1.x == doctest::Approx(0.0));
  CHECK(rq.a1.y == doctest::Approx(1.0));
  CHECK(rq.a2.x == doctest::Approx(-1.0));
  CHECK(rq.a2.y == doctest::Approx(0.0));

  Rng rng(202);
  for (int trial = 0; trial < 100; ++trial) {
    const Mat3 r = random_rotation(rng);
    const Mat3 back = rot6d_to_matrix(matrix_to_rot6d(r));
    CHECK(mat_max_abs_diff(back, r) < 1e-12);
  }

  Mat3 not_rot = Mat3::identity();
  not_rot(0, 0) = 2.0;
  CHECK_THROWS_AS(matrix_to_rot6d(not_rot), ContractError);
}

TEST_CASE("child_pose revolute") {
  JointSpec j;
  j.kind = JointKind::revolute;
  j.location = Vec3(1, 0, 0);
  j.direction = Vec3(0, 0, 1);
  j.limit_min = -kPi;
  j.limit_max = kPi;

  // zero articulation: child equals base for any base
  Rng rng(17);
  j.state = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    Pose base{random_rotation(rng), Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1))};
    const Pose child = child_pose(base, j);
    CHECK(mat_max_abs_diff(child.R, base.R) < 1e-15);
    CHECK((child.t - base.t).norm() < 1e-15);
  }

  // quarter turn about z through (1,0,0) from the identity base
  j.state = kPi / 2;
  const Pose child = child_pose(Pose::identity(), j);
  const Mat3 expect = rodrigues(Vec3(0, 0, 1), kPi / 2);
  CHECK(mat_max_abs_diff(child.R, expect) < 1e-15);
  CHECK(child.t.x == doctest::Approx(1.0));
  CHECK(child.t.y == doctest::Approx(-1.0));
  CHECK(child.t.z == doctest::Approx(0.0));
}

TEST_CASE("child_pose revolute fixes the pivot line for identity base") {
  Rng rng(303);
  for (int trial = 0; trial < 30; ++trial) {
    JointSpec j;
    j.kind = JointKind::revolute;
    j.location = Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
    j.direction = random_unit(rng);
    j.limit_min = -kPi;
    j.limit_max = kPi;
    j.state = rng.uniform(-kPi, kPi);
    const Pose child = child_pose(Pose::identity(), j);
    for (double s : {-1.3, 0.0, 0.7}) {
      const Vec3 p = j.location + j.direction * s;
      CHECK((child.apply(p) - p).norm() < 1e-9);
    }
    validate_pose(child);
  }
}

TEST_CASE("child_pose prismatic") {
  JointSpec j;
  j.kind = JointKind::prismatic;
  j.direction = Vec3(1, 0, 0);
  j.limit_min = 0.0;
  j.limit_max = 1.0;
  j.state = 0.3;
  const Pose child = child_pose(Pose::identity(), j);
  CHECK(mat_max_abs_diff(child.R, Mat3::identity()) == doctest::Approx(0.0));
  CHECK(child.t.x == doctest::Approx(0.3));
  CHECK(child.t.y == doctest::Approx(0.0));

  // orientation preserved under a rotated base
  Rng rng(11);
  const Pose base{random_rotation(rng), Vec3(0.1, 0.2, 0.3)};
  const Pose c2 = child_pose(base, j);
  CHECK(mat_max_abs_diff(c2.R, base.R) == doctest::Approx(0.0));
  CHECK((c2.t - (base.t + 0.3 * (base.R * j.direction))).norm() < 1e-15);
}

namespace {

KinematicTree two_joint_chain(const Vec3& pivot, const Vec3& axis) {
  KinematicTree t;
  t.part_count = 3;
  t.parts = {0, 1, 2};
  t.parent = {-1, 0, 1};
  JointSpec j;
  j.kind = JointKind::revolute;
  j.location = pivot;
  j.direction = axis;
  j.limit_min = -kPi;
  j.limit_max = kPi;
  t.joints = {j, j};
  return t;
}

}  // namespace

TEST_CASE("forward_kinematics") {
  // all states zero: every part shares the base pose
  KinematicTree chain = two_joint_chain(Vec3(0.5, 0, 0), Vec3(0, 0, 1));
  Rng rng(77);
  const Pose base{random_rotation(rng), Vec3(0.3, -0.2, 0.1)};
  auto poses = forward_kinematics(chain, base, {0.0, 0.0});
  REQUIRE(poses.size() == 3);
  for (const auto& p : poses) {
    CHECK(mat_max_abs_diff(p.R, base.R) < 1e-15);
    CHECK((p.t - base.t).norm() < 1e-15);
  }

  // two revolute joints about the same axis through the same pivot:
  // terminal rotation is rodrigues(d, t1 + t2) * R_base ... composed on the right
  const double t1 = 0.4, t2 = -0.9;
  poses = forward_kinematics(chain, base, {t1, t2});
  const Mat3 expect = base.R * rodrigues(Vec3(0, 0, 1), t1 + t2);
  CHECK(mat_max_abs_diff(poses[2].R, expect) < 1e-9);
  for (const auto& p : poses) validate_pose(p, 1e-9);

  // limit violation names the joint
  chain.joints[1].limit_min = -0.1;
  chain.joints[1].limit_max = 0.1;
  CHECK_THROWS_AS(forward_kinematics(chain, base, {0.0, 0.5}), JointLimitError);
  try {
    forward_kinematics(chain, base, {0.0, 0.5});
  } catch (const JointLimitError& e) {
    CHECK(std::string(e.what()).find("joint 1") != std::string::npos);
  }
}

TEST_CASE("K=2 laptop-style joint matches the child_pose example") {
  KinematicTree t;
  t.part_count = 2;
  t.parts = {0, 1};
  t.parent = {-1, 0};
  JointSpec j;
  j.kind = JointKind::revolute;
  j.location = Vec3(1, 0, 0);
  j.direction = Vec3(0, 0, 1);
  j.limit_min = 0;
  j.limit_max = kPi;
  t.joints = {j};
  auto poses = forward_kinematics(t, Pose::identity(), {kPi / 2});
  CHECK(poses[1].t.x == doctest::Approx(1.0));
  CHECK(poses[1].t.y == doctest::Approx(-1.0));
}

TEST_CASE("rotation geodesic error") {
  const Mat3 r = rodrigues(Vec3(0, 0, 1), 0.7);
  CHECK(rotation_geodesic_error_deg(r, r) == doctest::Approx(0.0));
  CHECK(rotation_geodesic_error_deg(Mat3::identity(), rodrigues(Vec3(0, 0, 1), kPi / 2)) ==
        doctest::Approx(90.0));

  // matches the axis-angle oracle on random pairs, and is symmetric
  Rng rng(91);
  for (int trial = 0; trial < 30; ++trial) {
    const Mat3 a = rodrigues(random_unit(rng), rng.uniform(-kPi, kPi));
    const Vec3 axis = random_unit(rng);
    const double angle = rng.uniform(0.0, kPi);
    const Mat3 b = a * rodrigues(axis, angle);
    CHECK(rotation_geodesic_error_deg(a, b) ==
          doctest::Approx(angle * 180.0 / kPi).epsilon(1e-6));
    CHECK(rotation_geodesic_error_deg(a, b) == doctest::Approx(rotation_geodesic_error_deg(b, a)));
  }
}

TEST_CASE("kinematic tree JSON round trip") {
  KinematicTree t = two_joint_chain(Vec3(0.25, 0.5, 0), Vec3(0, 1, 0));
  const std::string text = t.to_json_string();
  const KinematicTree back = KinematicTree::from_json_string(text);
  CHECK(back.part_count == 3);
  CHECK(back.parent == t.parent);
  REQUIRE(back.joints.size() == 2);
  CHECK(back.joints[0].kind == JointKind::revolute);
  CHECK((back.joints[0].location - t.joints[0].location).norm() < 1e-15);
  CHECK((back.joints[0].direction - t.joints[0].direction).norm() < 1e-15);
  CHECK(back.joints[0].limit_min == t.joints[0].limit_min);

  // prismatic entries omit the location field
  KinematicTree d;
  d.part_count = 2;
  d.parts = {0, 1};
  d.parent = {-1, 0};
  JointSpec pj;
  pj.kind = JointKind::prismatic;
  pj.direction = Vec3(0, 1, 0);
  pj.limit_min = 0;
  pj.limit_max = 0.2;
  pj.state = 0.1;
  d.joints = {pj};
  const std::string dtext = d.to_json_string();
  CHECK(dtext.find("\"l\"") == std::string::npos);
  const KinematicTree dback = KinematicTree::from_json_string(dtext);
  CHECK(dback.joints[0].kind == JointKind::prismatic);
}

TEST_CASE("wrap_angle_error folds to [0, pi]") {
  CHECK(wrap_angle_error(0.1, 0.1) == doctest::Approx(0.0));
  CHECK(wrap_angle_error(0.0, 2 * kPi) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(wrap_angle_error(0.0, kPi + 0.5) == doctest::Approx(kPi - 0.5));
  CHECK(wrap_angle_error(-0.2, 0.2) == doctest::Approx(0.4));
}
