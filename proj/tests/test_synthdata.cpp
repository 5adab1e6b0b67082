// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "kinediff/errors.hpp"
#include "kinediff/synthdata.hpp"

using namespace kinediff;

namespace {

constexpr double kPi = 3.14159265358979323846;

bool same_mesh(const TriMesh& a, const TriMesh& b) {
  if (a.vertices.size() != b.vertices.size() || a.faces.size() != b.faces.size())
    return false;
  for (std::size_t i = 0; i < a.vertices.size(); ++i)
    if ((a.vertices[i] - b.vertices[i]).norm() != 0.0) return false;
  return a.faces == b.faces;
}

Pose top_down_camera(double height) {
  // +z_cam forward looking straight down at the origin
  Pose cam;
  cam.R = rodrigues(Vec3(1, 0, 0), kPi);
  cam.t = Vec3(0, 0, height);
  return cam;
}

}  // namespace

TEST_CASE("generate_instance determinism") {
  const CategorySpec spec = CategorySpec::laptop();
  const Instance a = generate_instance(spec, 42);
  const Instance b = generate_instance(spec, 42);
  CHECK(a.instance_id == b.instance_id);
  REQUIRE(a.part_meshes.size() == b.part_meshes.size());
  for (std::size_t k = 0; k < a.part_meshes.size(); ++k)
    CHECK(same_mesh(a.part_meshes[k], b.part_meshes[k]));
  CHECK(a.canonical_states == b.canonical_states);

  const Instance c = generate_instance(spec, 43);
  CHECK(!same_mesh(a.part_meshes[0], c.part_meshes[0]));
}

TEST_CASE("laptop construction") {
  const Instance inst = generate_instance(CategorySpec::laptop(), 7);
  CHECK(inst.tree.part_count == 2);
  REQUIRE(inst.tree.joints.size() == 1);
  const JointSpec& j = inst.tree.joints[0];
  CHECK(j.kind == JointKind::revolute);
  CHECK(j.direction.norm() == doctest::Approx(1.0));
  // hinge perpendicular to both slab normals (z for each closed slab)
  CHECK(std::fabs(j.direction.dot(Vec3(0, 0, 1))) < 1e-12);
  CHECK(std::fabs(j.direction.dot(Vec3(0, 1, 0))) < 1e-12);
  // canonical state at mid-limits
  CHECK(inst.canonical_states[0] == doctest::Approx(kPi / 2));
  // base centroid at the origin
  auto [lo, hi] = mesh_bounds(inst.part_meshes[0]);
  CHECK((lo + hi).norm() < 1e-12);
}

TEST_CASE("drawer construction") {
  const Instance inst = generate_instance(CategorySpec::drawer(), 9);
  const JointSpec& j = inst.tree.joints[0];
  CHECK(j.kind == JointKind::prismatic);
  CHECK(j.direction.norm() == doctest::Approx(1.0));
  CHECK(std::fabs(j.direction.y) == doctest::Approx(1.0));  // slide axis
}

TEST_CASE("chain3 construction") {
  const Instance inst = generate_instance(CategorySpec::chain3(), 3);
  CHECK(inst.tree.part_count == 3);
  CHECK(inst.tree.parent == std::vector<int>{-1, 0, 1});
  CHECK(inst.part_meshes[1].faces.size() > 20);  // cylinder link
}

TEST_CASE("pose_instance") {
  const Instance inst = generate_instance(CategorySpec::laptop(), 11);

  // canonical states, identity base: parts at the FK layout
  const TriMesh posed = pose_instance(inst, inst.canonical_states, Pose::identity());
  const auto poses = forward_kinematics(inst.tree, Pose::identity(), inst.canonical_states);
  std::size_t v = 0;
  for (std::size_t k = 0; k < inst.part_meshes.size(); ++k)
    for (const auto& pv : inst.part_meshes[k].vertices)
      CHECK((posed.vertices[v++] - poses[k].apply(pv)).norm() < 1e-15);

  // lid vertices at theta = pi/2 match the direct pivot-rotation oracle
  const JointSpec& j = inst.tree.joints[0];
  const Mat3 r = rodrigues(j.direction, kPi / 2);
  const TriMesh open = pose_instance(inst, {kPi / 2}, Pose::identity());
  const std::size_t base_verts = inst.part_meshes[0].vertices.size();
  for (std::size_t i = 0; i < inst.part_meshes[1].vertices.size(); ++i) {
    const Vec3 canon = inst.part_meshes[1].vertices[i];
    const Vec3 expect = r * (canon - j.location) + j.location;
    CHECK((open.vertices[base_verts + i] - expect).norm() < 1e-9);
  }

  // pure base translation shifts every vertex by t
  const Pose shifted{Mat3::identity(), Vec3(0.1, -0.2, 0.3)};
  const TriMesh moved = pose_instance(inst, inst.canonical_states, shifted);
  for (std::size_t i = 0; i < posed.vertices.size(); ++i)
    CHECK((moved.vertices[i] - posed.vertices[i] - shifted.t).norm() < 1e-12);

  CHECK_THROWS_AS(pose_instance(inst, {17.0}, Pose::identity()), JointLimitError);
}

TEST_CASE("sdf training set") {
  const Instance inst = generate_instance(CategorySpec::laptop(), 5);
  const std::vector<double> states = inst.canonical_states;
  Rng rng(77);
  const SdfSamples s = sample_sdf_training_set(inst, states, 512, 256, rng);
  REQUIRE(s.q.size() == 768);

  const auto poses = forward_kinematics(inst.tree, Pose::identity(), states);

  // far-field: sdf close to the distance to the object's bounding box
  const Vec3 far(3.0, 3.0, 3.0);
  const TriMesh posed = pose_instance(inst, states, Pose::identity());
  auto [lo, hi] = mesh_bounds(posed);
  const Vec3 corner(hi.x, hi.y, hi.z);
  const double d = instance_sdf(inst, poses, far);
  CHECK(d > 0.0);
  CHECK(d == doctest::Approx((far - corner).norm()).epsilon(0.02));

  // exact surface samples have |sdf| below 1e-9
  Rng srng(3);
  const PointCloud surf = sample_surface(posed, 200, srng);
  for (std::size_t i = 0; i < surf.points.size(); ++i) {
    CHECK(std::fabs(instance_sdf(inst, poses, surf.points[i])) < 1e-9);
    int part = -1;
    instance_sdf(inst, poses, surf.points[i], &part);
    CHECK(part == surf.labels[i]);  // seg = part of the touched face
  }

  // sign agrees with the parity ray-cast oracle away from the surface
  int checked = 0, agree = 0;
  for (std::size_t i = 0; i < s.q.size(); ++i) {
    if (std::fabs(s.sdf[i]) < 1e-6) continue;
    ++checked;
    bool inside_union = false;
    for (std::size_t k = 0; k < inst.part_meshes.size(); ++k) {
      const Vec3 local = poses[k].apply_inverse(s.q[i]);
      if (point_inside_mesh_parity(inst.part_meshes[k], local)) inside_union = true;
    }
    if (inside_union == (s.sdf[i] < 0.0)) ++agree;
  }
  CHECK(checked > 500);
  CHECK(static_cast<double>(agree) / checked >= 0.999);

  CHECK_THROWS_AS(sample_sdf_training_set(inst, states, 0, 0, rng), ContractError);
}

TEST_CASE("render_partial geometry and self-occlusion") {
  const Instance inst = generate_instance(CategorySpec::laptop(), 21);
  const std::vector<double> closed = {0.0};
  const Pose cam = top_down_camera(0.9);
  RenderConfig cfg;
  cfg.resolution = 64;
  Rng rng(5);
  const ObservationRecord obs = render_partial(inst, closed, Pose::identity(), cam, cfg, rng);
  REQUIRE(obs.partial.points.size() > 50);
  CHECK(obs.partial.has_labels());

  // every observed point lies on the posed surface
  const auto poses = forward_kinematics(inst.tree, Pose::identity(), closed);
  const Pose view = cam.inverse();
  for (const auto& p : obs.partial.points) {
    const Vec3 world = cam.apply(p);  // record points are camera-frame
    CHECK(std::fabs(instance_sdf(inst, poses, world)) < 1e-9);
  }

  // closed lid hides the keyboard: no base-labeled point on the base top
  // face inside the lid footprint
  auto [blo, bhi] = mesh_bounds(inst.part_meshes[0]);
  auto [llo, lhi] = mesh_bounds(inst.part_meshes[1]);
  int keyboard_hits = 0;
  for (std::size_t i = 0; i < obs.partial.points.size(); ++i) {
    if (obs.partial.labels[i] != 0) continue;
    const Vec3 w = cam.apply(obs.partial.points[i]);
    if (std::fabs(w.z - bhi.z) < 1e-9 && w.x > llo.x + 1e-6 && w.x < lhi.x - 1e-6 &&
        w.y > llo.y + 1e-6 && w.y < lhi.y - 1e-6)
      ++keyboard_hits;
  }
  CHECK(keyboard_hits == 0);
  CHECK(view.compose(Pose::identity()).t.z == doctest::Approx(obs.gt_base_pose.t.z));

  // doubling the resolution roughly quadruples the point count
  RenderConfig cfg2 = cfg;
  cfg2.resolution = 128;
  Rng rng2(5);
  const ObservationRecord obs2 = render_partial(inst, closed, Pose::identity(), cam, cfg2, rng2);
  const double factor = static_cast<double>(obs2.partial.points.size()) /
                        static_cast<double>(obs.partial.points.size());
  CHECK(factor > 3.6);
  CHECK(factor < 4.4);

  // object behind the camera: empty view error
  Pose behind;
  behind.R = Mat3::identity();     // looking along +z
  behind.t = Vec3(0, 0, 2.0);      // object sits behind the image plane
  Rng rng3(5);
  CHECK_THROWS_AS(render_partial(inst, closed, Pose::identity(), behind, cfg, rng3),
                  ContractError);
}

TEST_CASE("visibility ratio") {
  // fully visible flat plate face-on scores near 1
  Instance plate;
  plate.tree.part_count = 1;
  plate.tree.parts = {0};
  plate.tree.parent = {-1};
  plate.part_meshes.push_back(make_box_mesh(Vec3(0.12, 0.09, 0.004), Vec3(0, 0, 0)));
  plate.instance_id = "plate_0";
  const Pose cam = top_down_camera(0.8);
  RenderConfig cfg;
  Rng rng(9);
  ObservationRecord obs = render_partial(plate, {}, Pose::identity(), cam, cfg, rng);
  const double ratio = visibility_ratio(obs, plate, {}, Pose::identity(), 4000);
  CHECK(ratio > 0.90);

  // open laptop seen from the side self-occludes more than from above
  const Instance laptop = generate_instance(CategorySpec::laptop(), 2);
  Rng r2(3);
  ObservationRecord top = render_partial(laptop, {kPi / 2}, Pose::identity(), cam, cfg, r2);
  const double top_ratio = visibility_ratio(top, laptop, {kPi / 2}, Pose::identity(), 4000);
  CHECK(top_ratio > 0.3);
  CHECK(top_ratio <= 1.0);

  CHECK(visibility_bucket(0.2) == 0);
  CHECK(visibility_bucket(0.5) == 1);
  CHECK(visibility_bucket(0.95) == 2);
}
