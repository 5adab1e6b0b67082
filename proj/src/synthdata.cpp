// SPDX-License-Identifier: Apache-2.0
#include "kinediff/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <nlohmann/json.hpp>

#include "kinediff/errors.hpp"
#include "kinediff/parallel.hpp"

namespace kinediff {

using nlohmann::json;

namespace {
constexpr double kPi = 3.14159265358979323846;
}

TriMesh make_box_mesh(const Vec3& half, const Vec3& center) {
  TriMesh m;
  for (int i = 0; i < 8; ++i)
    m.vertices.push_back(center + Vec3(i & 1 ? half.x : -half.x, i & 2 ? half.y : -half.y,
                                       i & 4 ? half.z : -half.z));
  const int f[12][3] = {{0, 2, 1}, {1, 2, 3}, {4, 5, 6}, {5, 7, 6},
                        {0, 1, 4}, {1, 5, 4}, {2, 6, 3}, {3, 6, 7},
                        {0, 4, 2}, {2, 4, 6}, {1, 3, 5}, {3, 7, 5}};
  for (const auto& t : f) m.faces.push_back({t[0], t[1], t[2]});
  return m;
}

TriMesh make_cylinder_mesh(double radius, double half_length, const Vec3& center,
                           int segments) {
  TriMesh m;
  // rings at x = +-half_length, axis along x
  for (int side = 0; side < 2; ++side) {
    const double x = side == 0 ? -half_length : half_length;
    for (int s = 0; s < segments; ++s) {
      const double a = 2.0 * kPi * s / segments;
      m.vertices.push_back(center + Vec3(x, radius * std::cos(a), radius * std::sin(a)));
    }
  }
  const int cap0 = static_cast<int>(m.vertices.size());
  m.vertices.push_back(center + Vec3(-half_length, 0, 0));
  const int cap1 = cap0 + 1;
  m.vertices.push_back(center + Vec3(half_length, 0, 0));
  for (int s = 0; s < segments; ++s) {
    const int sn = (s + 1) % segments;
    // lateral quads, outward
    m.faces.push_back({s, segments + s, segments + sn});
    m.faces.push_back({s, segments + sn, sn});
    // caps
    m.faces.push_back({cap0, sn, s});
    m.faces.push_back({cap1, segments + s, segments + sn});
  }
  return m;
}

CategorySpec CategorySpec::laptop() {
  CategorySpec s;
  s.name = "laptop";
  s.part_count = 2;
  s.joint_kinds = {JointKind::revolute};
  s.joint_limits = {{0.0, kPi}};
  // base hx, hy, hz; lid thickness
  s.dims = {{0.12, 0.17}, {0.09, 0.13}, {0.006, 0.012}, {0.004, 0.008}};
  return s;
}

CategorySpec CategorySpec::drawer() {
  CategorySpec s;
  s.name = "drawer";
  s.part_count = 2;
  s.joint_kinds = {JointKind::prismatic};
  s.joint_limits = {{0.0, 0.15}};
  // cabinet hx, hy, hz
  s.dims = {{0.12, 0.18}, {0.12, 0.18}, {0.10, 0.16}};
  return s;
}

CategorySpec CategorySpec::chain3() {
  CategorySpec s;
  s.name = "chain3";
  s.part_count = 3;
  s.joint_kinds = {JointKind::revolute, JointKind::revolute};
  s.joint_limits = {{-kPi / 2, kPi / 2}, {-kPi / 2, kPi / 2}};
  // base half-length, link radius, tip half-length
  s.dims = {{0.08, 0.12}, {0.015, 0.025}, {0.05, 0.09}};
  return s;
}

CategorySpec CategorySpec::by_name(const std::string& name) {
  if (name == "laptop") return laptop();
  if (name == "drawer") return drawer();
  if (name == "chain3") return chain3();
  throw ContractError("unknown category: " + name);
}

std::string CategorySpec::to_json_string() const {
  json j;
  j["name"] = name;
  j["K"] = part_count;
  json kinds = json::array(), limits = json::array(), dims_json = json::array();
  for (auto k : joint_kinds) kinds.push_back(joint_kind_to_string(k));
  for (auto [lo, hi] : joint_limits) limits.push_back({lo, hi});
  for (auto d : dims) dims_json.push_back({d.lo, d.hi});
  j["joint_kinds"] = kinds;
  j["joint_limits"] = limits;
  j["dims"] = dims_json;
  return j.dump(2);
}

CategorySpec CategorySpec::from_json_string(const std::string& text) {
  const json j = json::parse(text);
  CategorySpec s = by_name(j.at("name").get<std::string>());
  // ranges/limits may have been tweaked relative to the builder defaults
  s.part_count = j.at("K").get<int>();
  s.joint_limits.clear();
  for (const auto& l : j.at("joint_limits"))
    s.joint_limits.emplace_back(l[0].get<double>(), l[1].get<double>());
  s.dims.clear();
  for (const auto& d : j.at("dims")) s.dims.push_back({d[0].get<double>(), d[1].get<double>()});
  return s;
}

namespace {

Instance build_laptop(const CategorySpec& spec, Rng& rng) {
  Instance inst;
  const double hx = spec.dims[0].sample(rng);
  const double hy = spec.dims[1].sample(rng);
  const double hz = spec.dims[2].sample(rng);
  const double lid_hz = spec.dims[3].sample(rng);
  const double lid_hx = hx * rng.uniform(0.96, 1.0);
  const double lid_hy = hy * rng.uniform(0.90, 1.0);
  const double overlap = 0.002;

  inst.part_meshes.push_back(make_box_mesh({hx, hy, hz}, {0, 0, 0}));
  // closed lid sits on the base, aligned to the back edge y = +hy
  inst.part_meshes.push_back(
      make_box_mesh({lid_hx, lid_hy, lid_hz}, {0, hy - lid_hy, hz - overlap + lid_hz}));

  KinematicTree t;
  t.part_count = 2;
  t.parts = {0, 1};
  t.parent = {-1, 0};
  JointSpec j;
  j.kind = JointKind::revolute;
  // hinge along the shared back edge, perpendicular to both slab normals
  j.location = Vec3(0, hy, hz);
  j.direction = Vec3(-1, 0, 0);
  j.limit_min = spec.joint_limits[0].first;
  j.limit_max = spec.joint_limits[0].second;
  j.state = 0.5 * (j.limit_min + j.limit_max);
  t.joints = {j};
  inst.tree = t;
  inst.canonical_states = {j.state};
  return inst;
}

Instance build_drawer(const CategorySpec& spec, Rng& rng) {
  Instance inst;
  const double hx = spec.dims[0].sample(rng);
  const double hy = spec.dims[1].sample(rng);
  const double hz = spec.dims[2].sample(rng);

  inst.part_meshes.push_back(make_box_mesh({hx, hy, hz}, {0, 0, 0}));
  // drawer box nested in the upper front, front face slightly proud
  const Vec3 drawer_half(0.8 * hx, 0.9 * hy, 0.3 * hz);
  const Vec3 drawer_center(0, -(hy - 0.9 * hy) - 0.005, 0.5 * hz);
  inst.part_meshes.push_back(make_box_mesh(drawer_half, drawer_center));

  KinematicTree t;
  t.part_count = 2;
  t.parts = {0, 1};
  t.parent = {-1, 0};
  JointSpec j;
  j.kind = JointKind::prismatic;
  j.direction = Vec3(0, -1, 0);  // slides out the front
  j.limit_min = spec.joint_limits[0].first;
  j.limit_max = spec.joint_limits[0].second;
  j.state = 0.5 * (j.limit_min + j.limit_max);
  t.joints = {j};
  inst.tree = t;
  inst.canonical_states = {j.state};
  return inst;
}

Instance build_chain3(const CategorySpec& spec, Rng& rng) {
  Instance inst;
  const double base_hl = spec.dims[0].sample(rng);
  const double link_r = spec.dims[1].sample(rng);
  const double tip_hl = spec.dims[2].sample(rng);
  const double link_hl = 0.08;

  inst.part_meshes.push_back(make_box_mesh({base_hl, 0.04, 0.02}, {0, 0, 0}));
  const double link_c = base_hl + link_hl;
  inst.part_meshes.push_back(make_cylinder_mesh(link_r, link_hl, {link_c, 0, 0}));
  const double tip_c = base_hl + 2 * link_hl + tip_hl;
  inst.part_meshes.push_back(make_box_mesh({tip_hl, 0.03, 0.015}, {tip_c, 0, 0}));

  KinematicTree t;
  t.part_count = 3;
  t.parts = {0, 1, 2};
  t.parent = {-1, 0, 1};
  JointSpec j0;
  j0.kind = JointKind::revolute;
  j0.location = Vec3(base_hl, 0, 0);
  j0.direction = Vec3(0, 0, 1);
  j0.limit_min = spec.joint_limits[0].first;
  j0.limit_max = spec.joint_limits[0].second;
  j0.state = 0.5 * (j0.limit_min + j0.limit_max);
  JointSpec j1 = j0;
  j1.location = Vec3(base_hl + 2 * link_hl, 0, 0);
  j1.limit_min = spec.joint_limits[1].first;
  j1.limit_max = spec.joint_limits[1].second;
  j1.state = 0.5 * (j1.limit_min + j1.limit_max);
  t.joints = {j0, j1};
  inst.tree = t;
  inst.canonical_states = {j0.state, j1.state};
  return inst;
}

}  // namespace

Instance generate_instance(const CategorySpec& spec, std::uint64_t seed) {
  Rng rng = Rng(seed).fork("instance");
  Instance inst;
  if (spec.name == "laptop")
    inst = build_laptop(spec, rng);
  else if (spec.name == "drawer")
    inst = build_drawer(spec, rng);
  else if (spec.name == "chain3")
    inst = build_chain3(spec, rng);
  else
    throw ContractError("generate_instance: unknown category " + spec.name);
  inst.rng_seed = seed;
  inst.instance_id = spec.name + "_" + std::to_string(seed);
  inst.tree.validate();
  return inst;
}

TriMesh Instance::canonical_mesh() const {
  TriMesh merged;
  for (std::size_t k = 0; k < part_meshes.size(); ++k)
    merged.append(part_meshes[k], static_cast<int>(k));
  return merged;
}

TriMesh pose_instance(const Instance& inst, const std::vector<double>& states,
                      const Pose& base) {
  const auto poses = forward_kinematics(inst.tree, base, states);
  TriMesh merged;
  for (std::size_t k = 0; k < inst.part_meshes.size(); ++k)
    merged.append(transform_mesh(inst.part_meshes[k], poses[k]), static_cast<int>(k));
  return merged;
}

double instance_sdf(const Instance& inst, const std::vector<Pose>& poses, const Vec3& p,
                    int* nearest_part) {
  double best = std::numeric_limits<double>::max();
  int best_part = 0;
  for (std::size_t k = 0; k < inst.part_meshes.size(); ++k) {
    // rigid transform preserves distances: evaluate in the part frame
    const Vec3 local = poses[k].apply_inverse(p);
    const double d = mesh_signed_distance(inst.part_meshes[k], local);
    if (d < best) {
      best = d;
      best_part = static_cast<int>(k);
    }
  }
  if (nearest_part) *nearest_part = best_part;
  return best;
}

SdfSamples sample_sdf_training_set(const Instance& inst, const std::vector<double>& states,
                                   int n_surface, int n_uniform, Rng& rng) {
  if (n_surface < 0 || n_uniform < 0 || n_surface + n_uniform < 1)
    throw ContractError("sample_sdf_training_set: need at least one sample");
  const auto poses = forward_kinematics(inst.tree, Pose::identity(), states);
  const TriMesh posed = pose_instance(inst, states, Pose::identity());

  SdfSamples out;
  out.q.reserve(n_surface + n_uniform);
  if (n_surface > 0) {
    Rng surf_rng = rng.fork("surface");
    PointCloud surf = sample_surface(posed, n_surface, surf_rng);
    for (const auto& p : surf.points) {
      const Vec3 offset(surf_rng.normal() * 0.01, surf_rng.normal() * 0.01,
                        surf_rng.normal() * 0.01);
      out.q.push_back(p + offset);
    }
  }
  if (n_uniform > 0) {
    Rng box_rng = rng.fork("uniform");
    auto [lo, hi] = mesh_bounds(posed, 0.08);
    for (int i = 0; i < n_uniform; ++i)
      out.q.emplace_back(box_rng.uniform(lo.x, hi.x), box_rng.uniform(lo.y, hi.y),
                         box_rng.uniform(lo.z, hi.z));
  }

  out.sdf.resize(out.q.size());
  out.seg.resize(out.q.size());
  parallel_for(0, static_cast<std::int64_t>(out.q.size()), [&](std::int64_t i) {
    int part = 0;
    out.sdf[i] = instance_sdf(inst, poses, out.q[i], &part);
    out.seg[i] = part;
  }, 16);
  return out;
}

namespace {

struct RayHit {
  double t = std::numeric_limits<double>::max();
  int face = -1;
};

RayHit raycast(const TriMesh& mesh, const Vec3& origin, const Vec3& dir) {
  RayHit hit;
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    const auto& tri = mesh.faces[f];
    const Vec3& a = mesh.vertices[tri[0]];
    const Vec3 e1 = mesh.vertices[tri[1]] - a;
    const Vec3 e2 = mesh.vertices[tri[2]] - a;
    const Vec3 pv = dir.cross(e2);
    const double det = e1.dot(pv);
    if (std::fabs(det) < 1e-14) continue;
    const double inv = 1.0 / det;
    const Vec3 tv = origin - a;
    const double u = tv.dot(pv) * inv;
    if (u < 0.0 || u > 1.0) continue;
    const Vec3 qv = tv.cross(e1);
    const double v = dir.dot(qv) * inv;
    if (v < 0.0 || u + v > 1.0) continue;
    const double t = e2.dot(qv) * inv;
    if (t > 1e-9 && t < hit.t) {
      hit.t = t;
      hit.face = static_cast<int>(f);
    }
  }
  return hit;
}

}  // namespace

ObservationRecord render_partial(const Instance& inst, const std::vector<double>& states,
                                 const Pose& base, const Pose& camera,
                                 const RenderConfig& cfg, Rng& rng) {
  if (cfg.resolution < 2) throw ContractError("render_partial: resolution too small");
  const TriMesh world = pose_instance(inst, states, base);
  // camera frame: +z forward, x right, y down; camera pose maps cam->world
  const Pose view = camera.inverse();
  TriMesh cam_mesh = transform_mesh(world, view);

  ObservationRecord rec;
  rec.gt_base_pose = view.compose(base);
  rec.gt_states = states;
  rec.camera = camera;
  rec.fov_deg = cfg.fov_deg;
  rec.resolution = cfg.resolution;

  const double half_tan = std::tan(0.5 * cfg.fov_deg * kPi / 180.0);
  const int res = cfg.resolution;
  std::vector<Vec3> hits(static_cast<std::size_t>(res) * res);
  std::vector<int> hit_part(static_cast<std::size_t>(res) * res, -1);
  parallel_for(0, static_cast<std::int64_t>(res) * res, [&](std::int64_t px) {
    const int i = static_cast<int>(px / res);
    const int jcol = static_cast<int>(px % res);
    const double ndc_x = ((jcol + 0.5) / res - 0.5) * 2.0;
    const double ndc_y = ((i + 0.5) / res - 0.5) * 2.0;
    const Vec3 dir = Vec3(ndc_x * half_tan, ndc_y * half_tan, 1.0).normalized();
    const RayHit hit = raycast(cam_mesh, Vec3(0, 0, 0), dir);
    if (hit.face >= 0) {
      hits[px] = dir * hit.t;
      hit_part[px] = cam_mesh.part_of_face[hit.face];
    }
  }, 64);

  Rng noise_rng = rng.fork("depth_noise");
  for (std::size_t px = 0; px < hits.size(); ++px) {
    if (hit_part[px] < 0) continue;
    Vec3 p = hits[px];
    if (cfg.depth_noise_sigma > 0.0)
      p += p.normalized() * (noise_rng.normal() * cfg.depth_noise_sigma);
    rec.partial.points.push_back(p);
    rec.partial.labels.push_back(hit_part[px]);
  }
  if (rec.partial.points.empty())
    throw ContractError("render_partial: empty view, re-sample the camera");
  rec.seed = rng.seed();
  return rec;
}

double visibility_ratio(const ObservationRecord& obs, const Instance& inst,
                        const std::vector<double>& states, const Pose& base,
                        int probe_samples) {
  if (obs.partial.points.empty()) throw ContractError("visibility_ratio: empty observation");
  // everything in the camera frame of the record
  const TriMesh cam_mesh =
      transform_mesh(pose_instance(inst, states, base), obs.camera.inverse());
  Rng rng = Rng(obs.seed).fork("visibility");
  const PointCloud probes = sample_surface(cam_mesh, probe_samples, rng);

  const double half_tan = std::tan(0.5 * obs.fov_deg * kPi / 180.0);
  // 0 = excluded (back-facing), 1 = visible, 2 = hidden camera-facing
  std::vector<int> flags(probes.points.size(), 0);
  parallel_for(0, static_cast<std::int64_t>(probes.points.size()), [&](std::int64_t i) {
    const Vec3& p = probes.points[i];
    // facing test against the sample's own surface normal
    int face = -1;
    mesh_signed_distance(cam_mesh, p, &face);
    if (cam_mesh.face_normal(static_cast<std::size_t>(face)).dot(p) >= 0.0) return;
    if (p.z <= 1e-6) {  // behind the image plane: facing but unseen
      flags[i] = 2;
      return;
    }
    const bool in_frustum =
        std::fabs(p.x / p.z) <= half_tan && std::fabs(p.y / p.z) <= half_tan;
    if (!in_frustum) {
      flags[i] = 2;
      return;
    }
    const Vec3 dir = p.normalized();
    const RayHit hit = raycast(cam_mesh, Vec3(0, 0, 0), dir);
    flags[i] = (hit.face >= 0 && hit.t >= p.norm() - 1e-6) ? 1 : 2;
  }, 64);

  std::int64_t visible = 0, hidden = 0;
  for (int f : flags) {
    if (f == 1) ++visible;
    else if (f == 2) ++hidden;
  }
  if (visible + hidden == 0) return 0.0;
  return static_cast<double>(visible) / static_cast<double>(visible + hidden);
}

int visibility_bucket(double ratio) {
  if (ratio < 0.4) return 0;
  if (ratio < 0.8) return 1;
  return 2;
}

}  // namespace kinediff
