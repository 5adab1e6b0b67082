// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "kinediff/geometry.hpp"
#include "kinediff/kinematics.hpp"
#include "kinediff/rng.hpp"

namespace kinediff {

// Procedural stand-in for large articulated datasets. Canonical space: base
// part axis-aligned with its centroid at the origin, canonical joint states
// at mid-limits. Part meshes live in the part-local frame, which coincides
// with the canonical frame at zero states.

struct DimRange {
  double lo = 0.0, hi = 0.0;
  double sample(Rng& rng) const { return rng.uniform(lo, hi); }
};

struct CategorySpec {
  std::string name;
  int part_count = 2;
  std::vector<JointKind> joint_kinds;
  std::vector<std::pair<double, double>> joint_limits;
  // category-specific dimension ranges, interpreted by the builder
  std::vector<DimRange> dims;

  static CategorySpec laptop();
  static CategorySpec drawer();
  static CategorySpec chain3();
  static CategorySpec by_name(const std::string& name);

  std::string to_json_string() const;
  static CategorySpec from_json_string(const std::string& text);
};

struct Instance {
  KinematicTree tree;
  std::vector<TriMesh> part_meshes;  // part-local frames
  std::vector<double> canonical_states;
  std::string instance_id;
  std::uint64_t rng_seed = 0;

  // merged part-local mesh with part_of_face labels (zero-state layout)
  TriMesh canonical_mesh() const;
};

struct ObservationRecord {
  PointCloud partial;  // camera frame, labeled by part
  Pose gt_base_pose;   // camera frame
  std::vector<double> gt_states;
  Pose camera;  // camera-to-world
  double fov_deg = 40.0;
  int resolution = 96;
  double visibility = -1.0;
  std::string obs_id;
  std::uint64_t seed = 0;
};

struct SdfSamples {
  std::vector<Vec3> q;
  std::vector<double> sdf;
  std::vector<int> seg;
};

// Deterministic in (spec, seed).
Instance generate_instance(const CategorySpec& spec, std::uint64_t seed);

// Union mesh with part labels; each part transformed by forward kinematics.
TriMesh pose_instance(const Instance& inst, const std::vector<double>& states,
                      const Pose& base);

// Near-surface samples (surface + N(0, sigma) offsets, sigma = 0.01 m) plus
// uniform box samples. SDF by per-part nearest-triangle signed distance
// combined with min; seg = part of the nearest surface.
SdfSamples sample_sdf_training_set(const Instance& inst, const std::vector<double>& states,
                                   int n_surface, int n_uniform, Rng& rng);

// Signed distance of the posed instance at a point (min over parts).
double instance_sdf(const Instance& inst, const std::vector<Pose>& poses, const Vec3& p,
                    int* nearest_part = nullptr);

struct RenderConfig {
  int resolution = 96;
  double fov_deg = 40.0;
  double depth_noise_sigma = 0.0;
};

// Pinhole ray-cast depth render of the posed mesh; first-hit surfaces only,
// back-projected into the camera frame.
ObservationRecord render_partial(const Instance& inst, const std::vector<double>& states,
                                 const Pose& base, const Pose& camera,
                                 const RenderConfig& cfg, Rng& rng);

// |visible| / (|visible| + |hidden|) over camera-facing surface samples at
// matched density. Back-facing surface is excluded from the denominator, so
// a fully visible plate seen face-on scores near 1.
double visibility_ratio(const ObservationRecord& obs, const Instance& inst,
                        const std::vector<double>& states, const Pose& base,
                        int probe_samples = 20000);

// Occlusion bins {0-40, 40-80, 80-100}% of the visibility ratio.
int visibility_bucket(double ratio);

TriMesh make_box_mesh(const Vec3& half_extents, const Vec3& center);
TriMesh make_cylinder_mesh(double radius, double half_length, const Vec3& center,
                           int segments = 24);  // axis along x

}  // namespace kinediff
