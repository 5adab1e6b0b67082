// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "kinediff/geom3.hpp"

namespace kinediff {

// Rigid pose: p_world = R * p_local + t.
struct Pose {
  Mat3 R;
  Vec3 t;

  static Pose identity() { return {}; }
  Vec3 apply(const Vec3& p) const { return R * p + t; }
  Vec3 apply_inverse(const Vec3& p) const { return R.transposed() * (p - t); }
  Pose compose(const Pose& o) const { return {R * o.R, R * o.t + t}; }
  Pose inverse() const {
    const Mat3 rt = R.transposed();
    return {rt, rt * (-1.0 * t)};
  }
  bool is_valid(double tol = 1e-9) const {
    return R.orthonormality_defect() <= tol && std::fabs(R.det() - 1.0) <= tol &&
           t.finite();
  }
};

void validate_pose(const Pose& p, double tol = 1e-9);

// First two columns of a rotation; may be unnormalized before decoding.
struct Rot6D {
  Vec3 a1, a2;
};

enum class JointKind { revolute, prismatic };

std::string joint_kind_to_string(JointKind k);
JointKind joint_kind_from_string(const std::string& s);

// Single-DOF joint in the parent part's local frame. For revolute joints,
// state is radians about the axis through `location`; for prismatic joints,
// state is the displacement in meters along `direction` (location unused).
struct JointSpec {
  JointKind kind = JointKind::revolute;
  Vec3 location;        // pivot l (revolute only)
  Vec3 direction;       // unit axis d
  double state = 0.0;   // theta
  double limit_min = 0.0;
  double limit_max = 0.0;

  void validate() const;
  bool state_in_limits(double s) const {
    return s >= limit_min - 1e-12 && s <= limit_max + 1e-12;
  }
};

// Tree of K parts rooted at part 0; joints[i] connects parent[i+1] to part
// i+1. Joint frames live in the parent's local frame, which coincides with
// the canonical frame at zero states.
struct KinematicTree {
  int part_count = 0;
  std::vector<int> parts;
  std::vector<JointSpec> joints;
  std::vector<int> parent;  // parent[0] == -1

  void validate() const;
  std::string to_json_string() const;
  static KinematicTree from_json_string(const std::string& text);
};

// R = I cos(theta) + (1 - cos(theta)) d d^T + W sin(theta); W = skew(d).
// Throws DegeneracyError when ||d|| deviates from 1 by more than 1e-6 (no
// silent renormalization).
Mat3 rodrigues(const Vec3& d, double theta);

// Gram-Schmidt decode: b1 = a1/||a1||, b2 = normalize(a2 - (b1.a2) b1),
// b3 = b1 x b2.
Mat3 rot6d_to_matrix(const Rot6D& r);
Rot6D matrix_to_rot6d(const Mat3& R);

// Child pose from the parent pose and a joint. Revolute:
//   R_child = R_parent * rodrigues(d, theta)
//   t_child = t_parent + R_parent * (c - rodrigues(d, theta) * c),  c = location
// which reduces to the c - R_child c form when the parent is the identity.
// Prismatic: R_child = R_parent, t_child = t_parent + theta * (R_parent d).
Pose child_pose(const Pose& parent, const JointSpec& joint);

// Poses for all K parts, part 0 = base, children derived in topological
// order. Throws JointLimitError naming the joint when a state is outside
// its limits.
std::vector<Pose> forward_kinematics(const KinematicTree& tree, const Pose& base,
                                     const std::vector<double>& states);

// arccos(clamp((trace(Ra Rb^T) - 1)/2, -1, 1)) in degrees.
double rotation_geodesic_error_deg(const Mat3& ra, const Mat3& rb);

// |a - b| modulo 2*pi folded to [0, pi] (revolute state error convention).
double wrap_angle_error(double a, double b);

}  // namespace kinediff
