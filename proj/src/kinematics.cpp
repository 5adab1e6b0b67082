// SPDX-License-Identifier: Apache-2.0
#include "kinediff/kinematics.hpp"

#include <cmath>

#include <nlohmann/json.hpp>

#include "kinediff/errors.hpp"

namespace kinediff {

using nlohmann::json;

void validate_pose(const Pose& p, double tol) {
  if (!p.t.finite()) throw ContractError("Pose: non-finite translation");
  const double defect = p.R.orthonormality_defect();
  if (defect > tol)
    throw ContractError("Pose: R^T R deviates from I by " + std::to_string(defect));
  const double d = p.R.det();
  if (std::fabs(d - 1.0) > tol)
    throw ContractError("Pose: det(R) = " + std::to_string(d) + ", expected +1");
}

std::string joint_kind_to_string(JointKind k) {
  return k == JointKind::revolute ? "revolute" : "prismatic";
}

JointKind joint_kind_from_string(const std::string& s) {
  if (s == "revolute") return JointKind::revolute;
  if (s == "prismatic") return JointKind::prismatic;
  throw ContractError("unknown joint kind: " + s);
}

void JointSpec::validate() const {
  const double n = direction.norm();
  if (std::fabs(n - 1.0) > 1e-9)
    throw DegeneracyError("JointSpec: direction norm " + std::to_string(n) +
                          " deviates from 1");
  if (limit_min > limit_max)
    throw ContractError("JointSpec: limit_min > limit_max");
  if (!state_in_limits(state))
    throw JointLimitError("JointSpec: state " + std::to_string(state) +
                          " outside limits [" + std::to_string(limit_min) + ", " +
                          std::to_string(limit_max) + "]");
}

void KinematicTree::validate() const {
  if (part_count < 1) throw ContractError("KinematicTree: need at least one part");
  if (static_cast<int>(parts.size()) != part_count)
    throw ContractError("KinematicTree: parts list size mismatch");
  if (static_cast<int>(joints.size()) != part_count - 1)
    throw ContractError("KinematicTree: expected K-1 joints, got " +
                        std::to_string(joints.size()));
  if (static_cast<int>(parent.size()) != part_count)
    throw ContractError("KinematicTree: parent map size mismatch");
  if (parent[0] != -1) throw ContractError("KinematicTree: part 0 must be the root");
  for (int k = 1; k < part_count; ++k) {
    if (parent[k] < 0 || parent[k] >= part_count)
      throw ContractError("KinematicTree: parent of part " + std::to_string(k) +
                          " out of range");
    // acyclicity: walk to the root with a step budget
    int cur = k, steps = 0;
    while (cur != 0) {
      cur = parent[cur];
      if (cur < 0 || ++steps > part_count)
        throw ContractError("KinematicTree: parent map does not reach the root from part " +
                            std::to_string(k));
    }
  }
  for (const auto& j : joints) j.validate();
}

std::string KinematicTree::to_json_string() const {
  json j;
  j["K"] = part_count;
  j["parts"] = parts;
  json joints_json = json::array();
  for (const auto& jt : joints) {
    json e;
    e["kind"] = joint_kind_to_string(jt.kind);
    if (jt.kind == JointKind::revolute)
      e["l"] = {jt.location.x, jt.location.y, jt.location.z};
    e["d"] = {jt.direction.x, jt.direction.y, jt.direction.z};
    e["limits"] = {jt.limit_min, jt.limit_max};
    joints_json.push_back(e);
  }
  j["joints"] = joints_json;
  j["parent"] = parent;
  return j.dump(2);
}

KinematicTree KinematicTree::from_json_string(const std::string& text) {
  const json j = json::parse(text);
  KinematicTree t;
  t.part_count = j.at("K").get<int>();
  t.parts = j.at("parts").get<std::vector<int>>();
  t.parent = j.at("parent").get<std::vector<int>>();
  for (const auto& e : j.at("joints")) {
    JointSpec jt;
    jt.kind = joint_kind_from_string(e.at("kind").get<std::string>());
    if (e.contains("l")) {
      auto l = e.at("l");
      jt.location = {l[0].get<double>(), l[1].get<double>(), l[2].get<double>()};
    }
    auto d = e.at("d");
    jt.direction = {d[0].get<double>(), d[1].get<double>(), d[2].get<double>()};
    auto lim = e.at("limits");
    jt.limit_min = lim[0].get<double>();
    jt.limit_max = lim[1].get<double>();
    jt.state = 0.5 * (jt.limit_min + jt.limit_max);
    t.joints.push_back(jt);
  }
  // states are carried separately; reset to a valid in-limit value
  for (auto& jt : t.joints) jt.state = std::min(std::max(jt.state, jt.limit_min), jt.limit_max);
  t.validate();
  return t;
}

Mat3 rodrigues(const Vec3& d, double theta) {
  const double n = d.norm();
  if (std::fabs(n - 1.0) > 1e-6)
    throw DegeneracyError("rodrigues: axis norm " + std::to_string(n) +
                          " deviates from 1 (no silent renormalization)");
  const double c = std::cos(theta), s = std::sin(theta);
  return Mat3::identity() * c + Mat3::outer(d, d) * (1.0 - c) + Mat3::skew(d) * s;
}

Mat3 rot6d_to_matrix(const Rot6D& r) {
  const double n1 = r.a1.norm();
  if (n1 <= 1e-9)
    throw DegeneracyError("rot6d_to_matrix: ||a1|| = " + std::to_string(n1) +
                          " below 1e-9");
  const Vec3 b1 = r.a1 / n1;
  const Vec3 proj = r.a2 - b1 * b1.dot(r.a2);
  const double n2 = proj.norm();
  if (n2 <= 1e-9)
    throw DegeneracyError("rot6d_to_matrix: a2 parallel to a1 (residual norm " +
                          std::to_string(n2) + ")");
  const Vec3 b2 = proj / n2;
  const Vec3 b3 = b1.cross(b2);
  return Mat3::from_cols(b1, b2, b3);
}

Rot6D matrix_to_rot6d(const Mat3& R) {
  if (R.orthonormality_defect() > 1e-6 || std::fabs(R.det() - 1.0) > 1e-6)
    throw ContractError("matrix_to_rot6d: input is not a rotation");
  return {R.col(0), R.col(1)};
}

Pose child_pose(const Pose& parent, const JointSpec& joint) {
  joint.validate();
  if (joint.kind == JointKind::revolute) {
    const Mat3 q = rodrigues(joint.direction, joint.state);
    const Vec3 c = joint.location;
    Pose out;
    out.R = parent.R * q;
    out.t = parent.t + parent.R * (c - q * c);
    return out;
  }
  Pose out;
  out.R = parent.R;
  out.t = parent.t + joint.state * (parent.R * joint.direction);
  return out;
}

std::vector<Pose> forward_kinematics(const KinematicTree& tree, const Pose& base,
                                     const std::vector<double>& states) {
  tree.validate();
  if (static_cast<int>(states.size()) != tree.part_count - 1)
    throw DimensionError("forward_kinematics: expected " +
                         std::to_string(tree.part_count - 1) + " states, got " +
                         std::to_string(states.size()));
  for (int i = 0; i < tree.part_count - 1; ++i) {
    if (!tree.joints[i].state_in_limits(states[i]))
      throw JointLimitError("forward_kinematics: joint " + std::to_string(i) +
                            " state " + std::to_string(states[i]) +
                            " outside limits [" + std::to_string(tree.joints[i].limit_min) +
                            ", " + std::to_string(tree.joints[i].limit_max) + "]");
  }

  std::vector<Pose> poses(tree.part_count);
  std::vector<bool> done(tree.part_count, false);
  poses[0] = base;
  done[0] = true;
  // Topological sweep; parents may appear after children in index order.
  int remaining = tree.part_count - 1;
  while (remaining > 0) {
    bool progressed = false;
    for (int k = 1; k < tree.part_count; ++k) {
      if (done[k] || !done[tree.parent[k]]) continue;
      JointSpec j = tree.joints[k - 1];
      j.state = states[k - 1];
      poses[k] = child_pose(poses[tree.parent[k]], j);
      done[k] = true;
      --remaining;
      progressed = true;
    }
    if (!progressed)
      throw ContractError("forward_kinematics: parent map is not a tree");
  }
  return poses;
}

double rotation_geodesic_error_deg(const Mat3& ra, const Mat3& rb) {
  const double c = ((ra * rb.transposed()).trace() - 1.0) * 0.5;
  const double clamped = std::fmin(1.0, std::fmax(-1.0, c));
  return std::acos(clamped) * 180.0 / 3.14159265358979323846;
}

double wrap_angle_error(double a, double b) {
  constexpr double kTwoPi = 6.28318530717958647692;
  double d = std::fmod(std::fabs(a - b), kTwoPi);
  if (d > 3.14159265358979323846) d = kTwoPi - d;
  return d;
}

}  // namespace kinediff
