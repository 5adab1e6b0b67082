// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "kinediff/geometry.hpp"
#include "kinediff/kinematics.hpp"
#include "kinediff/nn.hpp"
#include "kinediff/rng.hpp"

namespace kinediff {

// Estimated single-DOF joint (parent-local frame).
struct JointParams {
  JointKind kind = JointKind::revolute;
  double theta = 0.0;
  Vec3 location;  // revolute only
  Vec3 direction{1, 0, 0};
};

// Variance-exploding schedule, geometric in t.
struct VeSchedule {
  double sigma_min = 0.01;
  double sigma_max = 0.5;
  double delta = 1e-3;

  double sigma(double t) const;            // sigma_min * (sigma_max/sigma_min)^t
  double sigma_sigma_dot(double t) const;  // sigma(t)^2 * ln(sigma_max/sigma_min)
  void validate() const;
};

// State vector layout: [r6d(6), t(3)] then per joint (theta, l, d) for
// revolute or (theta, d) for prismatic.
struct PoseStateLayout {
  std::vector<JointKind> joint_kinds;
  std::vector<std::pair<double, double>> joint_limits;

  int dim() const;
  static PoseStateLayout from_tree(const KinematicTree& tree);
};

std::vector<double> pack_pose_state(const Pose& base, const std::vector<JointParams>& joints,
                                    const PoseStateLayout& layout);
// Gram-Schmidt decodes the rotation; joint directions are renormalized and
// joint states clamped to limits. Throws DegeneracyError on unusable r6d.
void unpack_pose_state(const std::vector<double>& x, const PoseStateLayout& layout,
                       Pose* base, std::vector<JointParams>* joints);

// x_t = x0 + sigma(t) * eps.
std::vector<double> ve_perturb(const std::vector<double>& x0, double t,
                               const std::vector<double>& eps, const VeSchedule& sched);

struct ScoreNetParams {
  PoseStateLayout layout;
  int state_dim = 0;
  int time_dim = 64;
  PointEncoderParams obs_enc;  // [3,128,128]
  MlpParams trunk;             // [state+time+128, 256, 256, state]
  // whitening of the diffused state (mean removed, per-dim rescale)
  std::vector<double> state_mean, state_scale;
  VeSchedule sched;

  static ScoreNetParams init(const PoseStateLayout& layout, Rng& rng);
  ParamSet trainable();
  void save(const std::string& path) const;
  static ScoreNetParams load(const std::string& path);
};

// Training-path forward (tape attached through the observation encoder).
Tensor score_forward(ScoreNetParams& params, const Tensor& x_row, double t,
                     const Tensor& obs_cloud);
// Sampling-path forward with a cached observation feature row.
std::vector<double> score_eval(ScoreNetParams& params, const std::vector<double>& x,
                               double t, const Tensor& f_obs_row);
Tensor encode_observation(ScoreNetParams& params, const Tensor& obs_cloud);

struct PoseObsSample {
  std::vector<double> obs_cloud;  // M*3, normalized camera-frame points
  std::int64_t n_obs = 0;
  std::vector<double> x0;  // normalized (not yet whitened) state
};

// lambda(t) * || s(x_t, t | O) - (x0 - x_t)/sigma(t)^2 ||^2, lambda = sigma^2,
// t ~ U(delta, 1), mean over the batch.
Tensor dsm_loss(ScoreNetParams& params, const std::vector<const PoseObsSample*>& batch,
                const VeSchedule& sched, Rng& rng);

// dx/dt = -sigma(t) sigma_dot(t) * score(x, t).
std::vector<double> pf_ode_rhs(const std::vector<double>& x, double t,
                               const std::function<std::vector<double>(
                                   const std::vector<double>&, double)>& score,
                               const VeSchedule& sched);

struct Rk45Options {
  double rtol = 1e-5;
  double atol = 1e-5;
  double h_min = 1e-12;
  int max_steps = 200000;
};

struct Rk45Stats {
  int n_steps = 0;
  int n_rejected = 0;
};

// Dormand-Prince 5(4) with the embedded-error step control; integrates from
// t0 to t1 (either direction). Throws SolverStallError on step underflow.
std::vector<double> rk45_solve(
    const std::function<std::vector<double>(const std::vector<double>&, double)>& rhs,
    std::vector<double> x, double t0, double t1, const Rk45Options& opt,
    Rk45Stats* stats = nullptr);

struct PoseDiffConfig {
  int obs_points = 256;
  int steps = 6000;
  int batch = 16;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  VeSchedule sched;
  double target_std = 0.2;  // per-dim whitened std
};

struct PoseDiffTrainResult {
  ScoreNetParams params;
  std::vector<std::pair<int, double>> loss_log;  // (step, loss EMA)
};

PoseDiffTrainResult train_posediff(const std::vector<PoseObsSample>& data,
                                   const PoseStateLayout& layout, const PoseDiffConfig& cfg);

struct PoseSample {
  Pose base;
  std::vector<JointParams> joints;
  bool ok = false;
  std::string error;
};

// Centroid-shift + scale-to-unit-radius observation normalization with FPS
// subsampling; shared by training preparation and sampling.
struct NormalizedObs {
  std::vector<double> cloud;  // n_points * 3
  std::int64_t n_points = 0;
  Vec3 centroid;
  double radius = 1.0;
};

NormalizedObs normalize_observation(const PointCloud& obs, int n_points, Rng& rng);
void denormalize_state(Pose* base, std::vector<JointParams>* joints,
                       const PoseStateLayout& layout, const Vec3& centroid, double radius);

struct SampleOptions {
  int n_samples = 8;
  Rk45Options rk45;
  std::string aggregation = "median";
};

// Draw x(1) ~ N(0, sigma_max^2 I), solve the PF-ODE to t = delta, decode.
// Solver failures mark individual samples; the rest are still returned.
std::vector<PoseSample> sample_pose(ScoreNetParams& params, const PointCloud& obs,
                                    const VeSchedule& sched, Rng& rng,
                                    const SampleOptions& opt);

// Median translation / joint params, chordal-mean rotation projected onto
// SO(3) by orthogonalization. An optional scorer re-ranks instead (lowest
// score wins).
PoseSample aggregate_pose_samples(const std::vector<PoseSample>& samples,
                                  const std::function<double(const PoseSample&)>& scorer = {});

}  // namespace kinediff
