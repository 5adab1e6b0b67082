// SPDX-License-Identifier: Apache-2.0
#include "kinediff/posediff.hpp"

#include <algorithm>
#include <cmath>

#include "kinediff/checkpoint.hpp"
#include "kinediff/errors.hpp"

namespace kinediff {

double VeSchedule::sigma(double t) const {
  if (t < -1e-12 || t > 1.0 + 1e-12)
    throw ContractError("VeSchedule::sigma: t = " + std::to_string(t) + " outside [0,1]");
  return sigma_min * std::pow(sigma_max / sigma_min, t);
}

double VeSchedule::sigma_sigma_dot(double t) const {
  const double s = sigma(t);
  return s * s * std::log(sigma_max / sigma_min);
}

void VeSchedule::validate() const {
  if (!(sigma_min > 0.0) || !(sigma_max > sigma_min))
    throw ContractError("VeSchedule: need 0 < sigma_min < sigma_max");
  if (!(delta > 0.0) || !(delta < 1.0))
    throw ContractError("VeSchedule: need 0 < delta < 1");
}

int PoseStateLayout::dim() const {
  int d = 9;
  for (auto k : joint_kinds) d += (k == JointKind::revolute) ? 7 : 4;
  return d;
}

PoseStateLayout PoseStateLayout::from_tree(const KinematicTree& tree) {
  PoseStateLayout l;
  for (const auto& j : tree.joints) {
    l.joint_kinds.push_back(j.kind);
    l.joint_limits.emplace_back(j.limit_min, j.limit_max);
  }
  return l;
}

std::vector<double> pack_pose_state(const Pose& base, const std::vector<JointParams>& joints,
                                    const PoseStateLayout& layout) {
  if (joints.size() != layout.joint_kinds.size())
    throw DimensionError("pack_pose_state: joint count mismatch");
  std::vector<double> x;
  x.reserve(layout.dim());
  const Rot6D r = matrix_to_rot6d(base.R);
  x.insert(x.end(), {r.a1.x, r.a1.y, r.a1.z, r.a2.x, r.a2.y, r.a2.z});
  x.insert(x.end(), {base.t.x, base.t.y, base.t.z});
  for (std::size_t j = 0; j < joints.size(); ++j) {
    x.push_back(joints[j].theta);
    if (layout.joint_kinds[j] == JointKind::revolute)
      x.insert(x.end(), {joints[j].location.x, joints[j].location.y, joints[j].location.z});
    x.insert(x.end(), {joints[j].direction.x, joints[j].direction.y, joints[j].direction.z});
  }
  return x;
}

void unpack_pose_state(const std::vector<double>& x, const PoseStateLayout& layout,
                       Pose* base, std::vector<JointParams>* joints) {
  if (static_cast<int>(x.size()) != layout.dim())
    throw DimensionError("unpack_pose_state: state dim " + std::to_string(x.size()) +
                         ", layout wants " + std::to_string(layout.dim()));
  Rot6D r{{x[0], x[1], x[2]}, {x[3], x[4], x[5]}};
  base->R = rot6d_to_matrix(r);
  base->t = {x[6], x[7], x[8]};
  joints->clear();
  std::size_t at = 9;
  for (std::size_t j = 0; j < layout.joint_kinds.size(); ++j) {
    JointParams jp;
    jp.kind = layout.joint_kinds[j];
    jp.theta = x[at++];
    if (jp.kind == JointKind::revolute) {
      jp.location = {x[at], x[at + 1], x[at + 2]};
      at += 3;
    }
    Vec3 d{x[at], x[at + 1], x[at + 2]};
    at += 3;
    const double n = d.norm();
    if (n < 1e-9)
      throw DegeneracyError("unpack_pose_state: joint direction norm below 1e-9");
    jp.direction = d / n;
    joints->push_back(jp);
  }
}

std::vector<double> ve_perturb(const std::vector<double>& x0, double t,
                               const std::vector<double>& eps, const VeSchedule& sched) {
  if (x0.size() != eps.size()) throw DimensionError("ve_perturb: eps size mismatch");
  if (t < sched.delta - 1e-12 || t > 1.0 + 1e-12)
    throw ContractError("ve_perturb: t outside [delta, 1]");
  const double s = sched.sigma(t);
  std::vector<double> out(x0.size());
  for (std::size_t i = 0; i < x0.size(); ++i) out[i] = x0[i] + s * eps[i];
  return out;
}

ScoreNetParams ScoreNetParams::init(const PoseStateLayout& layout, Rng& rng) {
  ScoreNetParams p;
  p.layout = layout;
  p.state_dim = layout.dim();
  p.obs_enc = PointEncoderParams::init({3, 128, 128}, rng);
  p.trunk = MlpParams::init(
      MlpSpec({p.state_dim + p.time_dim + 128, 256, 256, p.state_dim}, Act::relu), rng);
  p.state_mean.assign(p.state_dim, 0.0);
  p.state_scale.assign(p.state_dim, 1.0);
  return p;
}

ParamSet ScoreNetParams::trainable() {
  ParamSet ps;
  obs_enc.mlp.register_into(ps, "obs_enc");
  trunk.register_into(ps, "trunk");
  return ps;
}

void ScoreNetParams::save(const std::string& path) const {
  ScoreNetParams copy = *this;
  ParamSet ps = copy.trainable();
  NamedTensors ts;
  std::vector<double> meta;
  meta.push_back(static_cast<double>(layout.joint_kinds.size()));
  for (std::size_t j = 0; j < layout.joint_kinds.size(); ++j) {
    meta.push_back(layout.joint_kinds[j] == JointKind::revolute ? 0.0 : 1.0);
    meta.push_back(layout.joint_limits[j].first);
    meta.push_back(layout.joint_limits[j].second);
  }
  meta.insert(meta.end(), {sched.sigma_min, sched.sigma_max, sched.delta});
  const std::int64_t meta_n = static_cast<std::int64_t>(meta.size());
  ts.emplace_back("meta", Tensor::from({meta_n}, std::move(meta)));
  ts.emplace_back("state_mean",
                  Tensor::from({static_cast<std::int64_t>(state_mean.size())}, state_mean));
  ts.emplace_back("state_scale",
                  Tensor::from({static_cast<std::int64_t>(state_scale.size())}, state_scale));
  for (auto& [name, t] : ps.items) ts.emplace_back(name, t);
  save_kd3d(path, ts);
}

ScoreNetParams ScoreNetParams::load(const std::string& path) {
  const NamedTensors ts = load_kd3d(path);
  const Tensor& meta = kd3d_get(ts, "meta");
  PoseStateLayout layout;
  const int n_joints = static_cast<int>(meta.data()[0]);
  std::size_t at = 1;
  for (int j = 0; j < n_joints; ++j) {
    layout.joint_kinds.push_back(meta.data()[at] == 0.0 ? JointKind::revolute
                                                        : JointKind::prismatic);
    layout.joint_limits.emplace_back(meta.data()[at + 1], meta.data()[at + 2]);
    at += 3;
  }
  Rng scratch(0);
  ScoreNetParams p = init(layout, scratch);
  p.sched.sigma_min = meta.data()[at];
  p.sched.sigma_max = meta.data()[at + 1];
  p.sched.delta = meta.data()[at + 2];
  p.state_mean = kd3d_get(ts, "state_mean").values();
  p.state_scale = kd3d_get(ts, "state_scale").values();
  ParamSet loaded;
  for (const auto& [name, t] : ts)
    if (name != "meta" && name != "state_mean" && name != "state_scale")
      loaded.add(name, t);
  p.obs_enc.mlp.load_from(loaded, "obs_enc");
  p.trunk.load_from(loaded, "trunk");
  return p;
}

Tensor encode_observation(ScoreNetParams& params, const Tensor& obs_cloud) {
  return point_encode(params.obs_enc, obs_cloud);
}

Tensor score_forward(ScoreNetParams& params, const Tensor& x_row, double t,
                     const Tensor& obs_cloud) {
  Tensor f_obs = encode_observation(params, obs_cloud);
  Tensor input = concat_cols(concat_cols(x_row, sinusoidal_time_embed(t, params.time_dim)),
                             f_obs);
  return mlp_forward(params.trunk, input);
}

std::vector<double> score_eval(ScoreNetParams& params, const std::vector<double>& x,
                               double t, const Tensor& f_obs_row) {
  Tensor input = concat_cols(
      concat_cols(Tensor::row(x), sinusoidal_time_embed(t, params.time_dim)), f_obs_row);
  return mlp_forward(params.trunk, input).values();
}

Tensor dsm_loss(ScoreNetParams& params, const std::vector<const PoseObsSample*>& batch,
                const VeSchedule& sched, Rng& rng) {
  if (batch.empty()) throw ContractError("dsm_loss: empty batch");
  Tensor total = Tensor::scalar(0.0);
  for (const PoseObsSample* s : batch) {
    const double t = rng.uniform(sched.delta, 1.0);
    const double sig = sched.sigma(t);
    // whitened target state
    std::vector<double> x0(s->x0.size());
    for (std::size_t i = 0; i < x0.size(); ++i)
      x0[i] = (s->x0[i] - params.state_mean[i]) * params.state_scale[i];
    std::vector<double> eps(x0.size()), xt(x0.size()), target(x0.size());
    for (std::size_t i = 0; i < x0.size(); ++i) {
      eps[i] = rng.normal();
      xt[i] = x0[i] + sig * eps[i];
      target[i] = (x0[i] - xt[i]) / (sig * sig);
    }
    Tensor obs = Tensor::from({s->n_obs, 3}, s->obs_cloud);
    Tensor score = score_forward(params, Tensor::row(xt), t, obs);
    Tensor resid = sub(score, Tensor::row(target));
    total = add(total, scale(sum_sq(resid), sig * sig));
  }
  return scale(total, 1.0 / static_cast<double>(batch.size()));
}

std::vector<double> pf_ode_rhs(const std::vector<double>& x, double t,
                               const std::function<std::vector<double>(
                                   const std::vector<double>&, double)>& score,
                               const VeSchedule& sched) {
  if (t < sched.delta - 1e-9 || t > 1.0 + 1e-9)
    throw ContractError("pf_ode_rhs: t outside [delta, 1]");
  const double factor = -sched.sigma_sigma_dot(t);
  std::vector<double> s = score(x, t);
  for (auto& v : s) v *= factor;
  return s;
}

std::vector<double> rk45_solve(
    const std::function<std::vector<double>(const std::vector<double>&, double)>& rhs,
    std::vector<double> x, double t0, double t1, const Rk45Options& opt, Rk45Stats* stats) {
  // Dormand-Prince 5(4)
  static const double c[7] = {0, 1.0 / 5, 3.0 / 10, 4.0 / 5, 8.0 / 9, 1.0, 1.0};
  static const double a[7][6] = {
      {},
      {1.0 / 5},
      {3.0 / 40, 9.0 / 40},
      {44.0 / 45, -56.0 / 15, 32.0 / 9},
      {19372.0 / 6561, -25360.0 / 2187, 64448.0 / 6561, -212.0 / 729},
      {9017.0 / 3168, -355.0 / 33, 46732.0 / 5247, 49.0 / 176, -5103.0 / 18656},
      {35.0 / 384, 0.0, 500.0 / 1113, 125.0 / 192, -2187.0 / 6784, 11.0 / 84}};
  static const double b5[7] = {35.0 / 384,     0.0,        500.0 / 1113, 125.0 / 192,
                               -2187.0 / 6784, 11.0 / 84,  0.0};
  static const double b4[7] = {5179.0 / 57600,     0.0,          7571.0 / 16695, 393.0 / 640,
                               -92097.0 / 339200,  187.0 / 2100, 1.0 / 40};

  const std::size_t n = x.size();
  const double dir = (t1 >= t0) ? 1.0 : -1.0;
  double t = t0;
  double h = dir * std::min(0.05, std::fabs(t1 - t0));
  std::vector<std::vector<double>> k(7, std::vector<double>(n));
  k[0] = rhs(x, t);  // FSAL slot

  int steps = 0;
  while (dir * (t1 - t) > 1e-15) {
    if (std::fabs(h) > std::fabs(t1 - t)) h = t1 - t;
    if (std::fabs(h) < opt.h_min)
      throw SolverStallError("rk45_solve: step underflow at t = " + std::to_string(t));
    if (++steps > opt.max_steps)
      throw SolverStallError("rk45_solve: exceeded max step count");

    for (int stage = 1; stage < 7; ++stage) {
      std::vector<double> xs(x);
      for (int prev = 0; prev < stage; ++prev) {
        const double w = a[stage][prev];
        if (w == 0.0) continue;
        for (std::size_t i = 0; i < n; ++i) xs[i] += h * w * k[prev][i];
      }
      k[stage] = rhs(xs, t + c[stage] * h);
    }

    std::vector<double> x5(x);
    double err_acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double d5 = 0.0, d4 = 0.0;
      for (int stage = 0; stage < 7; ++stage) {
        d5 += b5[stage] * k[stage][i];
        d4 += b4[stage] * k[stage][i];
      }
      x5[i] += h * d5;
      const double sc = opt.atol + opt.rtol * std::max(std::fabs(x[i]), std::fabs(x5[i]));
      const double e = h * (d5 - d4) / sc;
      err_acc += e * e;
    }
    const double err = std::sqrt(err_acc / static_cast<double>(n));

    if (err <= 1.0) {
      t += h;
      x = std::move(x5);
      k[0] = k[6];  // FSAL
      if (stats) stats->n_steps++;
    } else {
      if (stats) stats->n_rejected++;
    }
    const double factor =
        std::clamp(0.9 * std::pow(std::max(err, 1e-10), -0.2), 0.2, 5.0);
    h *= factor;
    // FSAL slot is only valid for the accepted end point; recompute after a
    // rejection since x is unchanged but k[0] must match (it already does).
  }
  return x;
}

PoseDiffTrainResult train_posediff(const std::vector<PoseObsSample>& data,
                                   const PoseStateLayout& layout, const PoseDiffConfig& cfg) {
  if (data.empty()) throw ContractError("train_posediff: empty dataset");
  cfg.sched.validate();
  Rng init_rng = Rng(cfg.seed).fork("posediff_init");
  PoseDiffTrainResult result;
  result.params = ScoreNetParams::init(layout, init_rng);
  result.params.sched = cfg.sched;

  // whitening statistics over the training states
  const int dim = layout.dim();
  std::vector<double> mean(dim, 0.0), var(dim, 0.0);
  for (const auto& s : data)
    for (int i = 0; i < dim; ++i) mean[i] += s.x0[i];
  for (auto& m : mean) m /= static_cast<double>(data.size());
  for (const auto& s : data)
    for (int i = 0; i < dim; ++i) {
      const double d = s.x0[i] - mean[i];
      var[i] += d * d;
    }
  for (int i = 0; i < dim; ++i) {
    const double sd = std::sqrt(var[i] / static_cast<double>(data.size()));
    result.params.state_mean[i] = mean[i];
    result.params.state_scale[i] = cfg.target_std / std::max(sd, 0.05);
  }

  ParamSet ps = result.params.trainable();
  Adam opt({cfg.lr});
  Rng rng = Rng(cfg.seed).fork("posediff_train");
  double ema = 0.0;
  for (int step = 0; step < cfg.steps; ++step) {
    std::vector<const PoseObsSample*> batch;
    for (int b = 0; b < cfg.batch; ++b)
      batch.push_back(&data[rng.uniform_index(data.size())]);
    Tensor loss = dsm_loss(result.params, batch, cfg.sched, rng);
    const double val = loss.item();
    if (!std::isfinite(val))
      throw Error("train_posediff: loss diverged at step " + std::to_string(step));
    ps.zero_grad();
    backward(loss);
    opt.step(ps);
    ema = step == 0 ? val : 0.98 * ema + 0.02 * val;
    if (step % 200 == 0 || step + 1 == cfg.steps) result.loss_log.emplace_back(step, ema);
  }
  return result;
}

NormalizedObs normalize_observation(const PointCloud& obs, int n_points, Rng& rng) {
  if (obs.points.empty()) throw ContractError("normalize_observation: empty observation");
  NormalizedObs out;
  Vec3 c(0, 0, 0);
  for (const auto& p : obs.points) c += p;
  c = c / static_cast<double>(obs.points.size());
  double radius = 0.0;
  for (const auto& p : obs.points) radius = std::max(radius, (p - c).norm());
  if (radius < 1e-9) radius = 1.0;
  out.centroid = c;
  out.radius = radius;
  const auto keep = farthest_point_indices(obs.points, n_points, rng);
  out.cloud.reserve(keep.size() * 3);
  for (int idx : keep) {
    const Vec3 p = (obs.points[idx] - c) / radius;
    out.cloud.insert(out.cloud.end(), {p.x, p.y, p.z});
  }
  out.n_points = static_cast<std::int64_t>(keep.size());
  return out;
}

// Maps a normalized-frame state back to the camera frame.
void denormalize_state(Pose* base, std::vector<JointParams>* joints,
                       const PoseStateLayout& layout, const Vec3& centroid, double radius) {
  base->t = base->t * radius + centroid;
  for (std::size_t j = 0; j < joints->size(); ++j) {
    (*joints)[j].location = (*joints)[j].location * radius;
    if (layout.joint_kinds[j] == JointKind::prismatic) (*joints)[j].theta *= radius;
    (*joints)[j].theta = std::clamp((*joints)[j].theta, layout.joint_limits[j].first,
                                    layout.joint_limits[j].second);
  }
}

std::vector<PoseSample> sample_pose(ScoreNetParams& params, const PointCloud& obs,
                                    const VeSchedule& sched, Rng& rng,
                                    const SampleOptions& opt) {
  if (obs.points.empty()) throw ContractError("sample_pose: empty observation");
  sched.validate();

  Rng fps_rng = rng.fork("fps");
  const NormalizedObs norm = normalize_observation(obs, 256, fps_rng);
  Tensor cloud = Tensor::from({norm.n_points, 3}, norm.cloud);
  Tensor f_obs = encode_observation(params, cloud);
  Tensor f_obs_const = detach(f_obs);

  const int dim = params.state_dim;
  std::vector<PoseSample> out(opt.n_samples);
  for (int si = 0; si < opt.n_samples; ++si) {
    Rng srng = rng.fork(1000 + si);
    std::vector<double> x1(dim);
    for (auto& v : x1) v = srng.normal() * sched.sigma_max;
    PoseSample sample;
    try {
      auto score = [&](const std::vector<double>& x, double t) {
        return score_eval(params, x, t, f_obs_const);
      };
      auto rhs = [&](const std::vector<double>& x, double t) {
        return pf_ode_rhs(x, t, score, sched);
      };
      std::vector<double> x_delta = rk45_solve(rhs, x1, 1.0, sched.delta, opt.rk45);
      // unwhiten, then undo the observation normalization
      std::vector<double> x_norm(dim);
      for (int i = 0; i < dim; ++i)
        x_norm[i] = x_delta[i] / params.state_scale[i] + params.state_mean[i];
      Pose base;
      std::vector<JointParams> joints;
      unpack_pose_state(x_norm, params.layout, &base, &joints);
      denormalize_state(&base, &joints, params.layout, norm.centroid, norm.radius);
      sample.base = base;
      sample.joints = joints;
      sample.ok = true;
    } catch (const Error& e) {
      sample.ok = false;
      sample.error = e.what();
    }
    out[si] = std::move(sample);
  }
  return out;
}

PoseSample aggregate_pose_samples(const std::vector<PoseSample>& samples,
                                  const std::function<double(const PoseSample&)>& scorer) {
  std::vector<const PoseSample*> good;
  for (const auto& s : samples)
    if (s.ok) good.push_back(&s);
  if (good.empty()) throw ContractError("aggregate_pose_samples: no valid samples");
  if (good.size() == 1) return *good[0];

  if (scorer) {
    const PoseSample* best = good[0];
    double best_score = scorer(*best);
    for (std::size_t i = 1; i < good.size(); ++i) {
      const double s = scorer(*good[i]);
      if (s < best_score) {
        best_score = s;
        best = good[i];
      }
    }
    return *best;
  }

  auto median_of = [&](const std::function<double(const PoseSample&)>& get) {
    std::vector<double> v;
    v.reserve(good.size());
    for (const auto* s : good) v.push_back(get(*s));
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
  };

  PoseSample out = *good[0];
  out.base.t = {median_of([](const PoseSample& s) { return s.base.t.x; }),
                median_of([](const PoseSample& s) { return s.base.t.y; }),
                median_of([](const PoseSample& s) { return s.base.t.z; })};
  // chordal mean of rotations, projected back by Gram-Schmidt; widely spread
  // samples can average to a degenerate matrix, keep the first sample then
  Mat3 acc = Mat3::zero();
  for (const auto* s : good) acc = acc + s->base.R;
  acc = acc * (1.0 / static_cast<double>(good.size()));
  try {
    out.base.R = rot6d_to_matrix({acc.col(0), acc.col(1)});
  } catch (const DegeneracyError&) {
    out.base.R = good[0]->base.R;
  }

  for (std::size_t j = 0; j < out.joints.size(); ++j) {
    out.joints[j].theta = median_of([&](const PoseSample& s) { return s.joints[j].theta; });
    out.joints[j].location = {
        median_of([&](const PoseSample& s) { return s.joints[j].location.x; }),
        median_of([&](const PoseSample& s) { return s.joints[j].location.y; }),
        median_of([&](const PoseSample& s) { return s.joints[j].location.z; })};
    Vec3 dmed = {median_of([&](const PoseSample& s) { return s.joints[j].direction.x; }),
                 median_of([&](const PoseSample& s) { return s.joints[j].direction.y; }),
                 median_of([&](const PoseSample& s) { return s.joints[j].direction.z; })};
    const double n = dmed.norm();
    out.joints[j].direction = n > 1e-9 ? dmed / n : good[0]->joints[j].direction;
  }
  return out;
}

}  // namespace kinediff
