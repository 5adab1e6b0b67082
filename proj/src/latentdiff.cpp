// SPDX-License-Identifier: Apache-2.0
#include "kinediff/latentdiff.hpp"

#include <algorithm>
#include <cmath>

#include "kinediff/checkpoint.hpp"
#include "kinediff/errors.hpp"

namespace kinediff {

DdpmSchedule DdpmSchedule::linear(int T, double beta_start, double beta_end) {
  if (T < 1) throw ContractError("DdpmSchedule: T must be >= 1");
  DdpmSchedule s;
  s.T = T;
  s.beta.resize(T);
  s.alpha_bar.resize(T);
  s.sigma.resize(T);
  double prod = 1.0;
  for (int t = 0; t < T; ++t) {
    s.beta[t] = T == 1 ? beta_start
                       : beta_start + (beta_end - beta_start) * t / static_cast<double>(T - 1);
    prod *= 1.0 - s.beta[t];
    s.alpha_bar[t] = prod;
    s.sigma[t] = std::sqrt(s.beta[t]);
  }
  s.validate();
  return s;
}

void DdpmSchedule::validate() const {
  if (static_cast<int>(beta.size()) != T || static_cast<int>(alpha_bar.size()) != T)
    throw ContractError("DdpmSchedule: vector sizes disagree with T");
  double prev = 1.0;
  for (int t = 0; t < T; ++t) {
    if (!(beta[t] > 0.0 && beta[t] < 1.0))
      throw ContractError("DdpmSchedule: beta out of (0,1) at t=" + std::to_string(t + 1));
    if (!(alpha_bar[t] < prev + 1e-15))
      throw ContractError("DdpmSchedule: alpha_bar not decreasing");
    prev = alpha_bar[t];
  }
  if (T >= 50 && alpha_bar[T - 1] >= 0.05)
    throw ContractError("DdpmSchedule: alpha_bar_T = " + std::to_string(alpha_bar[T - 1]) +
                        ", expected < 0.05");
}

std::vector<double> ddpm_forward(const std::vector<double>& z0, int t,
                                 const std::vector<double>& xi, const DdpmSchedule& sched) {
  if (t < 1 || t > sched.T)
    throw ContractError("ddpm_forward: t = " + std::to_string(t) + " outside 1.." +
                        std::to_string(sched.T));
  if (z0.size() != xi.size()) throw DimensionError("ddpm_forward: xi size mismatch");
  const double a = std::sqrt(sched.alpha_bar[t - 1]);
  const double b = std::sqrt(1.0 - sched.alpha_bar[t - 1]);
  std::vector<double> out(z0.size());
  for (std::size_t i = 0; i < z0.size(); ++i) out[i] = a * z0[i] + b * xi[i];
  return out;
}

DenoiserParams DenoiserParams::init(int d_z, Rng& rng) {
  DenoiserParams p;
  p.d_z = d_z;
  p.gamma = PointEncoderParams::init({3, 128, p.d_model}, rng);
  p.tokenizer_w = glorot_init(rng, d_z, p.q_tokens * p.d_model);
  p.tokenizer_b = Tensor::zeros({1, p.q_tokens * p.d_model}, true);
  p.time_proj = MlpParams::init(MlpSpec({p.time_dim, p.d_model}, Act::relu), rng);
  for (int b = 0; b < p.n_blocks; ++b) {
    p.attn.push_back(CrossAttentionParams::init(p.d_model, rng));
    p.attn_out.push_back(glorot_init(rng, p.d_model, p.d_model));
    p.block_mlp.push_back(MlpParams::init(MlpSpec({p.d_model, 256, p.d_model}, Act::relu), rng));
  }
  p.out_mlp = MlpParams::init(
      MlpSpec({p.q_tokens * p.d_model + p.time_dim, 256, d_z}, Act::relu), rng);
  return p;
}

ParamSet DenoiserParams::trainable() {
  ParamSet ps;
  gamma.mlp.register_into(ps, "gamma");
  ps.add("tokenizer.w", tokenizer_w);
  ps.add("tokenizer.b", tokenizer_b);
  time_proj.register_into(ps, "time_proj");
  for (int b = 0; b < n_blocks; ++b) {
    attn[b].register_into(ps, "attn" + std::to_string(b));
    ps.add("attn" + std::to_string(b) + ".wo", attn_out[b]);
    block_mlp[b].register_into(ps, "block_mlp" + std::to_string(b));
  }
  out_mlp.register_into(ps, "out_mlp");
  return ps;
}

void DenoiserParams::save(const std::string& path, const DdpmSchedule& sched) const {
  DenoiserParams copy = *this;
  ParamSet ps = copy.trainable();
  NamedTensors ts;
  ts.emplace_back("meta", Tensor::from({5}, {static_cast<double>(d_z),
                                             static_cast<double>(q_tokens),
                                             static_cast<double>(c_tokens),
                                             static_cast<double>(n_blocks),
                                             static_cast<double>(sched.T)}));
  ts.emplace_back("schedule.beta",
                  Tensor::from({static_cast<std::int64_t>(sched.beta.size())}, sched.beta));
  for (auto& [name, t] : ps.items) ts.emplace_back(name, t);
  save_kd3d(path, ts);
}

std::pair<DenoiserParams, DdpmSchedule> DenoiserParams::load(const std::string& path) {
  const NamedTensors ts = load_kd3d(path);
  const Tensor& meta = kd3d_get(ts, "meta");
  Rng scratch(0);
  DenoiserParams p = init(static_cast<int>(meta.data()[0]), scratch);

  DdpmSchedule sched;
  sched.T = static_cast<int>(meta.data()[4]);
  sched.beta = kd3d_get(ts, "schedule.beta").values();
  sched.alpha_bar.resize(sched.T);
  sched.sigma.resize(sched.T);
  double prod = 1.0;
  for (int t = 0; t < sched.T; ++t) {
    prod *= 1.0 - sched.beta[t];
    sched.alpha_bar[t] = prod;
    sched.sigma[t] = std::sqrt(sched.beta[t]);
  }
  sched.validate();

  ParamSet loaded;
  for (const auto& [name, t] : ts)
    if (name != "meta" && name != "schedule.beta") loaded.add(name, t);
  p.gamma.mlp.load_from(loaded, "gamma");
  auto grab = [&](const std::string& name) {
    const Tensor* t = loaded.find(name);
    if (!t) throw IoError("checkpoint missing tensor " + name);
    return *t;
  };
  p.tokenizer_w = grab("tokenizer.w");
  p.tokenizer_b = grab("tokenizer.b");
  p.time_proj.load_from(loaded, "time_proj");
  for (int b = 0; b < p.n_blocks; ++b) {
    p.attn[b].load_from(loaded, "attn" + std::to_string(b));
    p.attn_out[b] = grab("attn" + std::to_string(b) + ".wo");
    p.block_mlp[b].load_from(loaded, "block_mlp" + std::to_string(b));
  }
  p.out_mlp.load_from(loaded, "out_mlp");
  return {p, sched};
}

Tensor condition_tokens(DenoiserParams& params, const PointCloud& cloud, Rng& rng) {
  if (cloud.points.empty()) throw ContractError("condition_tokens: empty cloud");
  const auto keep = farthest_point_indices(cloud.points, params.c_tokens, rng);
  std::vector<double> flat;
  flat.reserve(keep.size() * 3);
  for (int idx : keep) {
    const Vec3& p = cloud.points[idx];
    flat.insert(flat.end(), {p.x, p.y, p.z});
  }
  Tensor pts = Tensor::from({static_cast<std::int64_t>(keep.size()), 3}, std::move(flat));
  return point_features(params.gamma, pts);
}

Tensor denoise_forward(DenoiserParams& params, const Tensor& z_t_row, int t,
                       const Tensor& context_tokens, const DdpmSchedule& sched) {
  if (t < 1 || t > sched.T) throw ContractError("denoise_forward: t outside schedule");
  if (z_t_row.shape() != std::vector<std::int64_t>{1, params.d_z})
    throw DimensionError("denoise_forward: z_t shape " + shape_str(z_t_row.shape()));

  Tensor temb = sinusoidal_time_embed(static_cast<double>(t), params.time_dim);
  Tensor tproj = mlp_forward(params.time_proj, temb);  // [1 x d_model]

  Tensor flat_tokens = add_rowvec(matmul(z_t_row, params.tokenizer_w), params.tokenizer_b);
  Tensor x = add_rowvec(reshape(flat_tokens, {params.q_tokens, params.d_model}), tproj);
  for (int b = 0; b < params.n_blocks; ++b) {
    Tensor att = cross_attention(params.attn[b], x, context_tokens);
    x = add(x, matmul(att, params.attn_out[b]));
    x = add(x, mlp_forward(params.block_mlp[b], x));
  }
  Tensor row = reshape(x, {1, params.q_tokens * params.d_model});
  return mlp_forward(params.out_mlp, concat_cols(row, temb));
}

std::vector<double> denoise_predict(DenoiserParams& params, const std::vector<double>& z_t,
                                    int t, const PointCloud& cloud, const DdpmSchedule& sched) {
  if (cloud.points.empty()) throw ContractError("denoise_predict: empty condition cloud");
  Rng rng(0x5eedULL);  // fixed FPS start keeps single-shot predicts deterministic
  Tensor ctx = detach(condition_tokens(params, cloud, rng));
  return denoise_forward(params, Tensor::row(z_t), t, ctx, sched).values();
}

Tensor diff_loss(DenoiserParams& params, const std::vector<const LatentPair*>& batch,
                 const DdpmSchedule& sched, Rng& rng) {
  if (batch.empty()) throw ContractError("diff_loss: empty batch");
  Tensor total = Tensor::scalar(0.0);
  for (const LatentPair* s : batch) {
    const int t = 1 + static_cast<int>(rng.uniform_index(sched.T));
    std::vector<double> xi(s->z0.size());
    for (auto& v : xi) v = rng.normal();
    const std::vector<double> z_t = ddpm_forward(s->z0, t, xi, sched);
    Tensor cond = Tensor::from({s->n_cond, 3}, s->cond_cloud);
    Tensor ctx = point_features(params.gamma, cond);
    Tensor pred = denoise_forward(params, Tensor::row(z_t), t, ctx, sched);
    Tensor resid = sub(pred, Tensor::row(s->z0));
    total = add(total, sqrt_t(add_const(sum_sq(resid), 1e-18)));
  }
  return scale(total, 1.0 / static_cast<double>(batch.size()));
}

LatentDiffTrainResult train_latentdiff(const std::vector<LatentPair>& data, int d_z,
                                       const LatentDiffConfig& cfg) {
  if (data.empty()) throw ContractError("train_latentdiff: empty dataset");
  cfg.sched.validate();
  Rng init_rng = Rng(cfg.seed).fork("latentdiff_init");
  LatentDiffTrainResult result;
  result.params = DenoiserParams::init(d_z, init_rng);
  ParamSet ps = result.params.trainable();
  Adam opt({cfg.lr});
  Rng rng = Rng(cfg.seed).fork("latentdiff_train");
  double ema = 0.0;
  for (int step = 0; step < cfg.steps; ++step) {
    std::vector<const LatentPair*> batch;
    for (int b = 0; b < cfg.batch; ++b)
      batch.push_back(&data[rng.uniform_index(data.size())]);
    Tensor loss = diff_loss(result.params, batch, cfg.sched, rng);
    const double val = loss.item();
    if (!std::isfinite(val))
      throw Error("train_latentdiff: loss diverged at step " + std::to_string(step));
    ps.zero_grad();
    backward(loss);
    opt.step(ps);
    ema = step == 0 ? val : 0.98 * ema + 0.02 * val;
    if (step % 200 == 0 || step + 1 == cfg.steps) result.loss_log.emplace_back(step, ema);
  }
  return result;
}

std::vector<double> sample_latent(DenoiserParams& params, const PointCloud& cond_cloud,
                                  const DdpmSchedule& sched, Rng& rng,
                                  const SampleLatentOptions& opt) {
  if (cond_cloud.points.empty()) throw ContractError("sample_latent: empty condition cloud");
  Rng fps_rng = rng.fork("fps");
  Tensor ctx = detach(condition_tokens(params, cond_cloud, fps_rng));

  Rng noise = rng.fork("noise");
  std::vector<double> z(params.d_z);
  for (auto& v : z) v = noise.normal();  // z_T ~ N(0, I)

  for (int t = sched.T; t >= 1; --t) {
    const std::vector<double> pred =
        denoise_forward(params, Tensor::row(z), t, ctx, sched).values();
    if (opt.posterior == "standard" && t > 1) {
      // conventional q(z_{t-1} | z_t, z0_hat) mean
      const double ab_t = sched.alpha_bar[t - 1];
      const double ab_prev = sched.alpha_bar[t - 2];
      const double beta_t = sched.beta[t - 1];
      const double alpha_t = 1.0 - beta_t;
      const double c0 = std::sqrt(ab_prev) * beta_t / (1.0 - ab_t);
      const double c1 = std::sqrt(alpha_t) * (1.0 - ab_prev) / (1.0 - ab_t);
      const double post_var = (1.0 - ab_prev) / (1.0 - ab_t) * beta_t;
      for (std::size_t i = 0; i < z.size(); ++i)
        z[i] = c0 * pred[i] + c1 * z[i] + std::sqrt(post_var) * noise.normal();
    } else if (t > 1) {
      // literal z0-prediction update with fixed per-step std
      for (std::size_t i = 0; i < z.size(); ++i)
        z[i] = pred[i] + sched.sigma[t - 1] * noise.normal();
    } else {
      z = pred;  // final step adds no noise
    }
  }
  return z;
}

PointCloud canonicalize(const PointCloud& obs, const std::vector<Pose>& poses,
                        const std::vector<int>& assignment) {
  if (assignment.size() != obs.points.size())
    throw ContractError("canonicalize: assignment does not cover all points");
  PointCloud out;
  out.points.resize(obs.points.size());
  out.labels = assignment;
  for (std::size_t i = 0; i < obs.points.size(); ++i) {
    const int k = assignment[i];
    if (k < 0 || k >= static_cast<int>(poses.size()))
      throw ContractError("canonicalize: part id " + std::to_string(k) + " has no pose");
    out.points[i] = poses[k].apply_inverse(obs.points[i]);
  }
  return out;
}

TriMesh novel_articulation(KaVaeParams& kavae, const std::vector<double>& z,
                           const std::vector<double>& angles_new,
                           const std::vector<std::pair<double, double>>& limits,
                           const MeshGrid& grid) {
  if (angles_new.size() != limits.size())
    throw DimensionError("novel_articulation: angle/limit count mismatch");
  for (std::size_t j = 0; j < angles_new.size(); ++j)
    if (angles_new[j] < limits[j].first - 1e-12 || angles_new[j] > limits[j].second + 1e-12)
      throw JointLimitError("novel_articulation: angle " + std::to_string(angles_new[j]) +
                            " outside joint " + std::to_string(j) + " limits");
  return reconstruct_mesh(kavae, z, angles_new, grid);
}

}  // namespace kinediff
