// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "kinediff/geometry.hpp"
#include "kinediff/kavae.hpp"
#include "kinediff/nn.hpp"
#include "kinediff/rng.hpp"

namespace kinediff {

struct DdpmSchedule {
  int T = 100;
  std::vector<double> beta;       // 1-indexed conceptually; beta[t-1]
  std::vector<double> alpha_bar;  // alpha_bar[t-1] = prod_{s<=t} (1 - beta_s)
  std::vector<double> sigma;      // per-step noise std, sqrt(beta_t)

  // Linear beta ramp. The default end value keeps alpha_bar_T below 0.05 at
  // T = 100 so z_T is statistically indistinguishable from N(0, I).
  static DdpmSchedule linear(int T = 100, double beta_start = 1e-4, double beta_end = 0.065);
  void validate() const;
};

// z_t = sqrt(alpha_bar_t) z0 + sqrt(1 - alpha_bar_t) xi, t in 1..T.
std::vector<double> ddpm_forward(const std::vector<double>& z0, int t,
                                 const std::vector<double>& xi, const DdpmSchedule& sched);

// Conditional denoiser predicting z0 directly. Cross-attention blocks use
// the latent tokens as queries against context tokens from the
// canonicalized partial cloud.
struct DenoiserParams {
  int d_z = 64;
  int d_model = 128;
  int q_tokens = 4;
  int c_tokens = 64;
  int time_dim = 64;
  int n_blocks = 2;

  PointEncoderParams gamma;  // per-point features [3,128,d_model]
  Tensor tokenizer_w;        // [d_z, q_tokens * d_model]
  Tensor tokenizer_b;        // [1, q_tokens * d_model]
  MlpParams time_proj;       // [time_dim, d_model]
  std::vector<CrossAttentionParams> attn;
  std::vector<Tensor> attn_out;  // [d_model, d_model] per block
  std::vector<MlpParams> block_mlp;  // [d_model, 256, d_model]
  MlpParams out_mlp;  // [q_tokens*d_model + time_dim, 256, d_z]

  static DenoiserParams init(int d_z, Rng& rng);
  ParamSet trainable();
  void save(const std::string& path, const DdpmSchedule& sched) const;
  static std::pair<DenoiserParams, DdpmSchedule> load(const std::string& path);
};

// Context tokens from the canonicalized partial cloud: FPS subsample then
// per-point features (no pooling).
Tensor condition_tokens(DenoiserParams& params, const PointCloud& cloud, Rng& rng);

Tensor denoise_forward(DenoiserParams& params, const Tensor& z_t_row, int t,
                       const Tensor& context_tokens, const DdpmSchedule& sched);

// Convenience single-shot predict (encodes the condition internally).
std::vector<double> denoise_predict(DenoiserParams& params, const std::vector<double>& z_t,
                                    int t, const PointCloud& cloud, const DdpmSchedule& sched);

struct LatentPair {
  std::vector<double> z0;         // D_z target code
  std::vector<double> cond_cloud; // M*3 canonicalized partial points (FPS'd)
  std::int64_t n_cond = 0;
};

// mean_batch || eps_theta(z_t, t, Gamma(C)) - z0 ||_2, t ~ U{1..T}.
Tensor diff_loss(DenoiserParams& params, const std::vector<const LatentPair*>& batch,
                 const DdpmSchedule& sched, Rng& rng);

struct LatentDiffConfig {
  int steps = 6000;
  int batch = 16;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  DdpmSchedule sched = DdpmSchedule::linear();
};

struct LatentDiffTrainResult {
  DenoiserParams params;
  std::vector<std::pair<int, double>> loss_log;
};

LatentDiffTrainResult train_latentdiff(const std::vector<LatentPair>& data, int d_z,
                                       const LatentDiffConfig& cfg);

// Reverse loop per the z0-prediction update: z_{t-1} = prediction + sigma_t xi
// ("literal"); "standard" uses the conventional posterior mean instead.
struct SampleLatentOptions {
  std::string posterior = "literal";
};

std::vector<double> sample_latent(DenoiserParams& params, const PointCloud& cond_cloud,
                                  const DdpmSchedule& sched, Rng& rng,
                                  const SampleLatentOptions& opt = {});

// Per-point inverse rigid transform into part-local space:
// p -> R_k^T (p - t_k) for the point's assigned part.
PointCloud canonicalize(const PointCloud& obs, const std::vector<Pose>& poses,
                        const std::vector<int>& assignment);

// Decode a new articulation for an existing latent code (no re-diffusion).
TriMesh novel_articulation(KaVaeParams& kavae, const std::vector<double>& z,
                           const std::vector<double>& angles_new,
                           const std::vector<std::pair<double, double>>& limits,
                           const MeshGrid& grid);

}  // namespace kinediff
