// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "kinediff/geometry.hpp"
#include "kinediff/nn.hpp"
#include "kinediff/rng.hpp"
#include "kinediff/tensor.hpp"

namespace kinediff {

struct KaVaeLossWeights {
  double lambda_sdf = 1.0;
  double lambda_seg = 0.1;
  double lambda_angle = 0.1;
  double beta_kl = 1e-3;
  double prior_std = 0.25;
};

struct KaVaeConfig {
  int d_z = 64;
  int part_count = 2;
  int cloud_points = 2048;
  int queries_per_step = 2048;
  int epochs = 8;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  KaVaeLossWeights weights;
};

// Networks of the kinematic-aware VAE. The angle head reads the decoded
// feature directly so the predicted angles are independent of the queries.
struct KaVaeParams {
  int d_z = 64;
  int part_count = 2;
  double prior_std = 0.25;
  PointEncoderParams phi;  // [3,128,128] + max pool
  MlpParams enc;           // [128,128,2*d_z] -> (mu, softplus sigma^2)
  MlpParams psi;           // [K-1,64,d_z]
  MlpParams dec;           // [2*d_z,256,256] -> F_kg
  MlpParams trunk;         // [3+256,256,256,256,256]
  MlpParams sdf_head;      // [256,1]
  MlpParams seg_head;      // [256,K]
  MlpParams angle_head;    // [256,64,K-1]

  static KaVaeParams init(int d_z, int part_count, Rng& rng);
  ParamSet trainable();
  void save(const std::string& path) const;
  static KaVaeParams load(const std::string& path);
};

// F_g = Phi(P), [mu, sigma^2] = enc(F_g); permutation-invariant in P.
std::pair<Tensor, Tensor> kavae_encode(KaVaeParams& params, const Tensor& cloud);

// z = mu + sqrt(sigma^2) * eps; gradients flow into mu and sigma^2.
Tensor reparameterize(const Tensor& mu, const Tensor& sig2, const Tensor& eps);

Tensor decode_feature(KaVaeParams& params, const Tensor& z, const Tensor& angles);

struct KaVaeDecoded {
  Tensor sdf;         // [L x 1]
  Tensor seg_logits;  // [L x K]
  Tensor angles;      // [1 x (K-1)]
};

KaVaeDecoded kavae_decode(KaVaeParams& params, const Tensor& z, const Tensor& angles,
                          const Tensor& queries);

// D_KL(N(mu, sigma^2) || N(0, prior_std^2)), summed over dimensions.
Tensor kl_to_prior(const Tensor& mu, const Tensor& sig2, double prior_std);

struct KaVaeLossParts {
  double total = 0, sdf = 0, seg = 0, angle = 0, kl = 0;
};

Tensor kavae_loss(const KaVaeDecoded& decoded, const Tensor& sdf_target,
                  const std::vector<int>& seg_target, const Tensor& angle_target,
                  const Tensor& mu, const Tensor& sig2, const KaVaeLossWeights& w,
                  KaVaeLossParts* parts = nullptr);

// One (instance, state) training sample.
struct KaVaeSample {
  std::vector<double> cloud;   // N*3 complete cloud, canonical frame
  std::vector<double> angles;  // K-1
  std::vector<double> q;       // L*3 query points
  std::vector<double> sdf;     // L
  std::vector<int> seg;        // L
  std::int64_t n_cloud = 0, n_q = 0;
};

struct TrainEpochLog {
  int epoch = 0;
  KaVaeLossParts mean;
};

struct KaVaeTrainResult {
  KaVaeParams params;
  std::vector<TrainEpochLog> log;
};

// Deterministic given cfg.seed; one (instance, state) per step. Throws on
// divergence, naming the epoch.
KaVaeTrainResult train_kavae(const std::vector<KaVaeSample>& data, const KaVaeConfig& cfg);

struct MeshGrid {
  Vec3 origin;
  double cell = 0.02;
  int res = 64;  // grid points per axis
  static MeshGrid cube(const Vec3& center, double half_extent, int res);
};

// Decode SDF on the grid (two-level sparse evaluation), extract the surface,
// label faces by the majority segmentation of their vertices. Empty result
// means the decoded field has no zero crossing.
TriMesh reconstruct_mesh(KaVaeParams& params, const std::vector<double>& z,
                         const std::vector<double>& angles, const MeshGrid& grid,
                         bool sparse = true);

}  // namespace kinediff
