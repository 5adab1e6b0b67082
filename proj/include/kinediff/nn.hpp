// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "kinediff/rng.hpp"
#include "kinediff/tensor.hpp"

namespace kinediff {

enum class Act { relu, tanh, none };

Act act_from_string(const std::string& s);
std::string act_to_string(Act a);

// Layer widths plus one activation per hidden layer; the final layer is
// always affine.
struct MlpSpec {
  std::vector<std::int64_t> layer_widths;
  std::vector<Act> activations;

  MlpSpec() = default;
  MlpSpec(std::vector<std::int64_t> widths, Act uniform_act);
  void validate() const;
  std::size_t num_layers() const { return layer_widths.size() - 1; }
};

// Named parameter list with stable insertion order (checkpoint layout and
// optimizer state index off it).
struct ParamSet {
  std::vector<std::pair<std::string, Tensor>> items;

  Tensor& add(const std::string& name, Tensor t);
  Tensor* find(const std::string& name);
  const Tensor* find(const std::string& name) const;
  void zero_grad();
  std::size_t size() const { return items.size(); }
};

// Uniform in +-sqrt(6/(fan_in+fan_out)).
Tensor glorot_init(Rng& rng, std::int64_t fan_in, std::int64_t fan_out, bool requires_grad = true);

struct MlpParams {
  MlpSpec spec;
  std::vector<Tensor> weights;  // [in x out] per layer
  std::vector<Tensor> biases;   // [1 x out]

  static MlpParams init(const MlpSpec& spec, Rng& rng);
  void register_into(ParamSet& ps, const std::string& prefix);
  void load_from(const ParamSet& ps, const std::string& prefix);
};

// Affine + activation per layer, last layer affine only.
Tensor mlp_forward(const MlpParams& mlp, const Tensor& input);

// Shared per-point MLP followed by coordinate-wise max pooling; exactly
// permutation invariant in the rows of cloud.
struct PointEncoderParams {
  MlpParams mlp;
  static PointEncoderParams init(const std::vector<std::int64_t>& widths, Rng& rng);
};

Tensor point_encode(const PointEncoderParams& enc, const Tensor& cloud);
// Per-point features without pooling ([N x d]); used for context tokens.
Tensor point_features(const PointEncoderParams& enc, const Tensor& cloud);

// softmax(q Wq (c Wk)^T / sqrt(d)) (c Wv). Output rows are convex
// combinations of value-projected context rows.
struct CrossAttentionParams {
  Tensor wq, wk, wv;  // [d x d]
  static CrossAttentionParams init(std::int64_t d, Rng& rng);
  void register_into(ParamSet& ps, const std::string& prefix);
  void load_from(const ParamSet& ps, const std::string& prefix);
};

Tensor cross_attention(const CrossAttentionParams& p, const Tensor& query,
                       const Tensor& context);

// [1 x dim] with sin/cos pairs at geometric frequencies 2^0..2^(dim/2-1).
Tensor sinusoidal_time_embed(double t, std::int64_t dim = 64);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}
  void step(ParamSet& params);
  void set_lr(double lr) { cfg_.lr = lr; }
  double lr() const { return cfg_.lr; }

 private:
  AdamConfig cfg_;
  std::int64_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

}  // namespace kinediff
