// SPDX-License-Identifier: Apache-2.0
#include "kinediff/nn.hpp"

#include <cmath>

#include "kinediff/errors.hpp"

namespace kinediff {

Act act_from_string(const std::string& s) {
  if (s == "relu") return Act::relu;
  if (s == "tanh") return Act::tanh;
  if (s == "none") return Act::none;
  throw ContractError("unknown activation: " + s);
}

std::string act_to_string(Act a) {
  switch (a) {
    case Act::relu: return "relu";
    case Act::tanh: return "tanh";
    default: return "none";
  }
}

MlpSpec::MlpSpec(std::vector<std::int64_t> widths, Act uniform_act)
    : layer_widths(std::move(widths)) {
  if (layer_widths.size() >= 2)
    activations.assign(layer_widths.size() - 2, uniform_act);
  validate();
}

void MlpSpec::validate() const {
  if (layer_widths.size() < 2)
    throw ContractError("MlpSpec: need at least input and output widths, got " +
                        std::to_string(layer_widths.size()));
  for (auto w : layer_widths)
    if (w <= 0) throw ContractError("MlpSpec: non-positive layer width");
  if (activations.size() != layer_widths.size() - 2)
    throw ContractError("MlpSpec: expected one activation per hidden layer");
}

Tensor& ParamSet::add(const std::string& name, Tensor t) {
  items.emplace_back(name, std::move(t));
  return items.back().second;
}

Tensor* ParamSet::find(const std::string& name) {
  for (auto& [n, t] : items)
    if (n == name) return &t;
  return nullptr;
}

const Tensor* ParamSet::find(const std::string& name) const {
  for (auto& [n, t] : items)
    if (n == name) return &t;
  return nullptr;
}

void ParamSet::zero_grad() {
  for (auto& [n, t] : items) t.zero_grad();
}

Tensor glorot_init(Rng& rng, std::int64_t fan_in, std::int64_t fan_out, bool requires_grad) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::vector<double> data(static_cast<std::size_t>(fan_in * fan_out));
  for (auto& v : data) v = rng.uniform(-bound, bound);
  return Tensor::from({fan_in, fan_out}, std::move(data), requires_grad);
}

MlpParams MlpParams::init(const MlpSpec& spec, Rng& rng) {
  spec.validate();
  MlpParams p;
  p.spec = spec;
  for (std::size_t l = 0; l + 1 < spec.layer_widths.size(); ++l) {
    const std::int64_t fi = spec.layer_widths[l];
    const std::int64_t fo = spec.layer_widths[l + 1];
    p.weights.push_back(glorot_init(rng, fi, fo));
    p.biases.push_back(Tensor::zeros({1, fo}, true));
  }
  return p;
}

void MlpParams::register_into(ParamSet& ps, const std::string& prefix) {
  for (std::size_t l = 0; l < weights.size(); ++l) {
    ps.add(prefix + ".w" + std::to_string(l), weights[l]);
    ps.add(prefix + ".b" + std::to_string(l), biases[l]);
  }
}

void MlpParams::load_from(const ParamSet& ps, const std::string& prefix) {
  for (std::size_t l = 0; l < weights.size(); ++l) {
    const Tensor* w = ps.find(prefix + ".w" + std::to_string(l));
    const Tensor* b = ps.find(prefix + ".b" + std::to_string(l));
    if (!w || !b) throw IoError("checkpoint missing tensors for " + prefix);
    if (w->shape() != weights[l].shape() || b->shape() != biases[l].shape())
      throw IoError("checkpoint shape mismatch for " + prefix);
    weights[l] = *w;
    biases[l] = *b;
  }
}

Tensor mlp_forward(const MlpParams& mlp, const Tensor& input) {
  if (input.shape().size() != 2 || input.shape()[1] != mlp.spec.layer_widths.front())
    throw DimensionError("mlp_forward: input " + shape_str(input.shape()) +
                         " does not match first width " +
                         std::to_string(mlp.spec.layer_widths.front()));
  Tensor x = input;
  const std::size_t n = mlp.weights.size();
  for (std::size_t l = 0; l < n; ++l) {
    x = add_rowvec(matmul(x, mlp.weights[l]), mlp.biases[l]);
    if (l + 1 < n) {
      switch (mlp.spec.activations[l]) {
        case Act::relu: x = relu(x); break;
        case Act::tanh: x = tanh_t(x); break;
        case Act::none: break;
      }
    }
  }
  return x;
}

PointEncoderParams PointEncoderParams::init(const std::vector<std::int64_t>& widths, Rng& rng) {
  PointEncoderParams p;
  p.mlp = MlpParams::init(MlpSpec(widths, Act::relu), rng);
  return p;
}

Tensor point_features(const PointEncoderParams& enc, const Tensor& cloud) {
  if (cloud.shape().size() != 2 || cloud.shape()[0] < 1)
    throw ContractError("point encoder: empty cloud");
  return mlp_forward(enc.mlp, cloud);
}

Tensor point_encode(const PointEncoderParams& enc, const Tensor& cloud) {
  return max_over_rows(point_features(enc, cloud));
}

CrossAttentionParams CrossAttentionParams::init(std::int64_t d, Rng& rng) {
  CrossAttentionParams p;
  p.wq = glorot_init(rng, d, d);
  p.wk = glorot_init(rng, d, d);
  p.wv = glorot_init(rng, d, d);
  return p;
}

void CrossAttentionParams::register_into(ParamSet& ps, const std::string& prefix) {
  ps.add(prefix + ".wq", wq);
  ps.add(prefix + ".wk", wk);
  ps.add(prefix + ".wv", wv);
}

void CrossAttentionParams::load_from(const ParamSet& ps, const std::string& prefix) {
  const Tensor* q = ps.find(prefix + ".wq");
  const Tensor* k = ps.find(prefix + ".wk");
  const Tensor* v = ps.find(prefix + ".wv");
  if (!q || !k || !v) throw IoError("checkpoint missing tensors for " + prefix);
  wq = *q;
  wk = *k;
  wv = *v;
}

Tensor cross_attention(const CrossAttentionParams& p, const Tensor& query,
                       const Tensor& context) {
  if (query.shape().size() != 2 || context.shape().size() != 2 ||
      query.shape()[1] != context.shape()[1])
    throw DimensionError("cross_attention: feature width mismatch " +
                         shape_str(query.shape()) + " vs " + shape_str(context.shape()));
  const double d = static_cast<double>(query.shape()[1]);
  Tensor q = matmul(query, p.wq);
  Tensor k = matmul(context, p.wk);
  Tensor v = matmul(context, p.wv);
  Tensor scores = scale(matmul(q, transpose(k)), 1.0 / std::sqrt(d));
  return matmul(softmax_rows(scores), v);
}

Tensor sinusoidal_time_embed(double t, std::int64_t dim) {
  if (dim % 2 != 0) throw ContractError("sinusoidal_time_embed: dim must be even");
  std::vector<double> e(static_cast<std::size_t>(dim));
  double freq = 1.0;
  for (std::int64_t i = 0; i < dim / 2; ++i) {
    e[2 * i] = std::sin(freq * t);
    e[2 * i + 1] = std::cos(freq * t);
    freq *= 2.0;
  }
  return Tensor::row(e);
}

void Adam::step(ParamSet& params) {
  if (m_.empty()) {
    m_.resize(params.size());
    v_.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i].assign(params.items[i].second.size(), 0.0);
      v_[i].assign(params.items[i].second.size(), 0.0);
    }
  }
  if (m_.size() != params.size())
    throw ContractError("Adam: parameter set changed size");
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = params.items[i].second;
    if (!p.has_grad()) continue;
    const std::vector<double>& g = p.grad();
    double* x = p.mutable_data();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < g.size(); ++j) {
      m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g[j];
      v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g[j] * g[j];
      const double mh = m[j] / bc1;
      const double vh = v[j] / bc2;
      x[j] -= cfg_.lr * mh / (std::sqrt(vh) + cfg_.eps);
    }
  }
}

}  // namespace kinediff
