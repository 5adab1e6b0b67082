// SPDX-License-Identifier: Apache-2.0
#include "kinediff/kavae.hpp"

#include <algorithm>
#include <cmath>

#include "kinediff/checkpoint.hpp"
#include "kinediff/errors.hpp"
#include "kinediff/parallel.hpp"

namespace kinediff {

KaVaeParams KaVaeParams::init(int d_z, int part_count, Rng& rng) {
  KaVaeParams p;
  p.d_z = d_z;
  p.part_count = part_count;
  p.phi = PointEncoderParams::init({3, 128, 128}, rng);
  p.enc = MlpParams::init(MlpSpec({128, 128, 2 * d_z}, Act::relu), rng);
  p.psi = MlpParams::init(MlpSpec({part_count - 1, 64, d_z}, Act::relu), rng);
  p.dec = MlpParams::init(MlpSpec({2 * d_z, 256, 256}, Act::relu), rng);
  p.trunk = MlpParams::init(MlpSpec({3 + 256, 256, 256, 256, 256}, Act::relu), rng);
  p.sdf_head = MlpParams::init(MlpSpec({256, 1}, Act::relu), rng);
  p.seg_head = MlpParams::init(MlpSpec({256, part_count}, Act::relu), rng);
  p.angle_head = MlpParams::init(MlpSpec({256, 64, part_count - 1}, Act::relu), rng);
  return p;
}

ParamSet KaVaeParams::trainable() {
  ParamSet ps;
  phi.mlp.register_into(ps, "phi");
  enc.register_into(ps, "enc");
  psi.register_into(ps, "psi");
  dec.register_into(ps, "dec");
  trunk.register_into(ps, "trunk");
  sdf_head.register_into(ps, "sdf_head");
  seg_head.register_into(ps, "seg_head");
  angle_head.register_into(ps, "angle_head");
  return ps;
}

void KaVaeParams::save(const std::string& path) const {
  KaVaeParams copy = *this;
  ParamSet ps = copy.trainable();
  NamedTensors ts;
  ts.emplace_back("meta", Tensor::from({3}, {static_cast<double>(d_z),
                                             static_cast<double>(part_count), prior_std}));
  for (auto& [name, t] : ps.items) ts.emplace_back(name, t);
  save_kd3d(path, ts);
}

KaVaeParams KaVaeParams::load(const std::string& path) {
  const NamedTensors ts = load_kd3d(path);
  const Tensor& meta = kd3d_get(ts, "meta");
  Rng scratch(0);
  KaVaeParams p = init(static_cast<int>(meta.data()[0]), static_cast<int>(meta.data()[1]),
                       scratch);
  p.prior_std = meta.data()[2];
  ParamSet loaded;
  for (const auto& [name, t] : ts)
    if (name != "meta") loaded.add(name, t);
  p.phi.mlp.load_from(loaded, "phi");
  p.enc.load_from(loaded, "enc");
  p.psi.load_from(loaded, "psi");
  p.dec.load_from(loaded, "dec");
  p.trunk.load_from(loaded, "trunk");
  p.sdf_head.load_from(loaded, "sdf_head");
  p.seg_head.load_from(loaded, "seg_head");
  p.angle_head.load_from(loaded, "angle_head");
  return p;
}

std::pair<Tensor, Tensor> kavae_encode(KaVaeParams& params, const Tensor& cloud) {
  if (cloud.shape().size() != 2 || cloud.shape()[0] < 1)
    throw ContractError("kavae_encode: empty point cloud");
  Tensor fg = point_encode(params.phi, cloud);
  Tensor h = mlp_forward(params.enc, fg);
  Tensor mu = slice_cols(h, 0, params.d_z);
  Tensor sig2 = add_const(softplus(slice_cols(h, params.d_z, 2 * params.d_z)), 1e-6);
  return {mu, sig2};
}

Tensor reparameterize(const Tensor& mu, const Tensor& sig2, const Tensor& eps) {
  for (double v : sig2.values())
    if (v <= 0.0) throw ContractError("reparameterize: sigma^2 must be positive");
  return add(mu, mul(sqrt_t(sig2), eps));
}

Tensor decode_feature(KaVaeParams& params, const Tensor& z, const Tensor& angles) {
  Tensor alpha = mlp_forward(params.psi, angles);
  return mlp_forward(params.dec, concat_cols(z, alpha));
}

namespace {

std::pair<Tensor, Tensor> decode_queries(KaVaeParams& params, const Tensor& fkg,
                                         const Tensor& queries) {
  const std::int64_t L = queries.shape()[0];
  Tensor input = concat_cols(queries, repeat_row(fkg, L));
  Tensor feat = mlp_forward(params.trunk, input);
  return {mlp_forward(params.sdf_head, feat), mlp_forward(params.seg_head, feat)};
}

}  // namespace

KaVaeDecoded kavae_decode(KaVaeParams& params, const Tensor& z, const Tensor& angles,
                          const Tensor& queries) {
  if (z.shape() != std::vector<std::int64_t>{1, params.d_z})
    throw DimensionError("kavae_decode: z shape " + shape_str(z.shape()));
  Tensor fkg = decode_feature(params, z, angles);
  auto [sdf, seg] = decode_queries(params, fkg, queries);
  KaVaeDecoded out;
  out.sdf = sdf;
  out.seg_logits = seg;
  out.angles = mlp_forward(params.angle_head, fkg);
  return out;
}

Tensor kl_to_prior(const Tensor& mu, const Tensor& sig2, double prior_std) {
  for (double v : sig2.values())
    if (v <= 0.0) throw ContractError("kl_to_prior: sigma^2 must be positive");
  const double p2 = prior_std * prior_std;
  // sum_d: log(p) - 0.5 log(sigma^2) + (sigma^2 + mu^2) / (2 p^2) - 0.5
  Tensor terms = add_const(
      add(scale(log_t(sig2), -0.5), scale(add(sig2, square(mu)), 1.0 / (2.0 * p2))),
      std::log(prior_std) - 0.5);
  return sum(terms);
}

Tensor kavae_loss(const KaVaeDecoded& decoded, const Tensor& sdf_target,
                  const std::vector<int>& seg_target, const Tensor& angle_target,
                  const Tensor& mu, const Tensor& sig2, const KaVaeLossWeights& w,
                  KaVaeLossParts* parts) {
  Tensor sdf_l1 = mean(abs_t(sub(decoded.sdf, sdf_target)));
  Tensor seg_ce = cross_entropy_with_logits(decoded.seg_logits, seg_target);
  Tensor ang_l1 = mean(abs_t(sub(decoded.angles, angle_target)));
  Tensor kl = kl_to_prior(mu, sig2, w.prior_std);
  Tensor total = add(add(scale(sdf_l1, w.lambda_sdf), scale(seg_ce, w.lambda_seg)),
                     add(scale(ang_l1, w.lambda_angle), scale(kl, w.beta_kl)));
  if (parts) {
    parts->sdf = sdf_l1.item();
    parts->seg = seg_ce.item();
    parts->angle = ang_l1.item();
    parts->kl = kl.item();
    parts->total = total.item();
  }
  return total;
}

KaVaeTrainResult train_kavae(const std::vector<KaVaeSample>& data, const KaVaeConfig& cfg) {
  if (data.empty()) throw ContractError("train_kavae: empty dataset");
  Rng init_rng = Rng(cfg.seed).fork("kavae_init");
  KaVaeTrainResult result;
  result.params = KaVaeParams::init(cfg.d_z, cfg.part_count, init_rng);
  result.params.prior_std = cfg.weights.prior_std;
  ParamSet ps = result.params.trainable();
  Adam opt({cfg.lr});
  Rng train_rng = Rng(cfg.seed).fork("kavae_train");

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    // seeded shuffle of the (instance, state) order
    std::vector<std::size_t> order(data.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[train_rng.uniform_index(i)]);

    KaVaeLossParts epoch_mean;
    for (std::size_t idx : order) {
      const KaVaeSample& s = data[idx];
      // query subsample for this step
      const std::int64_t L =
          std::min<std::int64_t>(cfg.queries_per_step, s.n_q);
      std::vector<double> q(L * 3), sdf_t(L);
      std::vector<int> seg_t(L);
      for (std::int64_t i = 0; i < L; ++i) {
        const std::int64_t j =
            static_cast<std::int64_t>(train_rng.uniform_index(s.n_q));
        q[3 * i] = s.q[3 * j];
        q[3 * i + 1] = s.q[3 * j + 1];
        q[3 * i + 2] = s.q[3 * j + 2];
        sdf_t[i] = s.sdf[j];
        seg_t[i] = s.seg[j];
      }
      Tensor cloud = Tensor::from({s.n_cloud, 3}, s.cloud);
      Tensor queries = Tensor::from({L, 3}, std::move(q));
      Tensor sdf_target = Tensor::from({L, 1}, std::move(sdf_t));
      Tensor angle_target = Tensor::row(s.angles);
      std::vector<double> eps(cfg.d_z);
      for (auto& e : eps) e = train_rng.normal();

      auto [mu, sig2] = kavae_encode(result.params, cloud);
      Tensor z = reparameterize(mu, sig2, Tensor::row(eps));
      KaVaeDecoded decoded = kavae_decode(result.params, z, angle_target, queries);
      KaVaeLossParts parts;
      Tensor loss =
          kavae_loss(decoded, sdf_target, seg_t, angle_target, mu, sig2, cfg.weights, &parts);
      if (!std::isfinite(parts.total))
        throw Error("train_kavae: loss diverged at epoch " + std::to_string(epoch));

      ps.zero_grad();
      backward(loss);
      opt.step(ps);

      epoch_mean.total += parts.total;
      epoch_mean.sdf += parts.sdf;
      epoch_mean.seg += parts.seg;
      epoch_mean.angle += parts.angle;
      epoch_mean.kl += parts.kl;
    }
    const double n = static_cast<double>(data.size());
    epoch_mean.total /= n;
    epoch_mean.sdf /= n;
    epoch_mean.seg /= n;
    epoch_mean.angle /= n;
    epoch_mean.kl /= n;
    result.log.push_back({epoch, epoch_mean});
  }
  return result;
}

MeshGrid MeshGrid::cube(const Vec3& center, double half_extent, int res) {
  MeshGrid g;
  g.res = res;
  g.cell = 2.0 * half_extent / (res - 1);
  g.origin = center - Vec3(half_extent, half_extent, half_extent);
  return g;
}

namespace {

// Batched no-grad SDF evaluation at arbitrary points.
void decode_sdf_at(KaVaeParams& params, const Tensor& fkg, const std::vector<Vec3>& pts,
                   std::vector<double>& out) {
  out.resize(pts.size());
  constexpr std::int64_t kChunk = 4096;
  for (std::size_t lo = 0; lo < pts.size(); lo += kChunk) {
    const std::size_t hi = std::min(pts.size(), lo + kChunk);
    std::vector<double> q((hi - lo) * 3);
    for (std::size_t i = lo; i < hi; ++i) {
      q[3 * (i - lo)] = pts[i].x;
      q[3 * (i - lo) + 1] = pts[i].y;
      q[3 * (i - lo) + 2] = pts[i].z;
    }
    Tensor queries = Tensor::from({static_cast<std::int64_t>(hi - lo), 3}, std::move(q));
    auto [sdf, seg] = decode_queries(params, fkg, queries);
    for (std::size_t i = lo; i < hi; ++i) out[i] = sdf.values()[i - lo];
  }
}

}  // namespace

TriMesh reconstruct_mesh(KaVaeParams& params, const std::vector<double>& z,
                         const std::vector<double>& angles, const MeshGrid& grid,
                         bool sparse) {
  Tensor zt = Tensor::row(z);
  Tensor at = Tensor::row(angles);
  Tensor fkg = decode_feature(params, zt, at);

  const int res = grid.res;
  SdfGrid field;
  field.origin = grid.origin;
  field.cell = grid.cell;
  field.dims = {res, res, res};
  field.values.assign(static_cast<std::size_t>(res) * res * res, 1e9);

  auto point_at = [&](int x, int y, int zi) { return field.position(x, y, zi); };

  if (!sparse || res <= 12) {
    std::vector<Vec3> pts;
    pts.reserve(field.values.size());
    for (int zi = 0; zi < res; ++zi)
      for (int y = 0; y < res; ++y)
        for (int x = 0; x < res; ++x) pts.push_back(point_at(x, y, zi));
    std::vector<double> vals;
    decode_sdf_at(params, fkg, pts, vals);
    field.values = std::move(vals);
  } else {
    // coarse lattice at stride 4 (boundary row always included)
    const int stride = 4;
    std::vector<int> lattice;
    for (int i = 0; i < res; i += stride) lattice.push_back(i);
    if (lattice.back() != res - 1) lattice.push_back(res - 1);
    const int nl = static_cast<int>(lattice.size());

    std::vector<Vec3> coarse_pts;
    coarse_pts.reserve(static_cast<std::size_t>(nl) * nl * nl);
    for (int zi = 0; zi < nl; ++zi)
      for (int y = 0; y < nl; ++y)
        for (int x = 0; x < nl; ++x)
          coarse_pts.push_back(point_at(lattice[x], lattice[y], lattice[zi]));
    std::vector<double> coarse_vals;
    decode_sdf_at(params, fkg, coarse_pts, coarse_vals);
    auto coarse_at = [&](int x, int y, int zi) {
      return coarse_vals[(static_cast<std::size_t>(zi) * nl + y) * nl + x];
    };

    // mark fine points: active blocks get exact evaluation, the rest are
    // trilinear fills (surface cannot cross there given the margin)
    const double margin = grid.cell * stride * 2.0 + 0.01;
    std::vector<char> need(field.values.size(), 0);
    for (int bz = 0; bz + 1 < nl; ++bz)
      for (int by = 0; by + 1 < nl; ++by)
        for (int bx = 0; bx + 1 < nl; ++bx) {
          double closest = 1e18;
          for (int c = 0; c < 8; ++c)
            closest = std::min(closest, std::fabs(coarse_at(bx + (c & 1), by + ((c >> 1) & 1),
                                                            bz + ((c >> 2) & 1))));
          const bool active = closest <= margin;
          for (int zi = lattice[bz]; zi <= lattice[bz + 1]; ++zi)
            for (int y = lattice[by]; y <= lattice[by + 1]; ++y)
              for (int x = lattice[bx]; x <= lattice[bx + 1]; ++x) {
                const std::size_t id = field.index(x, y, zi);
                if (active) {
                  need[id] = 1;
                } else if (!need[id]) {
                  // trilinear from the block corners
                  const double fx = double(x - lattice[bx]) / (lattice[bx + 1] - lattice[bx]);
                  const double fy = double(y - lattice[by]) / (lattice[by + 1] - lattice[by]);
                  const double fz = double(zi - lattice[bz]) / (lattice[bz + 1] - lattice[bz]);
                  double v = 0.0;
                  for (int c = 0; c < 8; ++c) {
                    const double wx = (c & 1) ? fx : 1.0 - fx;
                    const double wy = ((c >> 1) & 1) ? fy : 1.0 - fy;
                    const double wz = ((c >> 2) & 1) ? fz : 1.0 - fz;
                    v += wx * wy * wz *
                         coarse_at(bx + (c & 1), by + ((c >> 1) & 1), bz + ((c >> 2) & 1));
                  }
                  field.values[id] = v;
                }
              }
        }

    std::vector<Vec3> pts;
    std::vector<std::size_t> ids;
    for (int zi = 0; zi < res; ++zi)
      for (int y = 0; y < res; ++y)
        for (int x = 0; x < res; ++x) {
          const std::size_t id = field.index(x, y, zi);
          if (need[id]) {
            pts.push_back(point_at(x, y, zi));
            ids.push_back(id);
          }
        }
    std::vector<double> vals;
    decode_sdf_at(params, fkg, pts, vals);
    for (std::size_t i = 0; i < ids.size(); ++i) field.values[ids[i]] = vals[i];
  }

  TriMesh mesh = marching_cubes(field, 0.0);
  if (mesh.faces.empty()) return mesh;

  // face part labels: majority over vertex segmentations, ties to lower id
  std::vector<double> q(mesh.vertices.size() * 3);
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
    q[3 * i] = mesh.vertices[i].x;
    q[3 * i + 1] = mesh.vertices[i].y;
    q[3 * i + 2] = mesh.vertices[i].z;
  }
  std::vector<int> vertex_part(mesh.vertices.size(), 0);
  constexpr std::int64_t kChunk = 4096;
  for (std::size_t lo = 0; lo < mesh.vertices.size(); lo += kChunk) {
    const std::size_t hi = std::min(mesh.vertices.size(), lo + kChunk);
    std::vector<double> chunk(q.begin() + 3 * lo, q.begin() + 3 * hi);
    Tensor queries = Tensor::from({static_cast<std::int64_t>(hi - lo), 3}, std::move(chunk));
    auto [sdf, seg] = decode_queries(params, fkg, queries);
    const std::int64_t k = seg.cols();
    for (std::size_t i = lo; i < hi; ++i) {
      int best = 0;
      for (std::int64_t c = 1; c < k; ++c)
        if (seg.values()[(i - lo) * k + c] > seg.values()[(i - lo) * k + best])
          best = static_cast<int>(c);
      vertex_part[i] = best;
    }
  }
  mesh.part_of_face.resize(mesh.faces.size());
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    int counts[8] = {0};
    for (int c = 0; c < 3; ++c) {
      const int part = std::min(vertex_part[mesh.faces[f][c]], 7);
      counts[part]++;
    }
    int best = 0;
    for (int p = 1; p < 8; ++p)
      if (counts[p] > counts[best]) best = p;
    mesh.part_of_face[f] = best;
  }
  return mesh;
}

}  // namespace kinediff
