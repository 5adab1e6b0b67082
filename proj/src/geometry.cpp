// SPDX-License-Identifier: Apache-2.0
#include "kinediff/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <nlohmann/json.hpp>

#include "kinediff/checkpoint.hpp"
#include "kinediff/errors.hpp"
#include "kinediff/parallel.hpp"

namespace kinediff {

using nlohmann::json;

void PointCloud::validate(int part_count) const {
  for (const auto& p : points)
    if (!p.finite()) throw ContractError("PointCloud: non-finite coordinate");
  if (!labels.empty()) {
    if (labels.size() != points.size())
      throw ContractError("PointCloud: label count mismatch");
    if (part_count >= 0)
      for (int l : labels)
        if (l < 0 || l >= part_count)
          throw ContractError("PointCloud: label " + std::to_string(l) +
                              " out of range for K=" + std::to_string(part_count));
  }
}

double TriMesh::total_area() const {
  double a = 0.0;
  for (std::size_t f = 0; f < faces.size(); ++f) a += 0.5 * face_normal(f).norm();
  return a;
}

Vec3 TriMesh::face_normal(std::size_t f) const {
  const auto& t = faces[f];
  return (vertices[t[1]] - vertices[t[0]]).cross(vertices[t[2]] - vertices[t[0]]);
}

void TriMesh::append(const TriMesh& other, int part_id) {
  const int base = static_cast<int>(vertices.size());
  vertices.insert(vertices.end(), other.vertices.begin(), other.vertices.end());
  for (const auto& f : other.faces) {
    faces.push_back({f[0] + base, f[1] + base, f[2] + base});
    part_of_face.push_back(part_id);
  }
}

TriMesh transform_mesh(const TriMesh& mesh, const Pose& pose) {
  TriMesh out = mesh;
  for (auto& v : out.vertices) v = pose.apply(v);
  return out;
}

std::pair<Vec3, Vec3> mesh_bounds(const TriMesh& mesh, double pad) {
  Vec3 lo(std::numeric_limits<double>::max(), std::numeric_limits<double>::max(),
          std::numeric_limits<double>::max());
  Vec3 hi = -1.0 * lo;
  for (const auto& v : mesh.vertices) {
    lo = {std::min(lo.x, v.x), std::min(lo.y, v.y), std::min(lo.z, v.z)};
    hi = {std::max(hi.x, v.x), std::max(hi.y, v.y), std::max(hi.z, v.z)};
  }
  return {lo - Vec3(pad, pad, pad), hi + Vec3(pad, pad, pad)};
}

// ---------------------------------------------------------------- NN

VoxelIndex::VoxelIndex(const std::vector<Vec3>& points) : pts_(points) {
  if (points.empty()) throw ContractError("VoxelIndex: empty cloud");
  Vec3 lo = points[0], hi = points[0];
  for (const auto& p : points) {
    lo = {std::min(lo.x, p.x), std::min(lo.y, p.y), std::min(lo.z, p.z)};
    hi = {std::max(hi.x, p.x), std::max(hi.y, p.y), std::max(hi.z, p.z)};
  }
  lo_ = lo;
  const Vec3 ext = hi - lo;
  const double diag = ext.norm();
  if (diag <= 0.0) {
    degenerate_ = true;
    return;
  }
  const double target = diag / std::cbrt(static_cast<double>(points.size()));
  cell_ = std::max(target, 1e-12);
  for (int a = 0; a < 3; ++a) {
    dims_[a] = std::max(1, static_cast<int>(std::floor(ext[a] / cell_)) + 1);
    dims_[a] = std::min(dims_[a], 256);
  }
  // recompute cell so the grid covers the bbox with the clamped dims
  for (int a = 0; a < 3; ++a)
    cell_ = std::max(cell_, ext[a] / static_cast<double>(dims_[a]) + 1e-12);
  cells_.assign(static_cast<std::size_t>(dims_[0]) * dims_[1] * dims_[2], {});
  for (std::size_t i = 0; i < points.size(); ++i)
    cells_[cell_of(points[i])].push_back(static_cast<int>(i));
}

std::size_t VoxelIndex::cell_of(const Vec3& p) const {
  auto clampi = [](int v, int hi) { return v < 0 ? 0 : (v >= hi ? hi - 1 : v); };
  const int ix = clampi(static_cast<int>(std::floor((p.x - lo_.x) / cell_)), dims_[0]);
  const int iy = clampi(static_cast<int>(std::floor((p.y - lo_.y) / cell_)), dims_[1]);
  const int iz = clampi(static_cast<int>(std::floor((p.z - lo_.z) / cell_)), dims_[2]);
  return static_cast<std::size_t>((iz * dims_[1] + iy) * dims_[0] + ix);
}

template <class Better>
NnResult VoxelIndex::search(const Vec3& q, Better better) const {
  if (degenerate_) {
    NnResult best;
    double best_d2 = std::numeric_limits<double>::max();
    for (std::size_t i = 0; i < pts_.size(); ++i) {
      const double d2 = (pts_[i] - q).norm2();
      if (better(d2, static_cast<int>(i), best_d2, best.index)) {
        best_d2 = d2;
        best.index = static_cast<int>(i);
      }
    }
    best.dist = std::sqrt(best_d2);
    return best;
  }

  auto clampi = [](int v, int hi) { return v < 0 ? 0 : (v >= hi ? hi - 1 : v); };
  const int qx = clampi(static_cast<int>(std::floor((q.x - lo_.x) / cell_)), dims_[0]);
  const int qy = clampi(static_cast<int>(std::floor((q.y - lo_.y) / cell_)), dims_[1]);
  const int qz = clampi(static_cast<int>(std::floor((q.z - lo_.z) / cell_)), dims_[2]);

  NnResult best;
  double best_d2 = std::numeric_limits<double>::max();
  const int max_ring = std::max({dims_[0], dims_[1], dims_[2]});
  for (int r = 0;; ++r) {
    // Cheapest lower bound on the distance from q to any point in ring r.
    if (best.index >= 0) {
      const double ring_lb = (r - 1) * cell_;
      if (ring_lb > 0.0 && ring_lb * ring_lb > best_d2) break;
    }
    if (r > max_ring) break;
    bool any_cell = false;
    for (int dz = -r; dz <= r; ++dz) {
      const int z = qz + dz;
      if (z < 0 || z >= dims_[2]) continue;
      for (int dy = -r; dy <= r; ++dy) {
        const int y = qy + dy;
        if (y < 0 || y >= dims_[1]) continue;
        for (int dx = -r; dx <= r; ++dx) {
          // ring shell only
          if (std::max({std::abs(dx), std::abs(dy), std::abs(dz)}) != r) continue;
          const int x = qx + dx;
          if (x < 0 || x >= dims_[0]) continue;
          any_cell = true;
          const auto& bucket = cells_[static_cast<std::size_t>((z * dims_[1] + y) * dims_[0] + x)];
          for (int idx : bucket) {
            const double d2 = (pts_[idx] - q).norm2();
            if (better(d2, idx, best_d2, best.index)) {
              best_d2 = d2;
              best.index = idx;
            }
          }
        }
      }
    }
    if (!any_cell && best.index >= 0 && r > max_ring) break;
  }
  best.dist = std::sqrt(best_d2);
  return best;
}

NnResult VoxelIndex::nearest(const Vec3& q) const {
  return search(q, [](double d2, int idx, double bd2, int bidx) {
    return d2 < bd2 || (d2 == bd2 && idx < bidx);
  });
}

NnResult VoxelIndex::nearest_keyed(const Vec3& q, const std::vector<int>& key,
                                   int* best_key) const {
  NnResult r = search(q, [&key](double d2, int idx, double bd2, int bidx) {
    if (d2 != bd2) return d2 < bd2;
    if (bidx < 0) return true;
    if (key[idx] != key[bidx]) return key[idx] < key[bidx];
    return idx < bidx;
  });
  if (best_key) *best_key = key[r.index];
  return r;
}

NnResult nearest_neighbor(const Vec3& query, const PointCloud& cloud) {
  if (cloud.points.empty()) throw ContractError("nearest_neighbor: empty cloud");
  NnResult best;
  double best_d2 = std::numeric_limits<double>::max();
  for (std::size_t i = 0; i < cloud.points.size(); ++i) {
    const double d2 = (cloud.points[i] - query).norm2();
    if (d2 < best_d2) {
      best_d2 = d2;
      best.index = static_cast<int>(i);
    }
  }
  best.dist = std::sqrt(best_d2);
  return best;
}

namespace {

// mean over a of NN distance into b (parallel per query, blocked sum)
double mean_nn_distance(const std::vector<Vec3>& a, const VoxelIndex& b_index) {
  std::vector<double> d(a.size());
  parallel_for(0, static_cast<std::int64_t>(a.size()),
               [&](std::int64_t i) { d[i] = b_index.nearest(a[i]).dist; }, 64);
  return blocked_sum(d.data(), static_cast<std::int64_t>(d.size())) /
         static_cast<double>(a.size());
}

}  // namespace

double chamfer(const PointCloud& a, const PointCloud& b) {
  if (a.points.empty() || b.points.empty())
    throw ContractError("chamfer: empty point cloud");
  VoxelIndex ia(a.points), ib(b.points);
  return 0.5 * (mean_nn_distance(a.points, ib) + mean_nn_distance(b.points, ia));
}

// ---------------------------------------------------------------- sampling

PointCloud sample_surface(const TriMesh& mesh, std::int64_t n, Rng& rng) {
  if (mesh.faces.empty()) throw ContractError("sample_surface: empty mesh");
  std::vector<double> cum(mesh.faces.size());
  double acc = 0.0;
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    acc += 0.5 * mesh.face_normal(f).norm();
    cum[f] = acc;
  }
  if (acc <= 0.0) throw ContractError("sample_surface: zero total area");
  PointCloud out;
  out.points.reserve(static_cast<std::size_t>(n));
  const bool labeled = mesh.has_part_labels();
  if (labeled) out.labels.reserve(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) {
    const double u = rng.uniform() * acc;
    const std::size_t f =
        std::lower_bound(cum.begin(), cum.end(), u) - cum.begin() == cum.size()
            ? cum.size() - 1
            : static_cast<std::size_t>(std::lower_bound(cum.begin(), cum.end(), u) -
                                       cum.begin());
    const auto& tri = mesh.faces[f];
    const double r1 = std::sqrt(rng.uniform());
    const double r2 = rng.uniform();
    const Vec3 p = mesh.vertices[tri[0]] * (1.0 - r1) +
                   mesh.vertices[tri[1]] * (r1 * (1.0 - r2)) +
                   mesh.vertices[tri[2]] * (r1 * r2);
    out.points.push_back(p);
    if (labeled) out.labels.push_back(mesh.part_of_face[f]);
  }
  return out;
}

namespace {

TriMesh pose_parts(const TriMesh& mesh, const std::vector<Pose>& poses) {
  if (!mesh.has_part_labels()) {
    if (poses.size() != 1)
      throw ContractError("pose_parts: unlabeled mesh with multiple poses");
    return transform_mesh(mesh, poses[0]);
  }
  TriMesh out = mesh;
  // vertices may be shared across faces of one part only (meshes are built
  // per part), so transform by the owning face's part
  std::vector<int> vertex_part(mesh.vertices.size(), -1);
  for (std::size_t f = 0; f < mesh.faces.size(); ++f)
    for (int c = 0; c < 3; ++c) vertex_part[mesh.faces[f][c]] = mesh.part_of_face[f];
  for (std::size_t v = 0; v < out.vertices.size(); ++v) {
    const int part = vertex_part[v] < 0 ? 0 : vertex_part[v];
    if (part >= static_cast<int>(poses.size()))
      throw ContractError("pose_parts: missing pose for part " + std::to_string(part));
    out.vertices[v] = poses[part].apply(mesh.vertices[v]);
  }
  return out;
}

double labeled_chamfer(const PointCloud& a, const PointCloud& b, int part,
                       bool* ok) {
  PointCloud pa, pb;
  for (std::size_t i = 0; i < a.points.size(); ++i)
    if (a.labels[i] == part) pa.points.push_back(a.points[i]);
  for (std::size_t i = 0; i < b.points.size(); ++i)
    if (b.labels[i] == part) pb.points.push_back(b.points[i]);
  if (pa.points.empty() || pb.points.empty()) {
    *ok = false;
    return 0.0;
  }
  *ok = true;
  return chamfer(pa, pb);
}

}  // namespace

ChamferMetrics chamfer_metrics(const TriMesh& pred, const std::vector<Pose>& pred_poses,
                               const TriMesh& gt, const std::vector<Pose>& gt_poses,
                               std::int64_t samples, Rng& rng) {
  if (samples < 1) throw ContractError("chamfer_metrics: samples must be >= 1");
  const TriMesh pred_posed = pose_parts(pred, pred_poses);
  const TriMesh gt_posed = pose_parts(gt, gt_poses);
  // Both surfaces draw from the same substream, so identical meshes under
  // identical poses sample identically and score exactly zero.
  Rng rp = rng.fork("samples");
  Rng rg = rng.fork("samples");
  const PointCloud ps = sample_surface(pred_posed, samples, rp);
  const PointCloud gs = sample_surface(gt_posed, samples, rg);

  ChamferMetrics out;
  out.cd_w = 1000.0 * chamfer(ps, gs);
  if (!pred_posed.has_part_labels() || !gt_posed.has_part_labels()) return out;

  int part_count = 0;
  for (int l : gt_posed.part_of_face) part_count = std::max(part_count, l + 1);
  for (int l : pred_posed.part_of_face) part_count = std::max(part_count, l + 1);

  bool ok = false;
  const double cs = labeled_chamfer(ps, gs, 0, &ok);
  if (ok) out.cd_s = 1000.0 * cs;
  double movable_sum = 0.0;
  int movable_n = 0;
  for (int part = 1; part < part_count; ++part) {
    const double cm = labeled_chamfer(ps, gs, part, &ok);
    if (ok) {
      movable_sum += cm;
      ++movable_n;
    }
  }
  if (movable_n > 0) out.cd_m = 1000.0 * movable_sum / movable_n;
  return out;
}

double chamfer_whole_x1000(const TriMesh& pred, const std::vector<Pose>& pred_poses,
                           const TriMesh& gt, const std::vector<Pose>& gt_poses,
                           std::int64_t samples, Rng& rng) {
  const TriMesh pred_posed = pose_parts(pred, pred_poses);
  const TriMesh gt_posed = pose_parts(gt, gt_poses);
  Rng rp = rng.fork("samples");
  Rng rg = rng.fork("samples");
  const PointCloud ps = sample_surface(pred_posed, samples, rp);
  const PointCloud gs = sample_surface(gt_posed, samples, rg);
  return 1000.0 * chamfer(ps, gs);
}

// ---------------------------------------------------------------- SDF

double eval_box_sdf(const Vec3& half_extents, const Vec3& p) {
  if (half_extents.x <= 0 || half_extents.y <= 0 || half_extents.z <= 0)
    throw ContractError("eval_box_sdf: non-positive extents");
  const Vec3 q(std::fabs(p.x) - half_extents.x, std::fabs(p.y) - half_extents.y,
               std::fabs(p.z) - half_extents.z);
  const Vec3 qpos(std::max(q.x, 0.0), std::max(q.y, 0.0), std::max(q.z, 0.0));
  const double outside = qpos.norm();
  const double inside = std::min(std::max(q.x, std::max(q.y, q.z)), 0.0);
  return outside + inside;
}

double point_triangle_distance(const Vec3& p, const Vec3& a, const Vec3& b,
                               const Vec3& c, Vec3* closest) {
  // Ericson, Real-Time Collision Detection 5.1.5
  const Vec3 ab = b - a, ac = c - a, ap = p - a;
  const double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0.0 && d2 <= 0.0) {
    if (closest) *closest = a;
    return (p - a).norm();
  }
  const Vec3 bp = p - b;
  const double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0.0 && d4 <= d3) {
    if (closest) *closest = b;
    return (p - b).norm();
  }
  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) {
    const double v = d1 / (d1 - d3);
    const Vec3 q = a + ab * v;
    if (closest) *closest = q;
    return (p - q).norm();
  }
  const Vec3 cp = p - c;
  const double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0.0 && d5 <= d6) {
    if (closest) *closest = c;
    return (p - c).norm();
  }
  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) {
    const double w = d2 / (d2 - d6);
    const Vec3 q = a + ac * w;
    if (closest) *closest = q;
    return (p - q).norm();
  }
  const double va = d3 * d6 - d5 * d4;
  if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) {
    const double w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
    const Vec3 q = b + (c - b) * w;
    if (closest) *closest = q;
    return (p - q).norm();
  }
  const double denom = 1.0 / (va + vb + vc);
  const double v = vb * denom, w = vc * denom;
  const Vec3 q = a + ab * v + ac * w;
  if (closest) *closest = q;
  return (p - q).norm();
}

double mesh_signed_distance(const TriMesh& part, const Vec3& p, int* nearest_face) {
  if (part.faces.empty()) throw ContractError("mesh_signed_distance: empty mesh");
  double best = std::numeric_limits<double>::max();
  int best_f = 0;
  Vec3 best_closest;
  for (std::size_t f = 0; f < part.faces.size(); ++f) {
    const auto& t = part.faces[f];
    Vec3 cl;
    const double d = point_triangle_distance(p, part.vertices[t[0]], part.vertices[t[1]],
                                             part.vertices[t[2]], &cl);
    if (d < best) {
      best = d;
      best_f = static_cast<int>(f);
      best_closest = cl;
    }
  }
  if (nearest_face) *nearest_face = best_f;
  const Vec3 n = part.face_normal(static_cast<std::size_t>(best_f));
  const double side = n.dot(p - best_closest);
  return side >= 0.0 ? best : -best;
}

bool point_inside_mesh_parity(const TriMesh& mesh, const Vec3& p) {
  // +x ray; jitter-free Moller-Trumbore crossing count
  int crossings = 0;
  const Vec3 dir(1.0, 0.0, 0.0);
  for (const auto& t : mesh.faces) {
    const Vec3& a = mesh.vertices[t[0]];
    const Vec3& b = mesh.vertices[t[1]];
    const Vec3& c = mesh.vertices[t[2]];
    const Vec3 e1 = b - a, e2 = c - a;
    const Vec3 pv = dir.cross(e2);
    const double det = e1.dot(pv);
    if (std::fabs(det) < 1e-14) continue;
    const double inv = 1.0 / det;
    const Vec3 tv = p - a;
    const double u = tv.dot(pv) * inv;
    if (u < 0.0 || u > 1.0) continue;
    const Vec3 qv = tv.cross(e1);
    const double v = dir.dot(qv) * inv;
    if (v < 0.0 || u + v > 1.0) continue;
    const double tt = e2.dot(qv) * inv;
    if (tt > 1e-12) ++crossings;
  }
  return (crossings % 2) == 1;
}

// ---------------------------------------------------------------- IO

void write_obj(const std::string& path, const TriMesh& mesh) {
  std::ofstream os(path);
  if (!os) throw IoError("write_obj: cannot open " + path);
  os << "# kinediff mesh\n";
  char buf[128];
  for (const auto& v : mesh.vertices) {
    std::snprintf(buf, sizeof buf, "v %.17g %.17g %.17g\n", v.x, v.y, v.z);
    os << buf;
  }
  const bool labeled = mesh.has_part_labels();
  int current_part = -1;
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    if (labeled && mesh.part_of_face[f] != current_part) {
      current_part = mesh.part_of_face[f];
      os << "g part" << current_part << "\n";
    }
    os << "f " << mesh.faces[f][0] + 1 << " " << mesh.faces[f][1] + 1 << " "
       << mesh.faces[f][2] + 1 << "\n";
  }
  if (!os) throw IoError("write_obj: write failed " + path);
}

TriMesh read_obj(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("read_obj: cannot open " + path);
  TriMesh mesh;
  std::string line;
  int current_part = -1;
  bool any_group = false;
  while (std::getline(is, line)) {
    std::istringstream ss(line);
    std::string tag;
    ss >> tag;
    if (tag == "v") {
      Vec3 v;
      ss >> v.x >> v.y >> v.z;
      mesh.vertices.push_back(v);
    } else if (tag == "g") {
      std::string name;
      ss >> name;
      if (name.rfind("part", 0) == 0) {
        current_part = std::atoi(name.c_str() + 4);
        any_group = true;
      }
    } else if (tag == "f") {
      std::array<int, 3> f{};
      for (int c = 0; c < 3; ++c) {
        std::string tok;
        ss >> tok;
        f[c] = std::atoi(tok.c_str()) - 1;  // ignore /vt/vn suffixes
      }
      mesh.faces.push_back(f);
      mesh.part_of_face.push_back(current_part < 0 ? 0 : current_part);
    }
  }
  if (!any_group) mesh.part_of_face.clear();
  return mesh;
}

void save_point_cloud(const std::string& kd3d_path, const PointCloud& cloud) {
  NamedTensors ts;
  std::vector<double> flat;
  flat.reserve(cloud.points.size() * 3);
  for (const auto& p : cloud.points) {
    flat.push_back(p.x);
    flat.push_back(p.y);
    flat.push_back(p.z);
  }
  ts.emplace_back("points", Tensor::from({static_cast<std::int64_t>(cloud.points.size()), 3},
                                         std::move(flat)));
  if (!cloud.labels.empty()) {
    std::vector<double> lab(cloud.labels.begin(), cloud.labels.end());
    const std::int64_t n_labels = static_cast<std::int64_t>(lab.size());
    ts.emplace_back("labels", Tensor::from({n_labels}, std::move(lab)));
  }
  save_kd3d(kd3d_path, ts);
  json side;
  side["kind"] = "point_cloud";
  side["count"] = cloud.points.size();
  side["has_labels"] = !cloud.labels.empty();
  std::ofstream os(kd3d_path + ".json");
  os << side.dump(2) << "\n";
}

PointCloud load_point_cloud(const std::string& kd3d_path) {
  const NamedTensors ts = load_kd3d(kd3d_path);
  const Tensor& pts = kd3d_get(ts, "points");
  PointCloud out;
  const std::int64_t n = pts.shape()[0];
  out.points.reserve(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i)
    out.points.emplace_back(pts.data()[3 * i], pts.data()[3 * i + 1], pts.data()[3 * i + 2]);
  if (const Tensor* lab = kd3d_find(ts, "labels")) {
    out.labels.reserve(static_cast<std::size_t>(lab->size()));
    for (std::int64_t i = 0; i < lab->size(); ++i)
      out.labels.push_back(static_cast<int>(lab->data()[i]));
  }
  return out;
}

void save_sdf_grid(const std::string& kd3d_path, const SdfGrid& grid) {
  NamedTensors ts;
  ts.emplace_back("values",
                  Tensor::from({grid.dims[2], grid.dims[1], grid.dims[0]},
                               grid.values));
  save_kd3d(kd3d_path, ts);
  json side;
  side["kind"] = "sdf_grid";
  side["origin"] = {grid.origin.x, grid.origin.y, grid.origin.z};
  side["cell"] = grid.cell;
  side["dims"] = {grid.dims[0], grid.dims[1], grid.dims[2]};
  std::ofstream os(kd3d_path + ".json");
  os << side.dump(2) << "\n";
}

SdfGrid load_sdf_grid(const std::string& kd3d_path) {
  const NamedTensors ts = load_kd3d(kd3d_path);
  std::ifstream is(kd3d_path + ".json");
  if (!is) throw IoError("load_sdf_grid: missing sidecar for " + kd3d_path);
  json side = json::parse(is);
  SdfGrid g;
  auto o = side.at("origin");
  g.origin = {o[0].get<double>(), o[1].get<double>(), o[2].get<double>()};
  g.cell = side.at("cell").get<double>();
  auto d = side.at("dims");
  g.dims = {d[0].get<int>(), d[1].get<int>(), d[2].get<int>()};
  g.values = kd3d_get(ts, "values").values();
  return g;
}

std::vector<int> farthest_point_indices(const std::vector<Vec3>& pts, int count, Rng& rng) {
  if (pts.empty()) throw ContractError("farthest_point_indices: empty cloud");
  const int n = static_cast<int>(pts.size());
  count = std::min(count, n);
  std::vector<int> chosen;
  chosen.reserve(static_cast<std::size_t>(count));
  std::vector<double> dist(pts.size(), std::numeric_limits<double>::max());
  int cur = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(n)));
  chosen.push_back(cur);
  for (int it = 1; it < count; ++it) {
    double best = -1.0;
    int best_i = 0;
    for (int i = 0; i < n; ++i) {
      const double d = (pts[i] - pts[cur]).norm2();
      if (d < dist[i]) dist[i] = d;
      if (dist[i] > best) {
        best = dist[i];
        best_i = i;
      }
    }
    cur = best_i;
    chosen.push_back(cur);
  }
  return chosen;
}

}  // namespace kinediff
