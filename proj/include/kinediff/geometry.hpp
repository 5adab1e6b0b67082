// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "kinediff/geom3.hpp"
#include "kinediff/kinematics.hpp"
#include "kinediff/rng.hpp"

namespace kinediff {

struct PointCloud {
  std::vector<Vec3> points;
  std::vector<int> labels;  // optional per-point part ids

  bool has_labels() const { return labels.size() == points.size() && !points.empty(); }
  std::size_t size() const { return points.size(); }
  void validate(int part_count = -1) const;
};

struct SdfGrid {
  Vec3 origin;
  double cell = 0.0;
  std::array<int, 3> dims{0, 0, 0};
  std::vector<double> values;  // x-fastest layout

  std::size_t index(int ix, int iy, int iz) const {
    return static_cast<std::size_t>((iz * dims[1] + iy) * dims[0] + ix);
  }
  double at(int ix, int iy, int iz) const { return values[index(ix, iy, iz)]; }
  Vec3 position(int ix, int iy, int iz) const {
    return origin + Vec3(ix * cell, iy * cell, iz * cell);
  }
};

struct TriMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> faces;
  std::vector<int> part_of_face;  // optional

  bool has_part_labels() const { return part_of_face.size() == faces.size() && !faces.empty(); }
  double total_area() const;
  void append(const TriMesh& other, int part_id);
  Vec3 face_normal(std::size_t f) const;  // unnormalized (2x area vector)
};

TriMesh transform_mesh(const TriMesh& mesh, const Pose& pose);
// Bounding box as (lo, hi), optionally padded.
std::pair<Vec3, Vec3> mesh_bounds(const TriMesh& mesh, double pad = 0.0);

// --- nearest neighbor -------------------------------------------------

struct NnResult {
  int index = -1;
  double dist = 0.0;
};

// Uniform voxel hash over the cloud. Queries agree with the brute-force
// scan exactly, including the lowest-index tie rule.
class VoxelIndex {
 public:
  explicit VoxelIndex(const std::vector<Vec3>& points);
  NnResult nearest(const Vec3& q) const;
  // Lowest (d2, key(i)) candidate where key is supplied per point; used for
  // part assignment with lowest-part-id ties.
  NnResult nearest_keyed(const Vec3& q, const std::vector<int>& key, int* best_key) const;

 private:
  const std::vector<Vec3>& pts_;
  Vec3 lo_;
  double cell_ = 1.0;
  std::array<int, 3> dims_{1, 1, 1};
  std::vector<std::vector<int>> cells_;
  bool degenerate_ = false;

  std::size_t cell_of(const Vec3& p) const;
  template <class Better>
  NnResult search(const Vec3& q, Better better) const;
};

NnResult nearest_neighbor(const Vec3& query, const PointCloud& cloud);

// 0.5 * (mean_a NN-dist to b + mean_b NN-dist to a); unsquared Euclidean.
double chamfer(const PointCloud& a, const PointCloud& b);

// --- surface sampling & metrics ---------------------------------------

// Area-weighted face choice, uniform barycentric placement; labels copied
// from part_of_face when present.
PointCloud sample_surface(const TriMesh& mesh, std::int64_t n, Rng& rng);

struct ChamferMetrics {
  std::optional<double> cd_w, cd_s, cd_m;  // all x1000
};

// Surfaces are posed part-locally (mesh vertices of part k transformed by
// poses[k]) then sampled with `samples` points each.
ChamferMetrics chamfer_metrics(const TriMesh& pred, const std::vector<Pose>& pred_poses,
                               const TriMesh& gt, const std::vector<Pose>& gt_poses,
                               std::int64_t samples, Rng& rng);

// Posed whole-surface Chamfer only (x1000), for per-round logs.
double chamfer_whole_x1000(const TriMesh& pred, const std::vector<Pose>& pred_poses,
                           const TriMesh& gt, const std::vector<Pose>& gt_poses,
                           std::int64_t samples, Rng& rng);

// --- SDF ----------------------------------------------------------------

// Exact signed distance to an origin-centered axis-aligned box.
double eval_box_sdf(const Vec3& half_extents, const Vec3& p);

// Distance from p to triangle (a, b, c); also reports the closest point.
double point_triangle_distance(const Vec3& p, const Vec3& a, const Vec3& b,
                               const Vec3& c, Vec3* closest = nullptr);

// Signed distance to a single watertight convex part mesh: unsigned nearest
// triangle distance, sign from that triangle's outward normal.
double mesh_signed_distance(const TriMesh& part, const Vec3& p, int* nearest_face = nullptr);

// Parity ray-cast inside test (+x ray, crossing count); test oracle for signs.
bool point_inside_mesh_parity(const TriMesh& mesh, const Vec3& p);

// --- marching cubes -----------------------------------------------------

// Standard 15-case table with edge interpolation; vertices welded on cell
// edges so the extracted surface is closed whenever the iso-surface avoids
// the grid boundary. Faces wind outward for the negative-inside convention.
TriMesh marching_cubes(const SdfGrid& grid, double iso);

// --- IO -------------------------------------------------------------------

void write_obj(const std::string& path, const TriMesh& mesh);
TriMesh read_obj(const std::string& path);

// KD3D tensors ("points" [N x 3], optional "labels" [N]) + JSON sidecar.
void save_point_cloud(const std::string& kd3d_path, const PointCloud& cloud);
PointCloud load_point_cloud(const std::string& kd3d_path);

void save_sdf_grid(const std::string& kd3d_path, const SdfGrid& grid);
SdfGrid load_sdf_grid(const std::string& kd3d_path);

// Farthest-point subsample; deterministic given the rng-selected start.
std::vector<int> farthest_point_indices(const std::vector<Vec3>& pts, int count, Rng& rng);

}  // namespace kinediff
