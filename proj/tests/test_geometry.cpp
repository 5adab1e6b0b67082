// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <map>
#include <set>

#include "kinediff/errors.hpp"
#include "kinediff/geometry.hpp"
#include "kinediff/ref_kernels.hpp"
#include "kinediff/rng.hpp"

using namespace kinediff;

namespace {

PointCloud random_cloud(int n, Rng& rng, double lo = -1.0, double hi = 1.0) {
  PointCloud c;
  c.points.reserve(n);
  for (int i = 0; i < n; ++i)
    c.points.emplace_back(rng.uniform(lo, hi), rng.uniform(lo, hi), rng.uniform(lo, hi));
  return c;
}

TriMesh box_mesh(const Vec3& half, const Vec3& center) {
  TriMesh m;
  const double hx = half.x, hy = half.y, hz = half.z;
  for (int i = 0; i < 8; ++i)
    m.vertices.push_back(center + Vec3(i & 1 ? hx : -hx, i & 2 ? hy : -hy, i & 4 ? hz : -hz));
  // 12 triangles with outward winding
  const int f[12][3] = {{0, 2, 1}, {1, 2, 3},   // z-
                        {4, 5, 6}, {5, 7, 6},   // z+
                        {0, 1, 4}, {1, 5, 4},   // y-
                        {2, 6, 3}, {3, 6, 7},   // y+
                        {0, 4, 2}, {2, 4, 6},   // x-
                        {1, 3, 5}, {3, 7, 5}};  // x+
  for (const auto& t : f) m.faces.push_back({t[0], t[1], t[2]});
  return m;
}

// grid sampled from an analytic sphere SDF
SdfGrid sphere_grid(int n, double radius) {
  SdfGrid g;
  g.dims = {n, n, n};
  g.cell = 2.0 / (n - 1);
  g.origin = Vec3(-1, -1, -1);
  g.values.resize(static_cast<std::size_t>(n) * n * n);
  for (int z = 0; z < n; ++z)
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x)
        g.values[g.index(x, y, z)] = g.position(x, y, z).norm() - radius;
  return g;
}

}  // namespace

TEST_CASE("nearest_neighbor basics") {
  PointCloud c;
  c.points = {{1, 0, 0}, {0, 2, 0}};
  auto r = nearest_neighbor(Vec3(0, 0, 0), c);
  CHECK(r.index == 0);
  CHECK(r.dist == doctest::Approx(1.0));

  auto exact = nearest_neighbor(Vec3(0, 2, 0), c);
  CHECK(exact.index == 1);
  CHECK(exact.dist == doctest::Approx(0.0));

  // equidistant pair: lower index wins
  PointCloud tie;
  tie.points = {{1, 0, 0}, {-1, 0, 0}};
  CHECK(nearest_neighbor(Vec3(0, 0, 0), tie).index == 0);

  CHECK_THROWS_AS(nearest_neighbor(Vec3(0, 0, 0), PointCloud{}), ContractError);
}

TEST_CASE("voxel index equals brute force exactly on 1000 queries") {
  Rng rng(404);
  PointCloud cloud = random_cloud(500, rng);
  std::vector<double> flat;
  for (const auto& p : cloud.points) {
    flat.push_back(p.x);
    flat.push_back(p.y);
    flat.push_back(p.z);
  }
  VoxelIndex index(cloud.points);
  for (int q = 0; q < 1000; ++q) {
    const Vec3 query(rng.uniform(-1.2, 1.2), rng.uniform(-1.2, 1.2), rng.uniform(-1.2, 1.2));
    const double qf[3] = {query.x, query.y, query.z};
    const auto [bi, bd] = ref::nearest_neighbor(qf, flat.data(), 500);
    const auto fast = index.nearest(query);
    CHECK(fast.index == bi);
    CHECK(fast.dist == bd);  // identical arithmetic, bitwise equal
  }
}

TEST_CASE("chamfer examples and properties") {
  PointCloud a, b;
  a.points = {{0, 0, 0}};
  b.points = {{1, 0, 0}};
  CHECK(chamfer(a, b) == doctest::Approx(1.0));

  PointCloud c;
  c.points = {{0, 0, 0}, {2, 0, 0}};
  CHECK(chamfer(c, b) == doctest::Approx(1.0));  // 0.5*(mean(1,1) + mean(1))

  CHECK(chamfer(a, a) == 0.0);
  CHECK_THROWS_AS(chamfer(a, PointCloud{}), ContractError);

  Rng rng(7);
  for (int trial = 0; trial < 25; ++trial) {
    PointCloud x = random_cloud(40 + trial, rng);
    PointCloud y = random_cloud(55, rng);
    const double xy = chamfer(x, y);
    CHECK(xy == chamfer(y, x));  // symmetric, same arithmetic both calls
    CHECK(xy >= 0.0);
    CHECK(chamfer(x, x) == 0.0);
  }
}

TEST_CASE("accelerated chamfer equals the O(N^2) oracle") {
  Rng rng(99);
  for (int trial = 0; trial < 40; ++trial) {
    PointCloud a = random_cloud(10 + 13 * trial % 300, rng);
    PointCloud b = random_cloud(17 + 7 * trial % 200, rng);
    std::vector<double> fa, fb;
    for (const auto& p : a.points) { fa.push_back(p.x); fa.push_back(p.y); fa.push_back(p.z); }
    for (const auto& p : b.points) { fb.push_back(p.x); fb.push_back(p.y); fb.push_back(p.z); }
    const double oracle = ref::chamfer(fa.data(), (std::int64_t)a.size(),
                                       fb.data(), (std::int64_t)b.size());
    CHECK(chamfer(a, b) == doctest::Approx(oracle).epsilon(1e-13));
  }
}

TEST_CASE("eval_box_sdf") {
  const Vec3 box(1, 1, 1);
  CHECK(eval_box_sdf(box, Vec3(0, 0, 0)) == doctest::Approx(-1.0));
  CHECK(eval_box_sdf(box, Vec3(2, 0, 0)) == doctest::Approx(1.0));
  CHECK(eval_box_sdf(box, Vec3(2, 2, 0)) == doctest::Approx(std::sqrt(2.0)));
  CHECK_THROWS_AS(eval_box_sdf(Vec3(1, 0, 1), Vec3(0, 0, 0)), ContractError);
}

TEST_CASE("mesh_signed_distance matches the analytic box SDF") {
  const Vec3 half(0.4, 0.3, 0.2);
  const TriMesh box = box_mesh(half, Vec3(0, 0, 0));
  Rng rng(11);
  for (int trial = 0; trial < 300; ++trial) {
    const Vec3 p(rng.uniform(-0.8, 0.8), rng.uniform(-0.8, 0.8), rng.uniform(-0.8, 0.8));
    const double expect = eval_box_sdf(half, p);
    CHECK(mesh_signed_distance(box, p) == doctest::Approx(expect).epsilon(1e-10));
  }
}

TEST_CASE("parity ray cast agrees with the box interior") {
  const Vec3 half(0.4, 0.3, 0.2);
  const TriMesh box = box_mesh(half, Vec3(0.1, -0.05, 0.02));
  Rng rng(13);
  for (int trial = 0; trial < 300; ++trial) {
    const Vec3 p(rng.uniform(-0.8, 0.8), rng.uniform(-0.8, 0.8), rng.uniform(-0.8, 0.8));
    const bool inside = eval_box_sdf(half, p - Vec3(0.1, -0.05, 0.02)) < 0.0;
    CHECK(point_inside_mesh_parity(box, p) == inside);
  }
}

TEST_CASE("sample_surface stays on the mesh and respects area weighting") {
  TriMesh two;
  // triangle A with area 3x that of triangle B
  two.vertices = {{0, 0, 0}, {3, 0, 0}, {0, 2, 0},    // area 3
                  {10, 0, 0}, {11, 0, 0}, {10, 2, 0}};  // area 1
  two.faces = {{0, 1, 2}, {3, 4, 5}};
  two.part_of_face = {0, 1};
  Rng rng(21);
  PointCloud s = sample_surface(two, 100000, rng);
  REQUIRE(s.points.size() == 100000);
  int in_a = 0;
  for (std::size_t i = 0; i < s.points.size(); ++i) {
    CHECK(std::fabs(s.points[i].z) < 1e-12);  // on the plane
    if (s.points[i].x < 5) {
      ++in_a;
      CHECK(s.labels[i] == 0);
    } else {
      CHECK(s.labels[i] == 1);
    }
  }
  const double ratio = double(in_a) / double(100000 - in_a);
  CHECK(ratio == doctest::Approx(3.0).epsilon(0.05));

  // single triangle: all samples have nonnegative barycentrics (inside)
  TriMesh one;
  one.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
  one.faces = {{0, 1, 2}};
  Rng rng2(3);
  PointCloud s1 = sample_surface(one, 500, rng2);
  for (const auto& p : s1.points) {
    CHECK(p.x >= -1e-12);
    CHECK(p.y >= -1e-12);
    CHECK(p.x + p.y <= 1.0 + 1e-12);
  }

  CHECK_THROWS_AS(sample_surface(TriMesh{}, 10, rng), ContractError);
}

TEST_CASE("marching cubes on a 32^3 sphere") {
  const double radius = 0.5;
  const SdfGrid g = sphere_grid(32, radius);
  const TriMesh m = marching_cubes(g, 0.0);
  REQUIRE(m.faces.size() > 100);

  // vertices near the analytic sphere
  for (const auto& v : m.vertices)
    CHECK(std::fabs(v.norm() - radius) < 1.5 * g.cell);

  // watertight: every undirected edge shared by exactly two faces, and
  // orientation-consistent: each directed edge appears exactly once
  std::map<std::pair<int, int>, int> undirected;
  std::set<std::pair<int, int>> directed;
  for (const auto& f : m.faces) {
    for (int c = 0; c < 3; ++c) {
      const int u = f[c], v = f[(c + 1) % 3];
      undirected[{std::min(u, v), std::max(u, v)}]++;
      CHECK(directed.insert({u, v}).second);  // no repeated directed edge
    }
  }
  for (const auto& [e, count] : undirected) CHECK(count == 2);

  // Euler characteristic V - E + F = 2 for a sphere
  const std::int64_t V = m.vertices.size();
  const std::int64_t E = undirected.size();
  const std::int64_t F = m.faces.size();
  CHECK(V - E + F == 2);

  // outward orientation under the negative-inside convention
  double outward = 0.0;
  for (std::size_t f = 0; f < m.faces.size(); ++f) {
    const Vec3 centroid = (m.vertices[m.faces[f][0]] + m.vertices[m.faces[f][1]] +
                           m.vertices[m.faces[f][2]]) / 3.0;
    outward += m.face_normal(f).normalized().dot(centroid.normalized());
  }
  CHECK(outward / m.faces.size() > 0.9);
}

TEST_CASE("marching cubes edge cases") {
  SdfGrid g = sphere_grid(8, 0.5);
  for (auto& v : g.values) v = std::fabs(v) + 0.1;  // all positive
  CHECK(marching_cubes(g, 0.0).faces.empty());

  SdfGrid s = sphere_grid(16, 0.5);
  TriMesh normal = marching_cubes(s, 0.0);
  for (auto& v : s.values) v = -v;
  TriMesh flipped = marching_cubes(s, 0.0);
  CHECK(normal.vertices.size() == flipped.vertices.size());
  REQUIRE(normal.faces.size() == flipped.faces.size());
  // same surface, opposite orientation
  double dot_sum = 0.0;
  for (std::size_t f = 0; f < normal.faces.size(); ++f) {
    const Vec3 c = (normal.vertices[normal.faces[f][0]] + normal.vertices[normal.faces[f][1]] +
                    normal.vertices[normal.faces[f][2]]) / 3.0;
    dot_sum += normal.face_normal(f).normalized().dot(c.normalized());
  }
  double dot_sum_flipped = 0.0;
  for (std::size_t f = 0; f < flipped.faces.size(); ++f) {
    const Vec3 c = (flipped.vertices[flipped.faces[f][0]] + flipped.vertices[flipped.faces[f][1]] +
                    flipped.vertices[flipped.faces[f][2]]) / 3.0;
    dot_sum_flipped += flipped.face_normal(f).normalized().dot(c.normalized());
  }
  CHECK(dot_sum * dot_sum_flipped < 0.0);

  CHECK_THROWS_AS(marching_cubes(SdfGrid{}, 0.0), ContractError);
}

TEST_CASE("marching cubes watertight on random smooth fields") {
  Rng rng(31);
  for (int trial = 0; trial < 5; ++trial) {
    // sum of a few random balls, negative inside
    std::vector<Vec3> centers;
    std::vector<double> radii;
    for (int b = 0; b < 3; ++b) {
      centers.emplace_back(rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3));
      radii.push_back(rng.uniform(0.2, 0.45));
    }
    const int n = 24;
    SdfGrid g;
    g.dims = {n, n, n};
    g.cell = 2.0 / (n - 1);
    g.origin = Vec3(-1, -1, -1);
    g.values.resize(static_cast<std::size_t>(n) * n * n);
    for (int z = 0; z < n; ++z)
      for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) {
          double d = 1e9;
          for (std::size_t b = 0; b < centers.size(); ++b)
            d = std::min(d, (g.position(x, y, z) - centers[b]).norm() - radii[b]);
          g.values[g.index(x, y, z)] = d;
        }
    const TriMesh m = marching_cubes(g, 0.0);
    REQUIRE(!m.faces.empty());
    std::map<std::pair<int, int>, int> edges;
    for (const auto& f : m.faces)
      for (int c = 0; c < 3; ++c) {
        const int u = f[c], v = f[(c + 1) % 3];
        edges[{std::min(u, v), std::max(u, v)}]++;
      }
    for (const auto& [e, count] : edges) CHECK(count == 2);
  }
}

TEST_CASE("OBJ round trip with part groups") {
  TriMesh m = box_mesh(Vec3(0.2, 0.3, 0.1), Vec3(0, 0, 0));
  m.part_of_face.assign(m.faces.size(), 0);
  TriMesh lid = box_mesh(Vec3(0.2, 0.3, 0.05), Vec3(0, 0, 0.2));
  m.append(lid, 1);
  const std::string path = "test_mesh.obj";
  write_obj(path, m);
  const TriMesh back = read_obj(path);
  REQUIRE(back.vertices.size() == m.vertices.size());
  REQUIRE(back.faces.size() == m.faces.size());
  CHECK(back.part_of_face == m.part_of_face);
  for (std::size_t i = 0; i < m.vertices.size(); ++i)
    CHECK((back.vertices[i] - m.vertices[i]).norm() == 0.0);  // %.17g survives exactly
  std::filesystem::remove(path);
}

TEST_CASE("point cloud KD3D round trip") {
  Rng rng(17);
  PointCloud c = random_cloud(64, rng);
  c.labels.assign(64, 0);
  for (int i = 0; i < 64; i += 3) c.labels[i] = 1;
  const std::string path = "test_cloud.kd3d";
  save_point_cloud(path, c);
  const PointCloud back = load_point_cloud(path);
  REQUIRE(back.points.size() == c.points.size());
  CHECK(back.labels == c.labels);
  for (std::size_t i = 0; i < c.points.size(); ++i)
    CHECK((back.points[i] - c.points[i]).norm() == 0.0);
  std::filesystem::remove(path);
  std::filesystem::remove(path + ".json");
}

TEST_CASE("chamfer_metrics identical meshes and labels") {
  TriMesh m = box_mesh(Vec3(0.2, 0.3, 0.1), Vec3(0, 0, 0));
  m.part_of_face.assign(m.faces.size(), 0);
  TriMesh lid = box_mesh(Vec3(0.2, 0.3, 0.05), Vec3(0, 0, 0.25));
  m.append(lid, 1);
  std::vector<Pose> poses = {Pose::identity(), Pose::identity()};
  Rng rng(5);
  auto metrics = chamfer_metrics(m, poses, m, poses, 5000, rng);
  REQUIRE(metrics.cd_w.has_value());
  CHECK(*metrics.cd_w == doctest::Approx(0.0));
  REQUIRE(metrics.cd_s.has_value());
  CHECK(*metrics.cd_s == doctest::Approx(0.0));
  REQUIRE(metrics.cd_m.has_value());
  CHECK(*metrics.cd_m == doctest::Approx(0.0));

  // unlabeled meshes: cd_w only
  TriMesh plain = box_mesh(Vec3(0.2, 0.3, 0.1), Vec3(0, 0, 0));
  std::vector<Pose> one = {Pose::identity()};
  Rng rng2(5);
  auto m2 = chamfer_metrics(plain, one, plain, one, 2000, rng2);
  CHECK(m2.cd_w.has_value());
  CHECK(!m2.cd_s.has_value());
  CHECK(!m2.cd_m.has_value());
}

TEST_CASE("shifted cube chamfer matches dense sampling oracle scale") {
  // unit cube vs same cube shifted 0.001 along x: cd_w in [0.5, 1.0] x1000
  TriMesh cube = box_mesh(Vec3(0.5, 0.5, 0.5), Vec3(0, 0, 0));
  TriMesh shifted = box_mesh(Vec3(0.5, 0.5, 0.5), Vec3(0.001, 0, 0));
  std::vector<Pose> one = {Pose::identity()};
  Rng rng(8);
  auto metrics = chamfer_metrics(cube, one, shifted, one, 30000, rng);
  REQUIRE(metrics.cd_w.has_value());
  CHECK(*metrics.cd_w > 0.4);
  CHECK(*metrics.cd_w < 1.0);
}

TEST_CASE("farthest point sampling covers the cloud deterministically") {
  Rng rng(22);
  PointCloud c = random_cloud(200, rng);
  Rng f1(5), f2(5);
  auto i1 = farthest_point_indices(c.points, 16, f1);
  auto i2 = farthest_point_indices(c.points, 16, f2);
  CHECK(i1 == i2);
  std::set<int> uniq(i1.begin(), i1.end());
  CHECK(uniq.size() == 16);
}
