// SPDX-License-Identifier: Apache-2.0
#include "kinediff/ref_kernels.hpp"

#include <cmath>

namespace kinediff::ref {

void matmul(const double* a, const double* b, double* c, std::int64_t m,
            std::int64_t k, std::int64_t n) {
  for (std::int64_t i = 0; i < m; ++i) {
    for (std::int64_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::int64_t kk = 0; kk < k; ++kk) s += a[i * k + kk] * b[kk * n + j];
      c[i * n + j] = s;
    }
  }
}

double sum(const double* x, std::int64_t n) {
  // Matches the blocked reduction order of kinediff::blocked_sum.
  constexpr std::int64_t kBlock = 4096;
  double total = 0.0;
  for (std::int64_t lo = 0; lo < n; lo += kBlock) {
    const std::int64_t hi = lo + kBlock < n ? lo + kBlock : n;
    double s = 0.0;
    for (std::int64_t i = lo; i < hi; ++i) s += x[i];
    total += s;
  }
  return total;
}

std::pair<int, double> nearest_neighbor(const double* query, const double* pts,
                                        std::int64_t n) {
  int best = 0;
  double best_d2 = -1.0;
  for (std::int64_t i = 0; i < n; ++i) {
    const double dx = pts[3 * i] - query[0];
    const double dy = pts[3 * i + 1] - query[1];
    const double dz = pts[3 * i + 2] - query[2];
    const double d2 = dx * dx + dy * dy + dz * dz;
    if (best_d2 < 0.0 || d2 < best_d2) {
      best_d2 = d2;
      best = static_cast<int>(i);
    }
  }
  return {best, std::sqrt(best_d2)};
}

double chamfer(const double* a, std::int64_t na, const double* b, std::int64_t nb) {
  auto one_way = [](const double* p, std::int64_t np, const double* q, std::int64_t nq) {
    double acc = 0.0;
    for (std::int64_t i = 0; i < np; ++i) {
      double best = -1.0;
      for (std::int64_t j = 0; j < nq; ++j) {
        const double dx = p[3 * i] - q[3 * j];
        const double dy = p[3 * i + 1] - q[3 * j + 1];
        const double dz = p[3 * i + 2] - q[3 * j + 2];
        const double d2 = dx * dx + dy * dy + dz * dz;
        if (best < 0.0 || d2 < best) best = d2;
      }
      acc += std::sqrt(best);
    }
    return acc / static_cast<double>(np);
  };
  return 0.5 * (one_way(a, na, b, nb) + one_way(b, nb, a, na));
}

}  // namespace kinediff::ref
