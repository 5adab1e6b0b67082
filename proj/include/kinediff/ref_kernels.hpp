// SPDX-License-Identifier: Apache-2.0
#pragma once

// Single-threaded reference kernels. These stay deliberately naive and
// independent of the OpenMP paths so tests can compare the two, and the
// bench tool can report the speedup.

#include <cstdint>
#include <utility>
#include <vector>

namespace kinediff::ref {

// c[m x n] = a[m x k] * b[k x n], plain triple loop.
void matmul(const double* a, const double* b, double* c, std::int64_t m,
            std::int64_t k, std::int64_t n);

double sum(const double* x, std::int64_t n);

// Brute-force scan; ties resolved to the lowest index.
// Points are packed xyz triples.
std::pair<int, double> nearest_neighbor(const double* query, const double* pts,
                                        std::int64_t n);

// O(Na*Nb) symmetric Chamfer: 0.5*(mean_a min_b ||a-b|| + mean_b min_a ||..||).
double chamfer(const double* a, std::int64_t na, const double* b, std::int64_t nb);

}  // namespace kinediff::ref
