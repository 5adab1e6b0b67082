// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace kinediff {

// Worker cap: min(hardware threads, KINEDIFF_THREADS when set and > 0).
int max_threads();

// True when called from inside an OpenMP parallel region.
bool in_parallel_region();

// Runs body(i) for i in [begin, end). Iterations must be independent and
// write disjoint outputs; results are then identical for any thread count.
// Nested calls (from inside another parallel region) run serially.
template <class F>
void parallel_for(std::int64_t begin, std::int64_t end, F&& body,
                  std::int64_t grain = 512) {
#ifdef _OPENMP
  if (end - begin >= grain && max_threads() > 1 && !in_parallel_region()) {
#pragma omp parallel for schedule(static) num_threads(kinediff::max_threads())
    for (std::int64_t i = begin; i < end; ++i) body(i);
    return;
  }
#endif
  for (std::int64_t i = begin; i < end; ++i) body(i);
}

// Sum with a fixed blocked reduction order: 4096-element blocks are reduced
// serially and block partials are combined in index order, so the result is
// bitwise identical for any thread count.
double blocked_sum(const double* x, std::int64_t n);
double blocked_sum(const std::vector<double>& x);

}  // namespace kinediff
