// SPDX-License-Identifier: Apache-2.0
#include "kinediff/parallel.hpp"

#include <algorithm>
#include <cstdlib>
#include <thread>

namespace kinediff {

int max_threads() {
  static const int cached = [] {
    int hw = static_cast<int>(std::thread::hardware_concurrency());
    if (hw <= 0) hw = 1;
    if (const char* env = std::getenv("KINEDIFF_THREADS")) {
      int cap = std::atoi(env);
      if (cap > 0) hw = std::min(hw, cap);
    }
    return hw;
  }();
  return cached;
}

bool in_parallel_region() {
#ifdef _OPENMP
  return omp_in_parallel() != 0;
#else
  return false;
#endif
}

double blocked_sum(const double* x, std::int64_t n) {
  constexpr std::int64_t kBlock = 4096;
  if (n <= 0) return 0.0;
  const std::int64_t nblocks = (n + kBlock - 1) / kBlock;
  std::vector<double> partial(static_cast<std::size_t>(nblocks), 0.0);
  parallel_for(
      0, nblocks,
      [&](std::int64_t b) {
        const std::int64_t lo = b * kBlock;
        const std::int64_t hi = std::min(n, lo + kBlock);
        double s = 0.0;
        for (std::int64_t i = lo; i < hi; ++i) s += x[i];
        partial[static_cast<std::size_t>(b)] = s;
      },
      4);
  double total = 0.0;
  for (double p : partial) total += p;
  return total;
}

double blocked_sum(const std::vector<double>& x) {
  return blocked_sum(x.data(), static_cast<std::int64_t>(x.size()));
}

}  // namespace kinediff
