#include "trajtok/parallel.hpp"

#include <algorithm>
#include <thread>
#include <vector>

namespace trajtok {

void parallel_for(std::size_t n, int threads,
                  const std::function<void(std::size_t, std::size_t)>& fn) {
  if (n == 0) return;
  const std::size_t want = threads <= 1 ? 1 : std::min<std::size_t>(threads, n);
  if (want == 1) {
    fn(0, n);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(want);
  const std::size_t chunk = (n + want - 1) / want;
  for (std::size_t t = 0; t < want; ++t) {
    const std::size_t begin = t * chunk;
    const std::size_t end = std::min(n, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back(fn, begin, end);
  }
  for (auto& th : pool) th.join();
}

}  // namespace trajtok
