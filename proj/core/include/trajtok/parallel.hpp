#pragma once

#include <cstddef>
#include <functional>

namespace trajtok {

// Splits [0, n) into contiguous chunks and runs fn(begin, end) on each.
// threads <= 1 (or a small n) runs inline on the calling thread. Chunks are
// disjoint, so kernels that only write their own range stay bit-identical
// to the serial schedule.
void parallel_for(std::size_t n, int threads,
                  const std::function<void(std::size_t, std::size_t)>& fn);

}  // namespace trajtok
