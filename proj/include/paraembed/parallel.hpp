#pragma once

#include <cstddef>
#include <functional>

namespace paraembed {

// Process-wide cap on worker threads. 0 means hardware_concurrency.
void set_num_threads(std::size_t n);
std::size_t num_threads();

// Runs fn(begin, end) over contiguous chunks of [0, n). Chunks are disjoint,
// so callers that write only to their own indices get results independent
// of the thread count. Exceptions from workers are rethrown on the caller.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn,
                  std::size_t threads = 0);

// Calls fn(i) for every i in [0, n), handing indices to workers one at a time
// from a shared counter. Suits uneven items such as length-sorted batches.
void parallel_for_each_dynamic(std::size_t n, const std::function<void(std::size_t)>& fn, std::size_t threads = 0);

}  // namespace paraembed
