#include "paraembed/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace paraembed {

namespace {
std::atomic<std::size_t> g_threads{0};
}

void set_num_threads(std::size_t n) { g_threads.store(n); }

std::size_t num_threads() {
  const std::size_t n = g_threads.load();
  if (n != 0) return n;
  return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn,
                  std::size_t threads) {
  if (n == 0) return;
  if (threads == 0) threads = num_threads();
  threads = std::min(threads, n);
  if (threads <= 1) {
    fn(0, n);
    return;
  }

  const std::size_t chunk = (n + threads - 1) / threads;
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> workers;
  workers.reserve(threads);
  for (std::size_t t = 0; t < threads; ++t) {
    const std::size_t begin = t * chunk;
    const std::size_t end = std::min(n, begin + chunk);
    if (begin >= end) break;
    workers.emplace_back([&, begin, end] {
      try {
        fn(begin, end);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    });
  }
  for (auto& w : workers) w.join();
  if (error) std::rethrow_exception(error);
}

void parallel_for_each_dynamic(std::size_t n, const std::function<void(std::size_t)>& fn, std::size_t threads) {
  if (n == 0) return;
  if (threads == 0) threads = num_threads();
  threads = std::min(threads, n);
  std::atomic<std::size_t> next{0};
  parallel_for(
      threads,
      [&](std::size_t, std::size_t) {
        for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
      },
      threads);
}

}  // namespace paraembed
