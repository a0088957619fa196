#include "gradformer/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

namespace gradformer {

namespace {

int initial_cap() {
  if (const char* env = std::getenv("GRADFORMER_THREADS")) {
    try {
      const int n = std::stoi(env);
      if (n > 0) return n;
    } catch (const std::exception&) {
    }
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

std::atomic<int>& cap_storage() {
  static std::atomic<int> cap{initial_cap()};
  return cap;
}

}  // namespace

int thread_cap() { return cap_storage().load(); }
void set_thread_cap(int threads) { cap_storage().store(std::max(1, threads)); }

void parallel_for(std::int64_t n, const std::function<void(std::int64_t)>& fn) {
  const auto workers = std::min<std::int64_t>(thread_cap(), n);
  if (workers <= 1) {
    for (std::int64_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::int64_t> next{0};
  auto run = [&] {
    for (auto i = next++; i < n; i = next++) fn(i);
  };
  std::vector<std::jthread> pool;
  for (std::int64_t w = 1; w < workers; ++w) pool.emplace_back(run);
  run();
}

}  // namespace gradformer
