#pragma once

#include <cstdint>
#include <functional>

namespace gradformer {

// Worker cap: GRADFORMER_THREADS when set and positive, otherwise the
// hardware concurrency. Read once per process.
int thread_cap();
void set_thread_cap(int threads);

// Runs fn(i) for i in [0, n). Iterations must write disjoint outputs; each
// iteration's own arithmetic is unchanged by the split, so results do not
// depend on the thread count.
void parallel_for(std::int64_t n, const std::function<void(std::int64_t)>& fn);

}  // namespace gradformer
