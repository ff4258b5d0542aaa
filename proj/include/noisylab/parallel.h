#pragma once

#include <cstdint>
#include <functional>

namespace noisylab {

// Worker cap: NOISYLAB_THREADS if set, else the hardware concurrency.
int worker_count();
void set_worker_count(int workers);

// Runs body(i) for i in [0, count). Iterations must write disjoint outputs;
// callers that reduce do so afterwards in index order, which keeps results
// bit-identical for any worker count.
void parallel_for(std::int64_t count, const std::function<void(std::int64_t)>& body);

}  // namespace noisylab
