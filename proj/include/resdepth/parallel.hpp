#pragma once

#include <cstddef>
#include <functional>

namespace resdepth {

// Global worker count used by parallel_for. Defaults to the hardware
// concurrency; the CLI maps --threads / RESDEPTH_THREADS onto this.
void set_thread_count(int n);
int thread_count();

// Fork-join loop over [0, n): the range is cut into at most thread_count()
// contiguous chunks and fn(worker_index, begin, end) runs once per chunk.
// Chunk boundaries depend only on (n, thread_count()), so per-worker
// accumulators reduced in worker order give reproducible results for a
// fixed thread count. Not reentrant.
void parallel_for(std::size_t n,
                  const std::function<void(int worker, std::size_t begin, std::size_t end)>& fn);

// Number of chunks parallel_for will use for a loop of length n.
int parallel_workers(std::size_t n);

} // namespace resdepth
