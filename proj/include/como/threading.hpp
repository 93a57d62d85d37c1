#pragma once

#include <functional>
#include <vector>

namespace como {

// Worker count: min(hardware_concurrency, COMO_THREADS) with a floor of 1.
int worker_count();

// Runs fn(begin, end, worker) over [0, n) split into contiguous chunks,
// one per worker. Partitioning depends only on (n, worker_count) so the
// same build on the same machine produces identical work splits.
void parallel_chunks(long n, const std::function<void(long, long, int)>& fn);

// Convenience: fn(i) for i in [0, n), parallel over chunks.
void parallel_for(long n, const std::function<void(long)>& fn);

}  // namespace como
