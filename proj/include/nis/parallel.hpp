#pragma once

#include <cstddef>
#include <functional>

namespace nis {

/// Worker cap used by every parallel loop; 0 means hardware concurrency.
void set_thread_count(int threads);
int thread_count();

/// Runs body(i) for i in [0, n) on up to thread_count() workers with static
/// contiguous chunks. Callers keep results per index and reduce in index
/// order, which makes output independent of the worker count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace nis
