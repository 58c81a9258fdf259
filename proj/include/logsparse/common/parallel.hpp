#pragma once

#include <cstddef>
#include <functional>

namespace logsparse {

/// Number of worker threads used when a caller passes 0.
std::size_t default_thread_count();

/// Runs body(i) for every i in [0, count). Work is split into contiguous
/// chunks over at most `threads` workers; body must only write to
/// index-private state. The first exception thrown by any worker is
/// rethrown on the calling thread.
void parallel_for(std::size_t count, std::size_t threads,
                  const std::function<void(std::size_t)>& body);

}  // namespace logsparse
