#pragma once

#include <cstddef>
#include <functional>

namespace mcal {

/// Thread count from the MCAL_THREADS environment variable if set, else
/// `requested` if positive, else the hardware concurrency.
int resolve_threads(int requested = 0);

/**
 * Runs fn(0..count-1) on up to `threads` workers. Each index writes only its
 * own result slot, so output never depends on scheduling. If any call
 * throws, the exception from the lowest failing index is rethrown.
 */
void parallel_for(std::size_t count, int threads, const std::function<void(std::size_t)>& fn);

} // namespace mcal
