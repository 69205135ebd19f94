#pragma once

#include <cstddef>
#include <functional>

namespace tarpro {

/// Worker count: TARPRO_THREADS when set to a positive integer, otherwise the
/// number of available cores.
std::size_t default_thread_count();

/// Runs body(i) for i in [0, n) on up to `threads` workers (0 = default).
/// Indices are handed out dynamically; the first exception is rethrown after
/// all workers stop.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body,
                  std::size_t threads = 0);

}  // namespace tarpro
