#pragma once

#include <cstddef>
#include <functional>

namespace ftriage {

/// Process-wide worker count used by parallel_for. 0 means hardware_concurrency.
void set_thread_count(std::size_t n);
std::size_t thread_count();

/// Runs body(i) for i in [0, n) over contiguous chunks. Each index is
/// processed exactly once, so results written to slot i are independent of
/// the thread count. The first exception thrown by any worker is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

} // namespace ftriage
