#pragma once

#include <cstddef>
#include <functional>

namespace adiff {

/// Caps the worker pool used by parallel_for. 0 restores the hardware default.
void set_thread_cap(unsigned n);
unsigned thread_cap();

/// Runs body(i) for i in [0, n) on up to thread_cap() threads. The first exception thrown by any
/// body is rethrown after all workers join. Nested calls from a worker run sequentially.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace adiff
