#pragma once

#include <cstddef>
#include <functional>

namespace neuron_steer {

// Worker count: NEURON_STEER_THREADS if set to a positive integer, otherwise
// the hardware concurrency (at least 1).
std::size_t thread_count();

// Runs body(i) for i in [0, n) across up to thread_count() threads. The first
// exception thrown by any task is rethrown on the calling thread.
void parallel_for(std::size_t n, const std::function<void(std::size_t)> &body);

} // namespace neuron_steer
