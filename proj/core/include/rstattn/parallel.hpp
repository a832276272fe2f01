#ifndef RSTATTN_PARALLEL_HPP
#define RSTATTN_PARALLEL_HPP

#include <functional>

namespace rstattn {

/// Worker cap for document fan-out: RSTATTN_THREADS if set (minimum 1),
/// otherwise the hardware concurrency.
int thread_cap();

/// Runs f(i) for i in [0, n) on up to thread_cap() workers. Work items must
/// be independent; results keyed by index stay deterministic regardless of
/// the worker count.
void parallel_for(int n, const std::function<void(int)>& f);

}  // namespace rstattn

#endif
