#pragma once

#include <functional>

namespace choicectx {

/// Worker cap: CHOICECTX_THREADS if set, else hardware concurrency.
int max_threads();

/// Runs fn(0..n-1) across up to max_threads() workers. fn must be safe to
/// call concurrently for distinct indices.
void parallel_for(int n, const std::function<void(int)>& fn);

}  // namespace choicectx
