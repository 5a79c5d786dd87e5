#pragma once

#include <cstddef>
#include <functional>

namespace nightvpr {

// Process-wide worker ceiling. 1 (the default) runs everything inline.
void set_max_threads(unsigned n);
unsigned max_threads();

// Runs fn(i) for i in [0, n). Work is split into contiguous chunks; callers
// that reduce must do so in index order afterwards to stay reproducible.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace nightvpr
