#ifndef GLIOGRAD_THREADING_HPP
#define GLIOGRAD_THREADING_HPP

#include <cstdint>

namespace gg {

// Global worker count for parallel loops (0 = library default).
// Parallel regions in this codebase only ever partition disjoint output
// ranges, so results are bit-identical for any thread count.
void set_num_threads(int n);
int num_threads();

// Runs fn(begin, end) over a static partition of [0, n).
template <typename Fn>
void parallel_for(int64_t n, Fn&& fn);

namespace detail {
void parallel_for_impl(int64_t n, void (*trampoline)(void*, int64_t, int64_t), void* ctx);
}

template <typename Fn>
void parallel_for(int64_t n, Fn&& fn) {
    auto trampoline = [](void* ctx, int64_t b, int64_t e) {
        (*static_cast<Fn*>(ctx))(b, e);
    };
    detail::parallel_for_impl(n, trampoline, &fn);
}

} // namespace gg

#endif
