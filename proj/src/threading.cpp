#include "gliograd/threading.hpp"

#include <algorithm>
#include <atomic>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace gg {

namespace {
std::atomic<int> g_threads{0};
}

void set_num_threads(int n) { g_threads.store(n); }

int num_threads() {
    const int n = g_threads.load();
    if (n > 0) return n;
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

namespace detail {

void parallel_for_impl(int64_t n, void (*trampoline)(void*, int64_t, int64_t), void* ctx) {
    if (n <= 0) return;
    const int threads = std::min<int64_t>(num_threads(), n);
    if (threads <= 1) {
        trampoline(ctx, 0, n);
        return;
    }
#ifdef _OPENMP
    #pragma omp parallel for schedule(static) num_threads(threads)
    for (int t = 0; t < threads; ++t) {
        const int64_t begin = n * t / threads;
        const int64_t end = n * (t + 1) / threads;
        if (begin < end) trampoline(ctx, begin, end);
    }
#else
    trampoline(ctx, 0, n);
#endif
}

} // namespace detail
} // namespace gg
