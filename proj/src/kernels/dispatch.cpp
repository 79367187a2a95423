#include "gliograd/kernels.hpp"

#include <cstdlib>
#include <cstring>

namespace gg::kernels {

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(_M_X64)
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

const Backend& active() {
    static const Backend* chosen = [] {
        const char* force = std::getenv("GLIOGRAD_KERNELS");
        if (force && std::strcmp(force, "scalar") == 0) return &scalar();
#if defined(__x86_64__) || defined(_M_X64)
        if (force && std::strcmp(force, "avx2") == 0) return &avx2();
        if (cpu_has_avx2()) return &avx2();
#endif
        return &scalar();
    }();
    return *chosen;
}

} // namespace gg::kernels
