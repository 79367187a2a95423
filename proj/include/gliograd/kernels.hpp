#ifndef GLIOGRAD_KERNELS_HPP
#define GLIOGRAD_KERNELS_HPP

#include <cstdint>

namespace gg::kernels {

// Hot inner loops behind one dispatch table. The scalar backend is the
// reference; SIMD backends must match it within small rounding differences
// (checked by the equivalence tests). Kernels are serial: callers split work
// across threads over disjoint output ranges, which keeps results independent
// of the thread count.
struct Backend {
    const char* name;

    // C[M,N] (+)= A * B.  A is addressed as A[m*rsA + k*csA] so a transposed
    // operand is just swapped strides; B and C are row-major with leading
    // dimensions ldB / ldC.
    void (*gemm_nn)(int M, int N, int K,
                    const float* A, int64_t rsA, int64_t csA,
                    const float* B, int64_t ldB,
                    float* C, int64_t ldC, bool accumulate);

    // C[M,N] (+)= A[M,K] * B[N,K]^T, all row-major. Contraction runs along
    // contiguous rows of both operands.
    void (*gemm_nt)(int M, int N, int K,
                    const float* A, int64_t ldA,
                    const float* B, int64_t ldB,
                    float* C, int64_t ldC, bool accumulate);

    void (*axpy)(int64_t n, float a, const float* x, float* y);     // y += a*x
    void (*add)(int64_t n, const float* x, const float* y, float* z);
    void (*mul)(int64_t n, const float* x, const float* y, float* z);
    void (*scale)(int64_t n, float a, const float* x, float* y);    // y = a*x
    void (*affine)(int64_t n, float a, float b, const float* x, float* y); // y = a*x + b

    void (*leaky_relu_fwd)(int64_t n, float slope, const float* x, float* y);
    // dx += dy * (x > 0 ? 1 : slope)
    void (*leaky_relu_bwd)(int64_t n, float slope, const float* x, const float* dy, float* dx);

    // Reductions accumulate in double so downstream statistics stay tight.
    double (*reduce_sum)(int64_t n, const float* x);
    void (*mean_var)(int64_t n, const float* x, double* mean, double* var); // population var

    // Optimizer updates, elementwise over a parameter block.
    // SGD with momentum: g' = g + wd*p; v = mom*v + g'; p -= lr*v
    void (*sgd_update)(int64_t n, float lr, float momentum, float wd,
                       const float* g, float* v, float* p);
    // ADAM with bias correction; bc1 = 1-beta1^t, bc2 = 1-beta2^t.
    void (*adam_update)(int64_t n, float lr, float beta1, float beta2, float eps,
                        float wd, float bc1, float bc2,
                        const float* g, float* m, float* v, float* p);
};

const Backend& scalar();
#if defined(__x86_64__) || defined(_M_X64)
const Backend& avx2();
#endif

bool cpu_has_avx2();

// Active backend: AVX2 when the CPU supports it, scalar otherwise.
// GLIOGRAD_KERNELS=scalar|avx2 overrides.
const Backend& active();

} // namespace gg::kernels

#endif
