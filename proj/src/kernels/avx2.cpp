#include "gliograd/kernels.hpp"

#if defined(__x86_64__) || defined(_M_X64)

#include <immintrin.h>

#include <cmath>

// AVX2+FMA backend. The gemm_nn microkernel holds a 4x32 accumulator tile
// (16 ymm registers); ragged edges fall through to plain loops that keep the
// same per-element accumulation order as the vector body would not — edge
// results are allowed to differ from the scalar backend within rounding.

namespace gg::kernels {
namespace {

// ---- gemm_nn: C[M,N] (+)= A * B, A strided, B/C row-major ----------------

inline void nn_edge(int M, int N, int K,
                    const float* A, int64_t rsA, int64_t csA,
                    const float* B, int64_t ldB,
                    float* C, int64_t ldC, bool accumulate) {
    for (int m = 0; m < M; ++m) {
        float* c = C + m * ldC;
        if (!accumulate) {
            for (int n = 0; n < N; ++n) c[n] = 0.f;
        }
        const float* a = A + m * rsA;
        for (int k = 0; k < K; ++k) {
            const float av = a[k * csA];
            const float* b = B + k * ldB;
            for (int n = 0; n < N; ++n) c[n] += av * b[n];
        }
    }
}

// 6x16 tile: 12 accumulators + 2 B vectors + 1 broadcast = 15 ymm, no spills.
template <int ROWS>
inline void nn_tile16(int K,
                      const float* A, int64_t rsA, int64_t csA,
                      const float* B, int64_t ldB,
                      float* C, int64_t ldC, bool accumulate) {
    __m256 a0[ROWS], a1[ROWS];
    for (int r = 0; r < ROWS; ++r) {
        a0[r] = _mm256_setzero_ps();
        a1[r] = _mm256_setzero_ps();
    }
    const float* b = B;
    for (int k = 0; k < K; ++k, b += ldB) {
        const __m256 b0 = _mm256_loadu_ps(b);
        const __m256 b1 = _mm256_loadu_ps(b + 8);
        const float* ak = A + k * csA;
        for (int r = 0; r < ROWS; ++r) {
            const __m256 av = _mm256_set1_ps(ak[r * rsA]);
            a0[r] = _mm256_fmadd_ps(av, b0, a0[r]);
            a1[r] = _mm256_fmadd_ps(av, b1, a1[r]);
        }
    }
    for (int r = 0; r < ROWS; ++r) {
        float* c = C + r * ldC;
        __m256 o0 = a0[r], o1 = a1[r];
        if (accumulate) {
            o0 = _mm256_add_ps(o0, _mm256_loadu_ps(c));
            o1 = _mm256_add_ps(o1, _mm256_loadu_ps(c + 8));
        }
        _mm256_storeu_ps(c, o0);
        _mm256_storeu_ps(c + 8, o1);
    }
}

template <int ROWS>
inline void nn_tile8(int K,
                     const float* A, int64_t rsA, int64_t csA,
                     const float* B, int64_t ldB,
                     float* C, int64_t ldC, bool accumulate) {
    __m256 acc[ROWS];
    for (int r = 0; r < ROWS; ++r) acc[r] = _mm256_setzero_ps();
    for (int k = 0; k < K; ++k) {
        const __m256 b0 = _mm256_loadu_ps(B + k * ldB);
        const float* ak = A + k * csA;
        for (int r = 0; r < ROWS; ++r) {
            const __m256 a = _mm256_set1_ps(ak[r * rsA]);
            acc[r] = _mm256_fmadd_ps(a, b0, acc[r]);
        }
    }
    for (int r = 0; r < ROWS; ++r) {
        float* c = C + r * ldC;
        __m256 out = acc[r];
        if (accumulate) out = _mm256_add_ps(out, _mm256_loadu_ps(c));
        _mm256_storeu_ps(c, out);
    }
}

template <int ROWS>
inline void nn_rows(int N, int K,
                    const float* A, int64_t rsA, int64_t csA,
                    const float* B, int64_t ldB,
                    float* C, int64_t ldC, bool accumulate) {
    int n = 0;
    for (; n + 16 <= N; n += 16)
        nn_tile16<ROWS>(K, A, rsA, csA, B + n, ldB, C + n, ldC, accumulate);
    for (; n + 8 <= N; n += 8)
        nn_tile8<ROWS>(K, A, rsA, csA, B + n, ldB, C + n, ldC, accumulate);
    if (n < N)
        nn_edge(ROWS, N - n, K, A, rsA, csA, B + n, ldB, C + n, ldC, accumulate);
}

void gemm_nn_avx2(int M, int N, int K,
                  const float* A, int64_t rsA, int64_t csA,
                  const float* B, int64_t ldB,
                  float* C, int64_t ldC, bool accumulate) {
    int m = 0;
    for (; m + 6 <= M; m += 6)
        nn_rows<6>(N, K, A + m * rsA, rsA, csA, B, ldB, C + m * ldC, ldC, accumulate);
    switch (M - m) {
        case 5: nn_rows<5>(N, K, A + m * rsA, rsA, csA, B, ldB, C + m * ldC, ldC, accumulate); break;
        case 4: nn_rows<4>(N, K, A + m * rsA, rsA, csA, B, ldB, C + m * ldC, ldC, accumulate); break;
        case 3: nn_rows<3>(N, K, A + m * rsA, rsA, csA, B, ldB, C + m * ldC, ldC, accumulate); break;
        case 2: nn_rows<2>(N, K, A + m * rsA, rsA, csA, B, ldB, C + m * ldC, ldC, accumulate); break;
        case 1: nn_rows<1>(N, K, A + m * rsA, rsA, csA, B, ldB, C + m * ldC, ldC, accumulate); break;
        default: break;
    }
}

// ---- gemm_nt: C[M,N] (+)= A[M,K] * B[N,K]^T -------------------------------

inline float hsum(__m256 v) {
    __m128 lo = _mm256_castps256_ps128(v);
    __m128 hi = _mm256_extractf128_ps(v, 1);
    lo = _mm_add_ps(lo, hi);
    lo = _mm_hadd_ps(lo, lo);
    lo = _mm_hadd_ps(lo, lo);
    return _mm_cvtss_f32(lo);
}

template <int RN>
inline void nt_tile(int K, const float* a0, const float* a1,
                    const float* B, int64_t ldB,
                    float* c0, float* c1, bool two_rows, bool accumulate) {
    __m256 acc0[RN], acc1[RN];
    for (int j = 0; j < RN; ++j) {
        acc0[j] = _mm256_setzero_ps();
        acc1[j] = _mm256_setzero_ps();
    }
    int k = 0;
    for (; k + 8 <= K; k += 8) {
        const __m256 av0 = _mm256_loadu_ps(a0 + k);
        const __m256 av1 = two_rows ? _mm256_loadu_ps(a1 + k) : _mm256_setzero_ps();
        for (int j = 0; j < RN; ++j) {
            const __m256 bv = _mm256_loadu_ps(B + j * ldB + k);
            acc0[j] = _mm256_fmadd_ps(av0, bv, acc0[j]);
            if (two_rows) acc1[j] = _mm256_fmadd_ps(av1, bv, acc1[j]);
        }
    }
    for (int j = 0; j < RN; ++j) {
        float s0 = hsum(acc0[j]);
        float s1 = two_rows ? hsum(acc1[j]) : 0.f;
        for (int kk = k; kk < K; ++kk) {
            s0 += a0[kk] * B[j * ldB + kk];
            if (two_rows) s1 += a1[kk] * B[j * ldB + kk];
        }
        c0[j] = accumulate ? c0[j] + s0 : s0;
        if (two_rows) c1[j] = accumulate ? c1[j] + s1 : s1;
    }
}

void gemm_nt_avx2(int M, int N, int K,
                  const float* A, int64_t ldA,
                  const float* B, int64_t ldB,
                  float* C, int64_t ldC, bool accumulate) {
    int m = 0;
    for (; m + 2 <= M; m += 2) {
        const float* a0 = A + m * ldA;
        const float* a1 = A + (m + 1) * ldA;
        float* c0 = C + m * ldC;
        float* c1 = C + (m + 1) * ldC;
        int n = 0;
        for (; n + 4 <= N; n += 4)
            nt_tile<4>(K, a0, a1, B + n * ldB, ldB, c0 + n, c1 + n, true, accumulate);
        for (; n < N; ++n)
            nt_tile<1>(K, a0, a1, B + n * ldB, ldB, c0 + n, c1 + n, true, accumulate);
    }
    if (m < M) {
        const float* a0 = A + m * ldA;
        float* c0 = C + m * ldC;
        int n = 0;
        for (; n + 4 <= N; n += 4)
            nt_tile<4>(K, a0, a0, B + n * ldB, ldB, c0 + n, nullptr, false, accumulate);
        for (; n < N; ++n)
            nt_tile<1>(K, a0, a0, B + n * ldB, ldB, c0 + n, nullptr, false, accumulate);
    }
}

// ---- elementwise -----------------------------------------------------------

void axpy_avx2(int64_t n, float a, const float* x, float* y) {
    const __m256 av = _mm256_set1_ps(a);
    int64_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256 yv = _mm256_fmadd_ps(av, _mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i));
        _mm256_storeu_ps(y + i, yv);
    }
    for (; i < n; ++i) y[i] += a * x[i];
}

void add_avx2(int64_t n, const float* x, const float* y, float* z) {
    int64_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(z + i, _mm256_add_ps(_mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
    for (; i < n; ++i) z[i] = x[i] + y[i];
}

void mul_avx2(int64_t n, const float* x, const float* y, float* z) {
    int64_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(z + i, _mm256_mul_ps(_mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
    for (; i < n; ++i) z[i] = x[i] * y[i];
}

void scale_avx2(int64_t n, float a, const float* x, float* y) {
    const __m256 av = _mm256_set1_ps(a);
    int64_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(y + i, _mm256_mul_ps(av, _mm256_loadu_ps(x + i)));
    for (; i < n; ++i) y[i] = a * x[i];
}

void affine_avx2(int64_t n, float a, float b, const float* x, float* y) {
    const __m256 av = _mm256_set1_ps(a);
    const __m256 bv = _mm256_set1_ps(b);
    int64_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(y + i, _mm256_fmadd_ps(av, _mm256_loadu_ps(x + i), bv));
    for (; i < n; ++i) y[i] = a * x[i] + b;
}

void leaky_relu_fwd_avx2(int64_t n, float slope, const float* x, float* y) {
    const __m256 sv = _mm256_set1_ps(slope);
    const __m256 zero = _mm256_setzero_ps();
    int64_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256 xv = _mm256_loadu_ps(x + i);
        const __m256 neg = _mm256_mul_ps(sv, xv);
        const __m256 mask = _mm256_cmp_ps(xv, zero, _CMP_GT_OQ);
        _mm256_storeu_ps(y + i, _mm256_blendv_ps(neg, xv, mask));
    }
    for (; i < n; ++i) {
        const float v = x[i];
        y[i] = v > 0.f ? v : slope * v;
    }
}

void leaky_relu_bwd_avx2(int64_t n, float slope, const float* x, const float* dy, float* dx) {
    const __m256 sv = _mm256_set1_ps(slope);
    const __m256 one = _mm256_set1_ps(1.f);
    const __m256 zero = _mm256_setzero_ps();
    int64_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256 xv = _mm256_loadu_ps(x + i);
        const __m256 mask = _mm256_cmp_ps(xv, zero, _CMP_GT_OQ);
        const __m256 factor = _mm256_blendv_ps(sv, one, mask);
        const __m256 out = _mm256_fmadd_ps(_mm256_loadu_ps(dy + i), factor,
                                           _mm256_loadu_ps(dx + i));
        _mm256_storeu_ps(dx + i, out);
    }
    for (; i < n; ++i) dx[i] += dy[i] * (x[i] > 0.f ? 1.f : slope);
}

// Reductions accumulate in 4-lane double vectors; the lane order is fixed, so
// results are identical run to run.

double reduce_sum_avx2(int64_t n, const float* x) {
    __m256d acc = _mm256_setzero_pd();
    int64_t i = 0;
    for (; i + 4 <= n; i += 4)
        acc = _mm256_add_pd(acc, _mm256_cvtps_pd(_mm_loadu_ps(x + i)));
    alignas(32) double lanes[4];
    _mm256_store_pd(lanes, acc);
    double s = (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
    for (; i < n; ++i) s += x[i];
    return s;
}

void mean_var_avx2(int64_t n, const float* x, double* mean, double* var) {
    const double m = reduce_sum_avx2(n, x) / static_cast<double>(n);
    const __m256d mv = _mm256_set1_pd(m);
    __m256d acc = _mm256_setzero_pd();
    int64_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d d = _mm256_sub_pd(_mm256_cvtps_pd(_mm_loadu_ps(x + i)), mv);
        acc = _mm256_fmadd_pd(d, d, acc);
    }
    alignas(32) double lanes[4];
    _mm256_store_pd(lanes, acc);
    double q = (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
    for (; i < n; ++i) {
        const double d = x[i] - m;
        q += d * d;
    }
    *mean = m;
    *var = q / static_cast<double>(n);
}

void sgd_update_avx2(int64_t n, float lr, float momentum, float wd,
                     const float* g, float* v, float* p) {
    const __m256 lrv = _mm256_set1_ps(lr);
    const __m256 mom = _mm256_set1_ps(momentum);
    const __m256 wdv = _mm256_set1_ps(wd);
    int64_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256 pv = _mm256_loadu_ps(p + i);
        const __m256 gv = _mm256_fmadd_ps(wdv, pv, _mm256_loadu_ps(g + i));
        const __m256 vv = _mm256_fmadd_ps(mom, _mm256_loadu_ps(v + i), gv);
        _mm256_storeu_ps(v + i, vv);
        _mm256_storeu_ps(p + i, _mm256_fnmadd_ps(lrv, vv, pv));
    }
    for (; i < n; ++i) {
        const float gi = g[i] + wd * p[i];
        v[i] = momentum * v[i] + gi;
        p[i] -= lr * v[i];
    }
}

void adam_update_avx2(int64_t n, float lr, float beta1, float beta2, float eps,
                      float wd, float bc1, float bc2,
                      const float* g, float* m, float* v, float* p) {
    const __m256 b1 = _mm256_set1_ps(beta1);
    const __m256 b2 = _mm256_set1_ps(beta2);
    const __m256 ob1 = _mm256_set1_ps(1.f - beta1);
    const __m256 ob2 = _mm256_set1_ps(1.f - beta2);
    const __m256 epsv = _mm256_set1_ps(eps);
    const __m256 wdv = _mm256_set1_ps(wd);
    const __m256 lrv = _mm256_set1_ps(lr);
    const __m256 rbc1 = _mm256_set1_ps(1.f / bc1);
    const __m256 rbc2 = _mm256_set1_ps(1.f / bc2);
    int64_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256 pv = _mm256_loadu_ps(p + i);
        const __m256 gv = _mm256_fmadd_ps(wdv, pv, _mm256_loadu_ps(g + i));
        const __m256 mv = _mm256_fmadd_ps(ob1, gv, _mm256_mul_ps(b1, _mm256_loadu_ps(m + i)));
        const __m256 vv = _mm256_fmadd_ps(ob2, _mm256_mul_ps(gv, gv),
                                          _mm256_mul_ps(b2, _mm256_loadu_ps(v + i)));
        _mm256_storeu_ps(m + i, mv);
        _mm256_storeu_ps(v + i, vv);
        const __m256 mhat = _mm256_mul_ps(mv, rbc1);
        const __m256 vhat = _mm256_mul_ps(vv, rbc2);
        const __m256 denom = _mm256_add_ps(_mm256_sqrt_ps(vhat), epsv);
        _mm256_storeu_ps(p + i, _mm256_sub_ps(pv, _mm256_div_ps(_mm256_mul_ps(lrv, mhat), denom)));
    }
    for (; i < n; ++i) {
        const float gi = g[i] + wd * p[i];
        m[i] = beta1 * m[i] + (1.f - beta1) * gi;
        v[i] = beta2 * v[i] + (1.f - beta2) * gi * gi;
        const float mhat = m[i] / bc1;
        const float vhat = v[i] / bc2;
        p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
}

} // namespace

const Backend& avx2() {
    static const Backend backend = {
        "avx2",
        gemm_nn_avx2,
        gemm_nt_avx2,
        axpy_avx2,
        add_avx2,
        mul_avx2,
        scale_avx2,
        affine_avx2,
        leaky_relu_fwd_avx2,
        leaky_relu_bwd_avx2,
        reduce_sum_avx2,
        mean_var_avx2,
        sgd_update_avx2,
        adam_update_avx2,
    };
    return backend;
}

} // namespace gg::kernels

#endif // x86_64
