#include "gliograd/kernels.hpp"

#include <cmath>

// Reference backend: plain loops, no intrinsics. Every SIMD backend is
// equivalence-tested against these.

namespace gg::kernels {
namespace {

void gemm_nn_scalar(int M, int N, int K,
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

void gemm_nt_scalar(int M, int N, int K,
                    const float* A, int64_t ldA,
                    const float* B, int64_t ldB,
                    float* C, int64_t ldC, bool accumulate) {
    for (int m = 0; m < M; ++m) {
        const float* a = A + m * ldA;
        float* c = C + m * ldC;
        for (int n = 0; n < N; ++n) {
            const float* b = B + n * ldB;
            float acc = 0.f;
            for (int k = 0; k < K; ++k) acc += a[k] * b[k];
            c[n] = accumulate ? c[n] + acc : acc;
        }
    }
}

void axpy_scalar(int64_t n, float a, const float* x, float* y) {
    for (int64_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void add_scalar(int64_t n, const float* x, const float* y, float* z) {
    for (int64_t i = 0; i < n; ++i) z[i] = x[i] + y[i];
}

void mul_scalar(int64_t n, const float* x, const float* y, float* z) {
    for (int64_t i = 0; i < n; ++i) z[i] = x[i] * y[i];
}

void scale_scalar(int64_t n, float a, const float* x, float* y) {
    for (int64_t i = 0; i < n; ++i) y[i] = a * x[i];
}

void affine_scalar(int64_t n, float a, float b, const float* x, float* y) {
    for (int64_t i = 0; i < n; ++i) y[i] = a * x[i] + b;
}

void leaky_relu_fwd_scalar(int64_t n, float slope, const float* x, float* y) {
    for (int64_t i = 0; i < n; ++i) {
        const float v = x[i];
        y[i] = v > 0.f ? v : slope * v;
    }
}

void leaky_relu_bwd_scalar(int64_t n, float slope, const float* x, const float* dy, float* dx) {
    for (int64_t i = 0; i < n; ++i) dx[i] += dy[i] * (x[i] > 0.f ? 1.f : slope);
}

double reduce_sum_scalar(int64_t n, const float* x) {
    double s = 0.0;
    for (int64_t i = 0; i < n; ++i) s += x[i];
    return s;
}

void mean_var_scalar(int64_t n, const float* x, double* mean, double* var) {
    double s = 0.0;
    for (int64_t i = 0; i < n; ++i) s += x[i];
    const double m = s / static_cast<double>(n);
    double q = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        const double d = x[i] - m;
        q += d * d;
    }
    *mean = m;
    *var = q / static_cast<double>(n);
}

void sgd_update_scalar(int64_t n, float lr, float momentum, float wd,
                       const float* g, float* v, float* p) {
    for (int64_t i = 0; i < n; ++i) {
        const float gi = g[i] + wd * p[i];
        v[i] = momentum * v[i] + gi;
        p[i] -= lr * v[i];
    }
}

void adam_update_scalar(int64_t n, float lr, float beta1, float beta2, float eps,
                        float wd, float bc1, float bc2,
                        const float* g, float* m, float* v, float* p) {
    for (int64_t i = 0; i < n; ++i) {
        const float gi = g[i] + wd * p[i];
        m[i] = beta1 * m[i] + (1.f - beta1) * gi;
        v[i] = beta2 * v[i] + (1.f - beta2) * gi * gi;
        const float mhat = m[i] / bc1;
        const float vhat = v[i] / bc2;
        p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
}

} // namespace

const Backend& scalar() {
    static const Backend backend = {
        "scalar",
        gemm_nn_scalar,
        gemm_nt_scalar,
        axpy_scalar,
        add_scalar,
        mul_scalar,
        scale_scalar,
        affine_scalar,
        leaky_relu_fwd_scalar,
        leaky_relu_bwd_scalar,
        reduce_sum_scalar,
        mean_var_scalar,
        sgd_update_scalar,
        adam_update_scalar,
    };
    return backend;
}

} // namespace gg::kernels
