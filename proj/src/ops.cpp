#include "gliograd/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "gliograd/error.hpp"
#include "gliograd/kernels.hpp"
#include "gliograd/threading.hpp"

namespace gg {

namespace {

using detail::Node;

[[noreturn]] void shape_error(const char* op, const Shape& a, const Shape& b) {
    fail(ErrorCode::Data, std::string(op) + ": incompatible shapes " + shape_str(a) +
                              " vs " + shape_str(b));
}

// Parent gradient buffer, or null when that parent does not need one.
float* pgrad(Node& n, size_t i) {
    Node* p = n.parents[i].get();
    if (!p->requires_grad) return nullptr;
    p->ensure_grad();
    return p->grad.data();
}

const kernels::Backend& K() { return kernels::active(); }

} // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    if (!same_shape(a.shape(), b.shape())) shape_error("add", a.shape(), b.shape());
    Tensor out = Tensor::make(a.shape(), {a, b}, [](Node& n) {
        const int64_t sz = static_cast<int64_t>(n.value.size());
        for (size_t i = 0; i < 2; ++i)
            if (float* g = pgrad(n, i)) K().axpy(sz, 1.f, n.grad.data(), g);
    });
    K().add(out.numel(), a.data(), b.data(), out.data());
    return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    if (!same_shape(a.shape(), b.shape())) shape_error("mul", a.shape(), b.shape());
    Tensor out = Tensor::make(a.shape(), {a, b}, [](Node& n) {
        const int64_t sz = static_cast<int64_t>(n.value.size());
        const float* av = n.parents[0]->value.data();
        const float* bv = n.parents[1]->value.data();
        if (float* ga = pgrad(n, 0))
            for (int64_t i = 0; i < sz; ++i) ga[i] += n.grad[i] * bv[i];
        if (float* gb = pgrad(n, 1))
            for (int64_t i = 0; i < sz; ++i) gb[i] += n.grad[i] * av[i];
    });
    K().mul(out.numel(), a.data(), b.data(), out.data());
    return out;
}

Tensor scale(const Tensor& a, float s) {
    Tensor out = Tensor::make(a.shape(), {a}, [s](Node& n) {
        if (float* g = pgrad(n, 0))
            K().axpy(static_cast<int64_t>(n.value.size()), s, n.grad.data(), g);
    });
    K().scale(out.numel(), s, a.data(), out.data());
    return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0))
        shape_error("matmul", a.shape(), b.shape());
    const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
    Tensor out = Tensor::make({m, n}, {a, b}, [m, k, n](Node& nd) {
        const float* av = nd.parents[0]->value.data();
        const float* bv = nd.parents[1]->value.data();
        const float* dy = nd.grad.data();
        // dA = dY * B^T, dB = A^T * dY
        if (float* ga = pgrad(nd, 0)) K().gemm_nt(m, k, n, dy, n, bv, n, ga, k, true);
        if (float* gb = pgrad(nd, 1)) K().gemm_nn(k, n, m, av, 1, k, dy, n, gb, n, true);
    });
    K().gemm_nn(m, n, k, a.data(), k, 1, b.data(), n, out.data(), n, false);
    return out;
}

namespace {
Shape drop_check_reshape(const Tensor& a, const Shape& ns) {
    if (shape_numel(ns) != a.numel()) shape_error("reshape", a.shape(), ns);
    return ns;
}
} // namespace

Tensor reshape(const Tensor& a, Shape new_shape) {
    Tensor out = Tensor::make(drop_check_reshape(a, new_shape), {a}, [](Node& n) {
        if (float* g = pgrad(n, 0))
            K().axpy(static_cast<int64_t>(n.value.size()), 1.f, n.grad.data(), g);
    });
    std::memcpy(out.data(), a.data(), sizeof(float) * a.numel());
    return out;
}

namespace {
// Treat a tensor as [outer, axis, inner] around `axis`.
struct AxisSplit {
    int64_t outer = 1, axis = 1, inner = 1;
};
AxisSplit split_at(const Shape& s, int axis) {
    AxisSplit r;
    for (int i = 0; i < static_cast<int>(s.size()); ++i) {
        if (i < axis) r.outer *= s[i];
        else if (i == axis) r.axis = s[i];
        else r.inner *= s[i];
    }
    return r;
}
} // namespace

Tensor concat(const Tensor& a, const Tensor& b, int axis) {
    if (a.ndim() != b.ndim() || axis < 0 || axis >= a.ndim())
        shape_error("concat", a.shape(), b.shape());
    for (int i = 0; i < a.ndim(); ++i)
        if (i != axis && a.dim(i) != b.dim(i)) shape_error("concat", a.shape(), b.shape());
    Shape os = a.shape();
    os[axis] += b.dim(axis);

    const AxisSplit sa = split_at(a.shape(), axis);
    const AxisSplit sb = split_at(b.shape(), axis);
    const int64_t rowA = sa.axis * sa.inner;
    const int64_t rowB = sb.axis * sb.inner;

    Tensor out = Tensor::make(os, {a, b}, [sa, rowA, rowB](Node& n) {
        const int64_t rowO = rowA + rowB;
        float* ga = pgrad(n, 0);
        float* gb = pgrad(n, 1);
        for (int64_t o = 0; o < sa.outer; ++o) {
            const float* src = n.grad.data() + o * rowO;
            if (ga) K().axpy(rowA, 1.f, src, ga + o * rowA);
            if (gb) K().axpy(rowB, 1.f, src + rowA, gb + o * rowB);
        }
    });
    for (int64_t o = 0; o < sa.outer; ++o) {
        float* dst = out.data() + o * (rowA + rowB);
        std::memcpy(dst, a.data() + o * rowA, sizeof(float) * rowA);
        std::memcpy(dst + rowA, b.data() + o * rowB, sizeof(float) * rowB);
    }
    return out;
}

Tensor slice(const Tensor& a, int axis, int start, int len) {
    if (axis < 0 || axis >= a.ndim() || start < 0 || len <= 0 || start + len > a.dim(axis))
        fail(ErrorCode::Data, "slice: range [" + std::to_string(start) + "," +
                                  std::to_string(start + len) + ") outside axis " +
                                  std::to_string(axis) + " of " + shape_str(a.shape()));
    Shape os = a.shape();
    os[axis] = len;
    const AxisSplit s = split_at(a.shape(), axis);
    const int64_t rowIn = s.axis * s.inner;
    const int64_t rowOut = static_cast<int64_t>(len) * s.inner;
    const int64_t off = static_cast<int64_t>(start) * s.inner;

    Tensor out = Tensor::make(os, {a}, [s, rowIn, rowOut, off](Node& n) {
        if (float* g = pgrad(n, 0)) {
            for (int64_t o = 0; o < s.outer; ++o)
                K().axpy(rowOut, 1.f, n.grad.data() + o * rowOut, g + o * rowIn + off);
        }
    });
    for (int64_t o = 0; o < s.outer; ++o)
        std::memcpy(out.data() + o * rowOut, a.data() + o * rowIn + off, sizeof(float) * rowOut);
    return out;
}

Tensor pad(const Tensor& a, const std::vector<int>& lo, const std::vector<int>& hi, float value) {
    const int nd = a.ndim();
    if (static_cast<int>(lo.size()) != nd || static_cast<int>(hi.size()) != nd)
        fail(ErrorCode::Data, "pad: lo/hi must have one entry per axis");
    Shape os(a.shape());
    for (int i = 0; i < nd; ++i) {
        if (lo[i] < 0 || hi[i] < 0) fail(ErrorCode::Data, "pad: negative pad width");
        os[i] += lo[i] + hi[i];
    }
    const Shape is = a.shape();

    // Strides of input and output.
    auto strides = [](const Shape& s) {
        std::vector<int64_t> st(s.size(), 1);
        for (int i = static_cast<int>(s.size()) - 2; i >= 0; --i)
            st[i] = st[i + 1] * s[i + 1];
        return st;
    };
    const auto ist = strides(is);
    const auto ost = strides(os);

    Tensor out = Tensor::make(os, {a}, [is, lo, ist, ost, nd](Node& n) {
        float* g = pgrad(n, 0);
        if (!g) return;
        const int64_t total = shape_numel(is);
        for (int64_t idx = 0; idx < total; ++idx) {
            int64_t rem = idx, oidx = 0;
            for (int d = 0; d < nd; ++d) {
                const int64_t c = rem / ist[d];
                rem %= ist[d];
                oidx += (c + lo[d]) * ost[d];
            }
            g[idx] += n.grad[oidx];
        }
    });
    std::fill(out.values().begin(), out.values().end(), value);
    const int64_t total = a.numel();
    const float* src = a.data();
    float* dst = out.data();
    for (int64_t idx = 0; idx < total; ++idx) {
        int64_t rem = idx, oidx = 0;
        for (int d = 0; d < nd; ++d) {
            const int64_t c = rem / ist[d];
            rem %= ist[d];
            oidx += (c + lo[d]) * ost[d];
        }
        dst[oidx] = src[idx];
    }
    return out;
}

Tensor reduce_sum(const Tensor& a) {
    Tensor out = Tensor::make({1}, {a}, [](Node& n) {
        if (float* g = pgrad(n, 0)) {
            const float dy = n.grad[0];
            const int64_t sz = static_cast<int64_t>(n.parents[0]->value.size());
            for (int64_t i = 0; i < sz; ++i) g[i] += dy;
        }
    });
    out.data()[0] = static_cast<float>(K().reduce_sum(a.numel(), a.data()));
    return out;
}

Tensor reduce_mean(const Tensor& a) {
    const double inv = 1.0 / static_cast<double>(a.numel());
    Tensor out = Tensor::make({1}, {a}, [inv](Node& n) {
        if (float* g = pgrad(n, 0)) {
            const float dy = n.grad[0] * static_cast<float>(inv);
            const int64_t sz = static_cast<int64_t>(n.parents[0]->value.size());
            for (int64_t i = 0; i < sz; ++i) g[i] += dy;
        }
    });
    out.data()[0] = static_cast<float>(K().reduce_sum(a.numel(), a.data()) * inv);
    return out;
}

Tensor leaky_relu(const Tensor& a, float slope) {
    Tensor out = Tensor::make(a.shape(), {a}, [slope](Node& n) {
        if (float* g = pgrad(n, 0))
            K().leaky_relu_bwd(static_cast<int64_t>(n.value.size()), slope,
                               n.parents[0]->value.data(), n.grad.data(), g);
    });
    K().leaky_relu_fwd(out.numel(), slope, a.data(), out.data());
    return out;
}

Tensor relu(const Tensor& a) { return leaky_relu(a, 0.f); }

Tensor sigmoid(const Tensor& a) {
    Tensor out = Tensor::make(a.shape(), {a}, [](Node& n) {
        if (float* g = pgrad(n, 0)) {
            const int64_t sz = static_cast<int64_t>(n.value.size());
            const float* y = n.value.data();
            for (int64_t i = 0; i < sz; ++i) g[i] += n.grad[i] * y[i] * (1.f - y[i]);
        }
    });
    const int64_t sz = a.numel();
    const float* x = a.data();
    float* y = out.data();
    parallel_for(sz, [&](int64_t b, int64_t e) {
        for (int64_t i = b; i < e; ++i) y[i] = 1.f / (1.f + std::exp(-x[i]));
    });
    return out;
}

Tensor global_avg_pool(const Tensor& x) {
    if (x.ndim() != 5) fail(ErrorCode::Data, "global_avg_pool expects [b,c,d,h,w], got " + shape_str(x.shape()));
    const int b = x.dim(0), c = x.dim(1);
    const int64_t spatial = static_cast<int64_t>(x.dim(2)) * x.dim(3) * x.dim(4);
    Tensor out = Tensor::make({b, c}, {x}, [spatial](Node& n) {
        if (float* g = pgrad(n, 0)) {
            const float inv = 1.f / static_cast<float>(spatial);
            const int64_t groups = static_cast<int64_t>(n.value.size());
            for (int64_t j = 0; j < groups; ++j) {
                const float dy = n.grad[j] * inv;
                float* dst = g + j * spatial;
                for (int64_t i = 0; i < spatial; ++i) dst[i] += dy;
            }
        }
    });
    for (int64_t j = 0; j < static_cast<int64_t>(b) * c; ++j)
        out.data()[j] = static_cast<float>(K().reduce_sum(spatial, x.data() + j * spatial) /
                                           static_cast<double>(spatial));
    return out;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias) {
    if (x.ndim() != 2 || w.ndim() != 2 || x.dim(1) != w.dim(0) || bias.dim(0) != w.dim(1))
        shape_error("linear", x.shape(), w.shape());
    const int m = x.dim(0), k = x.dim(1), n = w.dim(1);
    Tensor out = Tensor::make({m, n}, {x, w, bias}, [m, k, n](Node& nd) {
        const float* xv = nd.parents[0]->value.data();
        const float* wv = nd.parents[1]->value.data();
        const float* dy = nd.grad.data();
        if (float* gx = pgrad(nd, 0)) K().gemm_nt(m, k, n, dy, n, wv, n, gx, k, true);
        if (float* gw = pgrad(nd, 1)) K().gemm_nn(k, n, m, xv, 1, k, dy, n, gw, n, true);
        if (float* gb = pgrad(nd, 2)) {
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j) gb[j] += dy[i * n + j];
        }
    });
    K().gemm_nn(m, n, k, x.data(), k, 1, w.data(), n, out.data(), n, false);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) out.data()[i * n + j] += bias.data()[j];
    return out;
}

} // namespace gg
