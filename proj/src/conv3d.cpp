#include <algorithm>
#include <cstring>
#include <vector>

#include "gliograd/error.hpp"
#include "gliograd/kernels.hpp"
#include "gliograd/ops.hpp"
#include "gliograd/threading.hpp"

// conv3d as chunked im2col + GEMM. The column panel is [K x chunk] with
// K = ci*kd*kh*kw (channel-major, matching the natural weight layout), chunks
// sized to keep the panel cache-resident. Forward parallelizes over disjoint
// output chunks; backward runs chunks serially and parallelizes inside over
// disjoint rows/channels, so results do not depend on the thread count.

namespace gg {

namespace {

using detail::Node;

struct ConvGeom {
    int b, ci, co;
    int in[3], k[3], s[3], p[3], out[3];
    int64_t inN, outN, K;
    int rowsTotal; // out[0]*out[1]
    int rowsPerChunk;
};

ConvGeom make_geom(const Shape& xs, const Shape& ws,
                   const std::array<int, 3>& stride, const std::array<int, 3>& padding) {
    ConvGeom g{};
    g.b = xs[0];
    g.ci = xs[1];
    g.co = ws[0];
    for (int i = 0; i < 3; ++i) {
        g.in[i] = xs[2 + i];
        g.k[i] = ws[2 + i];
        g.s[i] = stride[i];
        g.p[i] = padding[i];
        if (g.s[i] <= 0) fail(ErrorCode::Data, "conv3d: stride must be positive");
        if (g.p[i] < 0) fail(ErrorCode::Data, "conv3d: padding must be non-negative");
        const int span = g.in[i] + 2 * g.p[i] - g.k[i];
        if (span < 0)
            fail(ErrorCode::Data, "conv3d: kernel exceeds padded input, input " + shape_str(xs) +
                                      " weight " + shape_str(ws));
        g.out[i] = span / g.s[i] + 1;
    }
    g.inN = static_cast<int64_t>(g.in[0]) * g.in[1] * g.in[2];
    g.outN = static_cast<int64_t>(g.out[0]) * g.out[1] * g.out[2];
    g.K = static_cast<int64_t>(g.ci) * g.k[0] * g.k[1] * g.k[2];
    g.rowsTotal = g.out[0] * g.out[1];

    // Panel budget ~768 KiB keeps B resident in L2 during the GEMM.
    const int64_t budget_floats = 768 * 1024 / 4;
    int64_t rows = std::max<int64_t>(1, budget_floats / (g.K * g.out[2]));
    g.rowsPerChunk = static_cast<int>(std::min<int64_t>(rows, g.rowsTotal));
    return g;
}

bool is_pointwise(const ConvGeom& g) {
    return g.k[0] == 1 && g.k[1] == 1 && g.k[2] == 1 &&
           g.s[0] == 1 && g.s[1] == 1 && g.s[2] == 1 &&
           g.p[0] == 0 && g.p[1] == 0 && g.p[2] == 0;
}

// Fill the column panel for output rows [r0, r1).
void im2col_rows(const ConvGeom& g, const float* x, int r0, int r1,
                 int64_t k0, int64_t k1, float* col) {
    const int OW = g.out[2];
    const int64_t nc = static_cast<int64_t>(r1 - r0) * OW;
    const int64_t planeIn = static_cast<int64_t>(g.in[1]) * g.in[2];
    const int kh = g.k[1], kw = g.k[2];

    for (int64_t krow = k0; krow < k1; ++krow) {
        float* dst = col + (krow - k0) * nc;
        const int c = static_cast<int>(krow / (g.k[0] * kh * kw));
        const int rem = static_cast<int>(krow % (g.k[0] * kh * kw));
        const int kz = rem / (kh * kw);
        const int ky = (rem / kw) % kh;
        const int kx = rem % kw;
        const float* xc = x + c * g.inN;

        for (int r = r0; r < r1; ++r, dst += OW) {
            const int oz = r / g.out[1];
            const int oy = r % g.out[1];
            const int z = oz * g.s[0] + kz - g.p[0];
            const int y = oy * g.s[1] + ky - g.p[1];
            if (z < 0 || z >= g.in[0] || y < 0 || y >= g.in[1]) {
                std::memset(dst, 0, sizeof(float) * OW);
                continue;
            }
            const float* xrow = xc + z * planeIn + static_cast<int64_t>(y) * g.in[2];
            const int xoff = kx - g.p[2];
            if (g.s[2] == 1) {
                const int lead = std::max(0, -xoff);
                const int tail_start = std::min(OW, g.in[2] - xoff);
                if (lead > 0) std::memset(dst, 0, sizeof(float) * std::min(lead, OW));
                if (tail_start > lead)
                    std::memcpy(dst + lead, xrow + xoff + lead, sizeof(float) * (tail_start - lead));
                if (tail_start < OW)
                    std::memset(dst + std::max(tail_start, 0), 0,
                                sizeof(float) * (OW - std::max(tail_start, 0)));
            } else {
                for (int ox = 0; ox < OW; ++ox) {
                    const int xx = ox * g.s[2] + xoff;
                    dst[ox] = (xx >= 0 && xx < g.in[2]) ? xrow[xx] : 0.f;
                }
            }
        }
    }
}

// Scatter-add the panel gradient back into dx for output rows [r0, r1),
// restricted to channel ci_idx (keeps parallel writers disjoint).
void col2im_rows(const ConvGeom& g, const float* dcol, int r0, int r1, int c,
                 float* dxc) {
    const auto& k = kernels::active();
    const int OW = g.out[2];
    const int64_t nc = static_cast<int64_t>(r1 - r0) * OW;
    const int64_t planeIn = static_cast<int64_t>(g.in[1]) * g.in[2];
    const int kh = g.k[1], kw = g.k[2];
    const int taps = g.k[0] * kh * kw;

    for (int t = 0; t < taps; ++t) {
        const float* src = dcol + (static_cast<int64_t>(c) * taps + t) * nc;
        const int kz = t / (kh * kw);
        const int ky = (t / kw) % kh;
        const int kx = t % kw;
        for (int r = r0; r < r1; ++r, src += OW) {
            const int oz = r / g.out[1];
            const int oy = r % g.out[1];
            const int z = oz * g.s[0] + kz - g.p[0];
            const int y = oy * g.s[1] + ky - g.p[1];
            if (z < 0 || z >= g.in[0] || y < 0 || y >= g.in[1]) continue;
            float* xrow = dxc + z * planeIn + static_cast<int64_t>(y) * g.in[2];
            const int xoff = kx - g.p[2];
            if (g.s[2] == 1) {
                const int lead = std::max(0, -xoff);
                const int tail_start = std::clamp(g.in[2] - xoff, 0, OW);
                if (tail_start > lead)
                    k.axpy(tail_start - lead, 1.f, src + lead, xrow + xoff + lead);
            } else {
                for (int ox = 0; ox < OW; ++ox) {
                    const int xx = ox * g.s[2] + xoff;
                    if (xx >= 0 && xx < g.in[2]) xrow[xx] += src[ox];
                }
            }
        }
    }
}

struct ChunkRange {
    int r0, r1;
};

std::vector<ChunkRange> chunk_rows(const ConvGeom& g) {
    std::vector<ChunkRange> out;
    for (int r = 0; r < g.rowsTotal; r += g.rowsPerChunk)
        out.push_back({r, std::min(g.rowsTotal, r + g.rowsPerChunk)});
    return out;
}

thread_local std::vector<float> tl_panel;

void conv_forward(const ConvGeom& g, const float* x, const float* w, const float* bias,
                  float* y) {
    const auto& k = kernels::active();
    const auto chunks = chunk_rows(g);
    const int64_t tasks = static_cast<int64_t>(g.b) * chunks.size();

    if (is_pointwise(g)) {
        parallel_for(static_cast<int64_t>(g.b) * g.co, [&](int64_t lo, int64_t hi) {
            for (int64_t i = lo; i < hi; ++i) {
                const int sample = static_cast<int>(i / g.co);
                const int o = static_cast<int>(i % g.co);
                k.gemm_nn(1, static_cast<int>(g.outN), g.ci,
                          w + o * g.K, g.K, 1,
                          x + sample * g.ci * g.inN, g.inN,
                          y + (sample * g.co + o) * g.outN, g.outN, false);
            }
        });
    } else {
        parallel_for(tasks, [&](int64_t lo, int64_t hi) {
            for (int64_t task = lo; task < hi; ++task) {
                const int sample = static_cast<int>(task / chunks.size());
                const ChunkRange cr = chunks[task % chunks.size()];
                const int64_t nc = static_cast<int64_t>(cr.r1 - cr.r0) * g.out[2];
                const int64_t n0 = static_cast<int64_t>(cr.r0) * g.out[2];
                tl_panel.resize(static_cast<size_t>(g.K * nc));
                im2col_rows(g, x + sample * g.ci * g.inN, cr.r0, cr.r1, 0, g.K, tl_panel.data());
                k.gemm_nn(g.co, static_cast<int>(nc), static_cast<int>(g.K),
                          w, g.K, 1, tl_panel.data(), nc,
                          y + sample * g.co * g.outN + n0, g.outN, false);
            }
        });
    }
    if (bias) {
        parallel_for(static_cast<int64_t>(g.b) * g.co, [&](int64_t lo, int64_t hi) {
            for (int64_t i = lo; i < hi; ++i) {
                const int o = static_cast<int>(i % g.co);
                float* dst = y + i * g.outN;
                k.affine(g.outN, 1.f, bias[o], dst, dst);
            }
        });
    }
}

void conv_backward(const ConvGeom& g, const float* x, const float* w, const float* dy,
                   float* dx, float* dw, float* db) {
    const auto& k = kernels::active();

    if (db) {
        for (int sample = 0; sample < g.b; ++sample) {
            const float* dys = dy + sample * g.co * g.outN;
            parallel_for(g.co, [&](int64_t lo, int64_t hi) {
                for (int64_t o = lo; o < hi; ++o)
                    db[o] += static_cast<float>(k.reduce_sum(g.outN, dys + o * g.outN));
            });
        }
    }

    if (is_pointwise(g)) {
        for (int sample = 0; sample < g.b; ++sample) {
            const float* xs = x + sample * g.ci * g.inN;
            const float* dys = dy + sample * g.co * g.outN;
            if (dw) {
                parallel_for(g.co, [&](int64_t lo, int64_t hi) {
                    for (int64_t o = lo; o < hi; ++o)
                        k.gemm_nt(1, g.ci, static_cast<int>(g.outN),
                                  dys + o * g.outN, g.outN, xs, g.inN, dw + o * g.K, g.K, true);
                });
            }
            if (dx) {
                float* dxs = dx + sample * g.ci * g.inN;
                parallel_for(g.ci, [&](int64_t lo, int64_t hi) {
                    for (int64_t c = lo; c < hi; ++c)
                        k.gemm_nn(1, static_cast<int>(g.outN), g.co,
                                  w + c, 0, g.K, dys, g.outN, dxs + c * g.inN, g.inN, true);
                });
            }
        }
        return;
    }

    const auto chunks = chunk_rows(g);
    std::vector<float> panel, dpanel;

    for (int sample = 0; sample < g.b; ++sample) {
        const float* xs = x + sample * g.ci * g.inN;
        const float* dys = dy + sample * g.co * g.outN;
        float* dxs = dx ? dx + sample * g.ci * g.inN : nullptr;

        for (const ChunkRange cr : chunks) {
            const int64_t nc = static_cast<int64_t>(cr.r1 - cr.r0) * g.out[2];
            const int64_t n0 = static_cast<int64_t>(cr.r0) * g.out[2];

            if (dw) {
                panel.resize(static_cast<size_t>(g.K * nc));
                parallel_for(g.K, [&](int64_t lo, int64_t hi) {
                    im2col_rows(g, xs, cr.r0, cr.r1, lo, hi, panel.data() + (lo - 0) * nc);
                });
                // dW += dY_chunk * col^T, rows of dW split across threads
                parallel_for(g.co, [&](int64_t lo, int64_t hi) {
                    if (lo < hi)
                        k.gemm_nt(static_cast<int>(hi - lo), static_cast<int>(g.K),
                                  static_cast<int>(nc),
                                  dys + lo * g.outN + n0, g.outN,
                                  panel.data(), nc,
                                  dw + lo * g.K, g.K, true);
                });
            }
            if (dxs) {
                dpanel.resize(static_cast<size_t>(g.K * nc));
                // dcol = W^T * dY_chunk, rows split across threads
                parallel_for(g.K, [&](int64_t lo, int64_t hi) {
                    if (lo < hi)
                        k.gemm_nn(static_cast<int>(hi - lo), static_cast<int>(nc), g.co,
                                  w + lo, 1, g.K,
                                  dys + n0, g.outN,
                                  dpanel.data() + lo * nc, nc, false);
                });
                parallel_for(g.ci, [&](int64_t lo, int64_t hi) {
                    for (int64_t c = lo; c < hi; ++c)
                        col2im_rows(g, dpanel.data(), cr.r0, cr.r1, static_cast<int>(c),
                                    dxs + c * g.inN);
                });
            }
        }
    }
}

} // namespace

std::array<int, 3> conv3d_out_dims(const std::array<int, 3>& in,
                                   const std::array<int, 3>& kernel,
                                   const std::array<int, 3>& stride,
                                   const std::array<int, 3>& padding) {
    std::array<int, 3> out{};
    for (int i = 0; i < 3; ++i) {
        const int span = in[i] + 2 * padding[i] - kernel[i];
        if (span < 0 || stride[i] <= 0)
            fail(ErrorCode::Data, "conv3d: invalid geometry");
        out[i] = span / stride[i] + 1;
    }
    return out;
}

Tensor conv3d(const Tensor& input, const Tensor& weight, const Tensor& bias,
              const std::array<int, 3>& stride, const std::array<int, 3>& padding) {
    if (input.ndim() != 5 || weight.ndim() != 5)
        fail(ErrorCode::Data, "conv3d expects input [b,ci,d,h,w] and weight [co,ci,k,k,k], got " +
                                  shape_str(input.shape()) + " and " + shape_str(weight.shape()));
    if (input.dim(1) != weight.dim(1))
        fail(ErrorCode::Data, "conv3d: channel mismatch, input " + shape_str(input.shape()) +
                                  " vs weight " + shape_str(weight.shape()));
    if (!bias.defined() || bias.ndim() != 1 || bias.dim(0) != weight.dim(0))
        fail(ErrorCode::Data, "conv3d: bias shape must be [out_channels] of " +
                                  shape_str(weight.shape()));

    const ConvGeom g = make_geom(input.shape(), weight.shape(), stride, padding);
    const Shape os{g.b, g.co, g.out[0], g.out[1], g.out[2]};

    Tensor out = Tensor::make(os, {input, weight, bias}, [g](Node& n) {
        Node* xn = n.parents[0].get();
        Node* wn = n.parents[1].get();
        Node* bn = n.parents[2].get();
        float* dx = nullptr;
        float* dw = nullptr;
        float* db = nullptr;
        if (xn->requires_grad) { xn->ensure_grad(); dx = xn->grad.data(); }
        if (wn->requires_grad) { wn->ensure_grad(); dw = wn->grad.data(); }
        if (bn->requires_grad) { bn->ensure_grad(); db = bn->grad.data(); }
        conv_backward(g, xn->value.data(), wn->value.data(), n.grad.data(), dx, dw, db);
    });
    conv_forward(g, input.data(), weight.data(), bias.data(), out.data());
    return out;
}

} // namespace gg
