#include <cmath>
#include <vector>

#include "gliograd/error.hpp"
#include "gliograd/kernels.hpp"
#include "gliograd/ops.hpp"
#include "gliograd/threading.hpp"

namespace gg {

namespace {
using detail::Node;

float* pgrad(Node& n, size_t i) {
    Node* p = n.parents[i].get();
    if (!p->requires_grad) return nullptr;
    p->ensure_grad();
    return p->grad.data();
}
} // namespace

Tensor instance_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, float eps) {
    if (x.ndim() != 5)
        fail(ErrorCode::Data, "instance_norm expects [b,c,d,h,w], got " + shape_str(x.shape()));
    const int b = x.dim(0), c = x.dim(1);
    const int64_t spatial = static_cast<int64_t>(x.dim(2)) * x.dim(3) * x.dim(4);
    if (spatial < 2)
        fail(ErrorCode::Data, "instance_norm: degenerate statistics, spatial extent " +
                                  std::to_string(spatial) + " voxel");
    if (gamma.ndim() != 1 || gamma.dim(0) != c || beta.ndim() != 1 || beta.dim(0) != c)
        fail(ErrorCode::Data, "instance_norm: gamma/beta must be [c] for " + shape_str(x.shape()));

    const int64_t groups = static_cast<int64_t>(b) * c;
    // Cached per-(instance,channel) statistics for the backward pass.
    auto stats = std::make_shared<std::vector<float>>(groups * 2); // mean, inv_std

    Tensor out = Tensor::make(x.shape(), {x, gamma, beta}, [b, c, spatial, stats](Node& n) {
        const float* xv = n.parents[0]->value.data();
        const float* gv = n.parents[1]->value.data();
        float* dx = pgrad(n, 0);
        float* dgamma = pgrad(n, 1);
        float* dbeta = pgrad(n, 2);
        const float* dy = n.grad.data();
        const int64_t groups = static_cast<int64_t>(b) * c;

        // gamma/beta grads reduce over instances; accumulate per channel
        // serially over the batch to keep the order fixed.
        if (dgamma || dbeta) {
            parallel_for(c, [&](int64_t lo, int64_t hi) {
                for (int64_t ch = lo; ch < hi; ++ch) {
                    double sg = 0.0, sb = 0.0;
                    for (int i = 0; i < b; ++i) {
                        const int64_t gidx = static_cast<int64_t>(i) * c + ch;
                        const float mean = (*stats)[gidx * 2];
                        const float inv_std = (*stats)[gidx * 2 + 1];
                        const float* xp = xv + gidx * spatial;
                        const float* dyp = dy + gidx * spatial;
                        for (int64_t j = 0; j < spatial; ++j) {
                            sb += dyp[j];
                            sg += dyp[j] * (xp[j] - mean) * inv_std;
                        }
                    }
                    if (dgamma) dgamma[ch] += static_cast<float>(sg);
                    if (dbeta) dbeta[ch] += static_cast<float>(sb);
                }
            });
        }
        if (dx) {
            parallel_for(groups, [&](int64_t lo, int64_t hi) {
                for (int64_t gi = lo; gi < hi; ++gi) {
                    const float mean = (*stats)[gi * 2];
                    const float inv_std = (*stats)[gi * 2 + 1];
                    const float gam = gv[gi % c];
                    const float* xp = xv + gi * spatial;
                    const float* dyp = dy + gi * spatial;
                    float* dxp = dx + gi * spatial;
                    double sum_dy = 0.0, sum_dy_xhat = 0.0;
                    for (int64_t j = 0; j < spatial; ++j) {
                        const float xhat = (xp[j] - mean) * inv_std;
                        sum_dy += dyp[j];
                        sum_dy_xhat += dyp[j] * xhat;
                    }
                    const float m_dy = static_cast<float>(sum_dy / spatial);
                    const float m_dy_xhat = static_cast<float>(sum_dy_xhat / spatial);
                    const float a = gam * inv_std;
                    for (int64_t j = 0; j < spatial; ++j) {
                        const float xhat = (xp[j] - mean) * inv_std;
                        dxp[j] += a * (dyp[j] - m_dy - xhat * m_dy_xhat);
                    }
                }
            });
        }
    });

    const auto& k = kernels::active();
    const float* xv = x.data();
    const float* gv = gamma.data();
    const float* bv = beta.data();
    float* yv = out.data();
    parallel_for(groups, [&](int64_t lo, int64_t hi) {
        for (int64_t gi = lo; gi < hi; ++gi) {
            double mean, var;
            k.mean_var(spatial, xv + gi * spatial, &mean, &var);
            const float inv_std = static_cast<float>(1.0 / std::sqrt(var + eps));
            (*stats)[gi * 2] = static_cast<float>(mean);
            (*stats)[gi * 2 + 1] = inv_std;
            const float gam = gv[gi % c];
            const float bet = bv[gi % c];
            // y = gam*inv_std*x + (bet - gam*inv_std*mean)
            k.affine(spatial, gam * inv_std,
                     bet - gam * inv_std * static_cast<float>(mean),
                     xv + gi * spatial, yv + gi * spatial);
        }
    });
    return out;
}

namespace {
// Align-corners source position table for doubling an axis.
struct LerpTable {
    std::vector<int> i0, i1;
    std::vector<float> w1; // weight of i1; weight of i0 is 1-w1
};

LerpTable make_double_table(int in) {
    const int out = 2 * in;
    LerpTable t;
    t.i0.resize(out);
    t.i1.resize(out);
    t.w1.resize(out);
    for (int i = 0; i < out; ++i) {
        if (in == 1) {
            t.i0[i] = t.i1[i] = 0;
            t.w1[i] = 0.f;
            continue;
        }
        const double pos = static_cast<double>(i) * (in - 1) / (out - 1);
        int lo = static_cast<int>(pos);
        if (lo > in - 2) lo = in - 2;
        t.i0[i] = lo;
        t.i1[i] = lo + 1;
        t.w1[i] = static_cast<float>(pos - lo);
    }
    return t;
}
} // namespace

Tensor upsample_trilinear2x(const Tensor& x) {
    if (x.ndim() != 5)
        fail(ErrorCode::Data, "upsample expects [b,c,d,h,w], got " + shape_str(x.shape()));
    const int b = x.dim(0), c = x.dim(1);
    const int id = x.dim(2), ih = x.dim(3), iw = x.dim(4);
    const int od = 2 * id, oh = 2 * ih, ow = 2 * iw;

    auto tz = std::make_shared<LerpTable>(make_double_table(id));
    auto ty = std::make_shared<LerpTable>(make_double_table(ih));
    auto tx = std::make_shared<LerpTable>(make_double_table(iw));

    const int64_t inS = static_cast<int64_t>(id) * ih * iw;
    const int64_t outS = static_cast<int64_t>(od) * oh * ow;
    const int64_t groups = static_cast<int64_t>(b) * c;

    Tensor out = Tensor::make({b, c, od, oh, ow}, {x},
                              [groups, inS, outS, id, ih, iw, od, oh, ow, tz, ty, tx](Node& n) {
        float* dx = pgrad(n, 0);
        if (!dx) return;
        const float* dy = n.grad.data();
        parallel_for(groups, [&](int64_t lo, int64_t hi) {
            for (int64_t gi = lo; gi < hi; ++gi) {
                const float* dyp = dy + gi * outS;
                float* dxp = dx + gi * inS;
                for (int z = 0; z < od; ++z) {
                    const float wz1 = tz->w1[z], wz0 = 1.f - wz1;
                    const int z0 = tz->i0[z], z1 = tz->i1[z];
                    for (int y = 0; y < oh; ++y) {
                        const float wy1 = ty->w1[y], wy0 = 1.f - wy1;
                        const int y0 = ty->i0[y], y1 = ty->i1[y];
                        const float* row = dyp + (static_cast<int64_t>(z) * oh + y) * ow;
                        for (int xo = 0; xo < ow; ++xo) {
                            const float wx1 = tx->w1[xo], wx0 = 1.f - wx1;
                            const int x0 = tx->i0[xo], x1 = tx->i1[xo];
                            const float g = row[xo];
                            dxp[(static_cast<int64_t>(z0) * ih + y0) * iw + x0] += g * wz0 * wy0 * wx0;
                            dxp[(static_cast<int64_t>(z0) * ih + y0) * iw + x1] += g * wz0 * wy0 * wx1;
                            dxp[(static_cast<int64_t>(z0) * ih + y1) * iw + x0] += g * wz0 * wy1 * wx0;
                            dxp[(static_cast<int64_t>(z0) * ih + y1) * iw + x1] += g * wz0 * wy1 * wx1;
                            dxp[(static_cast<int64_t>(z1) * ih + y0) * iw + x0] += g * wz1 * wy0 * wx0;
                            dxp[(static_cast<int64_t>(z1) * ih + y0) * iw + x1] += g * wz1 * wy0 * wx1;
                            dxp[(static_cast<int64_t>(z1) * ih + y1) * iw + x0] += g * wz1 * wy1 * wx0;
                            dxp[(static_cast<int64_t>(z1) * ih + y1) * iw + x1] += g * wz1 * wy1 * wx1;
                        }
                    }
                }
            }
        });
    });

    const float* xv = x.data();
    float* yv = out.data();
    parallel_for(groups, [&](int64_t lo, int64_t hi) {
        for (int64_t gi = lo; gi < hi; ++gi) {
            const float* xp = xv + gi * inS;
            float* yp = yv + gi * outS;
            for (int z = 0; z < od; ++z) {
                const float wz1 = tz->w1[z], wz0 = 1.f - wz1;
                const int z0 = tz->i0[z], z1 = tz->i1[z];
                for (int y = 0; y < oh; ++y) {
                    const float wy1 = ty->w1[y], wy0 = 1.f - wy1;
                    const int y0 = ty->i0[y], y1 = ty->i1[y];
                    const float* r00 = xp + (static_cast<int64_t>(z0) * ih + y0) * iw;
                    const float* r01 = xp + (static_cast<int64_t>(z0) * ih + y1) * iw;
                    const float* r10 = xp + (static_cast<int64_t>(z1) * ih + y0) * iw;
                    const float* r11 = xp + (static_cast<int64_t>(z1) * ih + y1) * iw;
                    float* orow = yp + (static_cast<int64_t>(z) * oh + y) * ow;
                    for (int xo = 0; xo < ow; ++xo) {
                        const float wx1 = tx->w1[xo], wx0 = 1.f - wx1;
                        const int x0 = tx->i0[xo], x1 = tx->i1[xo];
                        const float v00 = wx0 * r00[x0] + wx1 * r00[x1];
                        const float v01 = wx0 * r01[x0] + wx1 * r01[x1];
                        const float v10 = wx0 * r10[x0] + wx1 * r10[x1];
                        const float v11 = wx0 * r11[x0] + wx1 * r11[x1];
                        orow[xo] = wz0 * (wy0 * v00 + wy1 * v01) + wz1 * (wy0 * v10 + wy1 * v11);
                    }
                }
            }
        }
    });
    return out;
}

Tensor soft_dice_loss(const Tensor& pred, const Tensor& target, float smooth) {
    if (!same_shape(pred.shape(), target.shape()))
        fail(ErrorCode::Data, "soft_dice_loss: shape mismatch " + shape_str(pred.shape()) +
                                  " vs " + shape_str(target.shape()));
    if (pred.ndim() != 5 || pred.dim(1) != 1)
        fail(ErrorCode::Data, "soft_dice_loss expects [b,1,d,h,w], got " + shape_str(pred.shape()));
    const int b = pred.dim(0);
    const int64_t spatial = pred.numel() / b;
    const float* pv = pred.data();
    const float* gv = target.data();
    for (int64_t i = 0; i < pred.numel(); ++i) {
        if (pv[i] < 0.f || pv[i] > 1.f)
            fail(ErrorCode::Data, "soft_dice_loss: prediction outside [0,1]");
        if (gv[i] != 0.f && gv[i] != 1.f)
            fail(ErrorCode::Data, "soft_dice_loss: target not binary");
    }

    // Per-sample sums, reused by the backward closure.
    auto sums = std::make_shared<std::vector<double>>(static_cast<size_t>(b) * 3);
    for (int i = 0; i < b; ++i) {
        const float* pp = pv + i * spatial;
        const float* gp = gv + i * spatial;
        double sp = 0.0, sg = 0.0, spg = 0.0;
        for (int64_t j = 0; j < spatial; ++j) {
            sp += pp[j];
            sg += gp[j];
            spg += static_cast<double>(pp[j]) * gp[j];
        }
        (*sums)[i * 3] = sp;
        (*sums)[i * 3 + 1] = sg;
        (*sums)[i * 3 + 2] = spg;
    }

    Tensor out = Tensor::make({1}, {pred, target}, [b, spatial, smooth, sums](Node& n) {
        float* dp = pgrad(n, 0);
        if (!dp) return;
        const float dy = n.grad[0] / static_cast<float>(b);
        const float* gv = n.parents[1]->value.data();
        for (int i = 0; i < b; ++i) {
            const double sp = (*sums)[i * 3], sg = (*sums)[i * 3 + 1], spg = (*sums)[i * 3 + 2];
            const double denom = sp + sg + smooth;
            const double num = 2.0 * spg + smooth;
            const float* gp = gv + i * spatial;
            float* dpp = dp + i * spatial;
            // d/dp_j of -(2 spg + s)/(sp + sg + s)
            const float c1 = static_cast<float>(2.0 / denom);
            const float c2 = static_cast<float>(num / (denom * denom));
            for (int64_t j = 0; j < spatial; ++j)
                dpp[j] += dy * (c2 - c1 * gp[j]);
        }
    });

    double loss = 0.0;
    for (int i = 0; i < b; ++i) {
        const double sp = (*sums)[i * 3], sg = (*sums)[i * 3 + 1], spg = (*sums)[i * 3 + 2];
        loss += 1.0 - (2.0 * spg + smooth) / (sp + sg + smooth);
    }
    out.data()[0] = static_cast<float>(loss / b);
    return out;
}

Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
    if (logits.ndim() != 2 || logits.dim(1) != 2)
        fail(ErrorCode::Data, "cross_entropy expects logits [b,2], got " + shape_str(logits.shape()));
    const int b = logits.dim(0);
    if (static_cast<int>(labels.size()) != b)
        fail(ErrorCode::Data, "cross_entropy: label count mismatch");
    for (int l : labels)
        if (l != 0 && l != 1) fail(ErrorCode::Data, "cross_entropy: label outside {0,1}");

    auto probs = std::make_shared<std::vector<float>>(static_cast<size_t>(b) * 2);
    const float* lv = logits.data();
    double loss = 0.0;
    for (int i = 0; i < b; ++i) {
        const double m = std::max(lv[i * 2], lv[i * 2 + 1]);
        const double e0 = std::exp(lv[i * 2] - m);
        const double e1 = std::exp(lv[i * 2 + 1] - m);
        const double z = e0 + e1;
        (*probs)[i * 2] = static_cast<float>(e0 / z);
        (*probs)[i * 2 + 1] = static_cast<float>(e1 / z);
        loss += -std::log((labels[i] == 0 ? e0 : e1) / z);
    }

    Tensor out = Tensor::make({1}, {logits}, [b, labels, probs](Node& n) {
        if (float* dl = pgrad(n, 0)) {
            const float dy = n.grad[0] / static_cast<float>(b);
            for (int i = 0; i < b; ++i) {
                dl[i * 2] += dy * ((*probs)[i * 2] - (labels[i] == 0 ? 1.f : 0.f));
                dl[i * 2 + 1] += dy * ((*probs)[i * 2 + 1] - (labels[i] == 1 ? 1.f : 0.f));
            }
        }
    });
    out.data()[0] = static_cast<float>(loss / b);
    return out;
}

} // namespace gg
