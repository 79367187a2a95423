#include "gliograd/preprocess.hpp"

#include <cmath>

#include "gliograd/error.hpp"
#include "gliograd/threading.hpp"

namespace gg {

namespace {
// Align-corners sample positions; out-of-range clamps to the boundary voxel.
struct AxisMap {
    std::vector<int> i0, i1;
    std::vector<float> w1;
};

AxisMap make_axis_map(int in, int out) {
    AxisMap m;
    m.i0.resize(out);
    m.i1.resize(out);
    m.w1.resize(out);
    for (int i = 0; i < out; ++i) {
        double pos = 0.0;
        if (out > 1 && in > 1) pos = static_cast<double>(i) * (in - 1) / (out - 1);
        if (pos < 0) pos = 0;
        if (pos > in - 1) pos = in - 1;
        int lo = static_cast<int>(pos);
        if (lo > in - 2) lo = std::max(0, in - 2);
        m.i0[i] = lo;
        m.i1[i] = std::min(lo + 1, in - 1);
        m.w1[i] = static_cast<float>(pos - lo);
    }
    return m;
}
} // namespace

Volume resample(const Volume& v, const std::array<float, 3>& target_spacing) {
    for (float s : target_spacing)
        if (!(s > 0.f)) fail(ErrorCode::Data, "resample: target spacing must be positive");

    std::array<int, 3> odims{};
    for (int a = 0; a < 3; ++a) {
        const double ideal = static_cast<double>(v.dims[a]) * v.spacing[a] / target_spacing[a];
        odims[a] = std::max(1, static_cast<int>(std::llround(ideal)));
    }
    if (odims == v.dims && target_spacing == v.spacing) return v;

    Volume out = Volume::zeros(odims, target_spacing);
    const AxisMap mz = make_axis_map(v.dims[0], odims[0]);
    const AxisMap my = make_axis_map(v.dims[1], odims[1]);
    const AxisMap mx = make_axis_map(v.dims[2], odims[2]);

    parallel_for(odims[0], [&](int64_t z0, int64_t z1) {
        for (int z = static_cast<int>(z0); z < z1; ++z) {
            for (int y = 0; y < odims[1]; ++y) {
                for (int x = 0; x < odims[2]; ++x) {
                    const float wz = mz.w1[z], wy = my.w1[y], wx = mx.w1[x];
                    const int za = mz.i0[z], zb = mz.i1[z];
                    const int ya = my.i0[y], yb = my.i1[y];
                    const int xa = mx.i0[x], xb = mx.i1[x];
                    const float v00 = (1 - wx) * v.at(za, ya, xa) + wx * v.at(za, ya, xb);
                    const float v01 = (1 - wx) * v.at(za, yb, xa) + wx * v.at(za, yb, xb);
                    const float v10 = (1 - wx) * v.at(zb, ya, xa) + wx * v.at(zb, ya, xb);
                    const float v11 = (1 - wx) * v.at(zb, yb, xa) + wx * v.at(zb, yb, xb);
                    out.at(z, y, x) = (1 - wz) * ((1 - wy) * v00 + wy * v01) +
                                      wz * ((1 - wy) * v10 + wy * v11);
                }
            }
        }
    });
    return out;
}

Volume znormalize(const Volume& v) {
    // Statistics over the nonzero (brain) voxels only; background zeros would
    // bias the mean on skull-stripped images.
    double sum = 0.0;
    int64_t count = 0;
    for (float x : v.values) {
        if (x != 0.f) {
            sum += x;
            ++count;
        }
    }
    if (count < 2)
        fail(ErrorCode::Data, "znormalize: fewer than 2 nonzero voxels");
    const double mean = sum / static_cast<double>(count);
    double q = 0.0;
    for (float x : v.values) {
        if (x != 0.f) {
            const double d = x - mean;
            q += d * d;
        }
    }
    const double var = q / static_cast<double>(count); // population
    if (var <= 0.0)
        fail(ErrorCode::Data, "znormalize: zero variance over the brain region");
    const double inv_std = 1.0 / std::sqrt(var);

    Volume out = v;
    for (auto& x : out.values) {
        if (x != 0.f) x = static_cast<float>((x - mean) * inv_std);
    }
    return out;
}

} // namespace gg
