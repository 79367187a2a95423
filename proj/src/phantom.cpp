#include "gliograd/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>

#include "gliograd/error.hpp"
#include "gliograd/rng.hpp"

namespace gg {

namespace {

struct Ellipsoid {
    std::array<float, 3> center;
    std::array<float, 3> half_axes;

    // center-of-voxel membership rule
    bool contains(int z, int y, int x) const {
        const double dz = (z - center[0]) / half_axes[0];
        const double dy = (y - center[1]) / half_axes[1];
        const double dx = (x - center[2]) / half_axes[2];
        return dz * dz + dy * dy + dx * dx <= 1.0;
    }
    // normalized radius^2 of a voxel center
    double r2(int z, int y, int x) const {
        const double dz = (z - center[0]) / half_axes[0];
        const double dy = (y - center[1]) / half_axes[1];
        const double dx = (x - center[2]) / half_axes[2];
        return dz * dz + dy * dy + dx * dx;
    }
};

} // namespace

MultiModalCase generate_phantom(const PhantomSpec& spec) {
    RngStream rng(spec.seed, RngUse::Phantom);

    const Ellipsoid brain{
        {spec.dims[0] / 2.f, spec.dims[1] / 2.f, spec.dims[2] / 2.f},
        spec.brain_half_axes};

    // Tumour half-axes and center; the center range keeps the tumour fully
    // inside the brain ellipsoid (conservative box bound).
    Ellipsoid tumour;
    for (int a = 0; a < 3; ++a)
        tumour.half_axes[a] =
            static_cast<float>(rng.uniform(spec.tumour_half_axis_min, spec.tumour_half_axis_max));
    for (int a = 0; a < 3; ++a) {
        const float slack = spec.brain_half_axes[a] * 0.7f - tumour.half_axes[a];
        if (slack < 0.f)
            fail(ErrorCode::Data, "phantom: tumour half-axis " + std::to_string(tumour.half_axes[a]) +
                                      " does not fit inside the brain");
        tumour.center[a] = brain.center[a] + static_cast<float>(rng.uniform(-slack, slack));
    }

    MultiModalCase c;
    for (int m = 0; m < kNumModalities; ++m) {
        if (!spec.include[m]) continue;
        c.modalities[m] = Volume::zeros(spec.dims);
    }
    Volume seg = Volume::zeros(spec.dims);

    const float t1ce_brain = spec.brain_intensity[static_cast<int>(Modality::T1ce)];
    const Ellipsoid core{tumour.center,
                         {tumour.half_axes[0] * spec.gbm_core_fraction,
                          tumour.half_axes[1] * spec.gbm_core_fraction,
                          tumour.half_axes[2] * spec.gbm_core_fraction}};

    for (int z = 0; z < spec.dims[0]; ++z) {
        for (int y = 0; y < spec.dims[1]; ++y) {
            for (int x = 0; x < spec.dims[2]; ++x) {
                if (!brain.contains(z, y, x)) continue; // background stays exactly 0
                const bool in_tumour = tumour.contains(z, y, x);
                if (in_tumour) seg.at(z, y, x) = 1.f;
                for (int m = 0; m < kNumModalities; ++m) {
                    if (!c.modalities[m]) continue;
                    const float base = spec.brain_intensity[m];
                    float val = base;
                    if (in_tumour) {
                        const auto mod = static_cast<Modality>(m);
                        if (spec.grade == Grade::GBM) {
                            if (mod == Modality::T1ce)
                                val = core.contains(z, y, x) ? t1ce_brain * spec.gbm_core_factor
                                                             : t1ce_brain * spec.gbm_rim_factor;
                            else if (mod == Modality::T2 || mod == Modality::Flair)
                                val = base * 1.3f;
                            else
                                val = base * 0.9f;
                        } else {
                            if (mod == Modality::T2 || mod == Modality::Flair)
                                val = base * spec.lgg_t2_factor;
                            else if (mod == Modality::T1)
                                val = base * 0.9f;
                            // T1ce: isointense, val stays at base
                        }
                    }
                    c.modalities[m]->at(z, y, x) = val;
                }
            }
        }
    }

    if (spec.noise_sigma > 0.f) {
        // One noise draw per (in-brain voxel, modality), in fixed scan order.
        for (int z = 0; z < spec.dims[0]; ++z)
            for (int y = 0; y < spec.dims[1]; ++y)
                for (int x = 0; x < spec.dims[2]; ++x) {
                    if (!brain.contains(z, y, x)) continue;
                    for (int m = 0; m < kNumModalities; ++m) {
                        if (!c.modalities[m]) continue;
                        c.modalities[m]->at(z, y, x) +=
                            static_cast<float>(rng.next_gaussian()) * spec.noise_sigma;
                    }
                }
    }

    c.segmentation = std::move(seg);
    c.grade = spec.grade;
    c.validate();
    return c;
}

std::vector<MultiModalCase> generate_cohort(int count, uint64_t seed, const PhantomSpec& base) {
    std::vector<MultiModalCase> out;
    out.reserve(static_cast<size_t>(count));
    for (int i = 0; i < count; ++i) {
        PhantomSpec spec = base;
        spec.seed = splitmix64(seed ^ (0x70AB0000ULL + static_cast<uint64_t>(i)));
        spec.grade = (i % 2 == 0) ? Grade::GBM : Grade::LGG;
        MultiModalCase c = generate_phantom(spec);
        char buf[16];
        std::snprintf(buf, sizeof(buf), "p%03d", i);
        c.case_id = buf;
        out.push_back(std::move(c));
    }
    return out;
}

Grade phantom_discriminator(const MultiModalCase& c) {
    if (!c.segmentation || !c.available(Modality::T1ce))
        fail(ErrorCode::Data, "discriminator needs T1ce and a ground-truth mask");
    const Volume& t1ce = c.modality(Modality::T1ce);
    const Volume& seg = *c.segmentation;

    // Mask centroid and extent stand in for the tumour ellipsoid.
    double cz = 0, cy = 0, cx = 0;
    int64_t n = 0;
    for (int z = 0; z < seg.dims[0]; ++z)
        for (int y = 0; y < seg.dims[1]; ++y)
            for (int x = 0; x < seg.dims[2]; ++x)
                if (seg.at(z, y, x) != 0.f) {
                    cz += z; cy += y; cx += x;
                    ++n;
                }
    if (n == 0) fail(ErrorCode::Data, "discriminator: empty mask");
    cz /= n; cy /= n; cx /= n;

    // Distance-ranked split: the innermost third vs the outermost third.
    std::vector<std::pair<double, float>> voxels;
    voxels.reserve(static_cast<size_t>(n));
    for (int z = 0; z < seg.dims[0]; ++z)
        for (int y = 0; y < seg.dims[1]; ++y)
            for (int x = 0; x < seg.dims[2]; ++x)
                if (seg.at(z, y, x) != 0.f) {
                    const double d2 = (z - cz) * (z - cz) + (y - cy) * (y - cy) + (x - cx) * (x - cx);
                    voxels.emplace_back(d2, t1ce.at(z, y, x));
                }
    std::sort(voxels.begin(), voxels.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    // Innermost tenth sits inside the necrotic core of a GBM ring; the
    // outermost third is rim.
    const size_t core_n = std::max<size_t>(voxels.size() / 10, 1);
    const size_t rim_n = std::max<size_t>(voxels.size() / 3, 1);
    double core_mean = 0, rim_mean = 0;
    for (size_t i = 0; i < core_n; ++i) core_mean += voxels[i].second;
    for (size_t i = voxels.size() - rim_n; i < voxels.size(); ++i) rim_mean += voxels[i].second;
    core_mean /= core_n;
    rim_mean /= rim_n;

    // GBM shows rim >> core on T1ce; LGG is homogeneous there.
    return (rim_mean - core_mean > 0.5) ? Grade::GBM : Grade::LGG;
}

} // namespace gg
