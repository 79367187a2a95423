#ifndef GLIOGRAD_PHANTOM_HPP
#define GLIOGRAD_PHANTOM_HPP

#include <array>
#include <cstdint>
#include <vector>

#include "gliograd/volume.hpp"

namespace gg {

// Synthetic multi-modal case: brain ellipsoid with a tumour ellipsoid inside.
// GBM tumours show a contrast ring on T1ce (rim brighter than brain, core
// darker); LGG tumours are isointense on T1ce and homogeneously hyperintense
// on T2/FLAIR. A voxel belongs to an ellipsoid iff its center satisfies the
// ellipsoid inequality.
struct PhantomSpec {
    std::array<int, 3> dims{48, 48, 48};
    std::array<float, 3> brain_half_axes{20.f, 20.f, 20.f};
    std::array<float, 4> brain_intensity{0.8f, 1.0f, 1.0f, 0.9f}; // per modality
    // Tumour center offset and half-axes are drawn from these ranges.
    float tumour_half_axis_min = 6.f;
    float tumour_half_axis_max = 12.f;
    Grade grade = Grade::GBM;
    float noise_sigma = 0.05f; // Gaussian, applied inside the brain only
    uint64_t seed = 0;
    std::array<bool, kNumModalities> include{true, true, true, true};

    // GBM ring on T1ce, relative to brain intensity.
    float gbm_rim_factor = 1.9f;
    float gbm_core_factor = 0.35f;
    float gbm_core_fraction = 0.55f; // core ellipsoid = tumour axes * fraction
    // LGG is homogeneous: hyperintense on T2/FLAIR, isointense on T1ce.
    float lgg_t2_factor = 1.8f;
};

// Deterministic under spec.seed; ground-truth mask is the tumour support.
MultiModalCase generate_phantom(const PhantomSpec& spec);

// Balanced cohort (even index GBM, odd LGG); per-case seeds derive from seed.
std::vector<MultiModalCase> generate_cohort(int count, uint64_t seed,
                                            const PhantomSpec& base = PhantomSpec{});

// Fixed hand-coded discriminator for the separability guarantee: rim vs core
// mean on T1ce within the true mask. Returns the predicted grade.
Grade phantom_discriminator(const MultiModalCase& c);

} // namespace gg

#endif
