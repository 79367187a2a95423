#include "gliograd/volume.hpp"

#include "gliograd/error.hpp"

namespace gg {

Volume Volume::zeros(std::array<int, 3> dims, std::array<float, 3> spacing) {
    for (int d : dims)
        if (d <= 0) fail(ErrorCode::Data, "volume dims must be positive");
    for (float s : spacing)
        if (s <= 0.f) fail(ErrorCode::Data, "volume spacing must be positive");
    Volume v;
    v.dims = dims;
    v.spacing = spacing;
    v.values.assign(static_cast<size_t>(v.numel()), 0.f);
    return v;
}

const char* grade_name(Grade g) { return g == Grade::GBM ? "GBM" : "LGG"; }

void MultiModalCase::validate() const {
    if (!available(Modality::T1ce))
        fail(ErrorCode::Data, "case " + case_id + ": T1ce is required (inclusion criterion)");
    if (!available(Modality::T2) && !available(Modality::Flair))
        fail(ErrorCode::Data, "case " + case_id + ": at least one of T2/FLAIR is required");
    const Volume& ref = modality(Modality::T1ce);
    for (int i = 0; i < kNumModalities; ++i) {
        if (modalities[i] && !modalities[i]->same_grid(ref))
            fail(ErrorCode::Data, "case " + case_id + ": modality " + kModalityNames[i] +
                                      " is not on the common grid");
    }
    if (segmentation && segmentation->dims != ref.dims)
        fail(ErrorCode::Data, "case " + case_id + ": segmentation grid mismatch");
}

const Volume& MultiModalCase::reference_volume() const {
    for (const auto& m : modalities)
        if (m) return *m;
    fail(ErrorCode::Data, "case " + case_id + " has no modalities");
}

} // namespace gg
