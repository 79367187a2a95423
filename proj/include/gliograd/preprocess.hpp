#ifndef GLIOGRAD_PREPROCESS_HPP
#define GLIOGRAD_PREPROCESS_HPP

#include <array>

#include "gliograd/volume.hpp"

namespace gg {

// Trilinear resampling to a target voxel spacing. Output dims are
// round(in_dims * in_spacing / target), min 1; sample positions follow the
// align-corners convention (endpoints map to endpoints) and out-of-range
// samples clamp to the boundary voxel.
Volume resample(const Volume& v, const std::array<float, 3>& target_spacing);

// Intensity standardization over the nonzero (skull-stripped brain) voxels:
// nonzero voxels map to (x - mean)/std with population std, background stays
// exactly 0. Degenerate (constant) brain regions are an error.
Volume znormalize(const Volume& v);

} // namespace gg

#endif
