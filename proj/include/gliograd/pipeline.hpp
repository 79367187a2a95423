#ifndef GLIOGRAD_PIPELINE_HPP
#define GLIOGRAD_PIPELINE_HPP

#include <optional>
#include <vector>

#include "gliograd/classifier.hpp"
#include "gliograd/metrics.hpp"
#include "gliograd/unet.hpp"
#include "gliograd/volume.hpp"

namespace gg {

// Per-modality z-normalization; the networks always see normalized intensities.
MultiModalCase normalize_case(const MultiModalCase& c);

// ROI sample for classifier training: crop the (normalized) T1ce around the
// mask, resize to the classifier grid.
RoiSample make_roi_sample(const MultiModalCase& normalized, const Volume& mask,
                          const ClassifierConfig& cfg);

// Full two-stage prediction for one (already normalized) case. When the case
// carries a ground-truth segmentation the result includes the dice of the
// predicted mask. `precomputed_mask` skips the segmentation stage, in which
// case seg_net may be null.
CaseResult predict_case(const MultiModalCase& normalized, const UNet* seg_net,
                        const Classifier& cls_net,
                        const Volume* precomputed_mask = nullptr);

} // namespace gg

#endif
