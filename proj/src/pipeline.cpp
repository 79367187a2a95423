#include "gliograd/pipeline.hpp"

#include "gliograd/error.hpp"
#include "gliograd/preprocess.hpp"

namespace gg {

MultiModalCase normalize_case(const MultiModalCase& c) {
    MultiModalCase out = c;
    for (auto& m : out.modalities)
        if (m) m = znormalize(*m);
    return out;
}

RoiSample make_roi_sample(const MultiModalCase& normalized, const Volume& mask,
                          const ClassifierConfig& cfg) {
    const RoiBox box = extract_roi_box(mask, cfg.roi_margin);
    const Volume crop = crop_volume(normalized.modality(Modality::T1ce), box);
    RoiSample s;
    s.input = resize_roi(crop, cfg.input_size);
    if (!normalized.grade)
        fail(ErrorCode::Data, "case " + normalized.case_id + " has no grade label");
    s.grade = *normalized.grade;
    s.case_id = normalized.case_id;
    return s;
}

CaseResult predict_case(const MultiModalCase& normalized, const UNet* seg_net,
                        const Classifier& cls_net, const Volume* precomputed_mask) {
    CaseResult r;
    r.case_id = normalized.case_id;

    Volume mask;
    if (precomputed_mask) {
        mask = *precomputed_mask;
    } else {
        if (!seg_net)
            fail(ErrorCode::Config, "predict_case: need a segmentation network or a mask");
        mask = segment_volume(normalized, *seg_net).mask;
    }
    if (normalized.segmentation)
        r.dice = dice(mask, *normalized.segmentation);

    const RoiBox box = extract_roi_box(mask, cls_net.cfg.roi_margin);
    const Volume crop = crop_volume(normalized.modality(Modality::T1ce), box);
    const Tensor roi = resize_roi(crop, cls_net.cfg.input_size);
    const GradePrediction p = classify_roi(cls_net, roi);
    r.p_gbm = p.p_gbm;
    r.predicted = p.label;
    return r;
}

} // namespace gg
