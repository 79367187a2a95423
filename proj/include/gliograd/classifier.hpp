#ifndef GLIOGRAD_CLASSIFIER_HPP
#define GLIOGRAD_CLASSIFIER_HPP

#include <array>
#include <functional>
#include <vector>

#include "gliograd/nn.hpp"
#include "gliograd/rng.hpp"
#include "gliograd/tensor.hpp"
#include "gliograd/volume.hpp"

namespace gg {

struct RoiBox {
    std::array<int, 3> min_corner{0, 0, 0}; // inclusive
    std::array<int, 3> max_corner{0, 0, 0}; // exclusive
    int extent(int axis) const { return max_corner[axis] - min_corner[axis]; }
};

// Axis-aligned bounding box of the largest 26-connected foreground component,
// expanded per axis by floor(margin_fraction * extent) on each side and
// clipped to bounds. Empty mask -> "no tumour found" error.
RoiBox extract_roi_box(const Volume& mask, float margin_fraction);
Volume crop_volume(const Volume& v, const RoiBox& box);

// Trilinear align-corners stretch to a cubic grid; single-voxel axes
// broadcast. Returns [1,1,s,s,s].
Tensor resize_roi(const Volume& crop, int target);

struct ClassifierConfig {
    int input_size = 112; // desk-scale runs use 32
    int stem_kernel = 7;
    int stem_stride = 2;
    int stem_channels = 16;
    std::array<int, 4> block_channels{16, 32, 64, 128};
    int num_classes = 2;
    int batch_size = 8;
    float roi_margin = 0.1f;

    void validate() const; // input_size divisible by 16
};

// stem conv k7 s2 -> 4 residual blocks (conv3 s2 + conv3 s1, projection
// shortcut) -> global average pool -> 2 logits. Instance norm follows every
// conv except where the spatial extent has collapsed to a single voxel.
struct Classifier {
    ClassifierConfig cfg;
    ConvNormAct stem;
    struct Block {
        ConvNormAct conv1;      // stride 2
        Conv3dLayer conv2;      // stride 1
        InstanceNormLayer norm2;
        bool use_norm2 = true;
        Conv3dLayer proj;       // 1x1x1 stride 2 shortcut
    };
    std::vector<Block> blocks;
    Tensor fc_w, fc_b;
    ParamSet params;

    static Classifier build(const ClassifierConfig& cfg, uint64_t seed);
    Tensor forward(const Tensor& x) const; // [b,1,s,s,s] -> [b,2] logits
};

// Per sample: flip each axis with p=0.5, one k*90 degree rotation about a
// random axis, then translation up to 10% per axis via zero pad + crop.
// Draw order per sample is fixed: 3 flips, axis, k, 3 offsets.
Tensor augment(const Tensor& input, RngStream& rng);

struct RoiSample {
    Tensor input; // [1,1,s,s,s]
    Grade grade;
    std::string case_id;
};

struct TrainClsOptions {
    int steps = 1000;
    int checkpoint_every = 500;
    uint64_t seed = 0;
    bool augment_enabled = true;
    OptimizerConfig optimizer = OptimizerConfig::classification_default();
    // Stop once the running mean (window 20) of batch accuracy reaches this;
    // 0 disables.
    float stop_accuracy = 0.f;
    std::function<void(int step, float loss)> on_step;
};

// Balanced batches: exactly batch_size/2 samples per class each step.
// A single-class dataset is a validation error.
TrainTrace train_classifier(Classifier& net, const std::vector<RoiSample>& dataset,
                            const TrainClsOptions& opt,
                            const std::function<void(int)>& checkpoint_sink = {});

struct GradePrediction {
    Grade label;
    float p_gbm; // softmax probability of GBM
};

GradePrediction classify_roi(const Classifier& net, const Tensor& roi);

} // namespace gg

#endif
