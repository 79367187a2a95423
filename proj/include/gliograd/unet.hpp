#ifndef GLIOGRAD_UNET_HPP
#define GLIOGRAD_UNET_HPP

#include <array>
#include <functional>
#include <string>
#include <vector>

#include "gliograd/nn.hpp"
#include "gliograd/rng.hpp"
#include "gliograd/tensor.hpp"
#include "gliograd/volume.hpp"

namespace gg {

struct UNetConfig {
    int levels = 4;
    int base_features = 25;
    int in_channels = kNumModalities;
    int patch_size = 128; // desk-scale runs use 32
    int batch_size = 2;
    float leaky_slope = 0.01f;
    float foreground_bias = 0.5f;

    void validate() const; // patch_size divisible by 2^(levels-1)
    int features_at(int level) const { return base_features << level; }
};

struct ModalityDropoutPolicy {
    float p_drop_t1 = 0.5f;
    float p_drop_one_of_t2_flair = 0.5f;
};

// Encoder of `levels` stages of two (conv3 -> IN -> lrelu) blocks with
// stride-2 convs between stages; decoder mirrors with trilinear upsample +
// conv and channel-concat skips; head is a 1x1x1 conv + sigmoid.
struct UNet {
    UNetConfig cfg;
    std::vector<ConvNormAct> enc1, enc2; // two conv blocks per level
    std::vector<ConvNormAct> down;       // between-stage stride-2 convs
    std::vector<ConvNormAct> up;         // post-upsample convs
    std::vector<ConvNormAct> dec1, dec2; // two conv blocks per decoder level
    Conv3dLayer head;
    ParamSet params;

    static UNet build(const UNetConfig& cfg, uint64_t seed);
    Tensor forward(const Tensor& x) const; // [b,4,p,p,p] -> [b,1,p,p,p] in (0,1)
};

// Training patch with its binary target crop.
struct PatchSample {
    Tensor input;  // [1,4,p,p,p]
    Tensor target; // [1,1,p,p,p]
};

// With probability cfg.foreground_bias the patch is centered on a uniformly
// chosen tumour voxel, otherwise its corner is uniform over valid positions.
// Volumes smaller than the patch are zero-padded (mask pads with 0).
PatchSample sample_patch(const MultiModalCase& c, const UNetConfig& cfg, RngStream& rng);

// Per sample: T1 zeroed with p_drop_t1; with p_drop_one_of_t2_flair exactly
// one of T2/FLAIR (fair coin) zeroed. T1ce is never touched. Channel order
// [T1, T1ce, T2, FLAIR]. Consumes exactly 3 draws per sample.
void apply_modality_dropout(Tensor& input, const ModalityDropoutPolicy& policy, RngStream& rng);

struct TrainSegOptions {
    int steps = 1000;
    int checkpoint_every = 500; // 0 = only final
    uint64_t seed = 0;
    ModalityDropoutPolicy dropout;
    bool dropout_enabled = true;
    OptimizerConfig optimizer = OptimizerConfig::segmentation_default();
    // Stop once the running mean (window 20) of batch soft dice exceeds this;
    // 0 disables. The step count still bounds the loop.
    float stop_dice = 0.f;
    std::function<void(int step, float loss)> on_step; // progress callback
};

// Cases must carry segmentations and be preprocessed (normalized) already.
TrainTrace train_segmentation(UNet& net, const std::vector<MultiModalCase>& cases,
                              const TrainSegOptions& opt,
                              const std::function<void(int)>& checkpoint_sink = {});

struct SegmentationResult {
    Volume mask; // values in {0,1}
    Volume prob; // values in [0,1]
};

// Sliding-window inference, 50% overlap, uniform averaging, threshold 0.5.
// Missing modalities are fed as zeros. Input volumes must be normalized.
SegmentationResult segment_volume(const MultiModalCase& c, const UNet& net);

} // namespace gg

#endif
