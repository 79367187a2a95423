#include "gliograd/unet.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "gliograd/error.hpp"

namespace gg {

void UNetConfig::validate() const {
    if (levels < 1) fail(ErrorCode::Config, "unet: levels must be >= 1");
    if (base_features < 1) fail(ErrorCode::Config, "unet: base_features must be >= 1");
    const int down_factor = 1 << (levels - 1);
    if (patch_size % down_factor != 0)
        fail(ErrorCode::Config, "unet: patch size " + std::to_string(patch_size) +
                                    " not divisible by 2^(levels-1) = " + std::to_string(down_factor));
    if (batch_size < 1) fail(ErrorCode::Config, "unet: batch size must be >= 1");
    if (foreground_bias < 0.f || foreground_bias > 1.f)
        fail(ErrorCode::Config, "unet: foreground_bias must lie in [0,1]");
}

UNet UNet::build(const UNetConfig& cfg, uint64_t seed) {
    cfg.validate();
    UNet net;
    net.cfg = cfg;
    RngStream rng(seed, RngUse::Init);
    const float slope = cfg.leaky_slope;

    for (int l = 0; l < cfg.levels; ++l) {
        const int f = cfg.features_at(l);
        const int cin = (l == 0) ? cfg.in_channels : f;
        net.enc1.push_back(ConvNormAct::make(cin, f, 3, 1, 1, slope, true,
                                             "enc" + std::to_string(l) + ".c1", net.params, rng));
        net.enc2.push_back(ConvNormAct::make(f, f, 3, 1, 1, slope, true,
                                             "enc" + std::to_string(l) + ".c2", net.params, rng));
        if (l + 1 < cfg.levels)
            net.down.push_back(ConvNormAct::make(f, cfg.features_at(l + 1), 3, 2, 1, slope, true,
                                                 "down" + std::to_string(l), net.params, rng));
    }
    for (int l = cfg.levels - 2; l >= 0; --l) {
        const int f = cfg.features_at(l);
        net.up.push_back(ConvNormAct::make(cfg.features_at(l + 1), f, 3, 1, 1, slope, true,
                                           "up" + std::to_string(l), net.params, rng));
        net.dec1.push_back(ConvNormAct::make(2 * f, f, 3, 1, 1, slope, true,
                                             "dec" + std::to_string(l) + ".c1", net.params, rng));
        net.dec2.push_back(ConvNormAct::make(f, f, 3, 1, 1, slope, true,
                                             "dec" + std::to_string(l) + ".c2", net.params, rng));
    }
    net.head = Conv3dLayer::make(cfg.base_features, 1, 1, 1, 0, "head", net.params, rng);
    return net;
}

Tensor UNet::forward(const Tensor& x) const {
    if (x.ndim() != 5 || x.dim(1) != cfg.in_channels)
        fail(ErrorCode::Data, "unet: input must be [b," + std::to_string(cfg.in_channels) +
                                  ",d,h,w], got " + shape_str(x.shape()));

    std::vector<Tensor> skips;
    Tensor h = x;
    for (int l = 0; l < cfg.levels; ++l) {
        if (l > 0) h = down[l - 1].forward(h);
        h = enc2[l].forward(enc1[l].forward(h));
        if (l + 1 < cfg.levels) skips.push_back(h);
    }
    for (int i = 0; i < cfg.levels - 1; ++i) {
        const int l = cfg.levels - 2 - i; // level the decoder lands on
        h = up[i].forward(upsample_trilinear2x(h));
        h = concat(h, skips[l], 1);
        h = dec2[i].forward(dec1[i].forward(h));
    }
    return sigmoid(head.forward(h));
}

namespace {

// Channel tensor assembly: missing modalities materialize as zeros.
void copy_patch_channel(const Volume& v, const std::array<int, 3>& corner, int p,
                        float* dst) {
    for (int z = 0; z < p; ++z) {
        const int vz = corner[0] + z;
        for (int y = 0; y < p; ++y) {
            const int vy = corner[1] + y;
            float* row = dst + (static_cast<int64_t>(z) * p + y) * p;
            if (vz >= v.dims[0] || vy >= v.dims[1]) {
                std::memset(row, 0, sizeof(float) * p);
                continue;
            }
            const int n = std::min(p, v.dims[2] - corner[2]);
            if (n > 0) {
                const float* src = v.values.data() +
                                   (static_cast<size_t>(vz) * v.dims[1] + vy) * v.dims[2] + corner[2];
                std::memcpy(row, src, sizeof(float) * n);
            }
            if (n < p) std::memset(row + std::max(n, 0), 0, sizeof(float) * (p - std::max(n, 0)));
        }
    }
}

} // namespace

PatchSample sample_patch(const MultiModalCase& c, const UNetConfig& cfg, RngStream& rng) {
    if (!c.segmentation)
        fail(ErrorCode::Data, "sample_patch: case " + c.case_id + " has no segmentation");
    const Volume& seg = *c.segmentation;
    const int p = cfg.patch_size;

    // Valid corner range per axis (clamped to 0 when the volume is smaller
    // than the patch; the copy pads with zeros).
    std::array<int, 3> maxCorner{};
    for (int a = 0; a < 3; ++a) maxCorner[a] = std::max(0, seg.dims[a] - p);

    std::array<int, 3> corner{};
    const bool fg = rng.next_uniform() < cfg.foreground_bias;
    bool centered = false;
    if (fg) {
        // Reservoir-free: count tumour voxels, then index one uniformly.
        int64_t count = 0;
        for (float v : seg.values) count += (v != 0.f);
        if (count > 0) {
            int64_t pick = rng.uniform_int(0, count - 1);
            int64_t seen = 0;
            int64_t flat = -1;
            for (size_t i = 0; i < seg.values.size(); ++i) {
                if (seg.values[i] != 0.f && seen++ == pick) {
                    flat = static_cast<int64_t>(i);
                    break;
                }
            }
            const int vz = static_cast<int>(flat / (seg.dims[1] * seg.dims[2]));
            const int vy = static_cast<int>((flat / seg.dims[2]) % seg.dims[1]);
            const int vx = static_cast<int>(flat % seg.dims[2]);
            corner = {std::clamp(vz - p / 2, 0, maxCorner[0]),
                      std::clamp(vy - p / 2, 0, maxCorner[1]),
                      std::clamp(vx - p / 2, 0, maxCorner[2])};
            centered = true;
        }
    }
    if (!centered) {
        for (int a = 0; a < 3; ++a)
            corner[a] = static_cast<int>(rng.uniform_int(0, maxCorner[a]));
    }

    PatchSample s;
    s.input = Tensor::zeros({1, cfg.in_channels, p, p, p});
    s.target = Tensor::zeros({1, 1, p, p, p});
    const int64_t chan = static_cast<int64_t>(p) * p * p;
    for (int m = 0; m < cfg.in_channels; ++m) {
        if (!c.modalities[m]) continue; // stays zero
        copy_patch_channel(*c.modalities[m], corner, p, s.input.data() + m * chan);
    }
    copy_patch_channel(seg, corner, p, s.target.data());
    return s;
}

void apply_modality_dropout(Tensor& input, const ModalityDropoutPolicy& policy, RngStream& rng) {
    if (input.ndim() != 5 || input.dim(1) != kNumModalities)
        fail(ErrorCode::Data, "modality dropout expects [b,4,d,h,w], got " + shape_str(input.shape()));
    const int b = input.dim(0);
    const int64_t chan = static_cast<int64_t>(input.dim(2)) * input.dim(3) * input.dim(4);
    for (int i = 0; i < b; ++i) {
        // Fixed draw count per sample keeps the stream aligned.
        const bool drop_t1 = rng.next_uniform() < policy.p_drop_t1;
        const bool drop_aux = rng.next_uniform() < policy.p_drop_one_of_t2_flair;
        const bool pick_t2 = rng.next_uniform() < 0.5;
        float* base = input.data() + static_cast<int64_t>(i) * kNumModalities * chan;
        if (drop_t1)
            std::memset(base + static_cast<int>(Modality::T1) * chan, 0, sizeof(float) * chan);
        if (drop_aux) {
            const int ch = static_cast<int>(pick_t2 ? Modality::T2 : Modality::Flair);
            std::memset(base + ch * chan, 0, sizeof(float) * chan);
        }
    }
}

TrainTrace train_segmentation(UNet& net, const std::vector<MultiModalCase>& cases,
                              const TrainSegOptions& opt,
                              const std::function<void(int)>& checkpoint_sink) {
    if (cases.empty()) fail(ErrorCode::Data, "train_segmentation: no cases");
    for (const auto& c : cases)
        if (!c.segmentation)
            fail(ErrorCode::Data, "train_segmentation: case " + c.case_id + " has no segmentation");

    RngStream patch_rng(opt.seed, RngUse::PatchSampling);
    RngStream drop_rng(opt.seed, RngUse::Dropout);
    Optimizer optim(net.params, opt.optimizer);

    TrainTrace trace;
    constexpr int kWindow = 20;
    std::vector<float> recent;

    for (int step = 0; step < opt.steps; ++step) {
        // Assemble the batch: uniform case picks, biased patch sampling.
        Tensor input = Tensor::zeros({net.cfg.batch_size, net.cfg.in_channels,
                                      net.cfg.patch_size, net.cfg.patch_size, net.cfg.patch_size});
        Tensor target = Tensor::zeros({net.cfg.batch_size, 1, net.cfg.patch_size,
                                       net.cfg.patch_size, net.cfg.patch_size});
        const int64_t inStride = input.numel() / net.cfg.batch_size;
        const int64_t tgStride = target.numel() / net.cfg.batch_size;
        for (int i = 0; i < net.cfg.batch_size; ++i) {
            const auto& c = cases[static_cast<size_t>(
                patch_rng.uniform_int(0, static_cast<int64_t>(cases.size()) - 1))];
            PatchSample s = sample_patch(c, net.cfg, patch_rng);
            std::memcpy(input.data() + i * inStride, s.input.data(), sizeof(float) * inStride);
            std::memcpy(target.data() + i * tgStride, s.target.data(), sizeof(float) * tgStride);
        }
        if (opt.dropout_enabled) apply_modality_dropout(input, opt.dropout, drop_rng);

        optim.zero_grad();
        Tensor prob = net.forward(input);
        Tensor loss = soft_dice_loss(prob, target, 1e-5f);
        const float lv = loss.item();
        if (!std::isfinite(lv))
            fail(ErrorCode::Numeric, "train_segmentation: NaN loss at step " + std::to_string(step));
        loss.backward();
        optim.step();

        trace.loss.push_back(lv);
        trace.steps_run = step + 1;
        if (opt.on_step) opt.on_step(step, lv);
        if (opt.checkpoint_every > 0 && checkpoint_sink && (step + 1) % opt.checkpoint_every == 0)
            checkpoint_sink(step + 1);

        if (opt.stop_dice > 0.f) {
            recent.push_back(1.f - lv);
            if (static_cast<int>(recent.size()) > kWindow) recent.erase(recent.begin());
            if (static_cast<int>(recent.size()) == kWindow) {
                float mean = 0.f;
                for (float d : recent) mean += d;
                mean /= kWindow;
                if (mean > opt.stop_dice) break;
            }
        }
    }
    return trace;
}

SegmentationResult segment_volume(const MultiModalCase& c, const UNet& net) {
    if (!c.available(Modality::T1ce))
        fail(ErrorCode::Data, "segment: case " + c.case_id + " lacks T1ce");
    if (!c.available(Modality::T2) && !c.available(Modality::Flair))
        fail(ErrorCode::Data, "segment: case " + c.case_id + " lacks both T2 and FLAIR");

    const Volume& ref = c.reference_volume();
    const int p = net.cfg.patch_size;
    const auto dims = ref.dims;

    // Window corners: stride p/2, final window flush with the end.
    auto starts = [&](int extent) {
        std::vector<int> s;
        if (extent <= p) {
            s.push_back(0);
            return s;
        }
        for (int v = 0; v + p < extent; v += p / 2) s.push_back(v);
        s.push_back(extent - p);
        std::vector<int> uniq;
        for (int v : s)
            if (uniq.empty() || uniq.back() != v) uniq.push_back(v);
        return uniq;
    };
    const auto zs = starts(dims[0]);
    const auto ys = starts(dims[1]);
    const auto xs = starts(dims[2]);

    Volume acc = Volume::zeros(dims, ref.spacing);
    Volume cnt = Volume::zeros(dims, ref.spacing);
    const int64_t chan = static_cast<int64_t>(p) * p * p;

    for (int z0 : zs)
        for (int y0 : ys)
            for (int x0 : xs) {
                Tensor input = Tensor::zeros({1, net.cfg.in_channels, p, p, p});
                for (int m = 0; m < net.cfg.in_channels; ++m) {
                    if (!c.modalities[m]) continue;
                    copy_patch_channel(*c.modalities[m], {z0, y0, x0}, p,
                                       input.data() + m * chan);
                }
                Tensor prob = net.forward(input);
                const float* pv = prob.data();
                const int zl = std::min(p, dims[0] - z0);
                const int yl = std::min(p, dims[1] - y0);
                const int xl = std::min(p, dims[2] - x0);
                for (int z = 0; z < zl; ++z)
                    for (int y = 0; y < yl; ++y)
                        for (int x = 0; x < xl; ++x) {
                            acc.at(z0 + z, y0 + y, x0 + x) +=
                                pv[(static_cast<int64_t>(z) * p + y) * p + x];
                            cnt.at(z0 + z, y0 + y, x0 + x) += 1.f;
                        }
            }

    SegmentationResult r;
    r.prob = Volume::zeros(dims, ref.spacing);
    r.mask = Volume::zeros(dims, ref.spacing);
    for (size_t i = 0; i < r.prob.values.size(); ++i) {
        const float pr = acc.values[i] / cnt.values[i];
        r.prob.values[i] = pr;
        r.mask.values[i] = pr > 0.5f ? 1.f : 0.f;
    }
    return r;
}

} // namespace gg
