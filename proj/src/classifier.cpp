#include "gliograd/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <queue>

#include "gliograd/error.hpp"

namespace gg {

// ---- ROI -------------------------------------------------------------------

RoiBox extract_roi_box(const Volume& mask, float margin_fraction) {
    const auto& d = mask.dims;
    // Largest 26-connected component by BFS over foreground voxels.
    std::vector<int32_t> label(mask.values.size(), -1);
    int32_t ncomp = 0;
    int64_t best_size = 0;
    int32_t best = -1;
    std::vector<int64_t> queue;
    auto flat = [&](int z, int y, int x) {
        return (static_cast<int64_t>(z) * d[1] + y) * d[2] + x;
    };

    for (int64_t i = 0; i < mask.numel(); ++i) {
        if (mask.values[i] == 0.f || label[i] != -1) continue;
        const int32_t comp = ncomp++;
        int64_t size = 0;
        queue.clear();
        queue.push_back(i);
        label[i] = comp;
        while (!queue.empty()) {
            const int64_t v = queue.back();
            queue.pop_back();
            ++size;
            const int z = static_cast<int>(v / (d[1] * d[2]));
            const int y = static_cast<int>((v / d[2]) % d[1]);
            const int x = static_cast<int>(v % d[2]);
            for (int dz = -1; dz <= 1; ++dz)
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dx = -1; dx <= 1; ++dx) {
                        if (!dz && !dy && !dx) continue;
                        const int nz = z + dz, ny = y + dy, nx = x + dx;
                        if (nz < 0 || nz >= d[0] || ny < 0 || ny >= d[1] || nx < 0 || nx >= d[2])
                            continue;
                        const int64_t u = flat(nz, ny, nx);
                        if (mask.values[u] != 0.f && label[u] == -1) {
                            label[u] = comp;
                            queue.push_back(u);
                        }
                    }
        }
        if (size > best_size) {
            best_size = size;
            best = comp;
        }
    }
    if (best < 0)
        fail(ErrorCode::Data, "no tumour found: segmentation mask is empty");

    RoiBox box;
    box.min_corner = {d[0], d[1], d[2]};
    box.max_corner = {0, 0, 0};
    for (int z = 0; z < d[0]; ++z)
        for (int y = 0; y < d[1]; ++y)
            for (int x = 0; x < d[2]; ++x) {
                if (label[flat(z, y, x)] != best) continue;
                box.min_corner[0] = std::min(box.min_corner[0], z);
                box.min_corner[1] = std::min(box.min_corner[1], y);
                box.min_corner[2] = std::min(box.min_corner[2], x);
                box.max_corner[0] = std::max(box.max_corner[0], z + 1);
                box.max_corner[1] = std::max(box.max_corner[1], y + 1);
                box.max_corner[2] = std::max(box.max_corner[2], x + 1);
            }

    // Margin rule: floor(margin_fraction * extent) voxels on each side.
    for (int a = 0; a < 3; ++a) {
        const int margin = static_cast<int>(std::floor(margin_fraction * box.extent(a)));
        box.min_corner[a] = std::max(0, box.min_corner[a] - margin);
        box.max_corner[a] = std::min(d[a], box.max_corner[a] + margin);
    }
    return box;
}

Volume crop_volume(const Volume& v, const RoiBox& box) {
    for (int a = 0; a < 3; ++a)
        if (box.min_corner[a] < 0 || box.max_corner[a] > v.dims[a] ||
            box.min_corner[a] >= box.max_corner[a])
            fail(ErrorCode::Data, "crop: box outside volume bounds");
    Volume out = Volume::zeros({box.extent(0), box.extent(1), box.extent(2)}, v.spacing);
    for (int z = 0; z < out.dims[0]; ++z)
        for (int y = 0; y < out.dims[1]; ++y) {
            const float* src = v.values.data() +
                               (static_cast<size_t>(box.min_corner[0] + z) * v.dims[1] +
                                box.min_corner[1] + y) * v.dims[2] + box.min_corner[2];
            std::memcpy(&out.at(z, y, 0), src, sizeof(float) * out.dims[2]);
        }
    return out;
}

Tensor resize_roi(const Volume& crop, int target) {
    if (crop.numel() == 0) fail(ErrorCode::Data, "resize_roi: empty crop");
    Tensor out = Tensor::zeros({1, 1, target, target, target});
    // Anisotropic align-corners stretch; single-voxel axes broadcast.
    auto table = [&](int in) {
        std::vector<std::pair<int, float>> t(target); // (i0, weight of i1)
        for (int i = 0; i < target; ++i) {
            if (in == 1 || target == 1) {
                t[i] = {0, 0.f};
                continue;
            }
            double pos = static_cast<double>(i) * (in - 1) / (target - 1);
            int lo = static_cast<int>(pos);
            if (lo > in - 2) lo = in - 2;
            t[i] = {lo, static_cast<float>(pos - lo)};
        }
        return t;
    };
    const auto tz = table(crop.dims[0]);
    const auto ty = table(crop.dims[1]);
    const auto tx = table(crop.dims[2]);
    auto idx1 = [](const std::pair<int, float>& e, int in) {
        return in == 1 ? 0 : e.first + 1;
    };
    float* dst = out.data();
    for (int z = 0; z < target; ++z)
        for (int y = 0; y < target; ++y)
            for (int x = 0; x < target; ++x) {
                const auto& ez = tz[z];
                const auto& ey = ty[y];
                const auto& ex = tx[x];
                const int z1 = idx1(ez, crop.dims[0]);
                const int y1 = idx1(ey, crop.dims[1]);
                const int x1 = idx1(ex, crop.dims[2]);
                const float v000 = crop.at(ez.first, ey.first, ex.first);
                const float v001 = crop.at(ez.first, ey.first, x1);
                const float v010 = crop.at(ez.first, y1, ex.first);
                const float v011 = crop.at(ez.first, y1, x1);
                const float v100 = crop.at(z1, ey.first, ex.first);
                const float v101 = crop.at(z1, ey.first, x1);
                const float v110 = crop.at(z1, y1, ex.first);
                const float v111 = crop.at(z1, y1, x1);
                const float c00 = v000 + ex.second * (v001 - v000);
                const float c01 = v010 + ex.second * (v011 - v010);
                const float c10 = v100 + ex.second * (v101 - v100);
                const float c11 = v110 + ex.second * (v111 - v110);
                const float c0 = c00 + ey.second * (c01 - c00);
                const float c1 = c10 + ey.second * (c11 - c10);
                *dst++ = c0 + ez.second * (c1 - c0);
            }
    return out;
}

// ---- network ----------------------------------------------------------------

void ClassifierConfig::validate() const {
    if (stem_kernel != 7) fail(ErrorCode::Config, "classifier: stem kernel is fixed at 7");
    if (static_cast<int>(block_channels.size()) != 4)
        fail(ErrorCode::Config, "classifier: exactly 4 residual blocks");
    if (input_size % 16 != 0)
        fail(ErrorCode::Config, "classifier: input size " + std::to_string(input_size) +
                                    " must be divisible by 16");
    if (batch_size < 2 || batch_size % 2 != 0)
        fail(ErrorCode::Config, "classifier: batch size must be even (balanced sampling)");
}

Classifier Classifier::build(const ClassifierConfig& cfg, uint64_t seed) {
    cfg.validate();
    Classifier net;
    net.cfg = cfg;
    RngStream rng(seed, RngUse::Init);

    // Spatial trace decides where instance norm stays well-defined.
    int size = cfg.input_size;
    auto halved = [](int s) { return (s - 1) / 2 + 1; };

    size = halved(size);
    net.stem = ConvNormAct::make(1, cfg.stem_channels, cfg.stem_kernel, cfg.stem_stride,
                                 cfg.stem_kernel / 2, 0.f, size > 1, "stem", net.params, rng);

    int cin = cfg.stem_channels;
    for (int i = 0; i < 4; ++i) {
        const int cout = cfg.block_channels[static_cast<size_t>(i)];
        size = halved(size);
        Block blk;
        blk.conv1 = ConvNormAct::make(cin, cout, 3, 2, 1, 0.f, size > 1,
                                      "block" + std::to_string(i) + ".c1", net.params, rng);
        blk.conv2 = Conv3dLayer::make(cout, cout, 3, 1, 1,
                                      "block" + std::to_string(i) + ".c2", net.params, rng);
        blk.use_norm2 = size > 1;
        if (blk.use_norm2)
            blk.norm2 = InstanceNormLayer::make(cout, "block" + std::to_string(i) + ".n2", net.params);
        blk.proj = Conv3dLayer::make(cin, cout, 1, 2, 0,
                                     "block" + std::to_string(i) + ".proj", net.params, rng);
        net.blocks.push_back(std::move(blk));
        cin = cout;
    }
    net.fc_w = net.params.add("fc.weight", init_linear_weight(cin, cfg.num_classes, rng));
    net.fc_b = net.params.add("fc.bias", Tensor::zeros({cfg.num_classes}));
    return net;
}

Tensor Classifier::forward(const Tensor& x) const {
    if (x.ndim() != 5 || x.dim(1) != 1)
        fail(ErrorCode::Data, "classifier: input must be [b,1,s,s,s], got " + shape_str(x.shape()));
    Tensor h = stem.forward(x);
    for (const auto& blk : blocks) {
        Tensor main = blk.conv2.forward(blk.conv1.forward(h));
        if (blk.use_norm2) main = blk.norm2.forward(main);
        Tensor shortcut = blk.proj.forward(h);
        h = relu(add(main, shortcut));
    }
    return linear(global_avg_pool(h), fc_w, fc_b);
}

// ---- augmentation -------------------------------------------------------------

namespace {

void flip_axis(std::vector<float>& v, const std::array<int, 3>& d, int axis) {
    auto at = [&](int z, int y, int x) -> float& {
        return v[(static_cast<size_t>(z) * d[1] + y) * d[2] + x];
    };
    const int n = d[axis];
    for (int z = 0; z < d[0]; ++z)
        for (int y = 0; y < d[1]; ++y)
            for (int x = 0; x < d[2]; ++x) {
                std::array<int, 3> a{z, y, x};
                if (a[axis] >= n / 2) continue;
                std::array<int, 3> b{z, y, x};
                b[axis] = n - 1 - a[axis];
                std::swap(at(a[0], a[1], a[2]), at(b[0], b[1], b[2]));
            }
}

// k*90 degrees about `axis`, in the plane of the other two axes.
void rot90(std::vector<float>& v, const std::array<int, 3>& d, int axis, int k) {
    k &= 3;
    if (k == 0) return;
    const int a1 = axis == 0 ? 1 : 0;
    const int a2 = axis == 2 ? 1 : 2;
    if (d[a1] != d[a2])
        fail(ErrorCode::Data, "rot90 requires a square plane");
    const int n = d[a1];
    std::vector<float> tmp(v.size());
    auto src_at = [&](const std::array<int, 3>& c) {
        return v[(static_cast<size_t>(c[0]) * d[1] + c[1]) * d[2] + c[2]];
    };
    for (int t = 0; t < k; ++t) {
        for (int z = 0; z < d[0]; ++z)
            for (int y = 0; y < d[1]; ++y)
                for (int x = 0; x < d[2]; ++x) {
                    std::array<int, 3> dst{z, y, x};
                    // (i, j) -> (j, n-1-i): dst(i,j) = src(n-1-j, i)
                    std::array<int, 3> src = dst;
                    src[a1] = n - 1 - dst[a2];
                    src[a2] = dst[a1];
                    tmp[(static_cast<size_t>(z) * d[1] + y) * d[2] + x] = src_at(src);
                }
        v.swap(tmp);
    }
}

void translate(std::vector<float>& v, const std::array<int, 3>& d,
               const std::array<int, 3>& off) {
    if (off == std::array<int, 3>{0, 0, 0}) return;
    std::vector<float> tmp(v.size(), 0.f);
    for (int z = 0; z < d[0]; ++z) {
        const int sz = z - off[0];
        if (sz < 0 || sz >= d[0]) continue;
        for (int y = 0; y < d[1]; ++y) {
            const int sy = y - off[1];
            if (sy < 0 || sy >= d[1]) continue;
            for (int x = 0; x < d[2]; ++x) {
                const int sx = x - off[2];
                if (sx < 0 || sx >= d[2]) continue;
                tmp[(static_cast<size_t>(z) * d[1] + y) * d[2] + x] =
                    v[(static_cast<size_t>(sz) * d[1] + sy) * d[2] + sx];
            }
        }
    }
    v.swap(tmp);
}

} // namespace

Tensor augment(const Tensor& input, RngStream& rng) {
    if (input.ndim() != 5 || input.dim(1) != 1 ||
        input.dim(2) != input.dim(3) || input.dim(3) != input.dim(4))
        fail(ErrorCode::Data, "augment expects cubic [b,1,s,s,s], got " + shape_str(input.shape()));
    const int b = input.dim(0);
    const int s = input.dim(2);
    const std::array<int, 3> d{s, s, s};
    const int max_shift = s / 10;
    const int64_t chan = static_cast<int64_t>(s) * s * s;

    Tensor out = Tensor::from(input.shape(), input.values());
    for (int i = 0; i < b; ++i) {
        // fixed draw order per sample: 3 flips, axis, k, 3 offsets
        const bool f0 = rng.next_uniform() < 0.5;
        const bool f1 = rng.next_uniform() < 0.5;
        const bool f2 = rng.next_uniform() < 0.5;
        const int axis = static_cast<int>(rng.uniform_int(0, 2));
        const int k = static_cast<int>(rng.uniform_int(0, 3));
        std::array<int, 3> off{};
        for (auto& o : off) o = static_cast<int>(rng.uniform_int(-max_shift, max_shift));

        std::vector<float> vox(out.data() + i * chan, out.data() + (i + 1) * chan);
        if (f0) flip_axis(vox, d, 0);
        if (f1) flip_axis(vox, d, 1);
        if (f2) flip_axis(vox, d, 2);
        rot90(vox, d, axis, k);
        translate(vox, d, off);
        std::memcpy(out.data() + i * chan, vox.data(), sizeof(float) * chan);
    }
    return out;
}

// ---- training ------------------------------------------------------------------

TrainTrace train_classifier(Classifier& net, const std::vector<RoiSample>& dataset,
                            const TrainClsOptions& opt,
                            const std::function<void(int)>& checkpoint_sink) {
    std::vector<size_t> gbm, lgg;
    for (size_t i = 0; i < dataset.size(); ++i)
        (dataset[i].grade == Grade::GBM ? gbm : lgg).push_back(i);
    if (gbm.empty() || lgg.empty())
        fail(ErrorCode::Data, "train_classifier: both classes must be present, got " +
                                  std::to_string(gbm.size()) + " GBM / " +
                                  std::to_string(lgg.size()) + " LGG");

    const int bs = net.cfg.batch_size;
    const int half = bs / 2;
    const int s = net.cfg.input_size;
    for (const auto& r : dataset)
        if (r.input.dim(2) != s)
            fail(ErrorCode::Data, "train_classifier: ROI size mismatch for " + r.case_id);

    RngStream batch_rng(opt.seed, RngUse::PatchSampling);
    RngStream aug_rng(opt.seed, RngUse::Augmentation);
    Optimizer optim(net.params, opt.optimizer);

    TrainTrace trace;
    constexpr int kWindow = 20;
    std::vector<float> recent;
    const int64_t chan = static_cast<int64_t>(s) * s * s;

    for (int step = 0; step < opt.steps; ++step) {
        Tensor input = Tensor::zeros({bs, 1, s, s, s});
        std::vector<int> labels(static_cast<size_t>(bs));
        for (int i = 0; i < bs; ++i) {
            // GBM in the first half, LGG in the second; balanced by construction.
            const auto& pool = i < half ? gbm : lgg;
            const size_t pick = pool[static_cast<size_t>(
                batch_rng.uniform_int(0, static_cast<int64_t>(pool.size()) - 1))];
            std::memcpy(input.data() + i * chan, dataset[pick].input.data(),
                        sizeof(float) * chan);
            labels[static_cast<size_t>(i)] = i < half ? kClassGbm : kClassLgg;
        }
        if (opt.augment_enabled) input = augment(input, aug_rng);

        optim.zero_grad();
        Tensor logits = net.forward(input);
        Tensor loss = cross_entropy(logits, labels);
        const float lv = loss.item();
        if (!std::isfinite(lv))
            fail(ErrorCode::Numeric, "train_classifier: NaN loss at step " + std::to_string(step));
        loss.backward();
        optim.step();

        trace.loss.push_back(lv);
        trace.steps_run = step + 1;
        if (opt.on_step) opt.on_step(step, lv);
        if (opt.checkpoint_every > 0 && checkpoint_sink && (step + 1) % opt.checkpoint_every == 0)
            checkpoint_sink(step + 1);

        if (opt.stop_accuracy > 0.f) {
            int correct = 0;
            for (int i = 0; i < bs; ++i) {
                const float* lg = logits.data() + i * 2;
                const int pred = lg[kClassGbm] >= lg[kClassLgg] ? kClassGbm : kClassLgg;
                correct += pred == labels[static_cast<size_t>(i)];
            }
            recent.push_back(static_cast<float>(correct) / bs);
            if (static_cast<int>(recent.size()) > kWindow) recent.erase(recent.begin());
            if (static_cast<int>(recent.size()) == kWindow) {
                float mean = 0.f;
                for (float a : recent) mean += a;
                if (mean / kWindow >= opt.stop_accuracy) break;
            }
        }
    }
    return trace;
}

GradePrediction classify_roi(const Classifier& net, const Tensor& roi) {
    Tensor logits = net.forward(roi);
    const float l_lgg = logits.data()[kClassLgg];
    const float l_gbm = logits.data()[kClassGbm];
    const double m = std::max(l_lgg, l_gbm);
    const double e_lgg = std::exp(l_lgg - m);
    const double e_gbm = std::exp(l_gbm - m);
    GradePrediction p;
    p.p_gbm = static_cast<float>(e_gbm / (e_lgg + e_gbm));
    p.label = l_gbm >= l_lgg ? Grade::GBM : Grade::LGG;
    return p;
}

} // namespace gg
