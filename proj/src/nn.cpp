#include "gliograd/nn.hpp"

#include <cmath>

#include "gliograd/error.hpp"
#include "gliograd/kernels.hpp"
#include "gliograd/threading.hpp"

namespace gg {

Tensor& ParamSet::add(const std::string& name, Tensor t) {
    for (const auto& [n, _] : items)
        if (n == name) fail(ErrorCode::Config, "duplicate parameter name: " + name);
    t.set_requires_grad(true);
    items.emplace_back(name, std::move(t));
    return items.back().second;
}

const Tensor* ParamSet::find(const std::string& name) const {
    for (const auto& [n, t] : items)
        if (n == name) return &t;
    return nullptr;
}

namespace {
Tensor uniform_init(Shape shape, float bound, RngStream& rng) {
    const int64_t n = shape_numel(shape);
    std::vector<float> v(static_cast<size_t>(n));
    for (auto& x : v) x = static_cast<float>(rng.uniform(-bound, bound));
    return Tensor::from(std::move(shape), std::move(v));
}
} // namespace

Tensor init_conv_weight(int co, int ci, int k, RngStream& rng) {
    const float bound = std::sqrt(1.f / (static_cast<float>(ci) * k * k * k));
    return uniform_init({co, ci, k, k, k}, bound, rng);
}

Tensor init_linear_weight(int in, int out, RngStream& rng) {
    const float bound = std::sqrt(1.f / static_cast<float>(in));
    return uniform_init({in, out}, bound, rng);
}

Conv3dLayer Conv3dLayer::make(int ci, int co, int k, int stride, int pad,
                              const std::string& name, ParamSet& params, RngStream& rng) {
    if (k <= 0 || k % 2 == 0)
        fail(ErrorCode::Config, "conv kernel size must be odd and positive, got " + std::to_string(k));
    Conv3dLayer l;
    l.kernel = k;
    l.stride = stride;
    l.padding = pad;
    l.weight = params.add(name + ".weight", init_conv_weight(co, ci, k, rng));
    l.bias = params.add(name + ".bias", Tensor::zeros({co}));
    return l;
}

Tensor Conv3dLayer::forward(const Tensor& x) const {
    return conv3d(x, weight, bias, {stride, stride, stride}, {padding, padding, padding});
}

InstanceNormLayer InstanceNormLayer::make(int c, const std::string& name, ParamSet& params) {
    InstanceNormLayer l;
    l.gamma = params.add(name + ".gamma", Tensor::full({c}, 1.f));
    l.beta = params.add(name + ".beta", Tensor::zeros({c}));
    return l;
}

Tensor InstanceNormLayer::forward(const Tensor& x) const {
    return instance_norm(x, gamma, beta, eps);
}

ConvNormAct ConvNormAct::make(int ci, int co, int k, int stride, int pad, float slope,
                              bool use_norm, const std::string& name, ParamSet& params,
                              RngStream& rng) {
    ConvNormAct l;
    l.conv = Conv3dLayer::make(ci, co, k, stride, pad, name + ".conv", params, rng);
    if (use_norm) l.norm = InstanceNormLayer::make(co, name + ".norm", params);
    l.use_norm = use_norm;
    l.slope = slope;
    return l;
}

Tensor ConvNormAct::forward(const Tensor& x) const {
    Tensor h = conv.forward(x);
    if (use_norm) h = norm.forward(h);
    return leaky_relu(h, slope);
}

OptimizerConfig OptimizerConfig::segmentation_default() {
    OptimizerConfig c;
    c.kind = OptimizerKind::Adam;
    c.learning_rate = 1e-4f;
    c.weight_decay = 1e-5f;
    return c;
}

OptimizerConfig OptimizerConfig::classification_default() {
    OptimizerConfig c;
    c.kind = OptimizerKind::SgdMomentum;
    c.learning_rate = 1e-3f;
    c.momentum = 0.9f;
    c.weight_decay = 1e-5f;
    return c;
}

Optimizer::Optimizer(ParamSet& params, OptimizerConfig config)
    : params_(params), cfg_(config) {
    if (cfg_.learning_rate < 0.f) fail(ErrorCode::Config, "learning rate must be non-negative");
    if (cfg_.momentum < 0.f || cfg_.momentum >= 1.f)
        fail(ErrorCode::Config, "momentum must lie in [0,1)");
    if (cfg_.weight_decay < 0.f) fail(ErrorCode::Config, "weight decay must be non-negative");
    m_.resize(params_.size());
    v_.resize(params_.size());
    for (size_t i = 0; i < params_.size(); ++i) {
        const size_t n = params_.items[i].second.values().size();
        m_[i].assign(n, 0.f);
        if (cfg_.kind == OptimizerKind::Adam) v_[i].assign(n, 0.f);
    }
}

void Optimizer::zero_grad() {
    for (auto& [name, t] : params_.items) {
        t.ensure_grad();
        t.zero_grad();
    }
}

void Optimizer::step() {
    ++t_;
    const auto& k = kernels::active();
    const float bc1 = 1.f - std::pow(cfg_.beta1, static_cast<float>(t_));
    const float bc2 = 1.f - std::pow(cfg_.beta2, static_cast<float>(t_));
    for (size_t i = 0; i < params_.size(); ++i) {
        Tensor& p = params_.items[i].second;
        const float* g = p.grad();
        if (!g)
            fail(ErrorCode::Data, "optimizer step without gradient for parameter " +
                                      params_.items[i].first);
        const int64_t n = p.numel();
        float* pv = p.data();
        float* mv = m_[i].data();
        if (cfg_.kind == OptimizerKind::SgdMomentum) {
            parallel_for(n, [&](int64_t lo, int64_t hi) {
                k.sgd_update(hi - lo, cfg_.learning_rate, cfg_.momentum, cfg_.weight_decay,
                             g + lo, mv + lo, pv + lo);
            });
        } else {
            float* vv = v_[i].data();
            parallel_for(n, [&](int64_t lo, int64_t hi) {
                k.adam_update(hi - lo, cfg_.learning_rate, cfg_.beta1, cfg_.beta2, cfg_.epsilon,
                              cfg_.weight_decay, bc1, bc2, g + lo, mv + lo, vv + lo, pv + lo);
            });
        }
    }
}

} // namespace gg
