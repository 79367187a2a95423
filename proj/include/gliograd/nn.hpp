#ifndef GLIOGRAD_NN_HPP
#define GLIOGRAD_NN_HPP

#include <string>
#include <utility>
#include <vector>

#include "gliograd/ops.hpp"
#include "gliograd/rng.hpp"
#include "gliograd/tensor.hpp"

namespace gg {

// Ordered named parameters: checkpoint layout and optimizer state follow
// this order exactly, which is what makes checkpoints byte-reproducible.
struct ParamSet {
    std::vector<std::pair<std::string, Tensor>> items;

    Tensor& add(const std::string& name, Tensor t);
    const Tensor* find(const std::string& name) const;
    size_t size() const { return items.size(); }
};

// Uniform in +-sqrt(1/fan_in), drawn from the init stream.
Tensor init_conv_weight(int co, int ci, int k, RngStream& rng);
Tensor init_linear_weight(int in, int out, RngStream& rng);

struct Conv3dLayer {
    Tensor weight; // [co,ci,k,k,k]
    Tensor bias;   // [co]
    int kernel = 3;
    int stride = 1;
    int padding = 1;

    static Conv3dLayer make(int ci, int co, int k, int stride, int pad,
                            const std::string& name, ParamSet& params, RngStream& rng);
    Tensor forward(const Tensor& x) const;
};

struct InstanceNormLayer {
    Tensor gamma; // [c]
    Tensor beta;  // [c]
    float eps = 1e-5f;

    static InstanceNormLayer make(int c, const std::string& name, ParamSet& params);
    Tensor forward(const Tensor& x) const;
};

// conv -> instance norm -> (leaky) ReLU. Norm can be disabled where the
// spatial extent degenerates to one voxel.
struct ConvNormAct {
    Conv3dLayer conv;
    InstanceNormLayer norm;
    bool use_norm = true;
    float slope = 0.01f; // 0 = plain ReLU

    static ConvNormAct make(int ci, int co, int k, int stride, int pad, float slope,
                            bool use_norm, const std::string& name, ParamSet& params,
                            RngStream& rng);
    Tensor forward(const Tensor& x) const;
};

// Loss history of a training run.
struct TrainTrace {
    std::vector<float> loss; // one entry per executed step
    int steps_run = 0;
};

// Optimizer -------------------------------------------------------------------

enum class OptimizerKind { Adam, SgdMomentum };

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::Adam;
    float learning_rate = 1e-4f;
    float momentum = 0.9f;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float epsilon = 1e-8f;
    float weight_decay = 1e-5f;

    // ADAM, lr 1e-4, wd 1e-5
    static OptimizerConfig segmentation_default();
    // SGD, lr 1e-3, momentum 0.9, wd 1e-5
    static OptimizerConfig classification_default();
};

// L2 decay is coupled: wd*theta is added to the raw gradient before the
// moment updates (classical formulation, not decoupled).
class Optimizer {
public:
    Optimizer(ParamSet& params, OptimizerConfig config);

    void zero_grad();
    void step();
    int64_t steps_taken() const { return t_; }

private:
    ParamSet& params_;
    OptimizerConfig cfg_;
    int64_t t_ = 0;
    std::vector<std::vector<float>> m_; // ADAM first moment / SGD velocity
    std::vector<std::vector<float>> v_; // ADAM second moment
};

} // namespace gg

#endif
