#ifndef GLIOGRAD_OPS_HPP
#define GLIOGRAD_OPS_HPP

#include <array>
#include <vector>

#include "gliograd/tensor.hpp"

namespace gg {

// Primitive differentiable ops. Forward values are float32; each op installs
// a backward rule that accumulates into its parents.

Tensor add(const Tensor& a, const Tensor& b);            // same shape
Tensor mul(const Tensor& a, const Tensor& b);            // elementwise
Tensor scale(const Tensor& a, float s);
Tensor matmul(const Tensor& a, const Tensor& b);         // [m,k] x [k,n]
Tensor reshape(const Tensor& a, Shape new_shape);
Tensor concat(const Tensor& a, const Tensor& b, int axis);
Tensor slice(const Tensor& a, int axis, int start, int len);
// Constant pad; lo/hi give leading/trailing pad per axis.
Tensor pad(const Tensor& a, const std::vector<int>& lo, const std::vector<int>& hi, float value);
Tensor reduce_sum(const Tensor& a);                      // -> scalar
Tensor reduce_mean(const Tensor& a);                     // -> scalar

Tensor relu(const Tensor& a);
Tensor leaky_relu(const Tensor& a, float slope);
Tensor sigmoid(const Tensor& a);

// x[b,c,d,h,w] -> [b,c], mean over the spatial voxels
Tensor global_avg_pool(const Tensor& x);

// x[m,k] * w[k,n] + bias[n]
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias);

// 3D ops --------------------------------------------------------------------

// Cross-correlation (no kernel flip). input [b,ci,d,h,w], weight
// [co,ci,kd,kh,kw], bias [co]; per-axis stride/pad, cubic in practice.
Tensor conv3d(const Tensor& input, const Tensor& weight, const Tensor& bias,
              const std::array<int, 3>& stride, const std::array<int, 3>& padding);

std::array<int, 3> conv3d_out_dims(const std::array<int, 3>& in,
                                   const std::array<int, 3>& kernel,
                                   const std::array<int, 3>& stride,
                                   const std::array<int, 3>& padding);

// Per (instance, channel) standardization over spatial voxels with learned
// affine. gamma/beta have shape [c]. Spatial extent must be >= 2 voxels.
Tensor instance_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, float eps);

// Doubles every spatial axis; align-corners trilinear weights.
Tensor upsample_trilinear2x(const Tensor& x);

// Losses ---------------------------------------------------------------------

// 1 - (2*sum(p*g)+s)/(sum(p)+sum(g)+s), per sample, then batch mean.
// pred values must lie in [0,1], target in {0,1}.
Tensor soft_dice_loss(const Tensor& pred, const Tensor& target, float smooth);

// Mean over batch of -log softmax(logits)[label]; max-subtraction stabilized.
Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels);

} // namespace gg

#endif
