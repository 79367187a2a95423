#ifndef GLIOGRAD_TENSOR_HPP
#define GLIOGRAD_TENSOR_HPP

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace gg {

using Shape = std::vector<int>;

int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);
bool same_shape(const Shape& a, const Shape& b);

namespace detail {

struct Node {
    Shape shape;
    std::vector<float> value;
    std::vector<float> grad;    // allocated lazily, same size as value
    bool requires_grad = false;
    uint64_t seq = 0;           // creation order; backward runs in reverse
    std::vector<std::shared_ptr<Node>> parents;
    // Accumulates d(loss)/d(parent) into each parent's grad, reading
    // this node's grad. Empty for leaves.
    std::function<void(Node&)> backward;

    void ensure_grad();
};

} // namespace detail

// Value-semantic handle to a node of the computation DAG. Storage is float32
// row-major; network tensors use the [batch, channel, depth, height, width]
// convention.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, float v, bool requires_grad = false);
    static Tensor from(Shape shape, std::vector<float> values, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    int ndim() const { return static_cast<int>(node_->shape.size()); }
    int dim(int i) const { return node_->shape[static_cast<size_t>(i)]; }
    int64_t numel() const { return static_cast<int64_t>(node_->value.size()); }

    float* data() { return node_->value.data(); }
    const float* data() const { return node_->value.data(); }
    std::vector<float>& values() { return node_->value; }
    const std::vector<float>& values() const { return node_->value; }

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool rg);

    // Gradient buffer; null until allocated by backward() or ensure_grad().
    float* grad() { return node_->grad.empty() ? nullptr : node_->grad.data(); }
    const float* grad() const { return node_->grad.empty() ? nullptr : node_->grad.data(); }
    void ensure_grad() { node_->ensure_grad(); }
    void zero_grad();

    float item() const;

    // Reverse-mode pass from a scalar root. Gradients of reachable leaves
    // accumulate (callers zero them between steps); interior gradients are
    // scratch owned by the pass.
    void backward() const;

    detail::Node* node() const { return node_.get(); }
    const std::shared_ptr<detail::Node>& node_ptr() const { return node_; }

    // Graph-building constructor used by every op.
    static Tensor make(Shape shape, std::vector<Tensor> parents,
                       std::function<void(detail::Node&)> backward_fn);

private:
    std::shared_ptr<detail::Node> node_;
};

} // namespace gg

#endif
