#include "gliograd/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <sstream>
#include <unordered_set>

#include "gliograd/error.hpp"

namespace gg {

int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int d : s) n *= d;
    return n;
}

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << "]";
    return os.str();
}

bool same_shape(const Shape& a, const Shape& b) { return a == b; }

namespace detail {

namespace {
std::atomic<uint64_t> g_seq{1};
}

void Node::ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), 0.f);
}

} // namespace detail

namespace {

std::shared_ptr<detail::Node> new_node(Shape shape) {
    for (int d : shape) {
        if (d <= 0) fail(ErrorCode::Data, "tensor dimensions must be positive, got " + shape_str(shape));
    }
    auto n = std::make_shared<detail::Node>();
    n->seq = detail::g_seq.fetch_add(1);
    n->shape = std::move(shape);
    return n;
}

} // namespace

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    Tensor t;
    auto n = new_node(std::move(shape));
    n->value.assign(static_cast<size_t>(shape_numel(n->shape)), 0.f);
    n->requires_grad = requires_grad;
    t.node_ = std::move(n);
    return t;
}

Tensor Tensor::full(Shape shape, float v, bool requires_grad) {
    Tensor t = zeros(std::move(shape), requires_grad);
    std::fill(t.values().begin(), t.values().end(), v);
    return t;
}

Tensor Tensor::from(Shape shape, std::vector<float> values, bool requires_grad) {
    if (shape_numel(shape) != static_cast<int64_t>(values.size()))
        fail(ErrorCode::Data, "value count " + std::to_string(values.size()) +
                                  " does not match shape " + shape_str(shape));
    Tensor t = zeros(std::move(shape), requires_grad);
    t.values() = std::move(values);
    return t;
}

void Tensor::set_requires_grad(bool rg) { node_->requires_grad = rg; }

void Tensor::zero_grad() {
    if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.f);
}

float Tensor::item() const {
    if (numel() != 1) fail(ErrorCode::Data, "item() on non-scalar tensor " + shape_str(shape()));
    return node_->value[0];
}

Tensor Tensor::make(Shape shape, std::vector<Tensor> parents,
                    std::function<void(detail::Node&)> backward_fn) {
    Tensor t = zeros(std::move(shape), false);
    bool rg = false;
    t.node_->parents.reserve(parents.size());
    for (const auto& p : parents) {
        rg = rg || p.requires_grad();
        t.node_->parents.push_back(p.node_ptr());
    }
    t.node_->requires_grad = rg;
    if (rg) t.node_->backward = std::move(backward_fn);
    return t;
}

void Tensor::backward() const {
    if (!defined()) fail(ErrorCode::Data, "backward() on undefined tensor");
    if (numel() != 1) fail(ErrorCode::Data, "backward() root must be a scalar, got " + shape_str(shape()));

    // Collect the reachable subgraph. Creation order is a topological order
    // (parents always precede children), so backward runs in descending seq.
    std::vector<detail::Node*> order;
    std::unordered_set<detail::Node*> seen;
    std::vector<detail::Node*> stack{node_.get()};
    seen.insert(node_.get());
    while (!stack.empty()) {
        detail::Node* n = stack.back();
        stack.pop_back();
        order.push_back(n);
        for (const auto& p : n->parents) {
            if (p->seq >= n->seq)
                fail(ErrorCode::Data, "computation graph is not acyclic");
            if (p->requires_grad && seen.insert(p.get()).second) stack.push_back(p.get());
        }
    }
    std::sort(order.begin(), order.end(),
              [](const detail::Node* a, const detail::Node* b) { return a->seq > b->seq; });

    // Interior gradients are scratch for this pass; leaf gradients accumulate.
    for (detail::Node* n : order) {
        if (n->backward) {
            n->grad.assign(n->value.size(), 0.f);
        } else {
            n->ensure_grad();
        }
    }
    node_->grad[0] = 1.f;

    for (detail::Node* n : order) {
        if (n->backward) n->backward(*n);
    }
}

} // namespace gg
