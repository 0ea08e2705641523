#include "synthvit/tensor.hpp"

#include <cmath>
#include <sstream>
#include <unordered_set>
#include <utility>

#include "synthvit/errors.hpp"

namespace synthvit {

std::string shape_str(const Shape& shape) {
    std::ostringstream oss;
    oss << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i > 0) oss << ", ";
        oss << shape[i];
    }
    oss << "]";
    return oss.str();
}

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

namespace detail {

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_enabled() {
    return g_grad_enabled;
}

}  // namespace detail

NoGradGuard::NoGradGuard() : previous_(detail::g_grad_enabled) {
    detail::g_grad_enabled = false;
}

NoGradGuard::~NoGradGuard() {
    detail::g_grad_enabled = previous_;
}

Tensor::Tensor(Shape shape, double fill, bool requires_grad) : shape_(std::move(shape)) {
    for (std::size_t d : shape_) {
        if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_str(shape_));
    }
    data_ = std::make_shared<std::vector<double>>(shape_numel(shape_), fill);
    if (requires_grad) mark_requires_grad();
}

Tensor Tensor::from_data(Shape shape, std::vector<double> values, bool requires_grad) {
    if (shape_numel(shape) != values.size()) {
        throw DimensionError("shape " + shape_str(shape) + " does not match " +
                             std::to_string(values.size()) + " values");
    }
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_ = std::make_shared<std::vector<double>>(std::move(values));
    if (requires_grad) t.mark_requires_grad();
    return t;
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return from_data({1}, {value}, requires_grad);
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    return Tensor(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    return Tensor(std::move(shape), value, requires_grad);
}

Tensor Tensor::randn(const Shape& shape, Rng& rng, double mean, double stddev, bool requires_grad) {
    Tensor t(shape, 0.0, requires_grad);
    for (double& v : t.values()) v = rng.normal(mean, stddev);
    return t;
}

Tensor Tensor::rand_uniform(const Shape& shape, Rng& rng, double lo, double hi, bool requires_grad) {
    Tensor t(shape, 0.0, requires_grad);
    for (double& v : t.values()) v = rng.uniform(lo, hi);
    return t;
}

Tensor Tensor::trunc_normal(const Shape& shape, Rng& rng, double stddev, bool requires_grad) {
    Tensor t(shape, 0.0, requires_grad);
    for (double& v : t.values()) {
        double z = rng.normal();
        while (std::fabs(z) > 2.0) z = rng.normal();
        v = z * stddev;
    }
    return t;
}

std::size_t Tensor::dim(std::size_t axis) const {
    if (axis >= shape_.size()) {
        throw DimensionError("axis " + std::to_string(axis) + " out of range for " + shape_str(shape_));
    }
    return shape_[axis];
}

double Tensor::value() const {
    if (numel() != 1) {
        throw DimensionError("value() requires a scalar tensor, got " + shape_str(shape_));
    }
    return (*data_)[0];
}

Tensor Tensor::detached() const {
    Tensor t;
    t.shape_ = shape_;
    t.data_ = data_;
    return t;
}

Tensor Tensor::clone(bool requires_grad) const {
    Tensor t;
    t.shape_ = shape_;
    t.data_ = std::make_shared<std::vector<double>>(*data_);
    if (requires_grad) t.mark_requires_grad();
    return t;
}

void Tensor::ensure_grad() {
    if (!grad_) grad_ = std::make_shared<std::vector<double>>(numel(), 0.0);
}

void Tensor::zero_grad() {
    if (grad_) std::fill(grad_->begin(), grad_->end(), 0.0);
}

void Tensor::mark_requires_grad() {
    requires_grad_ = true;
    ensure_grad();
}

void Tensor::set_node(std::shared_ptr<detail::Node> node) {
    node_ = std::move(node);
    mark_requires_grad();
}

void Tensor::backward() {
    if (numel() != 1) {
        throw DimensionError("backward() expects a scalar output, got " + shape_str(shape_));
    }
    if (!requires_grad_) return;
    ensure_grad();
    (*grad_)[0] += 1.0;
    if (!node_) return;

    // Iterative topological sort: a node is emitted after all of its parents,
    // so the reversed list visits every consumer before its producer.
    std::vector<Tensor> order;
    std::unordered_set<detail::Node*> visited;
    struct Frame {
        Tensor tensor;
        std::size_t next_parent;
    };
    std::vector<Frame> stack;
    stack.push_back({*this, 0});
    visited.insert(node_.get());
    while (!stack.empty()) {
        Frame& frame = stack.back();
        auto& node = *frame.tensor.node();
        if (frame.next_parent < node.parents.size()) {
            Tensor parent = node.parents[frame.next_parent++];
            if (parent.node() && !visited.count(parent.node().get())) {
                visited.insert(parent.node().get());
                stack.push_back({parent, 0});
            }
        } else {
            order.push_back(frame.tensor);
            stack.pop_back();
        }
    }
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        it->node()->backward(*it);
    }
}

bool Tensor::all_finite() const {
    for (double v : *data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

void Tensor::check_finite(const std::string& what) const {
    const auto& vals = *data_;
    for (std::size_t i = 0; i < vals.size(); ++i) {
        if (!std::isfinite(vals[i])) {
            throw DataError(what + ": non-finite value at flat index " + std::to_string(i));
        }
    }
}

}  // namespace synthvit
