#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "synthvit/rng.hpp"

namespace synthvit {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

class Tensor;

namespace detail {

// One step of the recorded computation. `backward` scatters the output's
// gradient into the parents' gradient buffers.
struct Node {
    std::vector<Tensor> parents;
    std::function<void(const Tensor& out)> backward;
};

bool grad_enabled();

}  // namespace detail

/// Suspends graph recording for its lifetime (sampling, evaluation).
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

/// Dense row-major tensor of 64-bit reals with reverse-mode differentiation.
///
/// Copies are shallow: data, gradient and graph node are shared, so a Tensor
/// behaves like a handle. Tensors created with requires_grad allocate their
/// gradient buffer eagerly; every handle to the same tensor sees the same
/// accumulated gradient.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0, bool requires_grad = false);

    static Tensor from_data(Shape shape, std::vector<double> values, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);
    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor randn(const Shape& shape, Rng& rng, double mean = 0.0, double stddev = 1.0,
                        bool requires_grad = false);
    static Tensor rand_uniform(const Shape& shape, Rng& rng, double lo, double hi,
                               bool requires_grad = false);
    /// Normal(0, stddev) with draws outside two standard deviations resampled.
    static Tensor trunc_normal(const Shape& shape, Rng& rng, double stddev,
                               bool requires_grad = false);

    bool defined() const { return static_cast<bool>(data_); }
    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t dim(std::size_t axis) const;
    std::size_t numel() const { return data_ ? data_->size() : 0; }

    double* data() { return data_->data(); }
    const double* data() const { return data_->data(); }
    std::vector<double>& values() { return *data_; }
    const std::vector<double>& values() const { return *data_; }

    /// Scalar accessor; requires numel() == 1.
    double value() const;

    bool requires_grad() const { return requires_grad_; }

    /// Same storage, detached from the graph and without gradient tracking.
    Tensor detached() const;

    /// Deep copy of the values; no graph, optionally grad-tracked.
    Tensor clone(bool requires_grad = false) const;

    bool has_grad() const { return static_cast<bool>(grad_); }
    double* grad() { return grad_->data(); }
    const double* grad() const { return grad_->data(); }
    std::vector<double>& grad_values() { return *grad_; }
    const std::vector<double>& grad_values() const { return *grad_; }
    void ensure_grad();
    void zero_grad();

    /// Reverse pass from a scalar output. Seeds d(out)/d(out) = 1 and runs
    /// every recorded node in reverse topological order.
    void backward();

    /// True when every element is finite.
    bool all_finite() const;
    /// Throws DataError naming `what` and the first offending index.
    void check_finite(const std::string& what) const;

    // Graph wiring; used by the op implementations.
    void set_node(std::shared_ptr<detail::Node> node);
    const std::shared_ptr<detail::Node>& node() const { return node_; }
    void mark_requires_grad();

private:
    std::shared_ptr<std::vector<double>> data_;
    std::shared_ptr<std::vector<double>> grad_;
    std::shared_ptr<detail::Node> node_;
    Shape shape_;
    bool requires_grad_ = false;
};

}  // namespace synthvit
