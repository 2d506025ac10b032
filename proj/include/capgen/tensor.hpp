#pragma once

// Reverse-mode automatic differentiation over dense row-major arrays.
//
// A Tensor is a cheap handle to an immutable value plus a gradient
// accumulator. Operations record themselves on the thread's active Tape when
// one exists and at least one input requires a gradient; with no active tape
// they only compute values, which is what inference uses.
//
//   Tape tape;                       // becomes the active tape on this thread
//   Tensor loss = sum(mul(x, x));
//   tape.backward(loss);             // fills x.grad()

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "capgen/kernels.hpp"

namespace capgen {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);
std::size_t shape_size(const Shape& shape);

namespace detail {

struct Node {
    Shape shape;
    std::vector<Real> value;
    std::vector<Real> grad;  // empty until something flows into it
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward;

    std::span<Real> ensure_grad();
};

}  // namespace detail

class Tensor {
public:
    Tensor() = default;

    static Tensor from(Shape shape, std::vector<Real> values, bool requires_grad = false);
    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor filled(Shape shape, Real value, bool requires_grad = false);
    static Tensor scalar(Real value, bool requires_grad = false);
    static Tensor vector(std::vector<Real> values, bool requires_grad = false);
    static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<Real> values, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    std::size_t rank() const { return node_->shape.size(); }
    std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
    std::size_t size() const { return node_->value.size(); }
    bool requires_grad() const { return node_->requires_grad; }

    std::span<const Real> data() const { return node_->value; }
    Real item() const;
    Real at(std::size_t i) const { return node_->value.at(i); }
    Real at(std::size_t row, std::size_t col) const;

    // Gradient accumulator; all zeros when nothing has flowed into it.
    std::span<const Real> grad() const;
    void zero_grad();

    // Parameter updates and finite-difference probes write values in place.
    std::span<Real> mutable_data() { return node_->value; }
    std::span<Real> mutable_grad() { return node_->ensure_grad(); }

    const std::shared_ptr<detail::Node>& node() const { return node_; }
    explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

private:
    std::shared_ptr<detail::Node> node_;
};

// Records operations issued on the constructing thread while alive. Tapes
// nest: destroying one reactivates the previous tape.
class Tape {
public:
    Tape();
    ~Tape();
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    static Tape* active();

    // Seeds d loss/d loss = 1 and propagates in exact reverse recording order.
    // Throws when the loss is not scalar or when called twice without reset().
    void backward(const Tensor& loss);

    // Drops the recorded graph so the tape can be reused for another step.
    void reset();

    std::size_t recorded() const { return nodes_.size(); }
    void record(std::shared_ptr<detail::Node> node) { nodes_.push_back(std::move(node)); }

private:
    std::vector<std::shared_ptr<detail::Node>> nodes_;
    Tape* previous_ = nullptr;
    bool consumed_ = false;
};

// Linear algebra.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

// Elementwise; shapes must match exactly.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, Real factor);
// a[m,n] + bias[n] for every row.
Tensor add_row(const Tensor& a, const Tensor& bias);

Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);

// Max-subtracted softmax along one axis.
Tensor softmax(const Tensor& x, std::size_t axis);
Tensor log_softmax(const Tensor& x, std::size_t axis);

// Row-wise normalization of x[m,n] with learned gain[n] and bias[n].
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, Real epsilon);

Tensor concat(std::span<const Tensor> parts, std::size_t axis);
Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end);
Tensor reshape(const Tensor& x, Shape shape);
// Rows of table[V,d] selected by ids.
Tensor embed_lookup(const Tensor& table, std::span<const int> ids);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
// Mean over axis 0 of x[m,n], giving [n].
Tensor mean_rows(const Tensor& x);

// Identity forward; backward multiplies the upstream gradient by -lambda.
Tensor grad_reverse(const Tensor& x, Real lambda);

// Inverted dropout. rate == 0 returns x unchanged.
Tensor dropout(const Tensor& x, Real rate, std::mt19937_64& rng);

}  // namespace capgen
