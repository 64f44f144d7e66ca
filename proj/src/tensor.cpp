#include "hma/tensor.hpp"

#include <cmath>
#include <sstream>

namespace hma {

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

Tensor::Tensor(Shape shape, std::vector<float> data, bool requires_grad) {
    for (auto d : shape) {
        if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + shape_str(shape));
    }
    if (shape_numel(shape) != data.size()) {
        throw ShapeError("shape " + shape_str(shape) + " does not match " +
                         std::to_string(data.size()) + " values");
    }
    impl_ = std::make_shared<TensorImpl>();
    impl_->shape = std::move(shape);
    impl_->data = std::move(data);
    impl_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    return full(std::move(shape), 0.0f, requires_grad);
}

Tensor Tensor::full(Shape shape, float value, bool requires_grad) {
    const auto n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<float>(n, value), requires_grad);
}

Tensor Tensor::scalar(float value, bool requires_grad) {
    return Tensor({}, {value}, requires_grad);
}

std::size_t Tensor::dim(std::size_t axis) const {
    if (axis >= rank()) {
        throw ShapeError("axis " + std::to_string(axis) + " out of range for " + shape_str(shape()));
    }
    return impl_->shape[axis];
}

float Tensor::item() const {
    if (numel() != 1) throw ShapeError("item() on non-scalar tensor " + shape_str(shape()));
    return impl_->data[0];
}

std::span<const float> Tensor::grad() const {
    if (!has_grad()) throw std::logic_error("tensor has no gradient");
    return impl_->grad;
}

std::span<float> Tensor::mutable_grad() {
    if (!has_grad()) throw std::logic_error("tensor has no gradient");
    return impl_->grad;
}

void Tensor::zero_grad() { impl_->grad.assign(impl_->data.size(), 0.0f); }

Tensor Tensor::clone() const { return Tensor(shape(), impl_->data, requires_grad()); }

Tensor Tensor::detach() const { return Tensor(shape(), impl_->data, false); }

namespace {
thread_local Tape* g_active_tape = nullptr;
}

Tape* active_tape() { return g_active_tape; }

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }

TapeScope::~TapeScope() { g_active_tape = previous_; }

void Tape::record(Tensor output, BackwardFn backward) {
    entries_.push_back({std::move(output), std::move(backward)});
}

void Tape::backward(const Tensor& loss) {
    if (!loss.defined() || loss.numel() != 1) {
        throw ShapeError("backward() needs a scalar loss, got " +
                         (loss.defined() ? shape_str(loss.shape()) : std::string("undefined")));
    }
    if (!loss.requires_grad()) {
        throw std::logic_error("loss is not connected to any parameter on the tape");
    }
    Tensor seed = loss;
    const float one = 1.0f;
    accumulate_grad(seed, std::span<const float>(&one, 1));
    last_visits_ = 0;
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
        ++last_visits_;
        if (!it->output.has_grad()) continue;  // does not reach the loss
        it->backward();
    }
}

void backward(const Tensor& loss) {
    Tape* tape = active_tape();
    if (tape == nullptr) throw std::logic_error("backward() called without an active tape");
    tape->backward(loss);
}

void accumulate_grad(Tensor t, std::span<const float> contribution) {
    if (!t.requires_grad()) return;
    if (contribution.size() != t.numel()) {
        throw ShapeError("gradient size mismatch for " + shape_str(t.shape()));
    }
    if (!t.has_grad()) t.zero_grad();
    auto g = t.mutable_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += contribution[i];
}

bool all_finite(std::span<const float> values) {
    for (float v : values) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

}  // namespace hma
