#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace hma {

using Shape = std::vector<std::size_t>;

class ShapeError : public std::invalid_argument {
   public:
    using std::invalid_argument::invalid_argument;
};

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

struct TensorImpl {
    Shape shape;
    std::vector<float> data;
    std::vector<float> grad;  // empty means "no gradient yet"
    bool requires_grad = false;
};

// Shared handle to a dense row-major float32 array. Copies alias the same
// storage; ops always produce fresh tensors, so values written by an op are
// never modified afterwards (parameters are the exception: the optimizer
// updates them in place between steps).
class Tensor {
   public:
    Tensor() = default;
    Tensor(Shape shape, std::vector<float> data, bool requires_grad = false);

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, float value, bool requires_grad = false);
    static Tensor scalar(float value, bool requires_grad = false);

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const { return impl_->shape; }
    std::size_t rank() const { return impl_->shape.size(); }
    std::size_t dim(std::size_t axis) const;
    std::size_t numel() const { return impl_->data.size(); }

    std::span<const float> data() const { return impl_->data; }
    std::span<float> mutable_data() { return impl_->data; }
    float item() const;
    float at(std::size_t flat_index) const { return impl_->data.at(flat_index); }

    bool requires_grad() const { return impl_->requires_grad; }
    void set_requires_grad(bool flag) { impl_->requires_grad = flag; }

    bool has_grad() const { return !impl_->grad.empty(); }
    std::span<const float> grad() const;
    std::span<float> mutable_grad();
    // Materializes a zero gradient buffer (or resets an existing one).
    void zero_grad();
    void clear_grad() { impl_->grad.clear(); }

    // Deep copy with the same requires_grad flag and no gradient.
    Tensor clone() const;
    // Deep copy that never participates in autodiff.
    Tensor detach() const;

    const TensorImpl* id() const { return impl_.get(); }

   private:
    std::shared_ptr<TensorImpl> impl_;
};

// Records differentiable operations in execution order. Ops record themselves
// only while a tape is active on the calling thread and at least one input
// requires a gradient.
class Tape {
   public:
    using BackwardFn = std::function<void()>;

    void record(Tensor output, BackwardFn backward);
    // Seeds d(loss)/d(loss) = 1 and runs every recorded rule once, newest first.
    void backward(const Tensor& loss);

    std::size_t size() const { return entries_.size(); }
    std::size_t last_visit_count() const { return last_visits_; }
    void clear() { entries_.clear(); }

   private:
    struct Entry {
        Tensor output;
        BackwardFn backward;
    };
    std::vector<Entry> entries_;
    std::size_t last_visits_ = 0;
};

Tape* active_tape();

class TapeScope {
   public:
    explicit TapeScope(Tape& tape);
    ~TapeScope();
    TapeScope(const TapeScope&) = delete;
    TapeScope& operator=(const TapeScope&) = delete;

   private:
    Tape* previous_;
};

// Backward sweep over the active tape.
void backward(const Tensor& loss);

// Adds `contribution` into t's gradient, allocating it on first use. No-op
// when t does not require a gradient.
void accumulate_grad(Tensor t, std::span<const float> contribution);

bool all_finite(std::span<const float> values);

}  // namespace hma
