#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "hma/tensor.hpp"

namespace hma {

struct NamedParam {
    std::string name;
    Tensor tensor;
};

// v <- momentum * v + g;  theta <- theta - lr * v;  then grads are cleared.
class SgdMomentum {
   public:
    SgdMomentum(float learning_rate, float momentum = 0.9f);

    // Materializes zero gradients on every parameter so unused ones read as 0.
    static void zero_grad(std::vector<NamedParam>& params);
    // Throws std::logic_error naming the first parameter without a gradient.
    void step(std::vector<NamedParam>& params);

    float learning_rate() const { return learning_rate_; }
    float momentum() const { return momentum_; }

    // Velocity for `param`, empty if it has never been stepped.
    const std::vector<float>& velocity(const Tensor& param) const;
    void set_velocity(const Tensor& param, std::vector<float> v);

   private:
    float learning_rate_;
    float momentum_;
    std::unordered_map<const TensorImpl*, std::vector<float>> velocity_;
};

}  // namespace hma
