#pragma once

#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "hma/optim.hpp"
#include "hma/tensor.hpp"

namespace hma {

// input_dim -> hidden (ReLU) -> hidden (ReLU) -> out_dim
class Backbone {
   public:
    Backbone() = default;
    Backbone(std::size_t input_dim, std::size_t hidden, std::size_t out_dim, std::mt19937_64& rng);

    Tensor forward(const Tensor& x) const;

    std::size_t input_dim() const { return input_dim_; }
    std::size_t out_dim() const { return out_dim_; }

    std::vector<NamedParam> parameters(const std::string& prefix) const;
    // Independent copy whose tensors never require gradients.
    Backbone frozen_copy() const;

   private:
    std::size_t input_dim_ = 0;
    std::size_t out_dim_ = 0;
    std::vector<Tensor> weights_;
    std::vector<Tensor> biases_;
};

}  // namespace hma
