#include "hma/backbone.hpp"

#include "hma/attention.hpp"
#include "hma/ops.hpp"

namespace hma {

Backbone::Backbone(std::size_t input_dim, std::size_t hidden, std::size_t out_dim,
                   std::mt19937_64& rng)
    : input_dim_(input_dim), out_dim_(out_dim) {
    const std::size_t widths[] = {input_dim, hidden, hidden, out_dim};
    for (std::size_t l = 0; l < 3; ++l) {
        weights_.push_back(glorot_uniform(widths[l], widths[l + 1], rng));
        biases_.push_back(Tensor::zeros({widths[l + 1]}, true));
    }
}

Tensor Backbone::forward(const Tensor& x) const {
    if (x.rank() != 2 || x.dim(1) != input_dim_) {
        throw ShapeError("backbone: expected [bs," + std::to_string(input_dim_) + "], got " +
                         shape_str(x.shape()));
    }
    Tensor h = x;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
        h = linear(h, weights_[l], biases_[l]);
        if (l + 1 < weights_.size()) h = relu(h);
    }
    return h;
}

std::vector<NamedParam> Backbone::parameters(const std::string& prefix) const {
    std::vector<NamedParam> out;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
        out.push_back({prefix + ".l" + std::to_string(l) + ".w", weights_[l]});
        out.push_back({prefix + ".l" + std::to_string(l) + ".b", biases_[l]});
    }
    return out;
}

Backbone Backbone::frozen_copy() const {
    Backbone copy;
    copy.input_dim_ = input_dim_;
    copy.out_dim_ = out_dim_;
    for (const auto& w : weights_) copy.weights_.push_back(w.detach());
    for (const auto& b : biases_) copy.biases_.push_back(b.detach());
    return copy;
}

}  // namespace hma
