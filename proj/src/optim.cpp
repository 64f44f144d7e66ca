#include "hma/optim.hpp"

#include <stdexcept>

namespace hma {

SgdMomentum::SgdMomentum(float learning_rate, float momentum)
    : learning_rate_(learning_rate), momentum_(momentum) {
    if (!(learning_rate > 0.0f)) throw std::invalid_argument("learning rate must be positive");
    if (momentum < 0.0f || momentum >= 1.0f) throw std::invalid_argument("momentum must be in [0,1)");
}

void SgdMomentum::zero_grad(std::vector<NamedParam>& params) {
    for (auto& p : params) p.tensor.zero_grad();
}

void SgdMomentum::step(std::vector<NamedParam>& params) {
    for (const auto& p : params) {
        if (!p.tensor.has_grad()) throw std::logic_error("missing gradient for parameter " + p.name);
    }
    for (auto& p : params) {
        auto theta = p.tensor.mutable_data();
        auto g = p.tensor.grad();
        auto& v = velocity_[p.tensor.id()];
        if (v.size() != theta.size()) v.assign(theta.size(), 0.0f);
        for (std::size_t i = 0; i < theta.size(); ++i) {
            v[i] = momentum_ * v[i] + g[i];
            theta[i] -= learning_rate_ * v[i];
        }
        p.tensor.clear_grad();
    }
}

const std::vector<float>& SgdMomentum::velocity(const Tensor& param) const {
    static const std::vector<float> empty;
    auto it = velocity_.find(param.id());
    return it == velocity_.end() ? empty : it->second;
}

void SgdMomentum::set_velocity(const Tensor& param, std::vector<float> v) {
    if (!v.empty() && v.size() != param.numel()) {
        throw ShapeError("velocity size does not match parameter " + shape_str(param.shape()));
    }
    velocity_[param.id()] = std::move(v);
}

}  // namespace hma
