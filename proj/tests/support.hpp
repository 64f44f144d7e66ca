#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "hma/optim.hpp"
#include "hma/tensor.hpp"

namespace hma::test {

inline Tensor randn(Shape shape, std::mt19937_64& rng, float stddev = 1.0f, bool requires_grad = false) {
    std::normal_distribution<float> d(0.0f, stddev);
    std::vector<float> v(shape_numel(shape));
    for (auto& x : v) x = d(rng);
    return Tensor(std::move(shape), std::move(v), requires_grad);
}

inline double max_abs_diff(std::span<const float> a, std::span<const float> b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(double(a[i]) - double(b[i])));
    return m;
}

inline bool bitwise_equal(std::span<const float> a, std::span<const float> b) {
    return a.size() == b.size() && std::equal(a.begin(), a.end(), b.begin(), [](float x, float y) {
               return std::memcmp(&x, &y, sizeof(float)) == 0;
           });
}

// |analytic - numeric| / max(1, |analytic|, |numeric|).
inline double grad_rel_error(double analytic, double numeric) {
    return std::abs(analytic - numeric) / std::max({1.0, std::abs(analytic), std::abs(numeric)});
}

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::string worst;  // "param[index]"
    std::size_t checked = 0;
};

// Central differences of a scalar loss against every element of every
// parameter. `loss` must rebuild the graph from the parameters' current
// values each call.
inline GradCheckResult grad_check(const std::vector<NamedParam>& params, const std::function<Tensor()>& loss,
                                  float h = 1e-3f) {
    for (const auto& p : params) {
        Tensor t = p.tensor;
        t.clear_grad();
    }
    {
        Tape tape;
        TapeScope scope(tape);
        Tensor l = loss();
        backward(l);
    }
    GradCheckResult r;
    for (const auto& p : params) {
        Tensor t = p.tensor;
        std::vector<float> analytic(t.numel(), 0.0f);
        if (t.has_grad()) analytic.assign(t.grad().begin(), t.grad().end());
        for (std::size_t i = 0; i < t.numel(); ++i) {
            const float orig = t.data()[i];
            t.mutable_data()[i] = orig + h;
            const double up = loss().item();
            t.mutable_data()[i] = orig - h;
            const double down = loss().item();
            t.mutable_data()[i] = orig;
            // Divide by the step actually taken in float arithmetic.
            const double step = double(orig + h) - double(orig - h);
            const double numeric = (up - down) / step;
            const double e = grad_rel_error(analytic[i], numeric);
            ++r.checked;
            if (e > r.max_rel_error) {
                r.max_rel_error = e;
                r.worst = p.name + "[" + std::to_string(i) + "] analytic " + std::to_string(analytic[i]) +
                          " numeric " + std::to_string(numeric);
            }
        }
        t.clear_grad();
    }
    return r;
}

}  // namespace hma::test
