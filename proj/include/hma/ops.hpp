#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "hma/tensor.hpp"

// Differentiable tensor operations. Shapes must match exactly; there is no
// implicit broadcasting, use repeat()/reshape() to make shapes agree.
namespace hma {

Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, float factor);
Tensor relu(const Tensor& a);

// [n,p,q] x [n,q,r] -> [n,p,r]
Tensor matmul_batched(const Tensor& a, const Tensor& b);
// [..., p, q] -> [..., q, p]
Tensor transpose_last2(const Tensor& a);

// Affine map over the last axis: x [..., in] * w [in, out] + bias [out].
// `bias` may be undefined.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias);

Tensor softmax_lastdim(const Tensor& x);

inline constexpr float kLayerNormEps = 1e-5f;
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  float eps = kLayerNormEps);

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor reshape(const Tensor& x, Shape shape);
// Stacks `times` copies along a new leading axis.
Tensor repeat(const Tensor& x, std::size_t times);
Tensor slice(const Tensor& x, std::size_t axis, std::size_t start, std::size_t length);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

// Mean softmax cross-entropy over rows of logits [bs, n].
Tensor cross_entropy_with_logits(const Tensor& logits, std::span<const int> labels);

// Embedding lookup: rows of table [rows, width] -> [indices.size(), width].
Tensor gather_rows(const Tensor& table, std::span<const int> indices);

}  // namespace hma
