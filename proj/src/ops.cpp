#include "hma/ops.hpp"

#include <algorithm>
#include <cmath>
#include <initializer_list>
#include <memory>
#include <string>

#include "hma/kernels.hpp"

namespace hma {

namespace {

bool should_record(std::initializer_list<const Tensor*> inputs) {
    if (active_tape() == nullptr) return false;
    for (const Tensor* t : inputs) {
        if (t->defined() && t->requires_grad()) return true;
    }
    return false;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    }
}

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
    if (t.rank() != rank) {
        throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                         shape_str(t.shape()));
    }
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    std::vector<float> out(a.numel());
    auto x = a.data();
    auto y = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
    const bool rec = should_record({&a, &b});
    Tensor result(a.shape(), std::move(out), rec);
    if (rec) {
        active_tape()->record(result, [a, b, result] {
            accumulate_grad(a, result.grad());
            accumulate_grad(b, result.grad());
        });
    }
    return result;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    std::vector<float> out(a.numel());
    auto x = a.data();
    auto y = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
    const bool rec = should_record({&a, &b});
    Tensor result(a.shape(), std::move(out), rec);
    if (rec) {
        active_tape()->record(result, [a, b, result] {
            auto g = result.grad();
            std::vector<float> tmp(g.size());
            if (a.requires_grad()) {
                for (std::size_t i = 0; i < g.size(); ++i) tmp[i] = g[i] * b.data()[i];
                accumulate_grad(a, tmp);
            }
            if (b.requires_grad()) {
                for (std::size_t i = 0; i < g.size(); ++i) tmp[i] = g[i] * a.data()[i];
                accumulate_grad(b, tmp);
            }
        });
    }
    return result;
}

Tensor scale(const Tensor& a, float factor) {
    std::vector<float> out(a.data().begin(), a.data().end());
    for (auto& v : out) v *= factor;
    const bool rec = should_record({&a});
    Tensor result(a.shape(), std::move(out), rec);
    if (rec) {
        active_tape()->record(result, [a, result, factor] {
            std::vector<float> tmp(result.grad().begin(), result.grad().end());
            for (auto& v : tmp) v *= factor;
            accumulate_grad(a, tmp);
        });
    }
    return result;
}

Tensor relu(const Tensor& a) {
    std::vector<float> out(a.data().begin(), a.data().end());
    for (auto& v : out) v = v > 0.0f ? v : 0.0f;
    const bool rec = should_record({&a});
    Tensor result(a.shape(), std::move(out), rec);
    if (rec) {
        active_tape()->record(result, [a, result] {
            auto g = result.grad();
            auto x = a.data();
            std::vector<float> tmp(g.size());
            for (std::size_t i = 0; i < g.size(); ++i) tmp[i] = x[i] > 0.0f ? g[i] : 0.0f;
            accumulate_grad(a, tmp);
        });
    }
    return result;
}

Tensor matmul_batched(const Tensor& a, const Tensor& b) {
    require_rank(a, 3, "matmul_batched");
    require_rank(b, 3, "matmul_batched");
    if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(1)) {
        throw ShapeError("matmul_batched: incompatible shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
    }
    const std::size_t n = a.dim(0), p = a.dim(1), q = a.dim(2), r = b.dim(2);
    std::vector<float> out(n * p * r);
    kernels::matmul_nn(a.data(), b.data(), out, n, p, q, r);
    const bool rec = should_record({&a, &b});
    Tensor result({n, p, r}, std::move(out), rec);
    if (rec) {
        active_tape()->record(result, [a, b, result, n, p, q, r] {
            auto g = result.grad();
            if (a.requires_grad()) {
                std::vector<float> ga(n * p * q);
                kernels::matmul_nt(g, b.data(), ga, n, p, r, q);
                accumulate_grad(a, ga);
            }
            if (b.requires_grad()) {
                std::vector<float> gb(n * q * r);
                kernels::matmul_tn(a.data(), g, gb, n, q, p, r);
                accumulate_grad(b, gb);
            }
        });
    }
    return result;
}

Tensor transpose_last2(const Tensor& a) {
    if (a.rank() < 2) throw ShapeError("transpose_last2: rank < 2 for " + shape_str(a.shape()));
    Shape shape = a.shape();
    const std::size_t rows = shape[shape.size() - 2], cols = shape[shape.size() - 1];
    const std::size_t batch = a.numel() / (rows * cols);
    std::swap(shape[shape.size() - 2], shape[shape.size() - 1]);
    auto transpose = [=](std::span<const float> src, std::span<float> dst) {
        for (std::size_t bi = 0; bi < batch; ++bi) {
            const std::size_t off = bi * rows * cols;
            for (std::size_t i = 0; i < rows; ++i) {
                for (std::size_t j = 0; j < cols; ++j) dst[off + j * rows + i] = src[off + i * cols + j];
            }
        }
    };
    std::vector<float> out(a.numel());
    transpose(a.data(), out);
    const bool rec = should_record({&a});
    Tensor result(shape, std::move(out), rec);
    if (rec) {
        // Transposing the [cols, rows] gradient back uses the swapped extents.
        auto back = [=](std::span<const float> src, std::span<float> dst) {
            for (std::size_t bi = 0; bi < batch; ++bi) {
                const std::size_t off = bi * rows * cols;
                for (std::size_t j = 0; j < cols; ++j) {
                    for (std::size_t i = 0; i < rows; ++i) dst[off + i * cols + j] = src[off + j * rows + i];
                }
            }
        };
        active_tape()->record(result, [a, result, back] {
            std::vector<float> ga(a.numel());
            back(result.grad(), ga);
            accumulate_grad(a, ga);
        });
    }
    return result;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias) {
    require_rank(w, 2, "linear");
    if (x.rank() < 1 || x.shape().back() != w.dim(0)) {
        throw ShapeError("linear: input " + shape_str(x.shape()) + " does not match weight " +
                         shape_str(w.shape()));
    }
    const std::size_t in = w.dim(0), out_width = w.dim(1);
    if (bias.defined() && bias.shape() != Shape{out_width}) {
        throw ShapeError("linear: bias " + shape_str(bias.shape()) + " does not match weight " +
                         shape_str(w.shape()));
    }
    const std::size_t rows = x.numel() / in;
    std::vector<float> out(rows * out_width);
    kernels::matmul_nn(x.data(), w.data(), out, 1, rows, in, out_width);
    if (bias.defined()) {
        auto b = bias.data();
        for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t j = 0; j < out_width; ++j) out[r * out_width + j] += b[j];
        }
    }
    Shape shape = x.shape();
    shape.back() = out_width;
    const bool rec = should_record({&x, &w, &bias});
    Tensor result(shape, std::move(out), rec);
    if (rec) {
        active_tape()->record(result, [x, w, bias, result, rows, in, out_width] {
            auto g = result.grad();
            if (x.requires_grad()) {
                std::vector<float> gx(rows * in);
                kernels::matmul_nt(g, w.data(), gx, 1, rows, out_width, in);
                accumulate_grad(x, gx);
            }
            if (w.requires_grad()) {
                std::vector<float> gw(in * out_width);
                kernels::matmul_tn(x.data(), g, gw, 1, in, rows, out_width);
                accumulate_grad(w, gw);
            }
            if (bias.defined() && bias.requires_grad()) {
                std::vector<double> acc(out_width, 0.0);
                for (std::size_t r = 0; r < rows; ++r) {
                    for (std::size_t j = 0; j < out_width; ++j) acc[j] += g[r * out_width + j];
                }
                std::vector<float> gb(acc.begin(), acc.end());
                accumulate_grad(bias, gb);
            }
        });
    }
    return result;
}

Tensor softmax_lastdim(const Tensor& x) {
    if (x.rank() < 1) throw ShapeError("softmax_lastdim: scalar input");
    if (!all_finite(x.data())) throw std::domain_error("softmax_lastdim: non-finite input");
    const std::size_t cols = x.shape().back();
    const std::size_t rows = x.numel() / cols;
    std::vector<float> out(x.numel());
    kernels::softmax_rows(x.data(), out, rows, cols);
    const bool rec = should_record({&x});
    Tensor result(x.shape(), std::move(out), rec);
    if (rec) {
        active_tape()->record(result, [x, result, rows, cols] {
            std::vector<float> gx(x.numel());
            kernels::softmax_rows_backward(result.data(), result.grad(), gx, rows, cols);
            accumulate_grad(x, gx);
        });
    }
    return result;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, float eps) {
    if (x.rank() < 1) throw ShapeError("layer_norm: scalar input");
    const std::size_t cols = x.shape().back();
    if (gain.shape() != Shape{cols} || bias.shape() != Shape{cols}) {
        throw ShapeError("layer_norm: gain/bias " + shape_str(gain.shape()) + "/" +
                         shape_str(bias.shape()) + " do not match input " + shape_str(x.shape()));
    }
    const std::size_t rows = x.numel() / cols;
    std::vector<float> out(x.numel());
    auto xhat = std::make_shared<std::vector<float>>(x.numel());
    auto rstd = std::make_shared<std::vector<float>>(rows);
    kernels::layer_norm_rows(x.data(), gain.data(), bias.data(), out, *xhat, *rstd, rows, cols, eps);
    const bool rec = should_record({&x, &gain, &bias});
    Tensor result(x.shape(), std::move(out), rec);
    if (rec) {
        active_tape()->record(result, [x, gain, bias, result, xhat, rstd, rows, cols] {
            auto g = result.grad();
            if (x.requires_grad()) {
                std::vector<float> gx(x.numel());
                kernels::layer_norm_rows_backward(*xhat, *rstd, gain.data(), g, gx, rows, cols);
                accumulate_grad(x, gx);
            }
            if (gain.requires_grad() || bias.requires_grad()) {
                std::vector<double> gg(cols, 0.0), gb(cols, 0.0);
                for (std::size_t r = 0; r < rows; ++r) {
                    for (std::size_t j = 0; j < cols; ++j) {
                        gg[j] += static_cast<double>(g[r * cols + j]) * (*xhat)[r * cols + j];
                        gb[j] += g[r * cols + j];
                    }
                }
                accumulate_grad(gain, std::vector<float>(gg.begin(), gg.end()));
                accumulate_grad(bias, std::vector<float>(gb.begin(), gb.end()));
            }
        });
    }
    return result;
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
    if (parts.empty()) throw ShapeError("concat: no inputs");
    const Shape& first = parts.front().shape();
    if (axis >= first.size()) throw ShapeError("concat: axis out of range for " + shape_str(first));
    Shape shape = first;
    shape[axis] = 0;
    for (const auto& p : parts) {
        if (p.rank() != first.size()) throw ShapeError("concat: rank mismatch");
        for (std::size_t d = 0; d < first.size(); ++d) {
            if (d != axis && p.shape()[d] != first[d]) {
                throw ShapeError("concat: shapes " + shape_str(first) + " and " +
                                 shape_str(p.shape()) + " differ off the concat axis");
            }
        }
        shape[axis] += p.shape()[axis];
    }
    std::size_t outer = 1, inner = 1;
    for (std::size_t d = 0; d < axis; ++d) outer *= first[d];
    for (std::size_t d = axis + 1; d < first.size(); ++d) inner *= first[d];
    const std::size_t out_chunk = shape[axis] * inner;

    std::vector<float> out(outer * out_chunk);
    std::size_t offset = 0;
    for (const auto& p : parts) {
        const std::size_t chunk = p.shape()[axis] * inner;
        auto src = p.data();
        for (std::size_t o = 0; o < outer; ++o) {
            std::copy_n(src.begin() + o * chunk, chunk, out.begin() + o * out_chunk + offset);
        }
        offset += chunk;
    }

    bool rec = false;
    if (active_tape() != nullptr) {
        for (const auto& p : parts) rec = rec || p.requires_grad();
    }
    Tensor result(shape, std::move(out), rec);
    if (rec) {
        active_tape()->record(result, [parts, result, outer, inner, out_chunk, axis] {
            auto g = result.grad();
            std::size_t off = 0;
            for (const auto& p : parts) {
                const std::size_t chunk = p.shape()[axis] * inner;
                if (p.requires_grad()) {
                    std::vector<float> gp(p.numel());
                    for (std::size_t o = 0; o < outer; ++o) {
                        std::copy_n(g.begin() + o * out_chunk + off, chunk, gp.begin() + o * chunk);
                    }
                    accumulate_grad(p, gp);
                }
                off += chunk;
            }
        });
    }
    return result;
}

Tensor reshape(const Tensor& x, Shape shape) {
    if (shape_numel(shape) != x.numel()) {
        throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
    }
    const bool rec = should_record({&x});
    Tensor result(std::move(shape), std::vector<float>(x.data().begin(), x.data().end()), rec);
    if (rec) {
        active_tape()->record(result, [x, result] { accumulate_grad(x, result.grad()); });
    }
    return result;
}

Tensor repeat(const Tensor& x, std::size_t times) {
    if (times == 0) throw ShapeError("repeat: zero copies");
    Shape shape{times};
    shape.insert(shape.end(), x.shape().begin(), x.shape().end());
    std::vector<float> out;
    out.reserve(times * x.numel());
    for (std::size_t t = 0; t < times; ++t) out.insert(out.end(), x.data().begin(), x.data().end());
    const bool rec = should_record({&x});
    Tensor result(std::move(shape), std::move(out), rec);
    if (rec) {
        active_tape()->record(result, [x, result, times] {
            auto g = result.grad();
            const std::size_t n = x.numel();
            std::vector<double> acc(n, 0.0);
            for (std::size_t t = 0; t < times; ++t) {
                for (std::size_t i = 0; i < n; ++i) acc[i] += g[t * n + i];
            }
            accumulate_grad(x, std::vector<float>(acc.begin(), acc.end()));
        });
    }
    return result;
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t start, std::size_t length) {
    if (axis >= x.rank()) throw ShapeError("slice: axis out of range for " + shape_str(x.shape()));
    if (length == 0 || start + length > x.shape()[axis]) {
        throw ShapeError("slice: range [" + std::to_string(start) + ", " +
                         std::to_string(start + length) + ") out of bounds for " +
                         shape_str(x.shape()));
    }
    std::size_t outer = 1, inner = 1;
    for (std::size_t d = 0; d < axis; ++d) outer *= x.shape()[d];
    for (std::size_t d = axis + 1; d < x.rank(); ++d) inner *= x.shape()[d];
    const std::size_t in_chunk = x.shape()[axis] * inner;
    const std::size_t out_chunk = length * inner;
    const std::size_t skip = start * inner;
    Shape shape = x.shape();
    shape[axis] = length;
    std::vector<float> out(outer * out_chunk);
    auto src = x.data();
    for (std::size_t o = 0; o < outer; ++o) {
        std::copy_n(src.begin() + o * in_chunk + skip, out_chunk, out.begin() + o * out_chunk);
    }
    const bool rec = should_record({&x});
    Tensor result(std::move(shape), std::move(out), rec);
    if (rec) {
        active_tape()->record(result, [x, result, outer, in_chunk, out_chunk, skip] {
            auto g = result.grad();
            std::vector<float> gx(x.numel(), 0.0f);
            for (std::size_t o = 0; o < outer; ++o) {
                std::copy_n(g.begin() + o * out_chunk, out_chunk, gx.begin() + o * in_chunk + skip);
            }
            accumulate_grad(x, gx);
        });
    }
    return result;
}

Tensor sum(const Tensor& x) {
    double acc = 0.0;
    for (float v : x.data()) acc += v;
    const bool rec = should_record({&x});
    Tensor result = Tensor::scalar(static_cast<float>(acc), rec);
    if (rec) {
        active_tape()->record(result, [x, result] {
            accumulate_grad(x, std::vector<float>(x.numel(), result.grad()[0]));
        });
    }
    return result;
}

Tensor mean(const Tensor& x) {
    double acc = 0.0;
    for (float v : x.data()) acc += v;
    const double n = static_cast<double>(x.numel());
    const bool rec = should_record({&x});
    Tensor result = Tensor::scalar(static_cast<float>(acc / n), rec);
    if (rec) {
        active_tape()->record(result, [x, result, n] {
            const float g = static_cast<float>(result.grad()[0] / n);
            accumulate_grad(x, std::vector<float>(x.numel(), g));
        });
    }
    return result;
}

Tensor cross_entropy_with_logits(const Tensor& logits, std::span<const int> labels) {
    require_rank(logits, 2, "cross_entropy_with_logits");
    const std::size_t rows = logits.dim(0), classes = logits.dim(1);
    if (labels.size() != rows) {
        throw ShapeError("cross_entropy_with_logits: " + std::to_string(labels.size()) +
                         " labels for " + shape_str(logits.shape()));
    }
    auto z = logits.data();
    auto probs = std::make_shared<std::vector<double>>(rows * classes);
    double total = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
        const int y = labels[r];
        if (y < 0 || static_cast<std::size_t>(y) >= classes) {
            throw std::out_of_range("cross_entropy_with_logits: label " + std::to_string(y) +
                                    " outside [0, " + std::to_string(classes) + ")");
        }
        const float* row = z.data() + r * classes;
        const double mx = *std::max_element(row, row + classes);
        double s = 0.0;
        for (std::size_t j = 0; j < classes; ++j) s += std::exp(row[j] - mx);
        const double lse = mx + std::log(s);
        total += lse - row[y];
        for (std::size_t j = 0; j < classes; ++j) (*probs)[r * classes + j] = std::exp(row[j] - lse);
    }
    const bool rec = should_record({&logits});
    Tensor result = Tensor::scalar(static_cast<float>(total / static_cast<double>(rows)), rec);
    if (rec) {
        std::vector<int> ys(labels.begin(), labels.end());
        active_tape()->record(result, [logits, result, probs, ys, rows, classes] {
            const double g = result.grad()[0] / static_cast<double>(rows);
            std::vector<float> gz(rows * classes);
            for (std::size_t r = 0; r < rows; ++r) {
                for (std::size_t j = 0; j < classes; ++j) {
                    const double target = static_cast<int>(j) == ys[r] ? 1.0 : 0.0;
                    gz[r * classes + j] = static_cast<float>(g * ((*probs)[r * classes + j] - target));
                }
            }
            accumulate_grad(logits, gz);
        });
    }
    return result;
}

Tensor gather_rows(const Tensor& table, std::span<const int> indices) {
    require_rank(table, 2, "gather_rows");
    if (indices.empty()) throw ShapeError("gather_rows: empty index list");
    const std::size_t rows = table.dim(0), width = table.dim(1);
    std::vector<float> out(indices.size() * width);
    auto src = table.data();
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const int idx = indices[i];
        if (idx < 0 || static_cast<std::size_t>(idx) >= rows) {
            throw std::out_of_range("gather_rows: index " + std::to_string(idx) + " outside table of " +
                                    std::to_string(rows) + " rows");
        }
        std::copy_n(src.begin() + idx * width, width, out.begin() + i * width);
    }
    const bool rec = should_record({&table});
    Tensor result({indices.size(), width}, std::move(out), rec);
    if (rec) {
        std::vector<int> idx(indices.begin(), indices.end());
        active_tape()->record(result, [table, result, idx, width] {
            auto g = result.grad();
            std::vector<float> gt(table.numel(), 0.0f);
            for (std::size_t i = 0; i < idx.size(); ++i) {
                for (std::size_t j = 0; j < width; ++j) gt[idx[i] * width + j] += g[i * width + j];
            }
            accumulate_grad(table, gt);
        });
    }
    return result;
}

}  // namespace hma
