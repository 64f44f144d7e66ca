#pragma once

// Forward wall-clock of the synthetic-memory stage against a single-stage
// baseline where batch and buffer rows are all tokens of one self-attention.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "hma/attention.hpp"
#include "hma/memory.hpp"
#include "hma/rng.hpp"

namespace hma::bench {

struct ScalingPoint {
    std::size_t bs = 0;
    double sma_ms = 0.0;
    double baseline_ms = 0.0;
};

struct ScalingSetup {
    std::size_t width = 128;          // d1 + d2
    std::size_t heads = 4;
    std::size_t n_classes = 2;
    std::size_t slots_per_class = 8;  // m2; n * m2 stays fixed
    std::size_t buffer_factor = 2;    // baseline buffer rows = factor * bs
    int min_repeats = 3;              // fastest of at least this many timings
    double budget_ms = 300.0;         // keep repeating until this much time is spent
};

// Fastest of repeated calls; scheduler noise only ever adds time.
template <class F>
double best_ms(F&& f, int min_repeats, double budget_ms = 0.0) {
    double best = 1e300, spent = 0.0;
    for (int r = 0; r < min_repeats || spent < budget_ms; ++r) {
        const auto a = std::chrono::steady_clock::now();
        f();
        const double t = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - a).count();
        best = std::min(best, t);
        spent += t;
    }
    return best;
}

inline Tensor random_rows(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
    std::normal_distribution<float> dist(0.0f, 1.0f);
    std::vector<float> v(rows * cols);
    for (auto& x : v) x = dist(rng);
    return Tensor({rows, cols}, std::move(v));
}

inline std::vector<ScalingPoint> measure_scaling(const std::vector<std::size_t>& batch_sizes,
                                                 const ScalingSetup& s) {
    auto rng = make_rng(7, "bench");
    const MhaBlock block = MhaBlock::create(s.width, s.heads, rng);
    const SyntheticMemory slots(s.n_classes, s.slots_per_class, s.width - s.width / 2, rng);
    const LabelEmbedder embedder(s.n_classes, s.width / 2, rng);
    std::vector<ScalingPoint> out;
    for (std::size_t bs : batch_sizes) {
        const Tensor c2 = random_rows(bs, s.width, rng);
        const Tensor tokens = random_rows(bs + s.buffer_factor * bs, s.width, rng);
        ScalingPoint p{bs};
        sma_read(c2, slots, embedder, block);  // warm-up
        p.sma_ms = best_ms([&] { sma_read(c2, slots, embedder, block); }, s.min_repeats, s.budget_ms);
        abd(block, tokens);
        p.baseline_ms = best_ms([&] { abd(block, tokens); }, s.min_repeats, s.budget_ms);
        out.push_back(p);
    }
    return out;
}

// Least-squares slope of log(y) against log(x).
inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
    const std::size_t n = x.size();
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += std::log(x[i]);
        my += std::log(y[i]);
    }
    mx /= n;
    my /= n;
    double sxy = 0, sxx = 0;
    for (std::size_t i = 0; i < n; ++i) {
        sxy += (std::log(x[i]) - mx) * (std::log(y[i]) - my);
        sxx += (std::log(x[i]) - mx) * (std::log(x[i]) - mx);
    }
    return sxy / sxx;
}

}  // namespace hma::bench
