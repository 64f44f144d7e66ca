#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "hma/tensor.hpp"

namespace hma {

struct LabeledDataset {
    std::string env;
    std::size_t input_dim = 0;
    std::vector<float> features;  // row-major [size, input_dim]
    std::vector<int> labels;

    std::size_t size() const { return labels.size(); }
    std::span<const float> row(std::size_t i) const {
        return std::span<const float>(features).subspan(i * input_dim, input_dim);
    }
    // [indices.size(), input_dim], no gradient.
    Tensor batch(std::span<const std::size_t> indices) const;
    void validate(std::size_t n_classes) const;
};

// Concatenation of several datasets (same input_dim) tagged with `env`.
LabeledDataset merge(const std::vector<const LabeledDataset*>& parts, std::string env);

// Class-c points ~ N(center_c, spread^2 I). Centers are unit vectors spread at
// equal angles around the circle in the first two coordinates.
LabeledDataset gen_blobs(std::size_t n_classes, std::size_t n_per_class, std::size_t input_dim,
                         double spread, std::uint64_t seed, std::string env = "blobs");

struct ColoredEnvSpec {
    std::size_t n_per_env = 2500;
    double p1 = 0.2;  // color/label disagreement, training environment 1
    double p2 = 0.1;  // color/label disagreement, training environment 2
    double label_noise = 0.25;
    double semantic_std = 0.5;
    std::uint64_t seed = 0;

    void validate() const;
};

struct ColoredSplits {
    LabeledDataset train_env1;
    LabeledDataset train_env2;
    LabeledDataset test_reversed;
    LabeledDataset test_gray;
};

// One environment of the colored task. Each row is
// [semantic_0, semantic_1, color_0, color_1]:
//   class c ~ Bernoulli(1/2); semantic ~ N((2c-1)(1,1), semantic_std^2 I);
//   label = c flipped with probability label_noise;
//   color = label flipped with probability disagreement; one-hot in the
//   color block, or all zero when `gray`.
LabeledDataset gen_colored_env(std::size_t n, double disagreement, double label_noise,
                               double semantic_std, bool gray, std::uint64_t seed,
                               std::string env);

// Train environments use p1/p2; test_reversed uses disagreement 0.9; test_gray
// zeroes the color block (disagreement irrelevant).
ColoredSplits gen_colored(const ColoredEnvSpec& spec);

inline constexpr double kReversedDisagreement = 0.9;

// Header `env,label,f0..f{k-1}`; rows in dataset order.
void write_csv(std::ostream& os, const LabeledDataset& data);
std::vector<LabeledDataset> read_csv(std::istream& is);

}  // namespace hma
