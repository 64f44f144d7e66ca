#include "hma/datasets.hpp"

#include <cmath>
#include <iomanip>
#include <istream>
#include <numbers>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>

namespace hma {

namespace {

std::mt19937_64 make_stream(std::uint64_t seed, std::uint64_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream)};
    return std::mt19937_64(seq);
}

}  // namespace

Tensor LabeledDataset::batch(std::span<const std::size_t> indices) const {
    std::vector<float> out;
    out.reserve(indices.size() * input_dim);
    for (auto i : indices) {
        auto r = row(i);
        out.insert(out.end(), r.begin(), r.end());
    }
    return Tensor({indices.size(), input_dim}, std::move(out));
}

void LabeledDataset::validate(std::size_t n_classes) const {
    if (features.size() != labels.size() * input_dim) {
        throw std::invalid_argument("dataset '" + env + "': feature count does not match labels");
    }
    for (int y : labels) {
        if (y < 0 || static_cast<std::size_t>(y) >= n_classes) {
            throw std::invalid_argument("dataset '" + env + "': label " + std::to_string(y) +
                                        " outside [0, " + std::to_string(n_classes) + ")");
        }
    }
    for (float v : features) {
        if (!std::isfinite(v)) throw std::invalid_argument("dataset '" + env + "': non-finite feature");
    }
}

LabeledDataset merge(const std::vector<const LabeledDataset*>& parts, std::string env) {
    LabeledDataset out;
    out.env = std::move(env);
    for (const auto* p : parts) {
        if (out.input_dim == 0) out.input_dim = p->input_dim;
        if (p->input_dim != out.input_dim) throw std::invalid_argument("merge: input_dim mismatch");
        out.features.insert(out.features.end(), p->features.begin(), p->features.end());
        out.labels.insert(out.labels.end(), p->labels.begin(), p->labels.end());
    }
    return out;
}

LabeledDataset gen_blobs(std::size_t n_classes, std::size_t n_per_class, std::size_t input_dim,
                         double spread, std::uint64_t seed, std::string env) {
    if (n_per_class == 0) throw std::invalid_argument("gen_blobs: n_per_class must be >= 1");
    if (n_classes < 2 || input_dim < 2) throw std::invalid_argument("gen_blobs: need >= 2 classes and dims");
    if (spread < 0.0) throw std::invalid_argument("gen_blobs: negative spread");
    auto rng = make_stream(seed, 0);
    std::normal_distribution<double> noise(0.0, 1.0);
    LabeledDataset d;
    d.env = std::move(env);
    d.input_dim = input_dim;
    d.features.reserve(n_classes * n_per_class * input_dim);
    for (std::size_t i = 0; i < n_per_class; ++i) {
        for (std::size_t c = 0; c < n_classes; ++c) {
            const double angle = 2.0 * std::numbers::pi * static_cast<double>(c) / static_cast<double>(n_classes);
            for (std::size_t j = 0; j < input_dim; ++j) {
                double center = 0.0;
                if (j == 0) center = std::cos(angle);
                if (j == 1) center = std::sin(angle);
                d.features.push_back(static_cast<float>(center + spread * noise(rng)));
            }
            d.labels.push_back(static_cast<int>(c));
        }
    }
    return d;
}

void ColoredEnvSpec::validate() const {
    for (double p : {p1, p2, label_noise}) {
        if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("colored env probabilities must be in [0,1]");
    }
    if (n_per_env == 0) throw std::invalid_argument("colored env: n_per_env must be >= 1");
    if (semantic_std < 0.0) throw std::invalid_argument("colored env: negative semantic_std");
}

LabeledDataset gen_colored_env(std::size_t n, double disagreement, double label_noise,
                               double semantic_std, bool gray, std::uint64_t seed, std::string env) {
    // Stream 1 keeps these draws independent of the blob generator's stream 0.
    auto rng = make_stream(seed, 1);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> noise(0.0, 1.0);
    LabeledDataset d;
    d.env = std::move(env);
    d.input_dim = 4;
    d.features.reserve(n * 4);
    d.labels.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const int cls = unit(rng) < 0.5 ? 0 : 1;
        const double sign = cls == 1 ? 1.0 : -1.0;
        const double s0 = sign + semantic_std * noise(rng);
        const double s1 = sign + semantic_std * noise(rng);
        const int label = unit(rng) < label_noise ? 1 - cls : cls;
        const int color = unit(rng) < disagreement ? 1 - label : label;
        d.features.push_back(static_cast<float>(s0));
        d.features.push_back(static_cast<float>(s1));
        d.features.push_back(!gray && color == 0 ? 1.0f : 0.0f);
        d.features.push_back(!gray && color == 1 ? 1.0f : 0.0f);
        d.labels.push_back(label);
    }
    return d;
}

ColoredSplits gen_colored(const ColoredEnvSpec& spec) {
    spec.validate();
    // Each split gets its own seed so changing one environment's parameters
    // leaves the others' samples untouched.
    const auto sub = [&](std::uint64_t k) { return spec.seed * 16 + k; };
    ColoredSplits s;
    s.train_env1 = gen_colored_env(spec.n_per_env, spec.p1, spec.label_noise, spec.semantic_std,
                                   false, sub(1), "train_env1");
    s.train_env2 = gen_colored_env(spec.n_per_env, spec.p2, spec.label_noise, spec.semantic_std,
                                   false, sub(2), "train_env2");
    s.test_reversed = gen_colored_env(spec.n_per_env, kReversedDisagreement, spec.label_noise,
                                      spec.semantic_std, false, sub(3), "test_reversed");
    s.test_gray = gen_colored_env(spec.n_per_env, 0.5, spec.label_noise, spec.semantic_std, true,
                                  sub(4), "test_gray");
    return s;
}

void write_csv(std::ostream& os, const LabeledDataset& data) {
    os << "env,label";
    for (std::size_t j = 0; j < data.input_dim; ++j) os << ",f" << j;
    os << '\n';
    os << std::setprecision(9);
    for (std::size_t i = 0; i < data.size(); ++i) {
        os << data.env << ',' << data.labels[i];
        for (float v : data.row(i)) os << ',' << v;
        os << '\n';
    }
}

std::vector<LabeledDataset> read_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line)) throw std::runtime_error("dataset csv: empty input");
    std::size_t dims = 0;
    {
        std::istringstream hs(line);
        std::string cell;
        std::vector<std::string> cols;
        while (std::getline(hs, cell, ',')) cols.push_back(cell);
        if (cols.size() < 3 || cols[0] != "env" || cols[1] != "label") {
            throw std::runtime_error("dataset csv: header must start with env,label");
        }
        dims = cols.size() - 2;
        for (std::size_t j = 0; j < dims; ++j) {
            if (cols[j + 2] != "f" + std::to_string(j)) throw std::runtime_error("dataset csv: bad feature column " + cols[j + 2]);
        }
    }
    std::vector<LabeledDataset> out;
    std::size_t line_no = 1;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string env, cell;
        std::getline(ls, env, ',');
        if (!std::getline(ls, cell, ',')) throw std::runtime_error("dataset csv: short row at line " + std::to_string(line_no));
        LabeledDataset* target = nullptr;
        for (auto& d : out) {
            if (d.env == env) target = &d;
        }
        if (target == nullptr) {
            out.push_back(LabeledDataset{env, dims, {}, {}});
            target = &out.back();
        }
        target->labels.push_back(std::stoi(cell));
        for (std::size_t j = 0; j < dims; ++j) {
            if (!std::getline(ls, cell, ',')) throw std::runtime_error("dataset csv: short row at line " + std::to_string(line_no));
            target->features.push_back(std::stof(cell));
        }
    }
    return out;
}

}  // namespace hma
