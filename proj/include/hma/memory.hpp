#pragma once

#include <cstddef>
#include <deque>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "hma/attention.hpp"
#include "hma/backbone.hpp"
#include "hma/optim.hpp"
#include "hma/tensor.hpp"

namespace hma {

// Embedding table with one row per class plus a final "unknown" row. The
// unknown row plays the role of a CLS token: it is what every datapoint
// carries during the forward pass, so true labels never reach the logits.
class LabelEmbedder {
   public:
    LabelEmbedder() = default;
    LabelEmbedder(std::size_t n_classes, std::size_t width, std::mt19937_64& rng);

    std::size_t n_classes() const { return n_classes_; }
    std::size_t width() const { return table_.dim(1); }
    int unknown_label() const { return static_cast<int>(n_classes_); }

    const Tensor& table() const { return table_; }
    Tensor& table() { return table_; }

    // [labels.size(), width]; labels may include unknown_label().
    Tensor embed(std::span<const int> labels) const;
    Tensor unknown(std::size_t count) const;

   private:
    std::size_t n_classes_ = 0;
    Tensor table_;  // [n_classes + 1, width]
};

// Bounded FIFO of detached rows; the oldest row is evicted first.
class RealMemoryBuffer {
   public:
    RealMemoryBuffer() = default;
    RealMemoryBuffer(std::size_t capacity, std::size_t width);

    std::size_t capacity() const { return capacity_; }
    std::size_t width() const { return width_; }
    std::size_t size() const { return rows_.size(); }
    bool empty() const { return rows_.empty(); }

    void push(std::span<const float> row);
    // Appends every row of rows [k, width] in order.
    void push_rows(const Tensor& rows);
    void clear() { rows_.clear(); }

    // Oldest first.
    std::span<const float> row(std::size_t i) const { return rows_.at(i); }
    // [size, width] copy that never requires a gradient; undefined when empty.
    Tensor snapshot() const;

   private:
    std::size_t capacity_ = 0;
    std::size_t width_ = 0;
    std::deque<std::vector<float>> rows_;
};

// shadow <- lambda * shadow + (1 - lambda) * live, elementwise.
void momentum_update(const std::vector<NamedParam>& shadow, const std::vector<NamedParam>& live,
                     float lambda);

// Exponential moving average of the backbone and label embedder.
class MomentumEncoder {
   public:
    MomentumEncoder() = default;
    MomentumEncoder(const Backbone& live_backbone, const LabelEmbedder& live_embedder, float lambda);

    float lambda() const { return lambda_; }
    const Backbone& backbone() const { return backbone_; }
    const Tensor& embedding_table() const { return table_; }

    void update(const Backbone& live_backbone, const LabelEmbedder& live_embedder);
    std::vector<NamedParam> parameters(const std::string& prefix) const;

   private:
    float lambda_ = 0.999f;
    Backbone backbone_;
    Tensor table_;
};

// n_classes * slots_per_class learnable feature slots; slot s belongs to
// class s / slots_per_class.
class SyntheticMemory {
   public:
    SyntheticMemory() = default;
    SyntheticMemory(std::size_t n_classes, std::size_t slots_per_class, std::size_t width,
                    std::mt19937_64& rng);

    bool empty() const { return slot_labels_.empty(); }
    std::size_t slots_per_class() const { return slots_per_class_; }
    const Tensor& slots() const { return slots_; }
    const std::vector<int>& slot_labels() const { return slot_labels_; }

   private:
    std::size_t slots_per_class_ = 0;
    Tensor slots_;  // [n * m2, width], undefined when empty
    std::vector<int> slot_labels_;
};

// C1 = [h1 ; e_unknown] per row.
Tensor aggregate_features(const Tensor& h1, const LabelEmbedder& embedder);

// Each row of c1 attends over itself plus every stored buffer row.
Tensor rma_read(const Tensor& c1, const RealMemoryBuffer& buffer, const MhaBlock& block);

// Appends [E_m(x) ; E_label(y)] rows (detached). Label embeddings come from
// the live embedder unless `shadow_labels` is set.
void rma_write(const Tensor& x, std::span<const int> labels, const MomentumEncoder& encoder,
               const LabelEmbedder& embedder, RealMemoryBuffer& buffer, bool shadow_labels = false);

// Datapoints attend over [c2 ; slots with their label embeddings]; reduces to
// abd(c2) without slots.
Tensor sma_read(const Tensor& c2, const SyntheticMemory& memory, const LabelEmbedder& embedder,
                const MhaBlock& block);

Tensor project_logits(const Tensor& c3, const Tensor& w, const Tensor& bias);

}  // namespace hma
