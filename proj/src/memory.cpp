#include "hma/memory.hpp"

#include <algorithm>

#include "hma/ops.hpp"

namespace hma {

LabelEmbedder::LabelEmbedder(std::size_t n_classes, std::size_t width, std::mt19937_64& rng)
    : n_classes_(n_classes) {
    if (n_classes == 0 || width == 0) throw std::invalid_argument("label embedder needs classes and width");
    std::normal_distribution<double> dist(0.0, 1.0);
    std::vector<float> t((n_classes + 1) * width);
    for (auto& v : t) v = static_cast<float>(dist(rng));
    table_ = Tensor({n_classes + 1, width}, std::move(t), true);
}

Tensor LabelEmbedder::embed(std::span<const int> labels) const { return gather_rows(table_, labels); }

Tensor LabelEmbedder::unknown(std::size_t count) const {
    const std::vector<int> idx(count, unknown_label());
    return gather_rows(table_, idx);
}

RealMemoryBuffer::RealMemoryBuffer(std::size_t capacity, std::size_t width)
    : capacity_(capacity), width_(width) {}

void RealMemoryBuffer::push(std::span<const float> row) {
    if (row.size() != width_) {
        throw ShapeError("buffer row of width " + std::to_string(row.size()) + ", expected " +
                         std::to_string(width_));
    }
    if (capacity_ == 0) return;
    if (rows_.size() == capacity_) rows_.pop_front();
    rows_.emplace_back(row.begin(), row.end());
}

void RealMemoryBuffer::push_rows(const Tensor& rows) {
    if (rows.rank() != 2 || rows.dim(1) != width_) {
        throw ShapeError("buffer push of " + shape_str(rows.shape()) + ", expected width " +
                         std::to_string(width_));
    }
    auto data = rows.data();
    for (std::size_t r = 0; r < rows.dim(0); ++r) push(data.subspan(r * width_, width_));
}

Tensor RealMemoryBuffer::snapshot() const {
    if (rows_.empty()) return Tensor();
    std::vector<float> flat;
    flat.reserve(rows_.size() * width_);
    for (const auto& r : rows_) flat.insert(flat.end(), r.begin(), r.end());
    return Tensor({rows_.size(), width_}, std::move(flat), false);
}

void momentum_update(const std::vector<NamedParam>& shadow, const std::vector<NamedParam>& live,
                     float lambda) {
    if (shadow.size() != live.size()) throw ShapeError("momentum update: parameter count mismatch");
    for (std::size_t i = 0; i < shadow.size(); ++i) {
        if (shadow[i].tensor.shape() != live[i].tensor.shape()) {
            throw ShapeError("momentum update: " + shadow[i].name + " " +
                             shape_str(shadow[i].tensor.shape()) + " vs " + live[i].name + " " +
                             shape_str(live[i].tensor.shape()));
        }
    }
    const float keep = lambda;
    const float take = 1.0f - lambda;
    for (std::size_t i = 0; i < shadow.size(); ++i) {
        Tensor s = shadow[i].tensor;
        auto dst = s.mutable_data();
        auto src = live[i].tensor.data();
        for (std::size_t j = 0; j < dst.size(); ++j) dst[j] = keep * dst[j] + take * src[j];
    }
}

MomentumEncoder::MomentumEncoder(const Backbone& live_backbone, const LabelEmbedder& live_embedder,
                                 float lambda)
    : lambda_(lambda), backbone_(live_backbone.frozen_copy()), table_(live_embedder.table().detach()) {
    if (lambda < 0.0f || lambda > 1.0f) throw std::invalid_argument("momentum lambda must be in [0,1]");
}

void MomentumEncoder::update(const Backbone& live_backbone, const LabelEmbedder& live_embedder) {
    auto live = live_backbone.parameters("backbone");
    live.push_back({"emb.table", live_embedder.table()});
    momentum_update(parameters("momentum"), live, lambda_);
}

std::vector<NamedParam> MomentumEncoder::parameters(const std::string& prefix) const {
    auto out = backbone_.parameters(prefix + ".backbone");
    out.push_back({prefix + ".emb.table", table_});
    return out;
}

SyntheticMemory::SyntheticMemory(std::size_t n_classes, std::size_t slots_per_class,
                                 std::size_t width, std::mt19937_64& rng)
    : slots_per_class_(slots_per_class) {
    const std::size_t total = n_classes * slots_per_class;
    if (total == 0) return;
    std::normal_distribution<double> dist(0.0, 0.02);
    std::vector<float> s(total * width);
    for (auto& v : s) v = static_cast<float>(dist(rng));
    slots_ = Tensor({total, width}, std::move(s), true);
    slot_labels_.resize(total);
    for (std::size_t i = 0; i < total; ++i) slot_labels_[i] = static_cast<int>(i / slots_per_class);
}

Tensor aggregate_features(const Tensor& h1, const LabelEmbedder& embedder) {
    if (h1.rank() != 2) throw ShapeError("aggregate_features: expected [bs,d1], got " + shape_str(h1.shape()));
    return concat({h1, embedder.unknown(h1.dim(0))}, 1);
}

Tensor rma_read(const Tensor& c1, const RealMemoryBuffer& buffer, const MhaBlock& block) {
    return mha_block_shared_memory(block, c1, buffer.snapshot(), "rma");
}

void rma_write(const Tensor& x, std::span<const int> labels, const MomentumEncoder& encoder,
               const LabelEmbedder& embedder, RealMemoryBuffer& buffer, bool shadow_labels) {
    if (x.dim(0) != labels.size()) throw ShapeError("rma_write: label count does not match batch");
    // Shadow parameters never require gradients, so nothing here is taped.
    Tensor features = encoder.backbone().forward(x.detach());
    const Tensor& table = shadow_labels ? encoder.embedding_table() : embedder.table();
    const std::size_t d1 = features.dim(1), d2 = table.dim(1);
    auto f = features.data();
    auto t = table.data();
    std::vector<float> row(d1 + d2);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const int y = labels[i];
        if (y < 0 || static_cast<std::size_t>(y) >= embedder.n_classes()) {
            throw std::out_of_range("rma_write: label " + std::to_string(y) + " out of range");
        }
        std::copy_n(f.begin() + i * d1, d1, row.begin());
        std::copy_n(t.begin() + y * d2, d2, row.begin() + d1);
        buffer.push(row);
    }
}

Tensor sma_read(const Tensor& c2, const SyntheticMemory& memory, const LabelEmbedder& embedder,
                const MhaBlock& block) {
    if (memory.empty()) return abd(block, c2, "sma");
    if (c2.rank() != 2) throw ShapeError("sma_read: expected [bs,d], got " + shape_str(c2.shape()));
    const std::size_t bs = c2.dim(0), d = c2.dim(1);
    // Label embeddings are looked up from the current table on every call.
    Tensor synthetic = concat({memory.slots(), embedder.embed(memory.slot_labels())}, 1);
    const std::size_t total = bs + synthetic.dim(0);
    Tensor queries = reshape(c2, {1, bs, d});
    Tensor keys = reshape(concat({c2, synthetic}, 0), {1, total, d});
    return reshape(mha_block(block, queries, keys, keys, "sma"), {bs, d});
}

Tensor project_logits(const Tensor& c3, const Tensor& w, const Tensor& bias) {
    return linear(c3, w, bias);
}

}  // namespace hma
