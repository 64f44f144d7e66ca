#include "hma/attention.hpp"

#include <cmath>
#include <iomanip>
#include <ostream>

#include "hma/ops.hpp"

namespace hma {

namespace {

thread_local AttentionRecorder* g_recorder = nullptr;

Tensor feed_forward(const MhaBlock& block, const Tensor& h) {
    Tensor z = layer_norm(h, block.ln_ff_gain, block.ln_ff_bias);
    z = relu(linear(z, block.ff_w1, block.ff_b1));
    return linear(z, block.ff_w2, block.ff_b2);
}

void check_width(const MhaBlock& block, const Tensor& t, const char* what) {
    if (t.rank() < 1 || t.shape().back() != block.d_model) {
        throw ShapeError(std::string("mha: ") + what + " " + shape_str(t.shape()) +
                         " does not have width d_model=" + std::to_string(block.d_model));
    }
}

}  // namespace

Tensor glorot_uniform(std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    std::vector<float> w(fan_in * fan_out);
    for (auto& v : w) v = static_cast<float>(dist(rng));
    return Tensor({fan_in, fan_out}, std::move(w), true);
}

MhaBlock MhaBlock::create(std::size_t d_model, std::size_t heads, std::mt19937_64& rng) {
    if (heads == 0 || d_model % heads != 0) {
        throw std::invalid_argument("d_model=" + std::to_string(d_model) +
                                    " is not divisible by heads=" + std::to_string(heads));
    }
    MhaBlock b;
    b.heads = heads;
    b.d_model = d_model;
    b.d_k = d_model / heads;
    b.d_ff = 4 * d_model;
    for (std::size_t h = 0; h < heads; ++h) {
        b.w_query.push_back(glorot_uniform(d_model, b.d_k, rng));
        b.w_key.push_back(glorot_uniform(d_model, b.d_k, rng));
        b.w_value.push_back(glorot_uniform(d_model, b.d_k, rng));
    }
    b.w_out = glorot_uniform(heads * b.d_k, d_model, rng);
    b.b_out = Tensor::zeros({d_model}, true);
    b.ln_in_gain = Tensor::full({d_model}, 1.0f, true);
    b.ln_in_bias = Tensor::zeros({d_model}, true);
    b.ln_ff_gain = Tensor::full({d_model}, 1.0f, true);
    b.ln_ff_bias = Tensor::zeros({d_model}, true);
    b.ff_w1 = glorot_uniform(d_model, b.d_ff, rng);
    b.ff_b1 = Tensor::zeros({b.d_ff}, true);
    b.ff_w2 = glorot_uniform(b.d_ff, d_model, rng);
    b.ff_b2 = Tensor::zeros({d_model}, true);
    return b;
}

std::vector<NamedParam> MhaBlock::parameters(const std::string& prefix) const {
    std::vector<NamedParam> out;
    for (std::size_t h = 0; h < heads; ++h) {
        const std::string hp = prefix + ".head" + std::to_string(h);
        out.push_back({hp + ".wq", w_query[h]});
        out.push_back({hp + ".wk", w_key[h]});
        out.push_back({hp + ".wv", w_value[h]});
    }
    out.push_back({prefix + ".w_out", w_out});
    out.push_back({prefix + ".b_out", b_out});
    out.push_back({prefix + ".ln_in.gain", ln_in_gain});
    out.push_back({prefix + ".ln_in.bias", ln_in_bias});
    out.push_back({prefix + ".ln_ff.gain", ln_ff_gain});
    out.push_back({prefix + ".ln_ff.bias", ln_ff_bias});
    out.push_back({prefix + ".ff.w1", ff_w1});
    out.push_back({prefix + ".ff.b1", ff_b1});
    out.push_back({prefix + ".ff.w2", ff_w2});
    out.push_back({prefix + ".ff.b2", ff_b2});
    return out;
}

void MhaBlock::zero_attention_weights() {
    auto zero = [](Tensor t) {
        for (auto& v : t.mutable_data()) v = 0.0f;
    };
    for (std::size_t h = 0; h < heads; ++h) {
        zero(w_query[h]);
        zero(w_key[h]);
        zero(w_value[h]);
    }
    for (auto* t : {&w_out, &b_out, &ff_w1, &ff_b1, &ff_w2, &ff_b2}) zero(*t);
}

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, std::string_view tag,
                 std::size_t head) {
    if (q.rank() != 3 || k.rank() != 3 || v.rank() != 3) {
        throw ShapeError("attention: expected rank-3 Q/K/V, got " + shape_str(q.shape()) + ", " +
                         shape_str(k.shape()) + ", " + shape_str(v.shape()));
    }
    if (q.dim(0) != k.dim(0) || k.dim(0) != v.dim(0) || k.dim(1) != v.dim(1) ||
        q.dim(2) != k.dim(2)) {
        throw ShapeError("attention: incompatible Q " + shape_str(q.shape()) + ", K " +
                         shape_str(k.shape()) + ", V " + shape_str(v.shape()));
    }
    const float inv_sqrt_dk = 1.0f / std::sqrt(static_cast<float>(q.dim(2)));
    Tensor logits = scale(matmul_batched(q, transpose_last2(k)), inv_sqrt_dk);
    Tensor weights = softmax_lastdim(logits);
    if (g_recorder != nullptr && !tag.empty()) g_recorder->record(tag, head, weights);
    return matmul_batched(weights, v);
}

Tensor multi_head_attention(const MhaBlock& block, const Tensor& q, const Tensor& k,
                            const Tensor& v, std::string_view tag) {
    check_width(block, q, "queries");
    check_width(block, k, "keys");
    check_width(block, v, "values");
    std::vector<Tensor> heads;
    heads.reserve(block.heads);
    for (std::size_t h = 0; h < block.heads; ++h) {
        Tensor qh = linear(q, block.w_query[h], Tensor());
        Tensor kh = linear(k, block.w_key[h], Tensor());
        Tensor vh = linear(v, block.w_value[h], Tensor());
        heads.push_back(attention(qh, kh, vh, tag, h));
    }
    Tensor joined = heads.size() == 1 ? heads.front() : concat(heads, 2);
    return linear(joined, block.w_out, block.b_out);
}

Tensor mha_block(const MhaBlock& block, const Tensor& q, const Tensor& k, const Tensor& v,
                 std::string_view tag) {
    check_width(block, q, "queries");
    Tensor ln_q = layer_norm(q, block.ln_in_gain, block.ln_in_bias);
    Tensor ln_k = k.id() == q.id() ? ln_q : layer_norm(k, block.ln_in_gain, block.ln_in_bias);
    Tensor ln_v = v.id() == k.id() ? ln_k : layer_norm(v, block.ln_in_gain, block.ln_in_bias);
    Tensor h = add(q, multi_head_attention(block, ln_q, ln_k, ln_v, tag));
    return add(h, feed_forward(block, h));
}

Tensor mha_block_shared_memory(const MhaBlock& block, const Tensor& x, const Tensor& memory,
                               std::string_view tag) {
    if (x.rank() != 2) throw ShapeError("mha_block_shared_memory: x must be [bs,d], got " + shape_str(x.shape()));
    check_width(block, x, "rows");
    const bool has_memory = memory.defined();
    if (has_memory) {
        if (memory.rank() != 2) throw ShapeError("mha_block_shared_memory: memory must be [m,d]");
        check_width(block, memory, "memory");
    }
    const std::size_t bs = x.dim(0);
    const std::size_t m = has_memory ? memory.dim(0) : 0;
    const std::size_t dk = block.d_k;
    const float inv_sqrt_dk = 1.0f / std::sqrt(static_cast<float>(dk));

    Tensor ln_x = layer_norm(x, block.ln_in_gain, block.ln_in_bias);
    Tensor ln_m = has_memory ? layer_norm(memory, block.ln_in_gain, block.ln_in_bias) : Tensor();

    std::vector<Tensor> heads;
    heads.reserve(block.heads);
    for (std::size_t h = 0; h < block.heads; ++h) {
        Tensor q = linear(ln_x, block.w_query[h], Tensor());
        Tensor k_self = linear(ln_x, block.w_key[h], Tensor());
        Tensor v_self = linear(ln_x, block.w_value[h], Tensor());
        // Score of each row against itself: [bs,1,dk] x [bs,dk,1].
        Tensor logits = reshape(matmul_batched(reshape(q, {bs, 1, dk}), reshape(k_self, {bs, dk, 1})),
                                {bs, 1});
        Tensor k_mem, v_mem;
        if (has_memory) {
            k_mem = linear(ln_m, block.w_key[h], Tensor());
            v_mem = linear(ln_m, block.w_value[h], Tensor());
            Tensor mem_logits = matmul_batched(reshape(q, {1, bs, dk}),
                                               reshape(transpose_last2(k_mem), {1, dk, m}));
            logits = concat({logits, reshape(mem_logits, {bs, m})}, 1);
        }
        Tensor weights = softmax_lastdim(scale(logits, inv_sqrt_dk));
        if (g_recorder != nullptr && !tag.empty()) {
            g_recorder->record(tag, h, reshape(weights, {bs, 1, 1 + m}));
        }
        Tensor w_self = reshape(has_memory ? slice(weights, 1, 0, 1) : weights, {bs, 1, 1});
        Tensor out = reshape(matmul_batched(w_self, reshape(v_self, {bs, 1, dk})), {bs, dk});
        if (has_memory) {
            Tensor w_mem = reshape(slice(weights, 1, 1, m), {1, bs, m});
            Tensor mem_out = matmul_batched(w_mem, reshape(v_mem, {1, m, dk}));
            out = add(out, reshape(mem_out, {bs, dk}));
        }
        heads.push_back(out);
    }
    Tensor joined = heads.size() == 1 ? heads.front() : concat(heads, 1);
    Tensor h = add(x, linear(joined, block.w_out, block.b_out));
    return add(h, feed_forward(block, h));
}

Tensor abd(const MhaBlock& block, const Tensor& x, std::string_view tag) {
    if (x.rank() != 2) throw ShapeError("abd: expected [bs,d], got " + shape_str(x.shape()));
    const std::size_t bs = x.dim(0), d = x.dim(1);
    Tensor tokens = reshape(x, {1, bs, d});
    return reshape(mha_block(block, tokens, tokens, tokens, tag), {bs, d});
}

Tensor aba(const MhaBlock& block, const Tensor& x, std::string_view tag) {
    if (x.rank() != 3) throw ShapeError("aba: expected [bs,d,w], got " + shape_str(x.shape()));
    return mha_block(block, x, x, x, tag);
}

void AttentionRecorder::record(std::string_view tag, std::size_t head, const Tensor& weights) {
    const std::size_t n = weights.dim(0), a = weights.dim(1), b = weights.dim(2);
    auto w = weights.data();
    rows_.reserve(rows_.size() + n * a * b);
    for (std::size_t bi = 0; bi < n; ++bi) {
        for (std::size_t i = 0; i < a; ++i) {
            for (std::size_t j = 0; j < b; ++j) {
                rows_.push_back({std::string(tag), bi * a + i, j, head, w[(bi * a + i) * b + j]});
            }
        }
    }
}

void AttentionRecorder::write_csv(std::ostream& os) const {
    os << "layer_tag,query_index,key_index,head,score\n";
    os << std::setprecision(9);
    for (const auto& r : rows_) {
        os << r.layer_tag << ',' << r.query_index << ',' << r.key_index << ',' << r.head << ','
           << r.score << '\n';
    }
}

AttentionRecordScope::AttentionRecordScope(AttentionRecorder& recorder) : previous_(g_recorder) {
    g_recorder = &recorder;
}

AttentionRecordScope::~AttentionRecordScope() { g_recorder = previous_; }

AttentionRecorder* active_attention_recorder() { return g_recorder; }

}  // namespace hma
