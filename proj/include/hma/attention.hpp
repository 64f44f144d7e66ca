#pragma once

#include <cstddef>
#include <iosfwd>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "hma/optim.hpp"
#include "hma/tensor.hpp"

namespace hma {

// Parameters of one attention block: per-head query/key/value projections,
// output projection, two layer norms and a d_model -> 4*d_model -> d_model
// feed-forward net.
struct MhaBlock {
    std::size_t heads = 0;
    std::size_t d_model = 0;
    std::size_t d_k = 0;
    std::size_t d_ff = 0;

    std::vector<Tensor> w_query;  // heads x [d_model, d_k]
    std::vector<Tensor> w_key;
    std::vector<Tensor> w_value;
    Tensor w_out;  // [heads * d_k, d_model]
    Tensor b_out;  // [d_model]

    Tensor ln_in_gain, ln_in_bias;  // applied to queries, keys and values
    Tensor ln_ff_gain, ln_ff_bias;  // applied before the feed-forward net

    Tensor ff_w1, ff_b1;  // [d_model, d_ff], [d_ff]
    Tensor ff_w2, ff_b2;  // [d_ff, d_model], [d_model]

    // Glorot-uniform projections, zero biases, unit LN gains.
    static MhaBlock create(std::size_t d_model, std::size_t heads, std::mt19937_64& rng);

    std::vector<NamedParam> parameters(const std::string& prefix) const;

    // Zeros every projection and feed-forward weight/bias, leaving the block
    // as a pure residual path.
    void zero_attention_weights();
};

// softmax(Q K^T / sqrt(d_k)) V for each batch index. Q [n,a,d_k], K [n,b,d_k],
// V [n,b,d_v].
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, std::string_view tag = {},
                 std::size_t head = 0);

// Concatenated per-head attention followed by the output projection.
Tensor multi_head_attention(const MhaBlock& block, const Tensor& q, const Tensor& k,
                            const Tensor& v, std::string_view tag = {});

// H = Q + MultiHA(LN(Q), LN(K), LN(V));  out = H + FF(LN(H)).
// The residual is taken on the query stream so the output has the query
// token count; for self-attention Q = K = V this is the usual block.
Tensor mha_block(const MhaBlock& block, const Tensor& q, const Tensor& k, const Tensor& v,
                 std::string_view tag = {});

// Equivalent to reshaping x [bs,d] to [bs,1,d] and running mha_block with
// keys/values [x_i ; memory] for every row i, where memory [m,d] is shared by
// all rows. The shared memory is normalized and projected once instead of bs
// times. `memory` may be undefined (no shared rows).
Tensor mha_block_shared_memory(const MhaBlock& block, const Tensor& x, const Tensor& memory,
                               std::string_view tag = {});

// Attention between datapoints: the batch axis of x [bs,d] is the token axis.
Tensor abd(const MhaBlock& block, const Tensor& x, std::string_view tag = "abd");

// Attention between attributes of x [bs,d,w]: self-attention over the d
// tokens of width w, independently per datapoint.
Tensor aba(const MhaBlock& block, const Tensor& x, std::string_view tag = "aba");

// Collects attention probabilities while installed on the current thread.
class AttentionRecorder {
   public:
    struct Row {
        std::string layer_tag;
        std::size_t query_index;
        std::size_t key_index;
        std::size_t head;
        float score;
    };

    // weights [n, a, b]; query_index is n_index * a + i.
    void record(std::string_view tag, std::size_t head, const Tensor& weights);
    const std::vector<Row>& rows() const { return rows_; }
    void write_csv(std::ostream& os) const;

   private:
    std::vector<Row> rows_;
};

class AttentionRecordScope {
   public:
    explicit AttentionRecordScope(AttentionRecorder& recorder);
    ~AttentionRecordScope();
    AttentionRecordScope(const AttentionRecordScope&) = delete;
    AttentionRecordScope& operator=(const AttentionRecordScope&) = delete;

   private:
    AttentionRecorder* previous_;
};

AttentionRecorder* active_attention_recorder();

// Uniform(-limit, limit) with limit = sqrt(6 / (fan_in + fan_out)).
Tensor glorot_uniform(std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng);

}  // namespace hma
