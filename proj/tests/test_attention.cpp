#include <algorithm>
#include <numeric>
#include <random>
#include <sstream>
#include <vector>

#include "doctest.h"
#include "hma/attention.hpp"
#include "hma/ops.hpp"
#include "hma/rng.hpp"
#include "support.hpp"

using namespace hma;
using hma::test::max_abs_diff;
using hma::test::randn;

namespace {

Tensor permute_rows(const Tensor& x, const std::vector<std::size_t>& perm) {
    const std::size_t w = x.numel() / x.dim(0);
    std::vector<float> out(x.numel());
    for (std::size_t i = 0; i < perm.size(); ++i) {
        std::copy_n(x.data().begin() + perm[i] * w, w, out.begin() + i * w);
    }
    return Tensor(x.shape(), std::move(out));
}

// Literal construction: row i attends over [x_i ; memory].
Tensor shared_memory_literal(const MhaBlock& block, const Tensor& x, const Tensor& memory) {
    const std::size_t bs = x.dim(0), d = x.dim(1), m = memory.dim(0);
    Tensor q = reshape(x, {bs, 1, d});
    Tensor kv = concat({q, repeat(memory, bs)}, 1);
    CHECK(kv.shape() == Shape{bs, 1 + m, d});
    return reshape(mha_block(block, q, kv, kv), {bs, d});
}

}  // namespace

TEST_CASE("attention weights are row-stochastic") {
    std::mt19937_64 rng(21);
    for (int trial = 0; trial < 50; ++trial) {
        std::uniform_int_distribution<std::size_t> dim(1, 12);
        const std::size_t n = dim(rng), a = dim(rng), b = dim(rng), dk = dim(rng);
        AttentionRecorder rec;
        {
            AttentionRecordScope scope(rec);
            (void)attention(randn({n, a, dk}, rng, 3.0f), randn({n, b, dk}, rng, 3.0f), randn({n, b, 2}, rng),
                            "t");
        }
        REQUIRE(rec.rows().size() == n * a * b);
        std::vector<double> row_sum(n * a, 0.0);
        for (const auto& r : rec.rows()) {
            CHECK(r.score >= 0.0f);
            row_sum[r.query_index] += r.score;
        }
        for (double s : row_sum) CHECK(std::abs(s - 1.0) < 1e-6);
    }
}

TEST_CASE("attention reduces to a weighted average of values") {
    // Identical keys give uniform weights, so the output is the mean value row.
    Tensor q({1, 1, 2}, {0.3f, -1.0f});
    Tensor k({1, 3, 2}, {1, 1, 1, 1, 1, 1});
    Tensor v({1, 3, 1}, {3, 6, 9});
    CHECK(attention(q, k, v).item() == doctest::Approx(6.0));
}

TEST_CASE("block parameters are named, shaped and initialized as documented") {
    auto rng = make_rng(1, "t");
    const MhaBlock b = MhaBlock::create(8, 2, rng);
    CHECK(b.d_k == 4);
    CHECK(b.d_ff == 32);
    const auto params = b.parameters("blk");
    CHECK(params.front().name == "blk.head0.wq");
    for (const auto& p : params) CHECK(p.tensor.requires_grad());
    for (float g : b.ln_in_gain.data()) CHECK(g == 1.0f);
    for (float z : b.b_out.data()) CHECK(z == 0.0f);
    const double limit = std::sqrt(6.0 / (8 + 4));
    for (float w : b.w_query[0].data()) CHECK(std::abs(w) <= limit);
    CHECK_THROWS(MhaBlock::create(9, 2, rng));
}

TEST_CASE("ABD is permutation equivariant over the batch") {
    std::mt19937_64 rng(22);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        std::uniform_int_distribution<std::size_t> bs_dist(2, 10);
        const std::size_t bs = bs_dist(rng), heads = 1 + trial % 3, d = heads * (1 + trial % 4);
        auto brng = make_rng(trial, "abd");
        const MhaBlock block = MhaBlock::create(d, heads, brng);
        Tensor x = randn({bs, d}, rng);
        std::vector<std::size_t> perm(bs);
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        Tensor a = permute_rows(abd(block, x), perm);
        Tensor b = abd(block, permute_rows(x, perm));
        worst = std::max(worst, max_abs_diff(a.data(), b.data()));
    }
    CHECK(worst < 1e-5);
}

TEST_CASE("cross-attention output is invariant to the order of memory rows") {
    std::mt19937_64 rng(23);
    auto brng = make_rng(0, "x");
    const MhaBlock block = MhaBlock::create(6, 2, brng);
    Tensor x = randn({4, 6}, rng), mem = randn({9, 6}, rng);
    std::vector<std::size_t> perm(9);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Tensor a = mha_block_shared_memory(block, x, mem);
    Tensor b = mha_block_shared_memory(block, x, permute_rows(mem, perm));
    CHECK(max_abs_diff(a.data(), b.data()) < 1e-5);
}

TEST_CASE("shared-memory block equals the literal repeat-and-concatenate construction") {
    std::mt19937_64 rng(24);
    for (int trial = 0; trial < 10; ++trial) {
        auto brng = make_rng(trial, "shared");
        const std::size_t heads = 1 + trial % 3, d = heads * 3;
        const MhaBlock block = MhaBlock::create(d, heads, brng);
        Tensor x = randn({5, d}, rng, 1.0f, true), mem = randn({1 + trial, d}, rng, 1.0f, true);
        Tensor fast = mha_block_shared_memory(block, x, mem);
        Tensor slow = shared_memory_literal(block, x, mem);
        CHECK(max_abs_diff(fast.data(), slow.data()) < 1e-5);

        // Gradients agree too.
        auto grads = [&](bool use_fast) {
            x.clear_grad();
            mem.clear_grad();
            Tape tape;
            TapeScope scope(tape);
            Tensor y = use_fast ? mha_block_shared_memory(block, x, mem) : shared_memory_literal(block, x, mem);
            std::mt19937_64 wr(5);
            backward(sum(mul(y, randn(y.shape(), wr))));
            std::vector<float> g(x.grad().begin(), x.grad().end());
            g.insert(g.end(), mem.grad().begin(), mem.grad().end());
            return g;
        };
        const auto gf = grads(true), gs = grads(false);
        CHECK(max_abs_diff(gf, gs) < 1e-4);
    }
    // Without memory each row only sees itself.
    auto brng = make_rng(0, "nomem");
    const MhaBlock block = MhaBlock::create(4, 2, brng);
    Tensor x = randn({3, 4}, rng);
    Tensor alone = mha_block_shared_memory(block, x, Tensor{});
    Tensor row = reshape(slice(x, 0, 1, 1), {1, 1, 4});
    Tensor ref = mha_block(block, row, row, row);
    CHECK(max_abs_diff(slice(alone, 0, 1, 1).data(), ref.data()) < 1e-6);
}

TEST_CASE("zeroed attention weights leave a pure residual path") {
    std::mt19937_64 rng(25);
    auto brng = make_rng(0, "zero");
    MhaBlock block = MhaBlock::create(8, 4, brng);
    block.zero_attention_weights();
    Tensor x = randn({6, 8}, rng), mem = randn({3, 8}, rng);
    CHECK(max_abs_diff(abd(block, x).data(), x.data()) == 0.0);
    CHECK(max_abs_diff(mha_block_shared_memory(block, x, mem).data(), x.data()) == 0.0);
}

TEST_CASE("ABA mixes attributes within a datapoint, never across datapoints") {
    std::mt19937_64 rng(26);
    auto brng = make_rng(0, "aba");
    const MhaBlock block = MhaBlock::create(4, 2, brng);
    Tensor x = randn({3, 5, 4}, rng);
    Tensor y = aba(block, x);
    CHECK(y.shape() == x.shape());
    // Changing datapoint 2 leaves datapoints 0 and 1 untouched.
    std::vector<float> changed(x.data().begin(), x.data().end());
    for (std::size_t i = 2 * 20; i < 3 * 20; ++i) changed[i] += 1.0f;
    Tensor y2 = aba(block, Tensor(x.shape(), changed));
    CHECK(max_abs_diff(slice(y, 0, 0, 2).data(), slice(y2, 0, 0, 2).data()) == 0.0);
    CHECK(max_abs_diff(slice(y, 0, 2, 1).data(), slice(y2, 0, 2, 1).data()) > 0.0);
}

TEST_CASE("recorder rows and CSV layout") {
    AttentionRecorder rec;
    {
        AttentionRecordScope scope(rec);
        Tensor q({2, 1, 1}, {0.0f, 0.0f});
        Tensor k({2, 2, 1}, {1.0f, 1.0f, 1.0f, 1.0f});
        (void)attention(q, k, k, "layer", 3);
    }
    REQUIRE(rec.rows().size() == 4);
    CHECK(rec.rows()[2].query_index == 1);
    CHECK(rec.rows()[2].key_index == 0);
    CHECK(rec.rows()[2].head == 3);
    std::ostringstream os;
    rec.write_csv(os);
    std::istringstream is(os.str());
    std::string header, first;
    std::getline(is, header);
    std::getline(is, first);
    CHECK(header == "layer_tag,query_index,key_index,head,score");
    CHECK(first == "layer,0,0,3,0.5");
    // Nothing is recorded without a scope.
    CHECK(active_attention_recorder() == nullptr);
}
