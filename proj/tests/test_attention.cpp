#include <cmath>

#include "doctest.h"
#include "sac/attention.hpp"
#include "test_util.hpp"

using namespace sac;
namespace op = sac::ops;
using sac::test::gradcheck;
using sac::test::rand_tensor;

namespace {

AttnLayerParams small_params(ParamStore& store, Rng& rng, std::int64_t d, std::int64_t m, std::int64_t d_ff) {
    return make_attn_params(store, "blk", d, m, d_ff, rng);
}

std::vector<const NeighborIndex*> same_index(const NeighborIndex& idx, std::size_t heads) {
    return std::vector<const NeighborIndex*>(heads, &idx);
}

}  // namespace

TEST_CASE("sparse_mha over self-loops only applies value/output projections") {
    Rng rng(21);
    ParamStore store;
    const std::int64_t n = 3, d = 4, m = 2;
    auto p = small_params(store, rng, d, m, 8);
    auto h = rand_tensor(rng, {n, d}, false);
    auto idx = compile(gen_segment(n, 1), 0);
    Tape tp(false);
    auto out = sparse_mha(tp, h, same_index(idx, 2), p);

    // expected: concat over heads of v_i, times wo (softmax over a singleton is 1)
    for (std::int64_t i = 0; i < n; ++i) {
        std::vector<double> concat;
        for (std::int64_t hd = 0; hd < m; ++hd) {
            for (std::int64_t c = 0; c < d / m; ++c) {
                double s = 0.0;
                for (std::int64_t k = 0; k < d; ++k) s += h->at(i, k) * p.heads[hd].wv->at(k, c);
                concat.push_back(s);
            }
        }
        for (std::int64_t j = 0; j < d; ++j) {
            double s = 0.0;
            for (std::int64_t k = 0; k < d; ++k) s += concat[k] * p.wo->at(k, j);
            CHECK(std::abs(out->at(i, j) - s) <= 1e-12);
        }
    }
}

TEST_CASE("sparse_mha over gen_full equals dense_mha") {
    Rng rng(31);
    for (std::int64_t heads : {1, 2, 4}) {
        for (std::int64_t n : {4, 16, 32}) {
            ParamStore store;
            const std::int64_t d = 8;
            auto p = make_attn_params(store, "b", d, heads, 16, rng);
            auto h = rand_tensor(rng, {n, d}, false);
            auto idx = compile(gen_full(n), 0);
            Tape tp(false);
            auto sparse = sparse_mha(tp, h, same_index(idx, static_cast<std::size_t>(heads)), p);
            auto dense = dense_mha(tp, h, p);
            double max_diff = 0.0;
            for (std::int64_t i = 0; i < sparse->size(); ++i) {
                max_diff = std::max(max_diff, std::abs(sparse->values[i] - dense->values[i]));
            }
            CHECK(max_diff <= 1e-10);
        }
    }
}

TEST_CASE("sparse_mha hand-computed N=3 single head identity projections") {
    ParamStore store;
    const std::int64_t n = 3, d = 2;
    AttnLayerParams p;
    HeadParams hp;
    hp.wq = make_tensor({2, 2}, {1, 0, 0, 1});
    hp.wk = make_tensor({2, 2}, {1, 0, 0, 1});
    hp.wv = make_tensor({2, 2}, {1, 0, 0, 1});
    p.heads.push_back(hp);
    p.wo = make_tensor({2, 2}, {1, 0, 0, 1});

    auto h = make_tensor({n, d}, {1, 0, 0, 1, 1, 1});
    EdgeSet es;
    es.num_nodes = n;
    es.num_layers = 1;
    es.num_heads = 1;
    es.edges = {{{0, 1}, {1, 2}}};
    auto idx = compile(es, 0);  // N(0)={0,1}, N(1)={1,2}, N(2)={2}

    Tape tp(false);
    auto out = sparse_mha(tp, h, {&idx}, p);

    // independent hand computation: q=k=v=h rows, scale 1/sqrt(2)
    const double inv = 1.0 / std::sqrt(2.0);
    auto hand_row = [&](std::vector<int> nbrs, int i, std::vector<double>& dst) {
        std::vector<double> w;
        double z = 0.0;
        for (int j : nbrs) {
            double s = 0.0;
            for (int c = 0; c < 2; ++c) s += h->at(i, c) * h->at(j, c);
            w.push_back(std::exp(s * inv));
            z += w.back();
        }
        dst.assign(2, 0.0);
        for (std::size_t kk = 0; kk < nbrs.size(); ++kk) {
            for (int c = 0; c < 2; ++c) dst[c] += (w[kk] / z) * h->at(nbrs[kk], c);
        }
    };
    std::vector<double> want;
    std::vector<std::vector<int>> nbrs{{0, 1}, {1, 2}, {2}};
    for (int i = 0; i < 3; ++i) {
        std::vector<double> row;
        hand_row(nbrs[i], i, row);
        for (int c = 0; c < 2; ++c) CHECK(std::abs(out->at(i, c) - row[c]) <= 1e-12);
    }
}

TEST_CASE("dense_mha N=1 output is wo applied to v") {
    Rng rng(5);
    ParamStore store;
    auto p = make_attn_params(store, "b", 4, 1, 8, rng);
    auto h = rand_tensor(rng, {1, 4}, false);
    Tape tp(false);
    auto out = dense_mha(tp, h, p);
    for (std::int64_t j = 0; j < 4; ++j) {
        double vj = 0.0;
        std::vector<double> v(4);
        for (std::int64_t c = 0; c < 4; ++c) {
            double s = 0.0;
            for (std::int64_t k = 0; k < 4; ++k) s += h->at(0, k) * p.heads[0].wv->at(k, c);
            v[c] = s;
        }
        for (std::int64_t k = 0; k < 4; ++k) vj += v[k] * p.wo->at(k, j);
        CHECK(std::abs(out->at(0, j) - vj) <= 1e-12);
    }
}

TEST_CASE("dense_mha causal mask restricts node 0 to itself") {
    Rng rng(6);
    ParamStore store;
    auto p = make_attn_params(store, "b", 4, 2, 8, rng);
    auto h = rand_tensor(rng, {2, 4}, false);
    std::vector<char> mask{1, 0, 1, 1};  // row-major allowed
    Tape tp(false);
    auto masked = dense_mha(tp, h, p, &mask);
    auto row0 = make_tensor({1, 4});
    for (int c = 0; c < 4; ++c) row0->at(0, c) = h->at(0, c);
    auto solo = dense_mha(tp, row0, p);
    for (int c = 0; c < 4; ++c) CHECK(std::abs(masked->at(0, c) - solo->at(0, c)) <= 1e-12);
}

TEST_CASE("transformer_block is identity when output projections are zero") {
    Rng rng(8);
    ParamStore store;
    auto p = make_attn_params(store, "b", 4, 2, 8, rng);
    p.wo->values.assign(p.wo->values.size(), 0.0);
    p.w_ff2->values.assign(p.w_ff2->values.size(), 0.0);
    p.b_ff2->values.assign(p.b_ff2->values.size(), 0.0);
    auto h = rand_tensor(rng, {5, 4}, false);
    auto idx = compile(gen_random(5, 2.0, 3, false), 0);
    Tape tp(false);
    auto out = transformer_block(tp, h, same_index(idx, 2), p);
    for (std::int64_t i = 0; i < h->size(); ++i) CHECK(out->values[i] == doctest::Approx(h->values[i]).epsilon(1e-15));
}

TEST_CASE("transformer_block gradient check") {
    Rng rng(9);
    ParamStore store;
    const std::int64_t n = 4, d = 4, m = 2, dff = 6;
    auto p = make_attn_params(store, "b", d, m, dff, rng);
    auto h = rand_tensor(rng, {n, d});
    auto idx = compile(gen_random(n, 2.0, 5, false), 0);
    auto w = rand_tensor(rng, {n * d}, false);
    std::vector<Tensor> inputs{h};
    for (const auto& [name, t] : store.params()) inputs.push_back(t);
    auto fwd = [&](Tape& tp) { return op::dot(tp, transformer_block(tp, h, same_index(idx, m), p), w); };
    CHECK(gradcheck(inputs, fwd) <= 1e-5);
}

TEST_CASE("attention weights per node sum to one") {
    Rng rng(14);
    ParamStore store;
    const std::int64_t n = 10, d = 8, m = 2;
    auto p = make_attn_params(store, "b", d, m, 8, rng);
    auto h = rand_tensor(rng, {n, d}, false);
    auto idx = compile(gen_random(n, 3.0, 17, false), 0);
    Tape tp(false);
    auto q = op::matmul(tp, h, p.heads[0].wq);
    auto k = op::matmul(tp, h, p.heads[0].wk);
    auto scores = edge_scores(tp, q, k, idx, 0.5);
    auto w = op::segment_softmax(tp, scores, idx.offsets);
    for (std::int64_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (std::int64_t e = idx.offsets[i]; e < idx.offsets[i + 1]; ++e) s += w->values[e];
        CHECK(std::abs(s - 1.0) <= 1e-12);
    }
}

TEST_CASE("output invariant under edge-list permutation") {
    Rng rng(15);
    ParamStore store;
    const std::int64_t n = 6, d = 4, m = 2;
    auto p = make_attn_params(store, "b", d, m, 8, rng);
    auto h = rand_tensor(rng, {n, d}, false);
    auto es = gen_random(n, 2.0, 23, false);
    auto shuffled = es;
    for (std::size_t i = shuffled.edges[0].size(); i > 1; --i) {
        std::swap(shuffled.edges[0][i - 1], shuffled.edges[0][rng.uniform_int(static_cast<std::int64_t>(i))]);
    }
    auto i1 = compile(es, 0);
    auto i2 = compile(shuffled, 0);
    Tape tp(false);
    auto o1 = sparse_mha(tp, h, same_index(i1, m), p);
    auto o2 = sparse_mha(tp, h, same_index(i2, m), p);
    CHECK(o1->values == o2->values);  // bit-identical
}

TEST_CASE("score evaluation counters are exact") {
    Rng rng(16);
    ParamStore store;
    const std::int64_t n = 12, d = 8, m = 4;
    auto p = make_attn_params(store, "b", d, m, 8, rng);
    auto h = rand_tensor(rng, {n, d}, false);
    auto idx = compile(gen_random(n, 2.0, 29, false), 0);
    Tape tp(false);

    attn_stats().reset();
    sparse_mha(tp, h, same_index(idx, m), p);
    CHECK(attn_stats().score_evals == m * idx.total_edges());

    attn_stats().reset();
    dense_mha(tp, h, p);
    CHECK(attn_stats().score_evals == m * n * n);
}

TEST_CASE("edge kernels gradient check") {
    Rng rng(17);
    const std::int64_t n = 5, dh = 3;
    auto q = rand_tensor(rng, {n, dh});
    auto k = rand_tensor(rng, {n, dh});
    auto v = rand_tensor(rng, {n, dh});
    auto idx = compile(gen_random(n, 2.0, 31, false), 0);
    auto wexp = rand_tensor(rng, {idx.total_edges()}, false);
    auto wout = rand_tensor(rng, {n * dh}, false);

    CHECK(gradcheck({q, k}, [&](Tape& tp) { return op::dot(tp, edge_scores(tp, q, k, idx, 0.7), wexp); }) <= 1e-5);

    auto wts = rand_tensor(rng, {idx.total_edges()});
    CHECK(gradcheck({wts, v}, [&](Tape& tp) { return op::dot(tp, edge_weighted_sum(tp, wts, v, idx), wout); }) <= 1e-5);
}
