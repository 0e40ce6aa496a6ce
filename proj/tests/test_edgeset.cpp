#include <algorithm>
#include <set>
#include <sstream>

#include "doctest.h"
#include "sac/edgeset.hpp"
#include "sac/rng.hpp"

using namespace sac;

namespace {

using Pair = std::pair<int, int>;

std::set<Pair> edge_pairs(const EdgeSet& es, std::int64_t layer = 0, std::int64_t head = 0) {
    std::set<Pair> s;
    for (const Edge& e : es.at(layer, head)) s.insert({e.src, e.dst});
    return s;
}

// brute-force predicate enumeration
template <typename Pred>
std::set<Pair> enumerate(std::int64_t n, Pred pred) {
    std::set<Pair> s;
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            if (pred(i, j)) s.insert({i, j});
        }
    }
    return s;
}

}  // namespace

TEST_CASE("gen_full basics and oracle") {
    auto e1 = gen_full(1);
    CHECK(e1.at(0).size() == 1);
    CHECK(e1.at(0)[0] == Edge{0, 0});
    CHECK(gen_full(4).at(0).size() == 16);
    CHECK(edge_pairs(gen_full(7)) == enumerate(7, [](int, int) { return true; }));
}

TEST_CASE("gen_segment basics and oracle") {
    CHECK(edge_pairs(gen_segment(4, 4)) == edge_pairs(gen_full(4)));
    auto self_only = gen_segment(4, 1);
    CHECK(edge_pairs(self_only) == enumerate(4, [](int i, int j) { return i == j; }));
    auto seg = gen_segment(6, 2);
    CHECK(seg.at(0).size() == 12);
    CHECK(edge_pairs(seg) == enumerate(6, [](int i, int j) { return i / 2 == j / 2; }));
    CHECK_THROWS_AS(gen_segment(4, 0), ConfigError);
}

TEST_CASE("gen_span basics and oracle") {
    auto s1 = gen_span(5, {1});
    CHECK(edge_pairs(s1) == enumerate(5, [](int i, int j) { return i == j; }));
    auto s5 = gen_span(5, {5});
    CHECK(s5.at(0).size() == 15);  // N(N+1)/2 causal lower triangle
    auto s3 = gen_span(8, {3});
    CHECK(edge_pairs(s3) == enumerate(8, [](int i, int j) { return j <= i && j > i - 3; }));
    CHECK_THROWS_AS(gen_span(8, {}), ConfigError);

    auto multi = gen_span(6, {2, 4});
    CHECK(multi.per_head);
    CHECK(multi.num_heads == 2);
    CHECK(edge_pairs(multi, 0, 1) == enumerate(6, [](int i, int j) { return j <= i && j > i - 4; }));
}

TEST_CASE("gen_bpt tree shape") {
    auto e2 = gen_bpt(2);
    CHECK(e2.num_nodes == 3);
    CHECK(e2.at(0).size() == 2);  // one ancestor edge per leaf

    auto e8 = gen_bpt(8);
    CHECK(e8.num_nodes == 15);
    std::vector<int> outdeg(15, 0);
    for (const Edge& e : e8.at(0)) ++outdeg[e.src];
    for (int leaf = 0; leaf < 8; ++leaf) CHECK(outdeg[leaf] == 3);  // floor(log2 8)

    for (std::int64_t n : {4, 8, 16, 32, 64}) {
        auto es = gen_bpt(n);
        std::int64_t lg = 0;
        while ((std::int64_t{1} << (lg + 1)) <= n) ++lg;
        CHECK(static_cast<std::int64_t>(es.at(0).size()) == n * lg);
    }
}

TEST_CASE("gen_bpt ancestors match a recursive oracle") {
    const std::int64_t n = 16;
    auto es = gen_bpt(n);

    // independent construction: bottom-up levels; leaves 0..15, parents
    // allocated per level
    std::vector<std::set<int>> anc(16);
    // level 0 nodes are leaves; build parent ids the same depth-first way the
    // tree is defined: parent of leaves [lo,hi) splits at midpoint. Walk each
    // leaf's root path recursively.
    struct Walk {
        std::int64_t next_internal;
        std::vector<std::set<int>>& anc;
        void go(std::int64_t lo, std::int64_t hi, std::vector<int> path) {
            if (hi - lo == 1) {
                for (int a : path) anc[lo].insert(a);
                return;
            }
            const int id = static_cast<int>(next_internal++);
            path.push_back(id);
            const std::int64_t mid = lo + (hi - lo) / 2;
            go(lo, mid, path);
            go(mid, hi, path);
        }
    };
    Walk w{16, anc};
    w.go(0, 16, {});

    std::vector<std::set<int>> got(16);
    for (const Edge& e : es.at(0)) got[e.src].insert(e.dst);
    for (int leaf = 0; leaf < 16; ++leaf) CHECK(got[leaf] == anc[leaf]);
}

TEST_CASE("gen_bpt pads non-power-of-two and drops padding edges") {
    auto es = gen_bpt(5);
    CHECK(es.num_nodes == 15);  // padded to 8 leaves
    for (const Edge& e : es.at(0)) {
        CHECK(e.src < 5);   // only real leaves emit edges
        CHECK(e.dst >= 8);  // ancestors are internal nodes
    }
    CHECK_THROWS_AS(gen_bpt(1), ConfigError);
}

TEST_CASE("gen_random determinism, count, causality") {
    auto a = gen_random(100, 1.0, 7, false);
    auto b = gen_random(100, 1.0, 7, false);
    CHECK(a.at(0) == b.at(0));
    CHECK(a.at(0).size() == 100);

    auto c = gen_random(50, 200.0, 3, true);  // 10^4 causal samples
    CHECK(c.at(0).size() == 10000);
    for (const Edge& e : c.at(0)) CHECK(e.dst <= e.src);
}

TEST_CASE("compile dedupes, adds self-loops, directed semantics") {
    EdgeSet es;
    es.num_nodes = 2;
    es.num_layers = 1;
    es.num_heads = 1;
    es.edges = {{{0, 1}, {0, 1}}};
    auto idx = compile(es, 0);
    REQUIRE(idx.offsets == std::vector<std::int64_t>{0, 2, 3});
    CHECK(idx.neighbors == std::vector<std::int32_t>{0, 1, 1});

    auto full = compile(gen_full(4), 0);
    for (int i = 0; i < 4; ++i) CHECK(full.degree(i) == 4);
}

TEST_CASE("compile equals set-semantics oracle on random multisets") {
    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        const std::int64_t n = 1 + rng.uniform_int(12);
        EdgeSet es;
        es.num_nodes = n;
        es.num_layers = 1;
        es.num_heads = 1;
        es.edges.resize(1);
        const std::int64_t count = rng.uniform_int(4 * n + 1);
        for (std::int64_t e = 0; e < count; ++e) {
            es.edges[0].push_back(
                {static_cast<std::int32_t>(rng.uniform_int(n)), static_cast<std::int32_t>(rng.uniform_int(n))});
        }
        auto idx = compile(es, 0);
        // hash-set oracle
        std::vector<std::set<int>> nb(n);
        for (int i = 0; i < n; ++i) nb[i].insert(i);
        for (const Edge& e : es.edges[0]) nb[e.src].insert(e.dst);
        for (int i = 0; i < n; ++i) {
            std::vector<std::int32_t> got(idx.neighbors.begin() + idx.offsets[i],
                                          idx.neighbors.begin() + idx.offsets[i + 1]);
            std::vector<std::int32_t> want(nb[i].begin(), nb[i].end());
            CHECK(got == want);
        }
        // order-insensitive: permuting the edge list gives identical output
        auto shuffled = es;
        for (std::size_t i = shuffled.edges[0].size(); i > 1; --i) {
            std::swap(shuffled.edges[0][i - 1], shuffled.edges[0][rng.uniform_int(static_cast<std::int64_t>(i))]);
        }
        CHECK(compile(shuffled, 0) == idx);
    }
}

TEST_CASE("compile options: no dedupe keeps duplicates, symmetrize adds reverse edges") {
    EdgeSet es;
    es.num_nodes = 3;
    es.num_layers = 1;
    es.num_heads = 1;
    es.edges = {{{0, 1}, {0, 1}}};
    CompileOptions raw{.dedupe = false, .add_self_loops = false};
    auto idx = compile(es, 0, 0, raw);
    CHECK(idx.total_edges() == 2);
    CHECK(idx.degree(0) == 2);

    CompileOptions sym{.dedupe = true, .add_self_loops = true, .symmetrize = true};
    auto s = compile(es, 0, 0, sym);
    CHECK(s.degree(1) == 2);  // 1 and back-edge to 0
    std::vector<std::int32_t> n1(s.neighbors.begin() + s.offsets[1], s.neighbors.begin() + s.offsets[2]);
    CHECK(n1 == std::vector<std::int32_t>{0, 1});
}

TEST_CASE("causal_filter keeps self-loops, idempotent, matches predicate") {
    auto idx = compile(gen_full(3), 0);
    auto causal = causal_filter(idx);
    CHECK(causal.degree(0) == 1);
    CHECK(causal.degree(1) == 2);
    CHECK(causal.degree(2) == 3);
    CHECK(causal_filter(causal) == causal);

    auto rnd = compile(gen_random(20, 3.0, 11, false), 0);
    auto filt = causal_filter(rnd);
    for (std::int64_t i = 0; i < 20; ++i) {
        std::set<std::int32_t> want;
        for (std::int64_t e = rnd.offsets[i]; e < rnd.offsets[i + 1]; ++e) {
            if (rnd.neighbors[e] <= i) want.insert(rnd.neighbors[e]);
        }
        std::set<std::int32_t> got(filt.neighbors.begin() + filt.offsets[i], filt.neighbors.begin() + filt.offsets[i + 1]);
        CHECK(got == want);
    }
}

TEST_CASE("validate reports counts and range errors") {
    auto d = validate(gen_full(3));
    CHECK(d.edges_per_list == std::vector<std::int64_t>{9});
    CHECK(d.ok);

    EdgeSet bad;
    bad.num_nodes = 3;
    bad.num_layers = 1;
    bad.num_heads = 1;
    bad.edges = {{{5, 0}}};
    auto db = validate(bad);
    CHECK_FALSE(db.ok);
    REQUIRE(db.out_of_range.size() == 1);
    CHECK(db.out_of_range[0] == Edge{5, 0});
}

TEST_CASE("membership agrees with closed-form predicates for all N <= 64") {
    for (std::int64_t n = 1; n <= 64; ++n) {
        CHECK(edge_pairs(gen_full(n)) == enumerate(n, [](int, int) { return true; }));
        const std::int64_t seg = 1 + (n - 1) / 2;
        CHECK(edge_pairs(gen_segment(n, seg)) ==
              enumerate(n, [seg](int i, int j) { return i / seg == j / seg; }));
        const std::int64_t span = std::min<std::int64_t>(n, 3);
        CHECK(edge_pairs(gen_span(n, {span})) ==
              enumerate(n, [span](int i, int j) { return j <= i && j > i - span; }));
    }
}

TEST_CASE("edge dump round-trips losslessly") {
    Rng rng(2);
    auto check_roundtrip = [](const EdgeSet& es) {
        std::stringstream ss;
        save_edges(es, ss);
        EdgeSet back = load_edges(ss);
        CHECK(back.num_nodes == es.num_nodes);
        CHECK(back.num_layers == es.num_layers);
        CHECK(back.per_head == es.per_head);
        CHECK(back.alpha == es.alpha);
        CHECK(back.edges == es.edges);
    };
    check_roundtrip(gen_full(5, 3));
    check_roundtrip(gen_span(6, {1, 3, 6}, 2));
    check_roundtrip(gen_random(40, 2.5, 9, true, 2));
    // duplicates and order preserved
    EdgeSet dup;
    dup.num_nodes = 4;
    dup.num_layers = 1;
    dup.num_heads = 1;
    dup.alpha = 0.75;
    dup.edges = {{{2, 1}, {0, 3}, {2, 1}}};
    check_roundtrip(dup);
}
