#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "doctest.h"
#include "sac/predictor.hpp"
#include "test_util.hpp"

using namespace sac;
namespace op = sac::ops;
using sac::test::gradcheck;
using sac::test::rand_tensor;

namespace {

PredictorConfig small_cfg(std::int64_t n, double alpha, std::int64_t d) {
    PredictorConfig pc;
    pc.n = n;
    pc.alpha = alpha;
    pc.d_model = d;
    return pc;
}

PredictorParams make_params(ParamStore& store, const PredictorConfig& pc, std::uint64_t seed) {
    Rng rng(seed);
    return make_predictor_params(store, "p", pc, rng);
}

// Floyd-Warshall oracle, independent of the BFS implementation.
std::vector<int> fw_buckets(const std::vector<std::vector<int>>& adj, int origin, std::int64_t n,
                            std::int64_t dist_max) {
    const int inf = 1 << 20;
    std::vector<std::vector<int>> d(n, std::vector<int>(n, inf));
    for (std::int64_t u = 0; u < n; ++u) {
        for (int v : adj[u]) {
            d[u][v] = 1;
            d[v][u] = 1;
        }
    }
    for (std::int64_t i = 0; i < n; ++i) d[i][i] = 0;  // self-distance wins over self-loop edges
    for (std::int64_t k = 0; k < n; ++k) {
        for (std::int64_t i = 0; i < n; ++i) {
            for (std::int64_t j = 0; j < n; ++j) {
                d[i][j] = std::min(d[i][j], d[i][k] + d[k][j]);
            }
        }
    }
    std::vector<int> out(n);
    for (std::int64_t j = 0; j < n; ++j) {
        out[j] = d[origin][j] >= inf ? -1 : std::min<std::int64_t>(d[origin][j], dist_max);
    }
    return out;
}

}  // namespace

TEST_CASE("distance buckets reproduce the worked example") {
    // nodes e1..e4 as indices 0..3; built edges (e1,e3) and (e3,e2); origin e2.
    std::vector<std::vector<int>> adj(4);
    auto connect = [&](int u, int v) {
        adj[u].push_back(v);
        adj[v].push_back(u);
    };
    connect(0, 2);
    connect(2, 1);
    auto buckets = distance_buckets(adj, 1, 4, 16);
    CHECK(buckets == std::vector<int>{2, 0, 1, -1});
}

TEST_CASE("distance buckets with no edges: 0 to self, -1 elsewhere") {
    std::vector<std::vector<int>> adj(5);
    auto buckets = distance_buckets(adj, 3, 5, 16);
    for (int j = 0; j < 5; ++j) CHECK(buckets[j] == (j == 3 ? 0 : -1));
}

TEST_CASE("distance buckets match a Floyd-Warshall oracle on random graphs") {
    Rng rng(77);
    for (int trial = 0; trial < 60; ++trial) {
        const std::int64_t n = 2 + rng.uniform_int(19);
        std::vector<std::vector<int>> adj(n);
        const std::int64_t edges = rng.uniform_int(3 * n);
        for (std::int64_t e = 0; e < edges; ++e) {
            const int u = static_cast<int>(rng.uniform_int(n));
            const int v = static_cast<int>(rng.uniform_int(n));
            adj[u].push_back(v);
            adj[v].push_back(u);
        }
        const int origin = static_cast<int>(rng.uniform_int(n));
        const std::int64_t cap = 1 + rng.uniform_int(16);
        CHECK(distance_buckets(adj, origin, n, cap) == fw_buckets(adj, origin, n, cap));
    }
}

TEST_CASE("step_logits adds distance vectors on destination steps") {
    const std::int64_t n = 4, d = 6;
    PredictorConfig pc = small_cfg(n, 1.0, d);
    ParamStore store;
    auto pp = make_params(store, pc, 3);
    Rng rng(5);
    auto x = rand_tensor(rng, {n, d}, false);

    PredictorState st = init_predictor_state(pc, nullptr);
    Tape tp(false);
    // origin step: logits must be plain x.g
    Tensor lo = step_logits(tp, st, pp.sos, x, pp, pc);
    // manually recompute g from the advanced state
    Tensor g = pp.out_proj ? op::linear(tp, st.h, pp.out_proj, Tensor()) : st.h;
    for (std::int64_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (std::int64_t c = 0; c < d; ++c) s += x->at(i, c) * g->values[c];
        CHECK(std::abs(lo->values[i] - s) <= 1e-12);
    }
    commit_action(st, 2);
    // destination step: logits pick up v_dist(bucket)
    Tensor input = op::row(tp, x, 2);
    Tensor ld = step_logits(tp, st, input, x, pp, pc);
    Tensor g2 = pp.out_proj ? op::linear(tp, st.h, pp.out_proj, Tensor()) : st.h;
    auto buckets = distance_buckets(st.adj, st.origin, n, pc.dist_max);
    for (std::int64_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (std::int64_t c = 0; c < d; ++c) {
            s += (x->at(i, c) + pp.dist_table->at(buckets[i] + 1, c)) * g2->values[c];
        }
        CHECK(std::abs(ld->values[i] - s) <= 1e-12);
    }
}

TEST_CASE("destination step without an origin is an error") {
    PredictorConfig pc = small_cfg(3, 1.0, 4);
    ParamStore store;
    auto pp = make_params(store, pc, 9);
    PredictorState st = init_predictor_state(pc, nullptr);
    st.next_is_destination = true;  // forced inconsistent state
    Tape tp(false);
    auto x = make_tensor({3, 4});
    CHECK_THROWS_AS(step_logits(tp, st, pp.sos, x, pp, pc), NumericError);
}

TEST_CASE("anc mode: n=1 alpha=1 yields the self edge with zero log-prob") {
    PredictorConfig pc = small_cfg(1, 1.0, 4);
    pc.all_nodes_connected = true;
    ParamStore store;
    auto pp = make_params(store, pc, 11);
    Rng rng(1);
    auto x = rand_tensor(rng, {1, 4}, false);
    Tape tp(false);
    Rng srng(2, 0);
    auto s = sample_edges(tp, pp, x, pc, nullptr, srng);
    REQUIRE(s.edges.at(0).size() == 1);
    CHECK(s.edges.at(0)[0] == Edge{0, 0});
    CHECK(s.total_log_prob->values[0] == 0.0);
}

TEST_CASE("sampling is deterministic for a fixed seed") {
    PredictorConfig pc = small_cfg(8, 2.0, 8);
    pc.all_nodes_connected = true;
    pc.layers = 2;
    ParamStore store;
    auto pp = make_params(store, pc, 13);
    Rng rng(3);
    auto x = rand_tensor(rng, {8, 8}, false);
    Tape t1(false), t2(false);
    Rng r1(9, 4), r2(9, 4);
    auto a = sample_edges(t1, pp, x, pc, nullptr, r1);
    auto b = sample_edges(t2, pp, x, pc, nullptr, r2);
    CHECK(a.actions == b.actions);
    CHECK(a.edges.edges == b.edges.edges);
    CHECK(a.action_log_probs == b.action_log_probs);
}

TEST_CASE("empirical destination frequencies match the softmax within 3 sigma") {
    const std::int64_t n = 4, d = 6;
    PredictorConfig pc = small_cfg(n, 1.0, d);
    pc.all_nodes_connected = true;  // single forced origin per node, destination sampled
    pc.alpha = 1.0;
    ParamStore store;
    auto pp = make_params(store, pc, 17);
    Rng rng(19);
    auto x = rand_tensor(rng, {n, d}, false);

    // realized distribution of the FIRST destination (conditioned on origin 0)
    // against its exact per-step softmax, over 1e5 draws
    std::map<int, std::int64_t> counts;
    const std::int64_t draws = 100000;
    std::vector<double> probs;
    {
        Tape tp(false);
        PredictorState st = init_predictor_state(pc, nullptr);
        Tensor input = pp.sos;
        auto [h, c] = op::lstm_cell(tp, input, st.h, st.c, pp.lstm);
        st.h = h;
        st.c = c;
        commit_action(st, 0);
        Tensor in2 = op::row(tp, x, 0);
        Tensor logits = step_logits(tp, st, in2, x, pp, pc);
        Tensor logp = op::masked_log_softmax(tp, logits, std::vector<char>(n, 1));
        for (std::int64_t j = 0; j < n; ++j) probs.push_back(std::exp(logp->values[j]));
    }
    for (std::int64_t k = 0; k < draws; ++k) {
        Tape tp(false);
        Rng srng(31, static_cast<std::uint64_t>(k));
        auto s = sample_edges(tp, pp, x, pc, nullptr, srng);
        counts[s.edges.at(0)[0].dst]++;
    }
    for (std::int64_t j = 0; j < n; ++j) {
        const double expect = probs[j] * static_cast<double>(draws);
        const double sigma = std::sqrt(static_cast<double>(draws) * probs[j] * (1.0 - probs[j]));
        CHECK(std::abs(static_cast<double>(counts[static_cast<int>(j)]) - expect) <= 3.0 * sigma + 1.0);
    }
}

TEST_CASE("re-scoring a sampled sequence reproduces its log-probs") {
    PredictorConfig pc = small_cfg(6, 2.0, 8);
    pc.layers = 3;
    pc.shared_structure = false;  // exercise the layer-boundary handoff
    ParamStore store;
    auto pp = make_params(store, pc, 29);
    Rng rng(31);
    auto x = rand_tensor(rng, {6, 8}, false);
    Tape t1(false);
    Rng srng(37, 2);
    auto s = sample_edges(t1, pp, x, pc, nullptr, srng);
    Tape t2(false);
    auto lp = predictor_log_prob(t2, pp, x, pc, nullptr, s.actions);
    REQUIRE(lp.size() == s.action_log_probs.size());
    for (std::size_t i = 0; i < lp.size(); ++i) CHECK(std::abs(lp[i] - s.action_log_probs[i]) <= 1e-10);
}

TEST_CASE("re-scoring rejects masked actions") {
    PredictorConfig pc = small_cfg(5, 1.0, 6);
    pc.causal = true;
    pc.all_nodes_connected = true;
    ParamStore store;
    auto pp = make_params(store, pc, 41);
    Rng rng(43);
    auto x = rand_tensor(rng, {5, 6}, false);
    Tape t1(false);
    Rng srng(47, 0);
    auto s = sample_edges(t1, pp, x, pc, nullptr, srng);
    // corrupt: origin 0's destination must be 0 under the causal mask
    auto actions = s.actions;
    actions[1] = 3;  // destination for origin 0: 3 > 0 violates causality
    Tape t2(false);
    CHECK_THROWS_AS(predictor_log_prob(t2, pp, x, pc, nullptr, actions), DataError);
}

TEST_CASE("causal constraint holds for every sampled destination") {
    PredictorConfig pc = small_cfg(12, 2.0, 8);
    pc.causal = true;
    pc.all_nodes_connected = true;
    ParamStore store;
    auto pp = make_params(store, pc, 53);
    Rng rng(59);
    auto x = rand_tensor(rng, {12, 8}, false);
    for (int trial = 0; trial < 50; ++trial) {
        Tape tp(false);
        Rng srng(61, static_cast<std::uint64_t>(trial));
        auto s = sample_edges(tp, pp, x, pc, nullptr, srng);
        for (const Edge& e : s.edges.at(0)) CHECK(e.dst <= e.src);
    }
}

TEST_CASE("anc mode: src degree is exactly alpha in every layer") {
    PredictorConfig pc = small_cfg(10, 3.0, 8);
    pc.all_nodes_connected = true;
    pc.layers = 2;
    pc.shared_structure = false;
    ParamStore store;
    auto pp = make_params(store, pc, 67);
    Rng rng(71);
    auto x = rand_tensor(rng, {10, 8}, false);
    Tape tp(false);
    Rng srng(73, 0);
    auto s = sample_edges(tp, pp, x, pc, nullptr, srng);
    for (std::int64_t l = 0; l < 2; ++l) {
        CHECK(s.edges.at(l).size() == 30);
        std::vector<int> deg(10, 0);
        for (const Edge& e : s.edges.at(l)) ++deg[e.src];
        for (int v : deg) CHECK(v == 3);
    }
}

TEST_CASE("shared structure replicates one layer's edges everywhere") {
    PredictorConfig pc = small_cfg(7, 2.0, 8);
    pc.layers = 4;
    pc.shared_structure = true;
    ParamStore store;
    auto pp = make_params(store, pc, 79);
    Rng rng(83);
    auto x = rand_tensor(rng, {7, 8}, false);
    Tape tp(false);
    Rng srng(89, 0);
    auto s = sample_edges(tp, pp, x, pc, nullptr, srng);
    for (std::int64_t l = 1; l < 4; ++l) CHECK(s.edges.at(l) == s.edges.at(0));
}

TEST_CASE("head-adaptive mode emits per-head lists and uses head embeddings") {
    PredictorConfig pc = small_cfg(6, 1.0, 8);
    pc.head_adaptive = true;
    pc.heads = 3;
    ParamStore store;
    auto pp = make_params(store, pc, 97);
    CHECK(store.contains("p.head_emb"));
    Rng rng(101);
    auto x = rand_tensor(rng, {6, 8}, false);
    Tape tp(false);
    Rng srng(103, 0);
    auto s = sample_edges(tp, pp, x, pc, nullptr, srng);
    CHECK(s.edges.per_head);
    CHECK(s.edges.num_heads == 3);
    for (std::int64_t h = 0; h < 3; ++h) CHECK(s.edges.at(0, h).size() == 6);
    CHECK(static_cast<std::int64_t>(s.actions.size()) == pc.total_actions());
}

TEST_CASE("gradient of summed log-prob matches finite differences") {
    PredictorConfig pc = small_cfg(5, 1.0, 4);
    pc.d_lstm = 3;  // exercises the hidden-to-model projection too
    ParamStore store;
    auto pp = make_params(store, pc, 107);
    Rng rng(109);
    auto x = rand_tensor(rng, {5, 4});
    Tape t0(false);
    Rng srng(113, 1);
    auto s = sample_edges(t0, pp, x, pc, nullptr, srng);

    std::vector<Tensor> inputs{x};
    for (const auto& [name, t] : store.params()) inputs.push_back(t);
    auto fwd = [&](Tape& tp) {
        Tensor total;
        predictor_log_prob(tp, pp, x, pc, nullptr, s.actions, &total);
        return total;
    };
    CHECK(gradcheck(inputs, fwd) <= 1e-5);
}

TEST_CASE("duplicate-edge logit differs by g.(v1 - v_prev) exactly") {
    const std::int64_t n = 5, d = 6;
    PredictorConfig pc = small_cfg(n, 1.0, d);
    ParamStore store;
    auto pp = make_params(store, pc, 127);
    Rng rng(131);
    auto x = rand_tensor(rng, {n, d}, false);

    // Build a state where origin 1 is already directly linked to node 3.
    Tape tp(false);
    PredictorState with_edge = init_predictor_state(pc, nullptr);
    with_edge.adj[1].push_back(3);
    with_edge.adj[3].push_back(1);
    PredictorState without_edge = init_predictor_state(pc, nullptr);
    // identical recurrent advance for both
    Tensor input = pp.sos;
    for (PredictorState* st : {&with_edge, &without_edge}) {
        commit_action(*st, 1);  // origin = 1
    }
    Tensor lw = step_logits(tp, with_edge, input, x, pp, pc);
    Tensor lo = step_logits(tp, without_edge, input, x, pp, pc);
    // same g on both paths by construction
    Tensor g = pp.out_proj ? op::linear(tp, with_edge.h, pp.out_proj, Tensor()) : with_edge.h;
    const auto b_without = distance_buckets(without_edge.adj, 1, n, pc.dist_max);
    double gv1 = 0.0, gvprev = 0.0;
    for (std::int64_t c = 0; c < d; ++c) {
        gv1 += g->values[c] * pp.dist_table->at(1 + 1, c);  // bucket 1
        gvprev += g->values[c] * pp.dist_table->at(b_without[3] + 1, c);
    }
    CHECK(std::abs((lw->values[3] - lo->values[3]) - (gv1 - gvprev)) <= 1e-12);
}

TEST_CASE("per-step distribution sums to one over allowed candidates") {
    PredictorConfig pc = small_cfg(6, 1.0, 8);
    pc.causal = true;
    ParamStore store;
    auto pp = make_params(store, pc, 137);
    Rng rng(139);
    auto x = rand_tensor(rng, {6, 8}, false);
    PredictorState st = init_predictor_state(pc, nullptr);
    Tape tp(false);
    Tensor logits = step_logits(tp, st, pp.sos, x, pp, pc);
    auto allowed = allowed_candidates(st, pc);
    Tensor logp = op::masked_log_softmax(tp, logits, allowed);
    double sum = 0.0;
    for (std::int64_t j = 0; j < 6; ++j) {
        if (allowed[j]) sum += std::exp(logp->values[j]);
    }
    CHECK(std::abs(sum - 1.0) <= 1e-12);
}

TEST_CASE("beam=1 equals greedy argmax decoding") {
    PredictorConfig pc = small_cfg(6, 2.0, 8);
    pc.all_nodes_connected = true;
    ParamStore store;
    auto pp = make_params(store, pc, 149);
    Rng rng(151);
    auto x = rand_tensor(rng, {6, 8}, false);

    std::vector<int> beam_actions;
    double beam_lp = 0.0;
    beam_search_edges(pp, x, pc, nullptr, 1, &beam_lp, &beam_actions);

    // independent greedy rollout via the step API
    PredictorState st = init_predictor_state(pc, nullptr);
    Tape tp(false);
    Tensor base_input = pp.sos;
    const std::int64_t budget = pc.edge_budget();
    std::vector<int> greedy;
    double greedy_lp = 0.0;
    for (std::int64_t e = 0; e < budget; ++e) {
        const int origin = static_cast<int>(e / 2);
        auto [h, c] = op::lstm_cell(tp, base_input, st.h, st.c, pp.lstm);
        st.h = h;
        st.c = c;
        commit_action(st, origin);
        greedy.push_back(origin);
        base_input = op::row(tp, x, origin);
        Tensor logits = step_logits(tp, st, base_input, x, pp, pc);
        auto allowed = allowed_candidates(st, pc);
        Tensor logp = op::masked_log_softmax(tp, logits, allowed);
        int best = -1;
        for (std::int64_t j = 0; j < 6; ++j) {
            if (allowed[j] && (best < 0 || logp->values[j] > logp->values[best])) best = static_cast<int>(j);
        }
        greedy_lp += logp->values[best];
        commit_action(st, best);
        greedy.push_back(best);
        base_input = op::row(tp, x, best);
    }
    CHECK(beam_actions == greedy);
    CHECK(std::abs(beam_lp - greedy_lp) <= 1e-12);
}

TEST_CASE("beam=5 log-prob is at least greedy over random parameterizations") {
    for (int trial = 0; trial < 100; ++trial) {
        PredictorConfig pc = small_cfg(5, 1.0, 6);
        ParamStore store;
        auto pp = make_params(store, pc, 1000 + static_cast<std::uint64_t>(trial));
        Rng rng(2000 + static_cast<std::uint64_t>(trial));
        auto x = rand_tensor(rng, {5, 6}, false);
        double greedy_lp = 0.0, beam_lp = 0.0;
        beam_search_edges(pp, x, pc, nullptr, 1, &greedy_lp);
        beam_search_edges(pp, x, pc, nullptr, 5, &beam_lp);
        CHECK(beam_lp >= greedy_lp - 1e-12);
    }
}

TEST_CASE("exhaustive-width beam recovers the enumeration optimum") {
    for (std::int64_t n : {2, 3, 4}) {
        PredictorConfig pc = small_cfg(n, 1.0, 5);
        ParamStore store;
        auto pp = make_params(store, pc, 3000 + static_cast<std::uint64_t>(n));
        Rng rng(4000 + static_cast<std::uint64_t>(n));
        auto x = rand_tensor(rng, {n, 5}, false);

        // enumerate every action sequence of length 2*alpha*N
        const std::int64_t len = pc.total_actions();
        std::vector<int> seq(static_cast<std::size_t>(len), 0);
        double best = -1e300;
        std::vector<int> best_seq;
        std::function<void(std::int64_t)> recurse = [&](std::int64_t t) {
            if (t == len) {
                Tape tp(false);
                double total = 0.0;
                for (double lp : predictor_log_prob(tp, pp, x, pc, nullptr, seq)) total += lp;
                if (total > best + 1e-15) {
                    best = total;
                    best_seq = seq;
                }
                return;
            }
            for (int v = 0; v < n; ++v) {
                seq[t] = v;
                recurse(t + 1);
            }
        };
        recurse(0);

        double beam_lp = 0.0;
        std::vector<int> beam_actions;
        std::int64_t exhaustive = 1;
        for (std::int64_t t = 0; t < len; ++t) exhaustive *= n;
        beam_search_edges(pp, x, pc, nullptr, exhaustive, &beam_lp, &beam_actions);
        CHECK(std::abs(beam_lp - best) <= 1e-10);
    }
}

TEST_CASE("dummy node: destinations may use it, origins never do") {
    PredictorConfig pc = small_cfg(4, 2.0, 6);
    pc.dummy_node = true;
    pc.causal = true;
    pc.all_nodes_connected = true;
    ParamStore store;
    auto pp = make_params(store, pc, 161);
    Rng rng(163);
    auto x = rand_tensor(rng, {5, 6}, false);  // n+1 rows
    bool saw_dummy_dst = false;
    for (int trial = 0; trial < 200; ++trial) {
        Tape tp(false);
        Rng srng(167, static_cast<std::uint64_t>(trial));
        auto s = sample_edges(tp, pp, x, pc, nullptr, srng);
        for (const Edge& e : s.edges.at(0)) {
            CHECK(e.src < 4);  // origin never the dummy
            CHECK((e.dst <= e.src || e.dst == 4));  // causal unless the sink
            saw_dummy_dst = saw_dummy_dst || e.dst == 4;
        }
    }
    CHECK(saw_dummy_dst);
}
