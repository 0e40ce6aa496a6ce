#include "sac/selftest.hpp"

#include <cmath>
#include <functional>
#include <ostream>
#include <sstream>

#include "sac/attention.hpp"
#include "sac/metrics.hpp"
#include "sac/predictor.hpp"
#include "sac/trainer.hpp"

namespace sac {

namespace {

double fd_check(const std::vector<Tensor>& inputs, const std::function<Tensor(Tape&)>& forward) {
    Tape tape;
    Tensor loss = forward(tape);
    tape.backward(loss);
    std::vector<std::vector<double>> analytic;
    for (const auto& in : inputs) {
        analytic.push_back(in->has_grad() ? in->grad : std::vector<double>(in->values.size(), 0.0));
        in->zero_grad();
    }
    const double eps = 1e-6;
    double worst = 0.0;
    for (std::size_t t = 0; t < inputs.size(); ++t) {
        for (std::size_t i = 0; i < inputs[t]->values.size(); ++i) {
            const double orig = inputs[t]->values[i];
            inputs[t]->values[i] = orig + eps;
            Tape tp;
            const double lp = forward(tp)->values[0];
            inputs[t]->values[i] = orig - eps;
            Tape tm;
            const double lm = forward(tm)->values[0];
            inputs[t]->values[i] = orig;
            const double fd = (lp - lm) / (2 * eps);
            const double an = analytic[t][i];
            worst = std::max(worst, std::abs(fd - an) / std::max({1e-2, std::abs(fd), std::abs(an)}));
        }
    }
    return worst;
}

}  // namespace

bool selftest(std::ostream& os) {
    bool ok = true;
    auto check = [&](const char* name, bool pass) {
        os << "selftest: " << name << (pass ? " ok" : " FAIL") << "\n";
        ok = ok && pass;
    };

    {  // sparse over full edges equals the dense oracle
        Rng rng(7);
        ParamStore store;
        auto p = make_attn_params(store, "b", 8, 2, 16, rng);
        auto h = make_tensor({16, 8});
        for (auto& v : h->values) v = rng.uniform(-1, 1);
        auto idx = compile(gen_full(16), 0);
        Tape tp(false);
        auto sparse = sparse_mha(tp, h, {&idx, &idx}, p);
        auto dense = dense_mha(tp, h, p);
        double diff = 0.0;
        for (std::int64_t i = 0; i < sparse->size(); ++i) {
            diff = std::max(diff, std::abs(sparse->values[i] - dense->values[i]));
        }
        check("dense-equivalence (N=16, 2 heads, <=1e-10)", diff <= 1e-10);
    }
    {  // gradient checks: lstm cell and a transformer block
        Rng rng(9);
        const std::int64_t din = 3, dh = 2;
        ops::LstmParams lp{make_tensor({din, 4 * dh}), make_tensor({dh, 4 * dh}), make_tensor({4 * dh})};
        for (auto* t : {&lp.wx, &lp.wh, &lp.b}) {
            (*t)->requires_grad = true;
            for (auto& v : (*t)->values) v = rng.uniform(-1, 1);
        }
        auto x = make_tensor({din}, true);
        auto h0 = make_tensor({dh}, true);
        auto c0 = make_tensor({dh}, true);
        for (auto* t : {&x, &h0, &c0}) {
            for (auto& v : (*t)->values) v = rng.uniform(-1, 1);
        }
        auto w = make_tensor({2 * dh});
        for (auto& v : w->values) v = rng.uniform(-1, 1);
        auto fwd = [&](Tape& tp) {
            auto [h, c] = ops::lstm_cell(tp, x, h0, c0, lp);
            return ops::dot(tp, ops::concat_cols(tp, {h, c}), w);
        };
        check("lstm gradient vs finite differences (<=1e-5)", fd_check({lp.wx, lp.wh, lp.b, x, h0, c0}, fwd) <= 1e-5);

        ParamStore store;
        auto bp = make_attn_params(store, "b", 4, 2, 6, rng);
        auto hin = make_tensor({4, 4}, true);
        for (auto& v : hin->values) v = rng.uniform(-1, 1);
        auto idx = compile(gen_random(4, 2.0, 5, false), 0);
        auto wout = make_tensor({16});
        for (auto& v : wout->values) v = rng.uniform(-1, 1);
        std::vector<Tensor> inputs{hin};
        for (const auto& [name, t] : store.params()) inputs.push_back(t);
        auto bfwd = [&](Tape& tp) {
            return ops::dot(tp, transformer_block(tp, hin, {&idx, &idx}, bp), wout);
        };
        check("transformer block gradient (<=1e-5)", fd_check(inputs, bfwd) <= 1e-5);
    }
    {  // baseline exactness
        BaselineState b;
        for (double r : {1.0, 2.0, 3.0}) b.observe(r);
        check("baseline mean of [1,2,3] == 2.0 exactly", b.value() == 2.0);
    }
    {  // sampling determinism and rescoring consistency
        Rng rng(21);
        PredictorConfig pc;
        pc.n = 6;
        pc.alpha = 2.0;
        pc.layers = 2;
        pc.d_model = 8;
        pc.all_nodes_connected = true;
        ParamStore store;
        PredictorParams pp = make_predictor_params(store, "p", pc, rng);
        auto x = make_tensor({6, 8});
        for (auto& v : x->values) v = rng.uniform(-1, 1);
        Tape t1(false), t2(false);
        Rng r1(5, 0), r2(5, 0);
        auto s1 = sample_edges(t1, pp, x, pc, nullptr, r1);
        auto s2 = sample_edges(t2, pp, x, pc, nullptr, r2);
        check("sampling determinism (same seed, same edges)",
              s1.actions == s2.actions && s1.edges.edges == s2.edges.edges);
        Tape t3(false);
        auto lp = predictor_log_prob(t3, pp, x, pc, nullptr, s1.actions);
        double diff = 0.0;
        for (std::size_t i = 0; i < lp.size(); ++i) diff = std::max(diff, std::abs(lp[i] - s1.action_log_probs[i]));
        check("re-scoring reproduces sampled log-probs (<=1e-10)", diff <= 1e-10);
        double greedy_lp = 0.0, beam_lp = 0.0;
        beam_search_edges(pp, x, pc, nullptr, 1, &greedy_lp);
        beam_search_edges(pp, x, pc, nullptr, 5, &beam_lp);
        check("beam(5) log-prob >= greedy", beam_lp >= greedy_lp - 1e-12);
    }
    {  // edge dump round-trip and metrics schema
        auto es = gen_random(24, 1.5, 3, true, 2);
        std::stringstream ss;
        save_edges(es, ss);
        auto back = load_edges(ss);
        check("edge dump round-trip", back.edges == es.edges && back.alpha == es.alpha);
        StepMetrics sm;
        sm.step = 3;
        sm.loss = 1.25;
        check("metrics line validates", validate_metrics_line(metrics_line(sm)));
    }
    return ok;
}

}  // namespace sac
