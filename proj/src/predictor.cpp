#include "sac/predictor.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

namespace sac {

std::int64_t PredictorConfig::edge_budget() const {
    return static_cast<std::int64_t>(std::llround(alpha * static_cast<double>(n)));
}

void PredictorConfig::validate() const {
    if (n < 1) throw ConfigError("edge predictor: need at least one node");
    if (d_model < 1) throw ConfigError("edge predictor: model dimension must be positive");
    if (edge_budget() < 1) throw ConfigError("edge predictor: alpha*N must be at least 1");
    if (all_nodes_connected && edge_budget() % n != 0)
        throw ConfigError("edge predictor: all-nodes-connected mode requires integer alpha");
    if (head_adaptive && heads < 1) throw ConfigError("edge predictor: head-adaptive mode needs heads >= 1");
    if (dist_max < 1) throw ConfigError("edge predictor: distance cap must be >= 1");
}

PredictorParams make_predictor_params(ParamStore& store, const std::string& prefix, const PredictorConfig& cfg,
                                      Rng& rng) {
    cfg.validate();
    const std::int64_t d = cfg.d_model, dl = cfg.lstm_dim();
    PredictorParams p;
    p.lstm.wx = store.add(prefix + ".lstm.wx", make_tensor({d, 4 * dl}));
    p.lstm.wh = store.add(prefix + ".lstm.wh", make_tensor({dl, 4 * dl}));
    p.lstm.b = store.add(prefix + ".lstm.b", make_tensor({4 * dl}));
    init_glorot(p.lstm.wx, rng, d, 4 * dl);
    init_glorot(p.lstm.wh, rng, dl, 4 * dl);
    for (std::int64_t j = dl; j < 2 * dl; ++j) p.lstm.b->values[j] = 1.0;  // forget-gate bias
    p.sos = store.add(prefix + ".sos", make_tensor({d}));
    init_glorot(p.sos, rng, 1, d);
    p.dist_table = store.add(prefix + ".dist", make_tensor({cfg.dist_max + 2, d}));
    init_glorot(p.dist_table, rng, cfg.dist_max + 2, d);
    if (cfg.head_adaptive) {
        p.head_emb = store.add(prefix + ".head_emb", make_tensor({cfg.heads, d}));
        init_glorot(p.head_emb, rng, cfg.heads, d);
    }
    if (dl != d) {
        p.out_proj = store.add(prefix + ".out_proj", make_tensor({dl, d}));
        init_glorot(p.out_proj, rng, dl, d);
    }
    return p;
}

PredictorState init_predictor_state(const PredictorConfig& cfg, const BaseGraph* base) {
    PredictorState st;
    st.n_cand = cfg.candidates();
    st.h = make_tensor({cfg.lstm_dim()});
    st.c = make_tensor({cfg.lstm_dim()});
    st.adj.assign(static_cast<std::size_t>(st.n_cand), {});
    if (base) {
        if (base->n > cfg.n) throw ConfigError("base graph larger than node count");
        for (auto [u, v] : base->edges) {
            if (u < 0 || v < 0 || u >= cfg.n || v >= cfg.n) throw DataError("base graph edge out of range");
            st.adj[u].push_back(v);
            st.adj[v].push_back(u);
        }
    }
    return st;
}

std::vector<int> distance_buckets(const std::vector<std::vector<int>>& adj, int origin, std::int64_t n_nodes,
                                  std::int64_t dist_max) {
    std::vector<int> dist(static_cast<std::size_t>(n_nodes), -1);
    if (origin < 0 || origin >= n_nodes) throw NumericError("distance_buckets: origin out of range");
    std::deque<int> frontier{origin};
    dist[origin] = 0;
    while (!frontier.empty()) {
        const int u = frontier.front();
        frontier.pop_front();
        for (int v : adj[u]) {
            if (dist[v] < 0) {
                dist[v] = dist[u] + 1;
                frontier.push_back(v);
            }
        }
    }
    for (auto& d : dist) {
        if (d > dist_max) d = static_cast<int>(dist_max);
    }
    return dist;
}

Tensor node_logits(Tape& tp, const Tensor& x, const Tensor& g, const Tensor& dist_table,
                   std::shared_ptr<const std::vector<int>> buckets) {
    if (x->shape.size() != 2 || x->shape[1] != g->size()) throw NumericError("node_logits: shape mismatch");
    const std::int64_t n = x->shape[0], d = x->shape[1];
    if (buckets && static_cast<std::int64_t>(buckets->size()) != n)
        throw NumericError("node_logits: bucket count mismatch");
    auto out = make_tensor({n});
    out->requires_grad = x->requires_grad || g->requires_grad || (buckets && dist_table->requires_grad);
    if (tp.recording() && out->requires_grad) out->producer = &tp;

    // token term
    for (std::int64_t i = 0; i < n; ++i) {
        const double* xi = &x->values[i * d];
        double s = 0.0;
        for (std::int64_t c = 0; c < d; ++c) s += xi[c] * g->values[c];
        out->values[i] = s;
    }
    if (buckets) {
        // one dot per distance bucket, then a gather
        const std::int64_t rows = dist_table->shape[0];
        std::vector<double> bucket_dot(static_cast<std::size_t>(rows), 0.0);
        for (std::int64_t b = 0; b < rows; ++b) {
            const double* vb = &dist_table->values[b * d];
            double s = 0.0;
            for (std::int64_t c = 0; c < d; ++c) s += vb[c] * g->values[c];
            bucket_dot[b] = s;
        }
        for (std::int64_t i = 0; i < n; ++i) out->values[i] += bucket_dot[(*buckets)[i] + 1];
    }

    if (tp.recording() && out->requires_grad) {
        tp.record([x, g, dist_table, buckets, out, n, d] {
            if (!out->has_grad()) return;
            const auto& go = out->grad;
            if (x->requires_grad) {
                auto& gx = x->grad_buf();
                for (std::int64_t i = 0; i < n; ++i) {
                    if (go[i] == 0.0) continue;
                    double* row = &gx[i * d];
                    for (std::int64_t c = 0; c < d; ++c) row[c] += go[i] * g->values[c];
                }
            }
            if (g->requires_grad) {
                auto& gg = g->grad_buf();
                for (std::int64_t i = 0; i < n; ++i) {
                    if (go[i] == 0.0) continue;
                    const double* xi = &x->values[i * d];
                    for (std::int64_t c = 0; c < d; ++c) gg[c] += go[i] * xi[c];
                }
            }
            if (buckets) {
                const std::int64_t rows = dist_table->shape[0];
                std::vector<double> per_bucket(static_cast<std::size_t>(rows), 0.0);
                for (std::int64_t i = 0; i < n; ++i) per_bucket[(*buckets)[i] + 1] += go[i];
                if (dist_table->requires_grad) {
                    auto& gt = dist_table->grad_buf();
                    for (std::int64_t b = 0; b < rows; ++b) {
                        if (per_bucket[b] == 0.0) continue;
                        double* row = &gt[b * d];
                        for (std::int64_t c = 0; c < d; ++c) row[c] += per_bucket[b] * g->values[c];
                    }
                }
                if (g->requires_grad) {
                    auto& gg = g->grad_buf();
                    for (std::int64_t b = 0; b < rows; ++b) {
                        if (per_bucket[b] == 0.0) continue;
                        const double* vb = &dist_table->values[b * d];
                        for (std::int64_t c = 0; c < d; ++c) gg[c] += per_bucket[b] * vb[c];
                    }
                }
            }
        });
    }
    return out;
}

namespace {

Tensor project_hidden(Tape& tp, const Tensor& h, const PredictorParams& params) {
    return params.out_proj ? ops::linear(tp, h, params.out_proj, Tensor()) : h;
}

}  // namespace

Tensor step_logits(Tape& tp, PredictorState& state, const Tensor& input, const Tensor& x,
                   const PredictorParams& params, const PredictorConfig& cfg) {
    if (state.next_is_destination && state.origin < 0)
        throw NumericError("step_logits: destination step with undefined origin");
    auto [h, c] = ops::lstm_cell(tp, input, state.h, state.c, params.lstm);
    state.h = h;
    state.c = c;
    Tensor g = project_hidden(tp, h, params);
    std::shared_ptr<const std::vector<int>> buckets;
    if (state.next_is_destination) {
        buckets = std::make_shared<const std::vector<int>>(
            distance_buckets(state.adj, state.origin, state.n_cand, cfg.dist_max));
    }
    return node_logits(tp, x, g, params.dist_table, buckets);
}

std::vector<char> allowed_candidates(const PredictorState& state, const PredictorConfig& cfg) {
    std::vector<char> allowed(static_cast<std::size_t>(state.n_cand), 1);
    if (!state.next_is_destination) {
        if (cfg.dummy_node) allowed[cfg.n] = 0;  // the sink never originates edges
    } else if (cfg.causal) {
        for (std::int64_t j = state.origin + 1; j < cfg.n; ++j) allowed[j] = 0;
    }
    return allowed;
}

void commit_action(PredictorState& state, int action) {
    if (action < 0 || action >= state.n_cand) throw DataError("commit_action: node index out of range");
    state.actions.push_back(action);
    if (state.next_is_destination) {
        state.adj[state.origin].push_back(action);
        state.adj[action].push_back(state.origin);
        state.origin = -1;
    } else {
        state.origin = action;
    }
    state.next_is_destination = !state.next_is_destination;
}

namespace {

struct PlanStep {
    std::int64_t pass;
    std::int64_t head;
    bool destination;
    bool forced;
    int forced_node;
    bool pass_start;  // first step of a layer pass (input becomes previous hidden)
};

std::vector<PlanStep> make_plan(const PredictorConfig& cfg) {
    cfg.validate();
    const std::int64_t budget = cfg.edge_budget();
    const std::int64_t alpha_int = cfg.all_nodes_connected ? budget / cfg.n : 0;
    std::vector<PlanStep> plan;
    plan.reserve(static_cast<std::size_t>(cfg.total_actions()));
    for (std::int64_t pass = 0; pass < cfg.passes(); ++pass) {
        bool first_of_pass = pass > 0;
        for (std::int64_t head = 0; head < cfg.head_passes(); ++head) {
            for (std::int64_t e = 0; e < budget; ++e) {
                PlanStep origin{pass, head, false, false, -1, first_of_pass};
                first_of_pass = false;
                if (cfg.all_nodes_connected) {
                    origin.forced = true;
                    origin.forced_node = static_cast<int>(e / alpha_int);
                }
                plan.push_back(origin);
                plan.push_back({pass, head, true, false, -1, false});
            }
        }
    }
    return plan;
}

EdgeSet actions_to_edges(const PredictorConfig& cfg, const std::vector<int>& actions) {
    EdgeSet es;
    es.num_nodes = cfg.candidates();
    es.num_layers = cfg.layers;
    es.num_heads = cfg.head_passes();
    es.per_head = cfg.head_adaptive;
    es.alpha = cfg.alpha;
    es.edges.resize(static_cast<std::size_t>(es.num_layers * es.num_heads));
    const auto plan = make_plan(cfg);
    if (actions.size() != plan.size()) throw DataError("action sequence length does not match the mode");
    for (std::size_t t = 0; t + 1 < plan.size(); t += 2) {
        const auto& step = plan[t + 1];
        const Edge e{actions[t], actions[t + 1]};
        if (cfg.shared_structure) {
            for (std::int64_t l = 0; l < cfg.layers; ++l) es.edges[l * es.num_heads + step.head].push_back(e);
        } else {
            es.edges[step.pass * es.num_heads + step.head].push_back(e);
        }
    }
    return es;
}

Tensor step_input(Tape& tp, const PredictorParams& params, const PredictorConfig& cfg, const PlanStep& step,
                  const PredictorState& state, const Tensor& base_input) {
    Tensor input = base_input;
    if (step.pass_start) input = project_hidden(tp, state.h, params);
    if (cfg.head_adaptive) input = ops::add(tp, input, ops::row(tp, params.head_emb, step.head));
    return input;
}

}  // namespace

SampleResult sample_edges(Tape& tp, const PredictorParams& params, const Tensor& x, const PredictorConfig& cfg,
                          const BaseGraph* base, Rng& rng) {
    if (x->shape[0] != cfg.candidates() || x->shape[1] != cfg.d_model)
        throw NumericError("sample_edges: node embedding shape mismatch");
    const auto plan = make_plan(cfg);
    PredictorState state = init_predictor_state(cfg, base);
    SampleResult result;
    Tensor base_input = params.sos;
    Tensor total;
    for (const PlanStep& step : plan) {
        Tensor input = step_input(tp, params, cfg, step, state, base_input);
        if (step.forced) {
            auto [h, c] = ops::lstm_cell(tp, input, state.h, state.c, params.lstm);
            state.h = h;
            state.c = c;
            commit_action(state, step.forced_node);
            result.action_log_probs.push_back(0.0);
        } else {
            const std::vector<char> allowed = allowed_candidates(state, cfg);
            Tensor logits = step_logits(tp, state, input, x, params, cfg);
            Tensor logp = ops::masked_log_softmax(tp, logits, allowed);
            // categorical draw over the allowed candidates in index order
            const double u = rng.uniform();
            double acc = 0.0;
            int action = -1;
            for (std::int64_t j = 0; j < state.n_cand; ++j) {
                if (!allowed[j]) continue;
                acc += std::exp(logp->values[j]);
                action = static_cast<int>(j);
                if (u < acc) break;
            }
            commit_action(state, action);
            Tensor lp = ops::pick(tp, logp, action);
            total = total ? ops::add(tp, total, lp) : lp;
            result.action_log_probs.push_back(lp->values[0]);
            if (cfg.collect_entropy) {
                Tensor ent = ops::masked_entropy(tp, logp, allowed);
                result.entropy_sum = result.entropy_sum ? ops::add(tp, result.entropy_sum, ent) : ent;
            }
        }
        base_input = ops::row(tp, x, state.actions.back());
    }
    result.actions = state.actions;
    result.edges = actions_to_edges(cfg, state.actions);
    if (!total) {
        total = make_tensor({1});
        total->producer = tp.recording() ? &tp : nullptr;
    }
    result.total_log_prob = total;
    return result;
}

std::vector<double> predictor_log_prob(Tape& tp, const PredictorParams& params, const Tensor& x,
                                       const PredictorConfig& cfg, const BaseGraph* base,
                                       const std::vector<int>& actions, Tensor* total_out) {
    const auto plan = make_plan(cfg);
    if (actions.size() != plan.size())
        throw DataError("predictor_log_prob: expected " + std::to_string(plan.size()) + " actions, got " +
                        std::to_string(actions.size()));
    PredictorState state = init_predictor_state(cfg, base);
    std::vector<double> logps;
    logps.reserve(actions.size());
    Tensor base_input = params.sos;
    Tensor total;
    for (std::size_t t = 0; t < plan.size(); ++t) {
        const PlanStep& step = plan[t];
        const int action = actions[t];
        if (action < 0 || action >= state.n_cand) throw DataError("predictor_log_prob: action index out of range");
        Tensor input = step_input(tp, params, cfg, step, state, base_input);
        if (step.forced) {
            if (action != step.forced_node) throw DataError("predictor_log_prob: forced origin mismatch");
            auto [h, c] = ops::lstm_cell(tp, input, state.h, state.c, params.lstm);
            state.h = h;
            state.c = c;
            logps.push_back(0.0);
        } else {
            const std::vector<char> allowed = allowed_candidates(state, cfg);
            if (!allowed[action]) throw DataError("predictor_log_prob: action is masked at its step");
            Tensor logits = step_logits(tp, state, input, x, params, cfg);
            Tensor logp = ops::masked_log_softmax(tp, logits, allowed);
            Tensor lp = ops::pick(tp, logp, action);
            total = total ? ops::add(tp, total, lp) : lp;
            logps.push_back(lp->values[0]);
        }
        commit_action(state, action);
        base_input = ops::row(tp, x, action);
    }
    if (total_out) {
        if (!total) total = make_tensor({1});
        *total_out = total;
    }
    return logps;
}

EdgeSet beam_search_edges(const PredictorParams& params, const Tensor& x, const PredictorConfig& cfg,
                          const BaseGraph* base, std::int64_t beam, double* best_log_prob,
                          std::vector<int>* best_actions) {
    if (beam < 1) throw ConfigError("beam size must be >= 1");
    const auto plan = make_plan(cfg);

    // A plain beam can prune the greedy prefix and end below the greedy
    // score. Decoding keeps the greedy rollout as a guaranteed floor.
    double greedy_lp = 0.0;
    std::vector<int> greedy_actions;
    if (beam > 1) beam_search_edges(params, x, cfg, base, 1, &greedy_lp, &greedy_actions);

    struct Hyp {
        PredictorState state;
        Tensor base_input;
        double total = 0.0;
    };
    Tape notape(false);
    Hyp root{init_predictor_state(cfg, base), params.sos, 0.0};
    std::vector<Hyp> hyps{std::move(root)};

    for (const PlanStep& step : plan) {
        if (step.forced) {
            for (Hyp& hyp : hyps) {
                Tensor input = step_input(notape, params, cfg, step, hyp.state, hyp.base_input);
                auto [h, c] = ops::lstm_cell(notape, input, hyp.state.h, hyp.state.c, params.lstm);
                hyp.state.h = h;
                hyp.state.c = c;
                commit_action(hyp.state, step.forced_node);
                hyp.base_input = ops::row(notape, x, step.forced_node);
            }
            continue;
        }
        struct Cand {
            std::size_t hyp;
            int node;
            double total;
        };
        std::vector<Cand> cands;
        std::vector<Tensor> advanced_h(hyps.size()), advanced_c(hyps.size());
        for (std::size_t hi = 0; hi < hyps.size(); ++hi) {
            Hyp& hyp = hyps[hi];
            Tensor input = step_input(notape, params, cfg, step, hyp.state, hyp.base_input);
            const std::vector<char> allowed = allowed_candidates(hyp.state, cfg);
            Tensor logits = step_logits(notape, hyp.state, input, x, params, cfg);
            advanced_h[hi] = hyp.state.h;
            advanced_c[hi] = hyp.state.c;
            Tensor logp = ops::masked_log_softmax(notape, logits, allowed);
            for (std::int64_t j = 0; j < hyp.state.n_cand; ++j) {
                if (allowed[j]) cands.push_back({hi, static_cast<int>(j), hyp.total + logp->values[j]});
            }
        }
        std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
            if (a.total != b.total) return a.total > b.total;
            if (a.node != b.node) return a.node < b.node;
            return a.hyp < b.hyp;
        });
        const std::size_t keep = std::min<std::size_t>(static_cast<std::size_t>(beam), cands.size());
        std::vector<Hyp> next;
        next.reserve(keep);
        for (std::size_t k = 0; k < keep; ++k) {
            const Cand& cand = cands[k];
            Hyp child;
            child.state = hyps[cand.hyp].state;  // post-advance copy
            child.state.h = advanced_h[cand.hyp];
            child.state.c = advanced_c[cand.hyp];
            child.total = cand.total;
            commit_action(child.state, cand.node);
            child.base_input = ops::row(notape, x, cand.node);
            next.push_back(std::move(child));
        }
        hyps = std::move(next);
    }
    const Hyp& best = hyps.front();
    double total = best.total;
    std::vector<int> actions = best.state.actions;
    if (beam > 1 && greedy_lp > total) {
        total = greedy_lp;
        actions = greedy_actions;
    }
    if (best_log_prob) *best_log_prob = total;
    if (best_actions) *best_actions = actions;
    return actions_to_edges(cfg, actions);
}

}  // namespace sac
