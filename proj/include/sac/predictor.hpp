#pragma once

#include <memory>
#include <optional>
#include <vector>

#include "sac/edgeset.hpp"
#include "sac/ops.hpp"
#include "sac/param_store.hpp"
#include "sac/rng.hpp"
#include "sac/tensor.hpp"

namespace sac {

struct PredictorConfig {
    std::int64_t n = 0;       // real node count (dummy node excluded)
    double alpha = 1.0;       // edges per node per layer
    std::int64_t layers = 1;  // attention layers L
    std::int64_t heads = 1;   // attention heads (used in head-adaptive mode)
    bool shared_structure = true;
    bool all_nodes_connected = false;
    bool head_adaptive = false;
    bool causal = false;      // destinations limited to dst <= origin (dummy exempt)
    bool dummy_node = false;  // one extra learned sink node at index n
    std::int64_t d_model = 0;
    std::int64_t d_lstm = 0;  // 0 = d_model
    std::int64_t dist_max = 16;
    bool collect_entropy = false;  // also accumulate per-step policy entropy while sampling

    std::int64_t lstm_dim() const { return d_lstm > 0 ? d_lstm : d_model; }
    std::int64_t candidates() const { return n + (dummy_node ? 1 : 0); }
    std::int64_t edge_budget() const;   // round(alpha * n), validated >= 1
    std::int64_t passes() const { return shared_structure ? 1 : layers; }
    std::int64_t head_passes() const { return head_adaptive ? heads : 1; }
    std::int64_t total_actions() const { return passes() * head_passes() * edge_budget() * 2; }
    void validate() const;
};

struct PredictorParams {
    ops::LstmParams lstm;  // input d_model, hidden lstm_dim
    Tensor sos;            // [d_model]
    Tensor dist_table;     // [dist_max + 2, d_model]; row 0 = unreachable (-1), row k = distance k-1
    Tensor head_emb;       // [heads, d_model], head-adaptive mode only
    Tensor out_proj;       // [lstm_dim, d_model], present only when lstm_dim != d_model
};

PredictorParams make_predictor_params(ParamStore& store, const std::string& prefix, const PredictorConfig& cfg,
                                      Rng& rng);

// Task-supplied undirected adjacency over the real nodes (may be absent).
struct BaseGraph {
    std::int64_t n = 0;
    std::vector<std::pair<std::int32_t, std::int32_t>> edges;
};

// Recurrent rollout state: hidden/cell pair, emitted actions, parity, the
// current origin, and the working adjacency (base graph plus edges built so
// far, undirected for distance purposes).
struct PredictorState {
    Tensor h, c;
    std::vector<int> actions;
    std::vector<double> logprob_values;
    bool next_is_destination = false;
    int origin = -1;
    std::vector<std::vector<int>> adj;
    std::int64_t n_cand = 0;
};

PredictorState init_predictor_state(const PredictorConfig& cfg, const BaseGraph* base);

// Shortest-path distance buckets from `origin` over the adjacency:
// -1 unreachable, 0 self, else min(distance, dist_max).
std::vector<int> distance_buckets(const std::vector<std::vector<int>>& adj, int origin, std::int64_t n_nodes,
                                  std::int64_t dist_max);

// Advances the LSTM one step with `input` and returns raw logits over the
// candidate nodes: g.(w_i) for origin steps, g.(w_i + v_dist(i)) for
// destination steps. Throws if a destination step has no origin.
Tensor step_logits(Tape& tp, PredictorState& state, const Tensor& input, const Tensor& x,
                   const PredictorParams& params, const PredictorConfig& cfg);

// Candidate mask for the next prediction: origins exclude the dummy node;
// destinations honor the causal constraint (dummy always allowed).
std::vector<char> allowed_candidates(const PredictorState& state, const PredictorConfig& cfg);

// Records an emitted node: toggles parity, tracks the origin, and extends the
// working adjacency when a (origin, destination) pair completes.
void commit_action(PredictorState& state, int action);

// Fused logit kernel: logits[i] = x[i].g (+ dist_table[bucket[i]+1].g).
Tensor node_logits(Tape& tp, const Tensor& x, const Tensor& g, const Tensor& dist_table,
                   std::shared_ptr<const std::vector<int>> buckets);

struct SampleResult {
    EdgeSet edges;
    Tensor total_log_prob;              // scalar on the tape (zero-constant if no sampled step)
    Tensor entropy_sum;                 // only with collect_entropy
    std::vector<double> action_log_probs;  // one per action; forced steps contribute 0
    std::vector<int> actions;
};

// Samples a full edge set. Forced steps (all-nodes-connected origins) advance
// the LSTM but are not predictions. The emitted edge list is replicated
// across layers in shared-structure mode.
SampleResult sample_edges(Tape& tp, const PredictorParams& params, const Tensor& x, const PredictorConfig& cfg,
                          const BaseGraph* base, Rng& rng);

// Teacher-forced re-scoring of a complete action sequence; returns per-action
// log-probs (0 for forced steps). Throws DataError on out-of-range or masked
// actions. Reproduces sampling-time log-probs exactly.
std::vector<double> predictor_log_prob(Tape& tp, const PredictorParams& params, const Tensor& x,
                                       const PredictorConfig& cfg, const BaseGraph* base,
                                       const std::vector<int>& actions, Tensor* total_out = nullptr);

// Deterministic beam decode; ties break toward the smaller node index, then
// the earlier-expanded hypothesis. beam=1 is greedy argmax.
EdgeSet beam_search_edges(const PredictorParams& params, const Tensor& x, const PredictorConfig& cfg,
                          const BaseGraph* base, std::int64_t beam, double* best_log_prob = nullptr,
                          std::vector<int>* best_actions = nullptr);

}  // namespace sac
