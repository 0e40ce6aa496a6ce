#pragma once

#include <vector>

#include "sac/edgeset.hpp"
#include "sac/ops.hpp"
#include "sac/param_store.hpp"
#include "sac/tensor.hpp"

namespace sac {

// Counts q.k score evaluations, the unit of attention work. Dense attention
// contributes N*N per head; sparse attention contributes the total compiled
// neighbor count per head.
struct AttnStats {
    std::int64_t score_evals = 0;
    void reset() { score_evals = 0; }
};
AttnStats& attn_stats();

struct HeadParams {
    Tensor wq, wk, wv;  // each [d x d/m]
};

struct AttnLayerParams {
    std::vector<HeadParams> heads;
    Tensor wo;                    // [d x d]
    Tensor w_ff1, b_ff1;          // [d x d_ff], [d_ff]
    Tensor w_ff2, b_ff2;          // [d_ff x d], [d]
    Tensor ln1_g, ln1_b;          // attention sub-layer norm
    Tensor ln2_g, ln2_b;          // feed-forward sub-layer norm
    std::int64_t d() const { return wo->shape[0]; }
    std::int64_t head_dim() const { return heads.front().wq->shape[1]; }
};

// Registers one block's parameters under `prefix.` in the store.
AttnLayerParams make_attn_params(ParamStore& store, const std::string& prefix, std::int64_t d, std::int64_t m,
                                 std::int64_t d_ff, Rng& rng);

// --- tape-registered sparse kernels ----------------------------------------

// scores[e] = inv_scale * dot(q[i], k[idx.neighbors[e]]) for e in node i's range.
Tensor edge_scores(Tape& tp, const Tensor& q, const Tensor& k, const NeighborIndex& idx, double inv_scale);
// out[i] = sum over node i's range of w[e] * v[idx.neighbors[e]].
Tensor edge_weighted_sum(Tape& tp, const Tensor& w, const Tensor& v, const NeighborIndex& idx);

// --- attention layers -------------------------------------------------------

// Multi-head attention restricted to the neighbor lists; one index per head
// (repeat the same pointer for a structure shared across heads).
Tensor sparse_mha(Tape& tp, const Tensor& h, const std::vector<const NeighborIndex*>& idx_per_head,
                  const AttnLayerParams& params);

// Reference full attention with optional boolean mask (true = may attend).
// Independent code path used as the equivalence oracle.
Tensor dense_mha(Tape& tp, const Tensor& h, const AttnLayerParams& params, const std::vector<char>* mask = nullptr);

// Pre-norm residual block: h + MHA(LN(h)), then + FFN(LN(.)).
Tensor transformer_block(Tape& tp, const Tensor& h, const std::vector<const NeighborIndex*>& idx_per_head,
                         const AttnLayerParams& params);
Tensor transformer_block_dense(Tape& tp, const Tensor& h, const AttnLayerParams& params,
                               const std::vector<char>* mask = nullptr);

}  // namespace sac
