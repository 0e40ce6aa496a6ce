#include "sac/attention.hpp"

#include <cmath>

namespace sac {

AttnStats& attn_stats() {
    static AttnStats stats;
    return stats;
}

AttnLayerParams make_attn_params(ParamStore& store, const std::string& prefix, std::int64_t d, std::int64_t m,
                                 std::int64_t d_ff, Rng& rng) {
    if (d % m != 0) throw ConfigError("model dim must be divisible by head count");
    const std::int64_t dh = d / m;
    AttnLayerParams p;
    for (std::int64_t h = 0; h < m; ++h) {
        HeadParams hp;
        hp.wq = store.add(prefix + ".h" + std::to_string(h) + ".wq", make_tensor({d, dh}));
        hp.wk = store.add(prefix + ".h" + std::to_string(h) + ".wk", make_tensor({d, dh}));
        hp.wv = store.add(prefix + ".h" + std::to_string(h) + ".wv", make_tensor({d, dh}));
        init_glorot(hp.wq, rng, d, dh);
        init_glorot(hp.wk, rng, d, dh);
        init_glorot(hp.wv, rng, d, dh);
        p.heads.push_back(hp);
    }
    p.wo = store.add(prefix + ".wo", make_tensor({d, d}));
    init_glorot(p.wo, rng, d, d);
    p.w_ff1 = store.add(prefix + ".ff1.w", make_tensor({d, d_ff}));
    p.b_ff1 = store.add(prefix + ".ff1.b", make_tensor({d_ff}));
    p.w_ff2 = store.add(prefix + ".ff2.w", make_tensor({d_ff, d}));
    p.b_ff2 = store.add(prefix + ".ff2.b", make_tensor({d}));
    init_glorot(p.w_ff1, rng, d, d_ff);
    init_glorot(p.w_ff2, rng, d_ff, d);
    p.ln1_g = store.add(prefix + ".ln1.g", make_tensor({d}));
    p.ln1_b = store.add(prefix + ".ln1.b", make_tensor({d}));
    p.ln2_g = store.add(prefix + ".ln2.g", make_tensor({d}));
    p.ln2_b = store.add(prefix + ".ln2.b", make_tensor({d}));
    p.ln1_g->values.assign(static_cast<std::size_t>(d), 1.0);
    p.ln2_g->values.assign(static_cast<std::size_t>(d), 1.0);
    return p;
}

Tensor edge_scores(Tape& tp, const Tensor& q, const Tensor& k, const NeighborIndex& idx, double inv_scale) {
    if (q->shape != k->shape || q->shape.size() != 2) throw NumericError("edge_scores: q/k shape mismatch");
    if (q->shape[0] != idx.num_nodes) throw NumericError("edge_scores: node count mismatch");
    const std::int64_t dh = q->shape[1];
    const std::int64_t total = idx.total_edges();
    auto out = make_tensor({total});
    out->requires_grad = q->requires_grad || k->requires_grad;
    if (tp.recording() && out->requires_grad) out->producer = &tp;
    for (std::int64_t i = 0; i < idx.num_nodes; ++i) {
        const double* qi = &q->values[i * dh];
        for (std::int64_t e = idx.offsets[i]; e < idx.offsets[i + 1]; ++e) {
            const double* kj = &k->values[idx.neighbors[e] * dh];
            double s = 0.0;
            for (std::int64_t c = 0; c < dh; ++c) s += qi[c] * kj[c];
            out->values[e] = s * inv_scale;
        }
    }
    attn_stats().score_evals += total;
    if (tp.recording() && out->requires_grad) {
        tp.record([q, k, out, idx, inv_scale, dh] {
            if (!out->has_grad()) return;
            for (std::int64_t i = 0; i < idx.num_nodes; ++i) {
                for (std::int64_t e = idx.offsets[i]; e < idx.offsets[i + 1]; ++e) {
                    const double g = out->grad[e] * inv_scale;
                    const std::int64_t j = idx.neighbors[e];
                    if (q->requires_grad) {
                        double* gq = &q->grad_buf()[i * dh];
                        const double* kj = &k->values[j * dh];
                        for (std::int64_t c = 0; c < dh; ++c) gq[c] += g * kj[c];
                    }
                    if (k->requires_grad) {
                        double* gk = &k->grad_buf()[j * dh];
                        const double* qi = &q->values[i * dh];
                        for (std::int64_t c = 0; c < dh; ++c) gk[c] += g * qi[c];
                    }
                }
            }
        });
    }
    return out;
}

Tensor edge_weighted_sum(Tape& tp, const Tensor& w, const Tensor& v, const NeighborIndex& idx) {
    if (w->size() != idx.total_edges()) throw NumericError("edge_weighted_sum: weight count mismatch");
    if (v->shape[0] != idx.num_nodes) throw NumericError("edge_weighted_sum: node count mismatch");
    const std::int64_t dh = v->shape[1];
    auto out = make_tensor({idx.num_nodes, dh});
    out->requires_grad = w->requires_grad || v->requires_grad;
    if (tp.recording() && out->requires_grad) out->producer = &tp;
    for (std::int64_t i = 0; i < idx.num_nodes; ++i) {
        double* oi = &out->values[i * dh];
        for (std::int64_t e = idx.offsets[i]; e < idx.offsets[i + 1]; ++e) {
            const double we = w->values[e];
            const double* vj = &v->values[idx.neighbors[e] * dh];
            for (std::int64_t c = 0; c < dh; ++c) oi[c] += we * vj[c];
        }
    }
    if (tp.recording() && out->requires_grad) {
        tp.record([w, v, out, idx, dh] {
            if (!out->has_grad()) return;
            for (std::int64_t i = 0; i < idx.num_nodes; ++i) {
                const double* go = &out->grad[i * dh];
                for (std::int64_t e = idx.offsets[i]; e < idx.offsets[i + 1]; ++e) {
                    const std::int64_t j = idx.neighbors[e];
                    if (w->requires_grad) {
                        const double* vj = &v->values[j * dh];
                        double s = 0.0;
                        for (std::int64_t c = 0; c < dh; ++c) s += go[c] * vj[c];
                        w->grad_buf()[e] += s;
                    }
                    if (v->requires_grad) {
                        double* gv = &v->grad_buf()[j * dh];
                        const double we = w->values[e];
                        for (std::int64_t c = 0; c < dh; ++c) gv[c] += we * go[c];
                    }
                }
            }
        });
    }
    return out;
}

Tensor sparse_mha(Tape& tp, const Tensor& h, const std::vector<const NeighborIndex*>& idx_per_head,
                  const AttnLayerParams& params) {
    if (idx_per_head.size() != params.heads.size()) throw NumericError("sparse_mha: one neighbor index per head required");
    const std::int64_t n = h->shape[0];
    const double inv_scale = 1.0 / std::sqrt(static_cast<double>(params.head_dim()));
    std::vector<Tensor> head_outputs;
    head_outputs.reserve(params.heads.size());
    for (std::size_t hd = 0; hd < params.heads.size(); ++hd) {
        const NeighborIndex& idx = *idx_per_head[hd];
        if (idx.num_nodes != n) throw NumericError("sparse_mha: neighbor index node count mismatch");
        Tensor q = ops::matmul(tp, h, params.heads[hd].wq);
        Tensor k = ops::matmul(tp, h, params.heads[hd].wk);
        Tensor v = ops::matmul(tp, h, params.heads[hd].wv);
        Tensor scores = edge_scores(tp, q, k, idx, inv_scale);
        Tensor weights = ops::segment_softmax(tp, scores, idx.offsets);
        head_outputs.push_back(edge_weighted_sum(tp, weights, v, idx));
    }
    return ops::matmul(tp, ops::concat_cols(tp, head_outputs), params.wo);
}

Tensor dense_mha(Tape& tp, const Tensor& h, const AttnLayerParams& params, const std::vector<char>* mask) {
    const std::int64_t n = h->shape[0];
    const double inv_scale = 1.0 / std::sqrt(static_cast<double>(params.head_dim()));
    std::vector<Tensor> head_outputs;
    head_outputs.reserve(params.heads.size());
    for (const HeadParams& hp : params.heads) {
        Tensor q = ops::matmul(tp, h, hp.wq);
        Tensor k = ops::matmul(tp, h, hp.wk);
        Tensor v = ops::matmul(tp, h, hp.wv);
        Tensor scores = ops::scale(tp, ops::matmul_nt(tp, q, k), inv_scale);
        attn_stats().score_evals += n * n;
        Tensor probs = ops::row_softmax_masked(tp, scores, mask);
        head_outputs.push_back(ops::matmul(tp, probs, v));
    }
    return ops::matmul(tp, ops::concat_cols(tp, head_outputs), params.wo);
}

namespace {

Tensor feed_forward(Tape& tp, const Tensor& x, const AttnLayerParams& p) {
    return ops::linear(tp, ops::relu(tp, ops::linear(tp, x, p.w_ff1, p.b_ff1)), p.w_ff2, p.b_ff2);
}

}  // namespace

Tensor transformer_block(Tape& tp, const Tensor& h, const std::vector<const NeighborIndex*>& idx_per_head,
                         const AttnLayerParams& params) {
    Tensor a = sparse_mha(tp, ops::layer_norm(tp, h, params.ln1_g, params.ln1_b), idx_per_head, params);
    Tensor h1 = ops::add(tp, h, a);
    Tensor f = feed_forward(tp, ops::layer_norm(tp, h1, params.ln2_g, params.ln2_b), params);
    return ops::add(tp, h1, f);
}

Tensor transformer_block_dense(Tape& tp, const Tensor& h, const AttnLayerParams& params,
                               const std::vector<char>* mask) {
    Tensor a = dense_mha(tp, ops::layer_norm(tp, h, params.ln1_g, params.ln1_b), params, mask);
    Tensor h1 = ops::add(tp, h, a);
    Tensor f = feed_forward(tp, ops::layer_norm(tp, h1, params.ln2_g, params.ln2_b), params);
    return ops::add(tp, h1, f);
}

}  // namespace sac
