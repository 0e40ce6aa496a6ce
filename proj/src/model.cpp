#include "sac/model.hpp"

#include <cmath>

namespace sac {

namespace {

PredictorConfig derive_predictor_cfg(const RunConfig& cfg) {
    PredictorConfig pc;
    pc.n = cfg.n;
    pc.alpha = cfg.alpha;
    pc.layers = cfg.layers;
    pc.heads = cfg.heads;
    pc.shared_structure = cfg.shared_structure;
    pc.all_nodes_connected = cfg.all_nodes_connected;
    pc.head_adaptive = cfg.head_adaptive;
    pc.causal = cfg.causal;
    pc.dummy_node = cfg.dummy_node;
    pc.d_model = cfg.d;
    pc.d_lstm = cfg.d_lstm;
    pc.dist_max = cfg.dist_max;
    pc.collect_entropy = cfg.entropy_reg != 0.0;
    return pc;
}

}  // namespace

SacModel::SacModel(const RunConfig& cfg, const GraphTask* graph) : cfg_(cfg), pred_cfg_(derive_predictor_cfg(cfg)) {
    cfg_.validate();
    Rng rng(cfg_.seed);
    const std::int64_t d = cfg_.d;
    std::int64_t classes = cfg_.vocab;

    if (cfg_.task == "graph") {
        if (!graph) throw ConfigError("graph task requires graph data at model construction");
        if (graph->n != cfg_.n) throw ConfigError("graph node count does not match task.n");
        classes = graph->classes;
        in_w_ = phi_.add("embed.in.w", make_tensor({graph->feat_dim, d}));
        in_b_ = phi_.add("embed.in.b", make_tensor({d}));
        init_glorot(in_w_, rng, graph->feat_dim, d);
    } else {
        tok_emb_ = phi_.add("embed.tok", make_tensor({cfg_.vocab, d}));
        pos_emb_ = phi_.add("embed.pos", make_tensor({cfg_.n, d}));
        init_glorot(tok_emb_, rng, cfg_.vocab, d);
        init_glorot(pos_emb_, rng, cfg_.n, d);
        chain_.n = cfg_.n;
        for (std::int32_t i = 0; i + 1 < cfg_.n; ++i) chain_.edges.push_back({i, static_cast<std::int32_t>(i + 1)});
    }
    if (cfg_.dummy_node) {
        dummy_emb_ = phi_.add("embed.dummy", make_tensor({1, d}));
        init_glorot(dummy_emb_, rng, 1, d);
    }
    for (std::int64_t l = 0; l < cfg_.layers; ++l) {
        blocks_.push_back(make_attn_params(phi_, "block" + std::to_string(l), d, cfg_.heads, cfg_.d_ff, rng));
    }
    final_g_ = phi_.add("final_ln.g", make_tensor({d}));
    final_b_ = phi_.add("final_ln.b", make_tensor({d}));
    final_g_->values.assign(static_cast<std::size_t>(d), 1.0);
    out_w_ = phi_.add("readout.w", make_tensor({d, classes}));
    out_b_ = phi_.add("readout.b", make_tensor({classes}));
    init_glorot(out_w_, rng, d, classes);

    if (has_predictor()) {
        pred_ = make_predictor_params(theta_, "pred", pred_cfg_, rng);
    }
    if (cfg_.edge_source == EdgeSource::span && static_cast<std::int64_t>(cfg_.spans.size()) != cfg_.heads) {
        throw ConfigError("edges.spans must list one span per head");
    }

    // Fixed sources compile once; the same index objects are reused by every
    // forward pass and across layers.
    const std::int64_t n_prime = cfg_.n + (cfg_.dummy_node ? 1 : 0);
    if (cfg_.edge_source == EdgeSource::full || cfg_.edge_source == EdgeSource::segment ||
        cfg_.edge_source == EdgeSource::span || cfg_.edge_source == EdgeSource::bpt) {
        switch (cfg_.edge_source) {
            case EdgeSource::full: fixed_edges_ = gen_full(n_prime, cfg_.layers); break;
            case EdgeSource::segment: fixed_edges_ = gen_segment(n_prime, cfg_.seg_len, cfg_.layers); break;
            case EdgeSource::span: fixed_edges_ = gen_span(n_prime, cfg_.spans, cfg_.layers); break;
            case EdgeSource::bpt:
                fixed_edges_ = gen_bpt(n_prime, cfg_.layers);
                if (fixed_edges_.num_nodes != n_prime)
                    throw ConfigError("bpt source requires power-of-two task.n (tree nodes must match)");
                break;
            default: break;
        }
        CompileOptions opts;
        opts.symmetrize = cfg_.undirected;
        for (std::int64_t h = 0; h < (fixed_edges_.per_head ? cfg_.heads : 1); ++h) {
            NeighborIndex idx = compile(fixed_edges_, 0, h, opts);
            if (cfg_.causal) idx = causal_filter(idx);
            fixed_idx_.push_back(std::make_shared<const NeighborIndex>(std::move(idx)));
        }
    }
}

Tensor SacModel::embed_sequence(Tape& tp, const std::vector<std::int64_t>& tokens) {
    if (static_cast<std::int64_t>(tokens.size()) != cfg_.n)
        throw DataError("expected " + std::to_string(cfg_.n) + " tokens, got " + std::to_string(tokens.size()));
    Tensor tok = ops::embedding_lookup(tp, tok_emb_, tokens);
    return ops::add(tp, tok, pos_emb_);
}

Tensor SacModel::embed_graph(Tape& tp, const GraphTask& graph) {
    auto feats = make_tensor({graph.n, graph.feat_dim}, graph.features);
    return ops::linear(tp, feats, in_w_, in_b_);
}

ModelOutput SacModel::forward_common(Tape& tp, Tensor x0, const BaseGraph* base, Rng* sample_rng, std::int64_t beam,
                                     std::optional<EdgeSource> source_override, std::uint64_t random_edge_seed,
                                     std::int64_t readout_rows) {
    ModelOutput out;
    Tensor x = cfg_.dummy_node ? ops::concat_rows(tp, {x0, dummy_emb_}) : x0;
    out.layer0 = x;
    const std::int64_t n_prime = x->shape[0];
    const EdgeSource source = source_override.value_or(cfg_.edge_source);

    Tensor h = x;
    if (source == EdgeSource::dense) {
        std::vector<char> mask;
        const std::vector<char>* mask_ptr = nullptr;
        if (cfg_.causal) {
            mask.assign(static_cast<std::size_t>(n_prime * n_prime), 0);
            for (std::int64_t i = 0; i < n_prime; ++i) {
                for (std::int64_t j = 0; j <= i; ++j) mask[i * n_prime + j] = 1;
            }
            mask_ptr = &mask;
        }
        for (const auto& block : blocks_) h = transformer_block_dense(tp, h, block, mask_ptr);
    } else {
        const bool use_cache = source == cfg_.edge_source && !fixed_idx_.empty();
        bool layers_identical = true;
        switch (source) {
            case EdgeSource::predictor: {
                if (sample_rng) {
                    out.sample = sample_edges(tp, pred_, x, pred_cfg_, base, *sample_rng);
                    out.edges = out.sample.edges;
                    out.sampled = true;
                } else {
                    out.edges = beam_search_edges(pred_, x, pred_cfg_, base, beam, &out.decode_log_prob);
                }
                layers_identical = cfg_.shared_structure;
                break;
            }
            case EdgeSource::full: out.edges = use_cache ? fixed_edges_ : gen_full(n_prime, cfg_.layers); break;
            case EdgeSource::segment:
                out.edges = use_cache ? fixed_edges_ : gen_segment(n_prime, cfg_.seg_len, cfg_.layers);
                break;
            case EdgeSource::span:
                if (static_cast<std::int64_t>(cfg_.spans.size()) != cfg_.heads)
                    throw ConfigError("edges.spans must list one span per head");
                out.edges = use_cache ? fixed_edges_ : gen_span(n_prime, cfg_.spans, cfg_.layers);
                break;
            case EdgeSource::bpt: out.edges = use_cache ? fixed_edges_ : gen_bpt(n_prime, cfg_.layers); break;
            case EdgeSource::random:
                out.edges = gen_random(n_prime, cfg_.alpha, random_edge_seed, cfg_.causal, cfg_.layers);
                layers_identical = false;  // independently sampled per layer
                break;
            case EdgeSource::dense: break;
        }
        if (out.edges.num_nodes != n_prime) throw ConfigError("edge set node count does not match the input");

        // One compiled index per distinct (layer, head) edge list; identical
        // layers reuse the same object.
        CompileOptions opts;
        opts.symmetrize = cfg_.undirected;
        const bool per_head = out.edges.per_head;
        const std::int64_t head_lists = per_head ? out.edges.num_heads : 1;
        // Predictor edges already satisfy the causal constraint structurally
        // (with the dummy sink exempt); generated sets are filtered here.
        const bool filter_causal = cfg_.causal && source != EdgeSource::predictor;

        std::vector<std::vector<const NeighborIndex*>> per_layer(static_cast<std::size_t>(cfg_.layers));
        std::vector<std::shared_ptr<const NeighborIndex>> compiled;
        if (use_cache) {
            compiled = fixed_idx_;
        } else {
            const std::int64_t layer_lists = layers_identical ? 1 : cfg_.layers;
            compiled.resize(static_cast<std::size_t>(layer_lists * head_lists));
            for (std::int64_t l = 0; l < layer_lists; ++l) {
                for (std::int64_t hd = 0; hd < head_lists; ++hd) {
                    NeighborIndex idx = compile(out.edges, l, hd, opts);
                    if (filter_causal) idx = causal_filter(idx);
                    compiled[l * head_lists + hd] = std::make_shared<const NeighborIndex>(std::move(idx));
                }
            }
        }
        out.indices_owned = compiled;
        const std::int64_t layer_lists = static_cast<std::int64_t>(compiled.size()) / head_lists;
        for (std::int64_t l = 0; l < cfg_.layers; ++l) {
            const std::int64_t ll = layer_lists > 1 ? l : 0;
            for (std::int64_t hd = 0; hd < cfg_.heads; ++hd) {
                per_layer[l].push_back(compiled[ll * head_lists + (per_head ? hd : 0)].get());
            }
        }
        for (std::int64_t l = 0; l < cfg_.layers; ++l) {
            out.indices_used.insert(out.indices_used.end(), per_layer[l].begin(), per_layer[l].end());
            h = transformer_block(tp, h, per_layer[l], blocks_[l]);
        }
    }

    h = ops::layer_norm(tp, h, final_g_, final_b_);
    if (readout_rows == 1) {
        Tensor last = ops::row(tp, h, cfg_.n - 1);  // real readout node, never the dummy
        out.logits = ops::reshape(tp, ops::linear(tp, last, out_w_, out_b_), {1, out_w_->shape[1]});
    } else {
        Tensor body = ops::rows(tp, h, 0, readout_rows);
        out.logits = ops::linear(tp, body, out_w_, out_b_);
    }
    return out;
}

ModelOutput SacModel::forward_seq(Tape& tp, const std::vector<std::int64_t>& tokens, Rng* sample_rng,
                                  std::int64_t beam, std::optional<EdgeSource> source_override,
                                  std::uint64_t random_edge_seed) {
    if (cfg_.task == "graph") throw ConfigError("forward_seq called on a graph-task model");
    Tensor x0 = embed_sequence(tp, tokens);
    const std::int64_t readout_rows = cfg_.task == "pointer" ? 1 : cfg_.n;
    return forward_common(tp, x0, &chain_, sample_rng, beam, source_override, random_edge_seed, readout_rows);
}

ModelOutput SacModel::forward_graph(Tape& tp, const GraphTask& graph, Rng* sample_rng, std::int64_t beam,
                                    std::optional<EdgeSource> source_override, std::uint64_t random_edge_seed) {
    if (cfg_.task != "graph") throw ConfigError("forward_graph called on a sequence-task model");
    Tensor x0 = embed_graph(tp, graph);
    return forward_common(tp, x0, &graph.base, sample_rng, beam, source_override, random_edge_seed, graph.n);
}

}  // namespace sac
