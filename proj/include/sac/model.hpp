#pragma once

#include <memory>
#include <optional>

#include "sac/attention.hpp"
#include "sac/config.hpp"
#include "sac/predictor.hpp"
#include "sac/tasks.hpp"

namespace sac {

struct ModelOutput {
    Tensor logits;        // [rows x classes]; pointer: 1 row, char lm: n rows, graph: n rows
    Tensor layer0;        // shared node representations fed to both attention and predictor
    EdgeSet edges;        // edge set actually used (empty in dense mode)
    SampleResult sample;  // populated when the predictor sampled
    bool sampled = false;
    double decode_log_prob = 0.0;  // beam score when decoding
    std::vector<std::shared_ptr<const NeighborIndex>> indices_owned;
    std::vector<const NeighborIndex*> indices_used;  // per (layer*heads + head), for structural checks
};

// The main network: layer-0 embeddings, L sparse transformer blocks, and a
// task readout, with the edge predictor attached when edges.source=predictor.
class SacModel {
  public:
    SacModel(const RunConfig& cfg, const GraphTask* graph = nullptr);

    ParamStore& phi() { return phi_; }
    ParamStore& theta() { return theta_; }
    const RunConfig& cfg() const { return cfg_; }
    const PredictorConfig& predictor_cfg() const { return pred_cfg_; }
    bool has_predictor() const { return cfg_.edge_source == EdgeSource::predictor; }

    // Sequence forward. With sample_rng the predictor samples; otherwise edges
    // are beam-decoded (or produced by the fixed source). `source_override`
    // redirects the edge source (e.g. eval with gen_full).
    ModelOutput forward_seq(Tape& tp, const std::vector<std::int64_t>& tokens, Rng* sample_rng,
                            std::int64_t beam = 5, std::optional<EdgeSource> source_override = {},
                            std::uint64_t random_edge_seed = 0);
    // Graph forward (full-batch: one call covers all nodes).
    ModelOutput forward_graph(Tape& tp, const GraphTask& graph, Rng* sample_rng, std::int64_t beam = 5,
                              std::optional<EdgeSource> source_override = {}, std::uint64_t random_edge_seed = 0);

  private:
    Tensor embed_sequence(Tape& tp, const std::vector<std::int64_t>& tokens);
    Tensor embed_graph(Tape& tp, const GraphTask& graph);
    ModelOutput forward_common(Tape& tp, Tensor x0, const BaseGraph* base, Rng* sample_rng, std::int64_t beam,
                               std::optional<EdgeSource> source_override, std::uint64_t random_edge_seed,
                               std::int64_t readout_rows);

    RunConfig cfg_;
    PredictorConfig pred_cfg_;
    ParamStore phi_, theta_;

    Tensor tok_emb_, pos_emb_, dummy_emb_;
    Tensor in_w_, in_b_;  // graph feature projection
    std::vector<AttnLayerParams> blocks_;
    Tensor final_g_, final_b_;
    Tensor out_w_, out_b_;
    PredictorParams pred_;
    BaseGraph chain_;  // sequence-task base graph

    // fixed-source neighbor indexes compiled once
    std::vector<std::shared_ptr<const NeighborIndex>> fixed_idx_;
    EdgeSet fixed_edges_;
};

}  // namespace sac
