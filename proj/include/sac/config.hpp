#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "sac/tensor.hpp"

namespace sac {

enum class EdgeSource { predictor, dense, full, random, segment, span, bpt };

EdgeSource edge_source_from_string(const std::string& s);
std::string to_string(EdgeSource s);

// All run hyperparameters, loaded from a flat key=value file with [section]
// headers. Keys are addressed as "section.key".
struct RunConfig {
    // [task]
    std::string task = "pointer";  // pointer | char_lm | graph
    std::int64_t n = 64;           // sequence length / node count
    std::int64_t vocab = 16;
    std::string corpus;                  // char_lm corpus path
    std::int64_t synth_corpus_bytes = 0; // generate a corpus when no path given
    std::string graph_file;
    std::int64_t eval_examples = 256;

    // [model]
    std::int64_t d = 128;
    std::int64_t d_ff = 512;
    std::int64_t heads = 4;
    std::int64_t layers = 2;
    std::int64_t d_lstm = 0;  // 0 = d
    std::int64_t dist_max = 16;

    // [edges]
    double alpha = 2.0;
    EdgeSource edge_source = EdgeSource::predictor;
    bool shared_structure = true;
    bool all_nodes_connected = true;
    bool head_adaptive = false;
    bool causal = false;
    bool dummy_node = false;
    bool undirected = false;
    std::int64_t seg_len = 0;            // segment source
    std::vector<std::int64_t> spans;     // span source

    // [train]
    std::int64_t steps = 2000;
    std::int64_t epochs = 0;  // graph task: full-batch epochs (0 = use steps)
    std::int64_t batch = 16;
    double lr_phi = 1e-3;
    double lr_theta = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.98;
    double adam_eps = 1e-9;
    double label_smoothing = 0.1;
    double clip_theta = 1.0;
    double entropy_reg = 0.0;   // off by default
    bool reward_norm = false;   // off by default
    std::uint64_t seed = 1;
    std::int64_t eval_every = 250;
    double target_metric = 0.0;  // early stop once the eval metric reaches this (0 = never)

    // [eval]
    std::int64_t beam = 5;

    void validate() const;
    std::string canonical() const;  // deterministic dump of every key
    void set(const std::string& key, const std::string& value);  // "section.key"
};

RunConfig parse_config_text(const std::string& text);
RunConfig load_config_file(const std::string& path);
void apply_overrides(RunConfig& cfg, const std::vector<std::string>& overrides);  // "section.key=value"

}  // namespace sac
