#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "sac/tensor.hpp"

namespace sac {

struct Edge {
    std::int32_t src;
    std::int32_t dst;
    bool operator==(const Edge&) const = default;
};

// Per-layer (and optionally per-head) directed edge lists. Edge (i,j) means
// node i attends to node j. Duplicates are preserved here and removed when
// the set is compiled; attention semantics are set-based.
struct EdgeSet {
    std::int64_t num_nodes = 0;
    std::int64_t num_layers = 1;
    std::int64_t num_heads = 1;  // 1 unless per_head
    bool per_head = false;
    double alpha = 0.0;
    // indexed [layer * num_heads + head]
    std::vector<std::vector<Edge>> edges;

    std::vector<Edge>& at(std::int64_t layer, std::int64_t head = 0);
    const std::vector<Edge>& at(std::int64_t layer, std::int64_t head = 0) const;
};

// CSR neighbor lists. Every node's list contains the node itself unless
// self-loop insertion was disabled, lists are sorted ascending, and contain
// no duplicates unless deduplication was disabled.
struct NeighborIndex {
    std::int64_t num_nodes = 0;
    std::vector<std::int64_t> offsets;        // length N+1, nondecreasing
    std::vector<std::int32_t> neighbors;      // length offsets[N]

    std::int64_t degree(std::int64_t i) const { return offsets[i + 1] - offsets[i]; }
    std::int64_t total_edges() const { return offsets.empty() ? 0 : offsets.back(); }
    bool operator==(const NeighborIndex&) const = default;
};

struct CompileOptions {
    bool dedupe = true;
    bool add_self_loops = true;
    bool symmetrize = false;  // undirected attention
};

// --- generators (one layer pattern replicated across L layers) -------------

EdgeSet gen_full(std::int64_t n, std::int64_t layers = 1);
EdgeSet gen_segment(std::int64_t n, std::int64_t seg_len, std::int64_t layers = 1);
// Per-head sliding-window spans; head t gets edges (i,j) with i-s < j <= i.
EdgeSet gen_span(std::int64_t n, const std::vector<std::int64_t>& spans, std::int64_t layers = 1);
// Binary-tree ancestor edges over 2N-1 nodes; leaves are nodes [0, N).
EdgeSet gen_bpt(std::int64_t n, std::int64_t layers = 1);
EdgeSet gen_random(std::int64_t n, double alpha, std::uint64_t seed, bool causal, std::int64_t layers = 1);

NeighborIndex compile(const EdgeSet& es, std::int64_t layer, std::int64_t head = 0, CompileOptions opts = {});

// Removes neighbors j > i; self-loops are retained.
NeighborIndex causal_filter(const NeighborIndex& idx);

struct EdgeSetDiagnostics {
    std::vector<Edge> out_of_range;                 // offending edges (any layer/head)
    std::vector<std::int64_t> edges_per_list;       // one entry per (layer, head)
    std::vector<std::int64_t> src_degree_histogram; // src counts over all lists
    std::int64_t expected_edges_per_layer = 0;      // round(alpha * N)
    bool ok = true;
    std::string to_string() const;
};

EdgeSetDiagnostics validate(const EdgeSet& es);

// Text dump: header "#N=<n> L=<l> alpha=<a> per_head=<0|1>", then one edge
// per line as "layer<TAB>head<TAB>src<TAB>dst". Round-trips losslessly,
// including edge order and duplicates.
void save_edges(const EdgeSet& es, std::ostream& os);
void save_edges_file(const EdgeSet& es, const std::string& path);
EdgeSet load_edges(std::istream& is);
EdgeSet load_edges_file(const std::string& path);

}  // namespace sac
