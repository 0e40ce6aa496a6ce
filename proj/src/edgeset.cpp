#include "sac/edgeset.hpp"

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "sac/rng.hpp"

namespace sac {

std::vector<Edge>& EdgeSet::at(std::int64_t layer, std::int64_t head) {
    return const_cast<std::vector<Edge>&>(static_cast<const EdgeSet*>(this)->at(layer, head));
}

const std::vector<Edge>& EdgeSet::at(std::int64_t layer, std::int64_t head) const {
    if (layer < 0 || layer >= num_layers) throw ConfigError("edge set: layer out of range");
    const std::int64_t h = per_head ? head : 0;
    if (h < 0 || h >= num_heads) throw ConfigError("edge set: head out of range");
    return edges[layer * num_heads + h];
}

namespace {

EdgeSet make_set(std::int64_t n, std::int64_t layers, std::int64_t heads, bool per_head, double alpha) {
    if (n < 1) throw ConfigError("edge set: need at least one node");
    if (layers < 1) throw ConfigError("edge set: need at least one layer");
    EdgeSet es;
    es.num_nodes = n;
    es.num_layers = layers;
    es.num_heads = heads;
    es.per_head = per_head;
    es.alpha = alpha;
    es.edges.resize(static_cast<std::size_t>(layers * heads));
    return es;
}

void replicate_layers(EdgeSet& es) {
    for (std::int64_t l = 1; l < es.num_layers; ++l) {
        for (std::int64_t h = 0; h < es.num_heads; ++h) {
            es.edges[l * es.num_heads + h] = es.edges[h];
        }
    }
}

}  // namespace

EdgeSet gen_full(std::int64_t n, std::int64_t layers) {
    EdgeSet es = make_set(n, layers, 1, false, static_cast<double>(n));
    auto& list = es.edges[0];
    list.reserve(static_cast<std::size_t>(n * n));
    for (std::int32_t i = 0; i < n; ++i) {
        for (std::int32_t j = 0; j < n; ++j) list.push_back({i, j});
    }
    replicate_layers(es);
    return es;
}

EdgeSet gen_segment(std::int64_t n, std::int64_t seg_len, std::int64_t layers) {
    if (seg_len < 1 || seg_len > n) throw ConfigError("gen_segment: segment length must be in [1, N]");
    EdgeSet es = make_set(n, layers, 1, false, static_cast<double>(seg_len));
    auto& list = es.edges[0];
    for (std::int32_t i = 0; i < n; ++i) {
        for (std::int32_t j = 0; j < n; ++j) {
            if (i / seg_len == j / seg_len) list.push_back({i, j});
        }
    }
    replicate_layers(es);
    return es;
}

EdgeSet gen_span(std::int64_t n, const std::vector<std::int64_t>& spans, std::int64_t layers) {
    if (spans.empty()) throw ConfigError("gen_span: need at least one head span");
    for (auto s : spans) {
        if (s < 1 || s > n) throw ConfigError("gen_span: span must be in [1, N]");
    }
    double avg = 0.0;
    EdgeSet es = make_set(n, layers, static_cast<std::int64_t>(spans.size()), true, 0.0);
    for (std::size_t h = 0; h < spans.size(); ++h) {
        auto& list = es.edges[h];
        const std::int64_t s = spans[h];
        for (std::int32_t i = 0; i < n; ++i) {
            for (std::int32_t j = static_cast<std::int32_t>(std::max<std::int64_t>(0, i - s + 1)); j <= i; ++j) {
                list.push_back({i, j});
            }
        }
        avg += static_cast<double>(list.size());
    }
    es.alpha = avg / static_cast<double>(spans.size() * n);
    replicate_layers(es);
    return es;
}

EdgeSet gen_bpt(std::int64_t n, std::int64_t layers) {
    if (n < 2) throw ConfigError("gen_bpt: need at least two leaves");
    std::int64_t padded = 1;
    while (padded < n) padded <<= 1;
    const std::int64_t total_nodes = 2 * padded - 1;
    EdgeSet es = make_set(total_nodes, layers, 1, false, 0.0);
    auto& list = es.edges[0];

    // Complete binary tree over the padded leaves; leaves are ids [0, padded),
    // internal nodes are allocated depth-first starting at `padded`.
    std::int64_t next_internal = padded;
    struct Builder {
        std::vector<Edge>& out;
        std::int64_t real_leaves;
        std::int64_t& next_internal;
        // Returns the id of the subtree root over leaves [lo, hi).
        std::int64_t build(std::int64_t lo, std::int64_t hi, std::vector<std::int64_t>& path) {
            if (hi - lo == 1) {
                if (lo < real_leaves) {
                    for (auto anc : path) out.push_back({static_cast<std::int32_t>(lo), static_cast<std::int32_t>(anc)});
                }
                return lo;
            }
            const std::int64_t id = next_internal++;
            path.push_back(id);
            const std::int64_t mid = lo + (hi - lo) / 2;
            build(lo, mid, path);
            build(mid, hi, path);
            path.pop_back();
            return id;
        }
    };
    std::vector<std::int64_t> path;
    Builder{list, n, next_internal}.build(0, padded, path);
    es.alpha = static_cast<double>(list.size()) / static_cast<double>(total_nodes);
    replicate_layers(es);
    return es;
}

EdgeSet gen_random(std::int64_t n, double alpha, std::uint64_t seed, bool causal, std::int64_t layers) {
    const std::int64_t count = static_cast<std::int64_t>(std::llround(alpha * static_cast<double>(n)));
    if (count < 1) throw ConfigError("gen_random: alpha*N must be at least 1");
    EdgeSet es = make_set(n, layers, 1, false, alpha);
    Rng rng(seed);
    for (std::int64_t l = 0; l < layers; ++l) {
        auto& list = es.edges[l];
        list.reserve(static_cast<std::size_t>(count));
        for (std::int64_t e = 0; e < count; ++e) {
            const std::int32_t src = static_cast<std::int32_t>(rng.uniform_int(n));
            const std::int32_t dst =
                causal ? static_cast<std::int32_t>(rng.uniform_int(src + 1)) : static_cast<std::int32_t>(rng.uniform_int(n));
            list.push_back({src, dst});
        }
    }
    return es;
}

NeighborIndex compile(const EdgeSet& es, std::int64_t layer, std::int64_t head, CompileOptions opts) {
    const auto& list = es.at(layer, head);
    const std::int64_t n = es.num_nodes;
    std::vector<std::vector<std::int32_t>> buckets(static_cast<std::size_t>(n));
    for (const Edge& e : list) {
        if (e.src < 0 || e.src >= n || e.dst < 0 || e.dst >= n)
            throw ConfigError("compile: edge index out of range");
        buckets[e.src].push_back(e.dst);
        if (opts.symmetrize) buckets[e.dst].push_back(e.src);
    }
    NeighborIndex idx;
    idx.num_nodes = n;
    idx.offsets.resize(static_cast<std::size_t>(n) + 1, 0);
    for (std::int64_t i = 0; i < n; ++i) {
        auto& b = buckets[i];
        if (opts.add_self_loops) b.push_back(static_cast<std::int32_t>(i));
        std::sort(b.begin(), b.end());
        if (opts.dedupe) b.erase(std::unique(b.begin(), b.end()), b.end());
        idx.offsets[i + 1] = idx.offsets[i] + static_cast<std::int64_t>(b.size());
    }
    idx.neighbors.reserve(static_cast<std::size_t>(idx.offsets[n]));
    for (auto& b : buckets) idx.neighbors.insert(idx.neighbors.end(), b.begin(), b.end());
    return idx;
}

NeighborIndex causal_filter(const NeighborIndex& idx) {
    NeighborIndex out;
    out.num_nodes = idx.num_nodes;
    out.offsets.resize(idx.offsets.size(), 0);
    out.neighbors.reserve(idx.neighbors.size());
    for (std::int64_t i = 0; i < idx.num_nodes; ++i) {
        for (std::int64_t e = idx.offsets[i]; e < idx.offsets[i + 1]; ++e) {
            if (idx.neighbors[e] <= i) out.neighbors.push_back(idx.neighbors[e]);
        }
        out.offsets[i + 1] = static_cast<std::int64_t>(out.neighbors.size());
    }
    return out;
}

EdgeSetDiagnostics validate(const EdgeSet& es) {
    EdgeSetDiagnostics d;
    d.expected_edges_per_layer = static_cast<std::int64_t>(std::llround(es.alpha * static_cast<double>(es.num_nodes)));
    std::vector<std::int64_t> degree(static_cast<std::size_t>(es.num_nodes));
    for (const auto& list : es.edges) {
        d.edges_per_list.push_back(static_cast<std::int64_t>(list.size()));
        std::fill(degree.begin(), degree.end(), 0);
        for (const Edge& e : list) {
            if (e.src < 0 || e.src >= es.num_nodes || e.dst < 0 || e.dst >= es.num_nodes) {
                d.out_of_range.push_back(e);
                d.ok = false;
                continue;
            }
            ++degree[e.src];
        }
        for (auto deg : degree) {
            if (deg >= static_cast<std::int64_t>(d.src_degree_histogram.size()))
                d.src_degree_histogram.resize(static_cast<std::size_t>(deg) + 1, 0);
            ++d.src_degree_histogram[deg];
        }
    }
    return d;
}

std::string EdgeSetDiagnostics::to_string() const {
    std::ostringstream os;
    os << "edges_per_list:";
    for (auto c : edges_per_list) os << " " << c;
    os << " expected_per_layer: " << expected_edges_per_layer;
    os << " out_of_range: " << out_of_range.size();
    os << " degree_histogram:";
    for (std::size_t k = 0; k < src_degree_histogram.size(); ++k) os << " " << k << ":" << src_degree_histogram[k];
    return os.str();
}

void save_edges(const EdgeSet& es, std::ostream& os) {
    char header[128];
    std::snprintf(header, sizeof(header), "#N=%" PRId64 " L=%" PRId64 " alpha=%.17g per_head=%d\n", es.num_nodes,
                  es.num_layers, es.alpha, es.per_head ? 1 : 0);
    os << header;
    for (std::int64_t l = 0; l < es.num_layers; ++l) {
        for (std::int64_t h = 0; h < es.num_heads; ++h) {
            for (const Edge& e : es.edges[l * es.num_heads + h]) {
                os << l << '\t' << h << '\t' << e.src << '\t' << e.dst << '\n';
            }
        }
    }
}

void save_edges_file(const EdgeSet& es, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw DataError("cannot open for writing: " + path);
    save_edges(es, f);
}

EdgeSet load_edges(std::istream& is) {
    std::string header;
    if (!std::getline(is, header)) throw DataError("edge dump: empty input");
    std::int64_t n = 0, layers = 0;
    double alpha = 0.0;
    int per_head = 0;
    if (std::sscanf(header.c_str(), "#N=%" SCNd64 " L=%" SCNd64 " alpha=%lg per_head=%d", &n, &layers, &alpha,
                    &per_head) != 4) {
        throw DataError("edge dump: bad header: " + header);
    }
    struct Row {
        std::int64_t layer, head;
        Edge e;
    };
    std::vector<Row> rows;
    std::int64_t max_head = 0;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        Row r;
        if (std::sscanf(line.c_str(), "%" SCNd64 "\t%" SCNd64 "\t%d\t%d", &r.layer, &r.head, &r.e.src, &r.e.dst) != 4)
            throw DataError("edge dump: bad line: " + line);
        if (r.layer < 0 || r.layer >= layers) throw DataError("edge dump: layer out of range: " + line);
        max_head = std::max(max_head, r.head);
        rows.push_back(r);
    }
    const std::int64_t heads = per_head ? max_head + 1 : 1;
    EdgeSet es = make_set(n, layers, heads, per_head != 0, alpha);
    for (const Row& r : rows) es.edges[r.layer * heads + r.head].push_back(r.e);
    return es;
}

EdgeSet load_edges_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw DataError("cannot open: " + path);
    return load_edges(f);
}

}  // namespace sac
