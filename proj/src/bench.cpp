#include "sac/bench.hpp"

#include <cmath>
#include <sstream>

#include "sac/attention.hpp"
#include "sac/predictor.hpp"

namespace sac {

std::string BenchReport::table() const {
    std::ostringstream os;
    os << "n\tsparse_scores\tdense_scores\tsparse_peak\tdense_peak\n";
    for (const auto& r : rows) {
        os << r.n << "\t" << r.sparse_scores << "\t" << r.dense_scores << "\t" << r.sparse_peak << "\t" << r.dense_peak
           << "\n";
    }
    for (std::size_t i = 1; i < rows.size(); ++i) {
        os << "ratio n=" << rows[i - 1].n << "->" << rows[i].n << ": sparse "
           << static_cast<double>(rows[i].sparse_scores) / static_cast<double>(rows[i - 1].sparse_scores) << " dense "
           << static_cast<double>(rows[i].dense_scores) / static_cast<double>(rows[i - 1].dense_scores) << "\n";
    }
    os << "sparse_peak_exponent " << sparse_peak_exponent << "\n";
    return os.str();
}

BenchReport bench_scaling(const RunConfig& cfg, const std::vector<std::int64_t>& n_list) {
    for (std::size_t i = 1; i < n_list.size(); ++i) {
        if (n_list[i] <= n_list[i - 1]) throw ConfigError("bench: N list must ascend");
    }
    BenchReport report;
    for (const std::int64_t n : n_list) {
        Rng rng(cfg.seed);
        ParamStore store;
        Tensor tok = store.add("tok", make_tensor({cfg.vocab, cfg.d}));
        Tensor pos = store.add("pos", make_tensor({n, cfg.d}));
        init_glorot(tok, rng, cfg.vocab, cfg.d);
        init_glorot(pos, rng, n, cfg.d);
        std::vector<AttnLayerParams> blocks;
        for (std::int64_t l = 0; l < cfg.layers; ++l) {
            blocks.push_back(make_attn_params(store, "b" + std::to_string(l), cfg.d, cfg.heads, cfg.d_ff, rng));
        }
        PredictorConfig pc;
        pc.n = n;
        pc.alpha = cfg.alpha;
        pc.layers = cfg.layers;
        pc.heads = cfg.heads;
        pc.shared_structure = true;
        pc.all_nodes_connected = true;
        pc.d_model = cfg.d;
        pc.d_lstm = cfg.d_lstm;
        pc.dist_max = cfg.dist_max;
        ParamStore pstore;
        PredictorParams pred = make_predictor_params(pstore, "pred", pc, rng);

        std::vector<std::int64_t> tokens(static_cast<std::size_t>(n));
        for (auto& t : tokens) t = rng.uniform_int(cfg.vocab);

        BenchRow row;
        row.n = n;
        {
            // sparse forward (edge sampling included)
            Tape tp(false);
            const std::int64_t live0 = alloc_stats().live;
            alloc_stats().reset_peak();
            attn_stats().reset();
            Tensor x = ops::add(tp, ops::embedding_lookup(tp, tok, tokens), pos);
            Rng srng(cfg.seed, 1);
            SampleResult sample = sample_edges(tp, pred, x, pc, nullptr, srng);
            CompileOptions raw{.dedupe = false, .add_self_loops = false, .symmetrize = false};
            NeighborIndex idx = compile(sample.edges, 0, 0, raw);
            std::vector<const NeighborIndex*> per_head(static_cast<std::size_t>(cfg.heads), &idx);
            Tensor h = x;
            for (const auto& block : blocks) h = transformer_block(tp, h, per_head, block);
            row.sparse_scores = attn_stats().score_evals;
            row.sparse_peak = alloc_stats().peak - live0;
        }
        {
            Tape tp(false);
            const std::int64_t live0 = alloc_stats().live;
            alloc_stats().reset_peak();
            attn_stats().reset();
            Tensor x = ops::add(tp, ops::embedding_lookup(tp, tok, tokens), pos);
            Tensor h = x;
            for (const auto& block : blocks) h = transformer_block_dense(tp, h, block);
            row.dense_scores = attn_stats().score_evals;
            row.dense_peak = alloc_stats().peak - live0;
        }
        report.rows.push_back(row);
    }
    // least-squares slope of ln(peak) against ln(n)
    if (report.rows.size() >= 2) {
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        const double k = static_cast<double>(report.rows.size());
        for (const auto& r : report.rows) {
            const double lx = std::log(static_cast<double>(r.n));
            const double ly = std::log(static_cast<double>(r.sparse_peak));
            sx += lx;
            sy += ly;
            sxx += lx * lx;
            sxy += lx * ly;
        }
        report.sparse_peak_exponent = (k * sxy - sx * sy) / (k * sxx - sx * sx);
    }
    return report;
}

}  // namespace sac
