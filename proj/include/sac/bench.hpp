#pragma once

#include "sac/config.hpp"

#include <vector>

namespace sac {

struct BenchRow {
    std::int64_t n = 0;
    std::int64_t sparse_scores = 0;  // all-nodes-connected edges, dedupe off
    std::int64_t dense_scores = 0;
    std::int64_t sparse_peak = 0;  // activation elements
    std::int64_t dense_peak = 0;
};

struct BenchReport {
    std::vector<BenchRow> rows;
    double sparse_peak_exponent = 0.0;  // log-log slope of sparse_peak vs n
    std::string table() const;
};

// One forward pass per mode and size; counts q.k score evaluations and peak
// activation elements. Score counting uses raw (dedupe off, no self-loop)
// neighbor lists so the sparse count is exactly alpha*N per layer per head.
BenchReport bench_scaling(const RunConfig& cfg, const std::vector<std::int64_t>& n_list);

}  // namespace sac
