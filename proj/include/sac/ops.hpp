#pragma once

#include <utility>
#include <vector>

#include "sac/tensor.hpp"

namespace sac::ops {

// Elementwise, same shape.
Tensor add(Tape& tp, const Tensor& a, const Tensor& b);
Tensor sub(Tape& tp, const Tensor& a, const Tensor& b);
Tensor mul(Tape& tp, const Tensor& a, const Tensor& b);
Tensor scale(Tape& tp, const Tensor& a, double c);
Tensor tanh(Tape& tp, const Tensor& a);
Tensor sigmoid(Tape& tp, const Tensor& a);
Tensor relu(Tape& tp, const Tensor& a);

Tensor sum(Tape& tp, const Tensor& a);
Tensor dot(Tape& tp, const Tensor& a, const Tensor& b);
Tensor pick(Tape& tp, const Tensor& a, std::int64_t index);
Tensor slice(Tape& tp, const Tensor& a, std::int64_t lo, std::int64_t hi);  // rank-1
Tensor concat_cols(Tape& tp, const std::vector<Tensor>& parts);

// a: [m x k], b: [k x n]  ->  [m x n]
Tensor matmul(Tape& tp, const Tensor& a, const Tensor& b);
// a: [m x k], b: [n x k]  ->  [m x n] = a . b^T
Tensor matmul_nt(Tape& tp, const Tensor& a, const Tensor& b);
// x: [m x k] or [k]; w: [k x n]; b: [n] or null  ->  [m x n] or [n]
Tensor linear(Tape& tp, const Tensor& x, const Tensor& w, const Tensor& b);

// Per-row normalization over the last axis.
Tensor layer_norm(Tape& tp, const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);
Tensor log_softmax(Tape& tp, const Tensor& x);

// Log-softmax over the allowed subset of a rank-1 logit vector. Disallowed
// entries take a large negative finite sentinel and receive zero gradient.
inline constexpr double kMaskedLogProb = -1e30;
Tensor masked_log_softmax(Tape& tp, const Tensor& x, const std::vector<char>& allowed);

// Row-wise softmax of an [N x N] score matrix; entries with mask==0 get
// probability exactly zero and are excluded from the normalization.
// mask may be null (no masking). Used by the dense attention oracle.
Tensor row_softmax_masked(Tape& tp, const Tensor& scores, const std::vector<char>* mask);

// Softmax within each index range [offsets[s], offsets[s+1]). The ranges must
// partition [0, E) and every range must be non-empty.
Tensor segment_softmax(Tape& tp, const Tensor& scores, const std::vector<std::int64_t>& offsets);

// table: [V x d], ids: n indices -> [n x d]
Tensor embedding_lookup(Tape& tp, const Tensor& table, const std::vector<std::int64_t>& ids);

// Mean over rows of the smoothed negative log-likelihood;
// target distribution is (1-eps)*onehot + eps/V.
Tensor cross_entropy_label_smoothing(Tape& tp, const Tensor& logits, const std::vector<std::int64_t>& targets,
                                     double eps = 0.1);

// Gate order in the packed weights: input, forget, output, candidate.
struct LstmParams {
    Tensor wx;  // [input_dim x 4*hidden]
    Tensor wh;  // [hidden x 4*hidden]
    Tensor b;   // [4*hidden]
};

// Standard LSTM gating; returns (h, c).
std::pair<Tensor, Tensor> lstm_cell(Tape& tp, const Tensor& x, const Tensor& h_prev, const Tensor& c_prev,
                                    const LstmParams& p);

// Copy of row r of a rank-2 tensor as a rank-1 tensor.
Tensor row(Tape& tp, const Tensor& m, std::int64_t r);
// Contiguous row slice [lo, hi) of a rank-2 tensor.
Tensor rows(Tape& tp, const Tensor& m, std::int64_t lo, std::int64_t hi);
// Vertical concatenation of rank-2 tensors with equal column counts.
Tensor concat_rows(Tape& tp, const std::vector<Tensor>& parts);
// Size-preserving shape change (gradient passes through).
Tensor reshape(Tape& tp, const Tensor& t, std::vector<std::int64_t> shape);
// Shannon entropy of the masked distribution given its log-probabilities.
Tensor masked_entropy(Tape& tp, const Tensor& logp, const std::vector<char>& allowed);

// --- non-differentiable helpers -------------------------------------------

// Mean log-probability of the gold entries, computed directly from logit
// values (never on the tape). Used as the REINFORCE reward.
double mean_gold_logprob(const Tensor& logits, const std::vector<std::int64_t>& targets);

void check_finite(const Tensor& t, const char* what);

}  // namespace sac::ops
