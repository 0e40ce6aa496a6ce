#include "sac/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace sac::ops {

namespace {

void require(bool cond, const std::string& msg) {
    if (!cond) throw NumericError(msg);
}

bool same_shape(const Tensor& a, const Tensor& b) { return a->shape == b->shape; }

// Propagates requires_grad and marks the producing tape.
Tensor out_like(Tape& tp, std::vector<std::int64_t> shape, std::initializer_list<const Tensor*> inputs) {
    auto out = make_tensor(std::move(shape));
    for (const Tensor* t : inputs) {
        if (*t && (*t)->requires_grad) out->requires_grad = true;
    }
    if (tp.recording() && out->requires_grad) out->producer = &tp;
    return out;
}

bool should_record(Tape& tp, const Tensor& out) { return tp.recording() && out->requires_grad; }

}  // namespace

Tensor add(Tape& tp, const Tensor& a, const Tensor& b) {
    require(same_shape(a, b), "add: shape mismatch " + shape_str(a->shape) + " vs " + shape_str(b->shape));
    auto out = out_like(tp, a->shape, {&a, &b});
    const std::int64_t n = a->size();
    for (std::int64_t i = 0; i < n; ++i) out->values[i] = a->values[i] + b->values[i];
    if (should_record(tp, out)) {
        tp.record([a, b, out] {
            if (!out->has_grad()) return;
            const auto& g = out->grad;
            if (a->requires_grad) {
                auto& ga = a->grad_buf();
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
            }
            if (b->requires_grad) {
                auto& gb = b->grad_buf();
                for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
            }
        });
    }
    return out;
}

Tensor sub(Tape& tp, const Tensor& a, const Tensor& b) {
    require(same_shape(a, b), "sub: shape mismatch");
    auto out = out_like(tp, a->shape, {&a, &b});
    const std::int64_t n = a->size();
    for (std::int64_t i = 0; i < n; ++i) out->values[i] = a->values[i] - b->values[i];
    if (should_record(tp, out)) {
        tp.record([a, b, out] {
            if (!out->has_grad()) return;
            const auto& g = out->grad;
            if (a->requires_grad) {
                auto& ga = a->grad_buf();
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
            }
            if (b->requires_grad) {
                auto& gb = b->grad_buf();
                for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
            }
        });
    }
    return out;
}

Tensor mul(Tape& tp, const Tensor& a, const Tensor& b) {
    require(same_shape(a, b), "mul: shape mismatch");
    auto out = out_like(tp, a->shape, {&a, &b});
    const std::int64_t n = a->size();
    for (std::int64_t i = 0; i < n; ++i) out->values[i] = a->values[i] * b->values[i];
    if (should_record(tp, out)) {
        tp.record([a, b, out] {
            if (!out->has_grad()) return;
            const auto& g = out->grad;
            if (a->requires_grad) {
                auto& ga = a->grad_buf();
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * b->values[i];
            }
            if (b->requires_grad) {
                auto& gb = b->grad_buf();
                for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * a->values[i];
            }
        });
    }
    return out;
}

Tensor scale(Tape& tp, const Tensor& a, double c) {
    auto out = out_like(tp, a->shape, {&a});
    const std::int64_t n = a->size();
    for (std::int64_t i = 0; i < n; ++i) out->values[i] = a->values[i] * c;
    if (should_record(tp, out)) {
        tp.record([a, out, c] {
            if (!out->has_grad() || !a->requires_grad) return;
            auto& ga = a->grad_buf();
            for (std::size_t i = 0; i < out->grad.size(); ++i) ga[i] += out->grad[i] * c;
        });
    }
    return out;
}

Tensor tanh(Tape& tp, const Tensor& a) {
    auto out = out_like(tp, a->shape, {&a});
    const std::int64_t n = a->size();
    for (std::int64_t i = 0; i < n; ++i) out->values[i] = std::tanh(a->values[i]);
    if (should_record(tp, out)) {
        tp.record([a, out] {
            if (!out->has_grad() || !a->requires_grad) return;
            auto& ga = a->grad_buf();
            for (std::size_t i = 0; i < out->grad.size(); ++i) {
                const double y = out->values[i];
                ga[i] += out->grad[i] * (1.0 - y * y);
            }
        });
    }
    return out;
}

Tensor sigmoid(Tape& tp, const Tensor& a) {
    auto out = out_like(tp, a->shape, {&a});
    const std::int64_t n = a->size();
    for (std::int64_t i = 0; i < n; ++i) out->values[i] = 1.0 / (1.0 + std::exp(-a->values[i]));
    if (should_record(tp, out)) {
        tp.record([a, out] {
            if (!out->has_grad() || !a->requires_grad) return;
            auto& ga = a->grad_buf();
            for (std::size_t i = 0; i < out->grad.size(); ++i) {
                const double y = out->values[i];
                ga[i] += out->grad[i] * y * (1.0 - y);
            }
        });
    }
    return out;
}

Tensor relu(Tape& tp, const Tensor& a) {
    auto out = out_like(tp, a->shape, {&a});
    const std::int64_t n = a->size();
    for (std::int64_t i = 0; i < n; ++i) out->values[i] = a->values[i] > 0.0 ? a->values[i] : 0.0;
    if (should_record(tp, out)) {
        tp.record([a, out] {
            if (!out->has_grad() || !a->requires_grad) return;
            auto& ga = a->grad_buf();
            for (std::size_t i = 0; i < out->grad.size(); ++i) {
                if (a->values[i] > 0.0) ga[i] += out->grad[i];
            }
        });
    }
    return out;
}

Tensor sum(Tape& tp, const Tensor& a) {
    auto out = out_like(tp, {1}, {&a});
    double s = 0.0;
    for (double v : a->values) s += v;
    out->values[0] = s;
    if (should_record(tp, out)) {
        tp.record([a, out] {
            if (!out->has_grad() || !a->requires_grad) return;
            auto& ga = a->grad_buf();
            const double g = out->grad[0];
            for (auto& v : ga) v += g;
        });
    }
    return out;
}

Tensor dot(Tape& tp, const Tensor& a, const Tensor& b) {
    require(a->size() == b->size(), "dot: length mismatch");
    auto out = out_like(tp, {1}, {&a, &b});
    double s = 0.0;
    for (std::int64_t i = 0; i < a->size(); ++i) s += a->values[i] * b->values[i];
    out->values[0] = s;
    if (should_record(tp, out)) {
        tp.record([a, b, out] {
            if (!out->has_grad()) return;
            const double g = out->grad[0];
            if (a->requires_grad) {
                auto& ga = a->grad_buf();
                for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g * b->values[i];
            }
            if (b->requires_grad) {
                auto& gb = b->grad_buf();
                for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g * a->values[i];
            }
        });
    }
    return out;
}

Tensor pick(Tape& tp, const Tensor& a, std::int64_t index) {
    require(index >= 0 && index < a->size(), "pick: index out of range");
    auto out = out_like(tp, {1}, {&a});
    out->values[0] = a->values[index];
    if (should_record(tp, out)) {
        tp.record([a, out, index] {
            if (!out->has_grad() || !a->requires_grad) return;
            a->grad_buf()[index] += out->grad[0];
        });
    }
    return out;
}

Tensor slice(Tape& tp, const Tensor& a, std::int64_t lo, std::int64_t hi) {
    require(a->shape.size() == 1, "slice: rank-1 only");
    require(0 <= lo && lo < hi && hi <= a->size(), "slice: bad range");
    auto out = out_like(tp, {hi - lo}, {&a});
    std::copy(a->values.begin() + lo, a->values.begin() + hi, out->values.begin());
    if (should_record(tp, out)) {
        tp.record([a, out, lo] {
            if (!out->has_grad() || !a->requires_grad) return;
            auto& ga = a->grad_buf();
            for (std::size_t i = 0; i < out->grad.size(); ++i) ga[lo + i] += out->grad[i];
        });
    }
    return out;
}

Tensor concat_cols(Tape& tp, const std::vector<Tensor>& parts) {
    require(!parts.empty(), "concat_cols: no inputs");
    const std::int64_t rows = parts[0]->rows();
    std::int64_t total = 0;
    bool rg = false;
    for (const auto& p : parts) {
        require(p->rows() == rows, "concat_cols: row mismatch");
        total += p->cols();
        rg = rg || p->requires_grad;
    }
    auto out = make_tensor({rows, total});
    out->requires_grad = rg;
    if (tp.recording() && rg) out->producer = &tp;
    std::int64_t col0 = 0;
    for (const auto& p : parts) {
        const std::int64_t c = p->cols();
        for (std::int64_t r = 0; r < rows; ++r) {
            std::memcpy(&out->values[r * total + col0], &p->values[r * c], static_cast<std::size_t>(c) * sizeof(double));
        }
        col0 += c;
    }
    if (tp.recording() && rg) {
        tp.record([parts, out, rows, total] {
            if (!out->has_grad()) return;
            std::int64_t col0 = 0;
            for (const auto& p : parts) {
                const std::int64_t c = p->cols();
                if (p->requires_grad) {
                    auto& gp = p->grad_buf();
                    for (std::int64_t r = 0; r < rows; ++r) {
                        for (std::int64_t j = 0; j < c; ++j) gp[r * c + j] += out->grad[r * total + col0 + j];
                    }
                }
                col0 += c;
            }
        });
    }
    return out;
}

namespace {

// out[m x n] += A[m x k] . B[k x n]
void mm_acc(const double* __restrict a, const double* __restrict b, double* __restrict out, std::int64_t m,
            std::int64_t k, std::int64_t n) {
    for (std::int64_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        double* orow = out + i * n;
        for (std::int64_t p = 0; p < k; ++p) {
            const double av = arow[p];
            const double* brow = b + p * n;
            for (std::int64_t j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }
}

// out[m x n] += A[m x k] . B^T where B is [n x k]
void mm_nt_acc(const double* __restrict a, const double* __restrict b, double* __restrict out, std::int64_t m,
               std::int64_t k, std::int64_t n) {
    for (std::int64_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        double* orow = out + i * n;
        for (std::int64_t j = 0; j < n; ++j) {
            const double* brow = b + j * k;
            double s = 0.0;
            for (std::int64_t p = 0; p < k; ++p) s += arow[p] * brow[p];
            orow[j] += s;
        }
    }
}

// out[k x n] += A^T . B where A is [m x k], B is [m x n]
void mm_tn_acc(const double* __restrict a, const double* __restrict b, double* __restrict out, std::int64_t m,
               std::int64_t k, std::int64_t n) {
    for (std::int64_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        const double* brow = b + i * n;
        for (std::int64_t p = 0; p < k; ++p) {
            const double av = arow[p];
            if (av == 0.0) continue;
            double* orow = out + p * n;
            for (std::int64_t j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }
}

}  // namespace

Tensor matmul(Tape& tp, const Tensor& a, const Tensor& b) {
    require(a->shape.size() == 2 && b->shape.size() == 2, "matmul: rank-2 tensors required");
    require(a->shape[1] == b->shape[0],
            "matmul: inner dimensions disagree " + shape_str(a->shape) + " vs " + shape_str(b->shape));
    const std::int64_t m = a->shape[0], k = a->shape[1], n = b->shape[1];
    auto out = out_like(tp, {m, n}, {&a, &b});
    mm_acc(a->values.data(), b->values.data(), out->values.data(), m, k, n);
    if (should_record(tp, out)) {
        tp.record([a, b, out, m, k, n] {
            if (!out->has_grad()) return;
            const double* g = out->grad.data();
            if (a->requires_grad) mm_nt_acc(g, b->values.data(), a->grad_buf().data(), m, n, k);
            if (b->requires_grad) mm_tn_acc(a->values.data(), g, b->grad_buf().data(), m, k, n);
        });
    }
    return out;
}

Tensor matmul_nt(Tape& tp, const Tensor& a, const Tensor& b) {
    require(a->shape.size() == 2 && b->shape.size() == 2, "matmul_nt: rank-2 tensors required");
    require(a->shape[1] == b->shape[1], "matmul_nt: inner dimensions disagree");
    const std::int64_t m = a->shape[0], k = a->shape[1], n = b->shape[0];
    auto out = out_like(tp, {m, n}, {&a, &b});
    mm_nt_acc(a->values.data(), b->values.data(), out->values.data(), m, k, n);
    if (should_record(tp, out)) {
        tp.record([a, b, out, m, k, n] {
            if (!out->has_grad()) return;
            const double* g = out->grad.data();
            // dA += G . B ; dB += G^T . A
            if (a->requires_grad) mm_acc(g, b->values.data(), a->grad_buf().data(), m, n, k);
            if (b->requires_grad) mm_tn_acc(g, a->values.data(), b->grad_buf().data(), m, n, k);
        });
    }
    return out;
}

Tensor linear(Tape& tp, const Tensor& x, const Tensor& w, const Tensor& b) {
    require(w->shape.size() == 2, "linear: weight must be rank-2");
    const bool vec = x->shape.size() == 1;
    const std::int64_t m = vec ? 1 : x->shape[0];
    const std::int64_t k = vec ? x->shape[0] : x->shape[1];
    const std::int64_t n = w->shape[1];
    require(k == w->shape[0], "linear: input dim " + std::to_string(k) + " vs weight rows " + std::to_string(w->shape[0]));
    if (b) require(b->size() == n, "linear: bias size mismatch");
    auto out = out_like(tp, vec ? std::vector<std::int64_t>{n} : std::vector<std::int64_t>{m, n}, {&x, &w, &b});
    if (b) {
        for (std::int64_t i = 0; i < m; ++i) {
            std::memcpy(&out->values[i * n], b->values.data(), static_cast<std::size_t>(n) * sizeof(double));
        }
    }
    mm_acc(x->values.data(), w->values.data(), out->values.data(), m, k, n);
    if (should_record(tp, out)) {
        tp.record([x, w, b, out, m, k, n] {
            if (!out->has_grad()) return;
            const double* g = out->grad.data();
            if (x->requires_grad) mm_nt_acc(g, w->values.data(), x->grad_buf().data(), m, n, k);
            if (w->requires_grad) mm_tn_acc(x->values.data(), g, w->grad_buf().data(), m, k, n);
            if (b && b->requires_grad) {
                auto& gb = b->grad_buf();
                for (std::int64_t i = 0; i < m; ++i) {
                    for (std::int64_t j = 0; j < n; ++j) gb[j] += g[i * n + j];
                }
            }
        });
    }
    return out;
}

Tensor layer_norm(Tape& tp, const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
    const std::int64_t d = x->cols();
    const std::int64_t rows = x->size() / d;
    require(gamma->size() == d && beta->size() == d, "layer_norm: scale/offset size mismatch");
    auto out = out_like(tp, x->shape, {&x, &gamma, &beta});
    auto inv_sigma = std::make_shared<std::vector<double>>(rows);
    auto xhat = std::make_shared<std::vector<double>>(x->values.size());
    for (std::int64_t r = 0; r < rows; ++r) {
        const double* xr = &x->values[r * d];
        double mean = 0.0;
        for (std::int64_t j = 0; j < d; ++j) mean += xr[j];
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (std::int64_t j = 0; j < d; ++j) {
            const double c = xr[j] - mean;
            var += c * c;
        }
        var /= static_cast<double>(d);
        const double is = 1.0 / std::sqrt(var + eps);
        (*inv_sigma)[r] = is;
        for (std::int64_t j = 0; j < d; ++j) {
            const double xh = (xr[j] - mean) * is;
            (*xhat)[r * d + j] = xh;
            out->values[r * d + j] = xh * gamma->values[j] + beta->values[j];
        }
    }
    if (should_record(tp, out)) {
        tp.record([x, gamma, beta, out, inv_sigma, xhat, rows, d] {
            if (!out->has_grad()) return;
            const double* g = out->grad.data();
            for (std::int64_t r = 0; r < rows; ++r) {
                const double* gr = g + r * d;
                const double* xh = xhat->data() + r * d;
                if (gamma->requires_grad) {
                    auto& gg = gamma->grad_buf();
                    for (std::int64_t j = 0; j < d; ++j) gg[j] += gr[j] * xh[j];
                }
                if (beta->requires_grad) {
                    auto& gb = beta->grad_buf();
                    for (std::int64_t j = 0; j < d; ++j) gb[j] += gr[j];
                }
                if (x->requires_grad) {
                    auto& gx = x->grad_buf();
                    double s1 = 0.0, s2 = 0.0;
                    for (std::int64_t j = 0; j < d; ++j) {
                        const double gy = gr[j] * gamma->values[j];
                        s1 += gy;
                        s2 += gy * xh[j];
                    }
                    const double is = (*inv_sigma)[r];
                    const double inv_d = 1.0 / static_cast<double>(d);
                    for (std::int64_t j = 0; j < d; ++j) {
                        const double gy = gr[j] * gamma->values[j];
                        gx[r * d + j] += is * (gy - inv_d * s1 - xh[j] * inv_d * s2);
                    }
                }
            }
        });
    }
    return out;
}

Tensor log_softmax(Tape& tp, const Tensor& x) {
    const std::int64_t d = x->cols();
    const std::int64_t rows = x->size() / d;
    auto out = out_like(tp, x->shape, {&x});
    for (std::int64_t r = 0; r < rows; ++r) {
        const double* xr = &x->values[r * d];
        double mx = xr[0];
        for (std::int64_t j = 1; j < d; ++j) mx = std::max(mx, xr[j]);
        double se = 0.0;
        for (std::int64_t j = 0; j < d; ++j) se += std::exp(xr[j] - mx);
        const double lse = mx + std::log(se);
        for (std::int64_t j = 0; j < d; ++j) out->values[r * d + j] = xr[j] - lse;
    }
    if (should_record(tp, out)) {
        tp.record([x, out, rows, d] {
            if (!out->has_grad() || !x->requires_grad) return;
            auto& gx = x->grad_buf();
            for (std::int64_t r = 0; r < rows; ++r) {
                const double* gr = &out->grad[r * d];
                double gsum = 0.0;
                for (std::int64_t j = 0; j < d; ++j) gsum += gr[j];
                for (std::int64_t j = 0; j < d; ++j) {
                    gx[r * d + j] += gr[j] - std::exp(out->values[r * d + j]) * gsum;
                }
            }
        });
    }
    return out;
}

Tensor masked_log_softmax(Tape& tp, const Tensor& x, const std::vector<char>& allowed) {
    require(x->shape.size() == 1, "masked_log_softmax: rank-1 only");
    const std::int64_t n = x->size();
    require(static_cast<std::int64_t>(allowed.size()) == n, "masked_log_softmax: mask size mismatch");
    std::int64_t n_allowed = 0;
    for (char c : allowed) n_allowed += c ? 1 : 0;
    require(n_allowed > 0, "masked_log_softmax: no allowed candidates");
    auto out = out_like(tp, x->shape, {&x});
    double mx = -std::numeric_limits<double>::infinity();
    for (std::int64_t j = 0; j < n; ++j) {
        if (allowed[j] && x->values[j] > mx) mx = x->values[j];
    }
    double se = 0.0;
    for (std::int64_t j = 0; j < n; ++j) {
        if (allowed[j]) se += std::exp(x->values[j] - mx);
    }
    const double lse = mx + std::log(se);
    for (std::int64_t j = 0; j < n; ++j) out->values[j] = allowed[j] ? x->values[j] - lse : kMaskedLogProb;
    if (should_record(tp, out)) {
        tp.record([x, out, allowed, n] {
            if (!out->has_grad() || !x->requires_grad) return;
            auto& gx = x->grad_buf();
            double gsum = 0.0;
            for (std::int64_t j = 0; j < n; ++j) {
                if (allowed[j]) gsum += out->grad[j];
            }
            for (std::int64_t j = 0; j < n; ++j) {
                if (allowed[j]) gx[j] += out->grad[j] - std::exp(out->values[j]) * gsum;
            }
        });
    }
    return out;
}

Tensor row_softmax_masked(Tape& tp, const Tensor& scores, const std::vector<char>* mask) {
    require(scores->shape.size() == 2, "row_softmax_masked: rank-2 required");
    const std::int64_t rows = scores->shape[0], n = scores->shape[1];
    if (mask) require(static_cast<std::int64_t>(mask->size()) == rows * n, "row_softmax_masked: mask size mismatch");
    auto out = out_like(tp, scores->shape, {&scores});
    for (std::int64_t r = 0; r < rows; ++r) {
        const double* xr = &scores->values[r * n];
        const char* mr = mask ? mask->data() + r * n : nullptr;
        double mx = -std::numeric_limits<double>::infinity();
        for (std::int64_t j = 0; j < n; ++j) {
            if ((!mr || mr[j]) && xr[j] > mx) mx = xr[j];
        }
        require(std::isfinite(mx), "row_softmax_masked: row " + std::to_string(r) + " fully masked");
        double se = 0.0;
        for (std::int64_t j = 0; j < n; ++j) {
            if (!mr || mr[j]) se += std::exp(xr[j] - mx);
        }
        for (std::int64_t j = 0; j < n; ++j) {
            out->values[r * n + j] = (!mr || mr[j]) ? std::exp(xr[j] - mx) / se : 0.0;
        }
    }
    if (should_record(tp, out)) {
        tp.record([scores, out, rows, n] {
            if (!out->has_grad() || !scores->requires_grad) return;
            auto& gx = scores->grad_buf();
            for (std::int64_t r = 0; r < rows; ++r) {
                const double* p = &out->values[r * n];
                const double* g = &out->grad[r * n];
                double s = 0.0;
                for (std::int64_t j = 0; j < n; ++j) s += p[j] * g[j];
                for (std::int64_t j = 0; j < n; ++j) gx[r * n + j] += p[j] * (g[j] - s);
            }
        });
    }
    return out;
}

Tensor segment_softmax(Tape& tp, const Tensor& scores, const std::vector<std::int64_t>& offsets) {
    require(scores->shape.size() == 1, "segment_softmax: rank-1 scores required");
    const std::int64_t e = scores->size();
    require(offsets.size() >= 2 && offsets.front() == 0 && offsets.back() == e,
            "segment_softmax: offsets must partition [0,E)");
    for (std::size_t s = 0; s + 1 < offsets.size(); ++s) {
        require(offsets[s] < offsets[s + 1], "segment_softmax: empty segment " + std::to_string(s));
    }
    auto out = out_like(tp, scores->shape, {&scores});
    for (std::size_t s = 0; s + 1 < offsets.size(); ++s) {
        const std::int64_t lo = offsets[s], hi = offsets[s + 1];
        double mx = scores->values[lo];
        for (std::int64_t i = lo + 1; i < hi; ++i) mx = std::max(mx, scores->values[i]);
        double se = 0.0;
        for (std::int64_t i = lo; i < hi; ++i) se += std::exp(scores->values[i] - mx);
        for (std::int64_t i = lo; i < hi; ++i) out->values[i] = std::exp(scores->values[i] - mx) / se;
    }
    if (should_record(tp, out)) {
        tp.record([scores, out, offsets] {
            if (!out->has_grad() || !scores->requires_grad) return;
            auto& gx = scores->grad_buf();
            for (std::size_t s = 0; s + 1 < offsets.size(); ++s) {
                const std::int64_t lo = offsets[s], hi = offsets[s + 1];
                double acc = 0.0;
                for (std::int64_t i = lo; i < hi; ++i) acc += out->values[i] * out->grad[i];
                for (std::int64_t i = lo; i < hi; ++i) gx[i] += out->values[i] * (out->grad[i] - acc);
            }
        });
    }
    return out;
}

Tensor embedding_lookup(Tape& tp, const Tensor& table, const std::vector<std::int64_t>& ids) {
    require(table->shape.size() == 2, "embedding_lookup: table must be rank-2");
    const std::int64_t v = table->shape[0], d = table->shape[1];
    const std::int64_t n = static_cast<std::int64_t>(ids.size());
    require(n > 0, "embedding_lookup: empty id list");
    for (auto id : ids) require(id >= 0 && id < v, "embedding_lookup: id out of range");
    auto out = out_like(tp, {n, d}, {&table});
    for (std::int64_t i = 0; i < n; ++i) {
        std::memcpy(&out->values[i * d], &table->values[ids[i] * d], static_cast<std::size_t>(d) * sizeof(double));
    }
    if (should_record(tp, out)) {
        tp.record([table, out, ids, d] {
            if (!out->has_grad() || !table->requires_grad) return;
            auto& gt = table->grad_buf();
            for (std::size_t i = 0; i < ids.size(); ++i) {
                const double* g = &out->grad[static_cast<std::int64_t>(i) * d];
                double* row = &gt[ids[i] * d];
                for (std::int64_t j = 0; j < d; ++j) row[j] += g[j];
            }
        });
    }
    return out;
}

Tensor cross_entropy_label_smoothing(Tape& tp, const Tensor& logits, const std::vector<std::int64_t>& targets,
                                     double eps) {
    require(logits->shape.size() == 2, "cross_entropy: logits must be rank-2");
    const std::int64_t rows = logits->shape[0], v = logits->shape[1];
    require(static_cast<std::int64_t>(targets.size()) == rows, "cross_entropy: target count mismatch");
    for (auto t : targets) require(t >= 0 && t < v, "cross_entropy: target out of range");
    auto out = out_like(tp, {1}, {&logits});
    auto logp = std::make_shared<std::vector<double>>(logits->values.size());
    double loss = 0.0;
    for (std::int64_t r = 0; r < rows; ++r) {
        const double* xr = &logits->values[r * v];
        double mx = xr[0];
        for (std::int64_t j = 1; j < v; ++j) mx = std::max(mx, xr[j]);
        double se = 0.0;
        for (std::int64_t j = 0; j < v; ++j) se += std::exp(xr[j] - mx);
        const double lse = mx + std::log(se);
        double row_loss = 0.0;
        for (std::int64_t j = 0; j < v; ++j) {
            const double lp = xr[j] - lse;
            (*logp)[r * v + j] = lp;
            row_loss -= (eps / static_cast<double>(v)) * lp;
        }
        row_loss -= (1.0 - eps) * (*logp)[r * v + targets[r]];
        loss += row_loss;
    }
    out->values[0] = loss / static_cast<double>(rows);
    if (should_record(tp, out)) {
        tp.record([logits, out, logp, targets, rows, v, eps] {
            if (!out->has_grad() || !logits->requires_grad) return;
            const double g = out->grad[0] / static_cast<double>(rows);
            auto& gx = logits->grad_buf();
            for (std::int64_t r = 0; r < rows; ++r) {
                for (std::int64_t j = 0; j < v; ++j) {
                    const double p = std::exp((*logp)[r * v + j]);
                    double q = eps / static_cast<double>(v);
                    if (j == targets[r]) q += 1.0 - eps;
                    gx[r * v + j] += g * (p - q);
                }
            }
        });
    }
    return out;
}

std::pair<Tensor, Tensor> lstm_cell(Tape& tp, const Tensor& x, const Tensor& h_prev, const Tensor& c_prev,
                                    const LstmParams& p) {
    require(x->shape.size() == 1 && h_prev->shape.size() == 1 && c_prev->shape.size() == 1,
            "lstm_cell: rank-1 state vectors required");
    const std::int64_t hd = h_prev->size();
    const std::int64_t din = x->size();
    require(c_prev->size() == hd, "lstm_cell: h/c size mismatch");
    require(p.wx->shape[0] == din && p.wx->shape[1] == 4 * hd, "lstm_cell: wx shape mismatch");
    require(p.wh->shape[0] == hd && p.wh->shape[1] == 4 * hd, "lstm_cell: wh shape mismatch");
    require(p.b->size() == 4 * hd, "lstm_cell: bias shape mismatch");

    // Fused cell: a single tape op keeps the per-step footprint small, which
    // matters when the edge predictor unrolls thousands of steps.
    auto h = make_tensor({hd});
    auto c = make_tensor({hd});
    auto gates = std::make_shared<std::vector<double>>(static_cast<std::size_t>(4 * hd));  // post-activation i,f,o,g
    auto tanh_c = std::make_shared<std::vector<double>>(static_cast<std::size_t>(hd));

    std::vector<double> pre(p.b->values);
    for (std::int64_t i = 0; i < din; ++i) {
        const double xv = x->values[i];
        if (xv == 0.0) continue;
        const double* wrow = &p.wx->values[i * 4 * hd];
        for (std::int64_t j = 0; j < 4 * hd; ++j) pre[j] += xv * wrow[j];
    }
    for (std::int64_t i = 0; i < hd; ++i) {
        const double hv = h_prev->values[i];
        if (hv == 0.0) continue;
        const double* wrow = &p.wh->values[i * 4 * hd];
        for (std::int64_t j = 0; j < 4 * hd; ++j) pre[j] += hv * wrow[j];
    }
    for (std::int64_t j = 0; j < hd; ++j) {
        const double gi = 1.0 / (1.0 + std::exp(-pre[j]));
        const double gf = 1.0 / (1.0 + std::exp(-pre[hd + j]));
        const double go = 1.0 / (1.0 + std::exp(-pre[2 * hd + j]));
        const double gc = std::tanh(pre[3 * hd + j]);
        (*gates)[j] = gi;
        (*gates)[hd + j] = gf;
        (*gates)[2 * hd + j] = go;
        (*gates)[3 * hd + j] = gc;
        const double cv = gf * c_prev->values[j] + gi * gc;
        c->values[j] = cv;
        const double tc = std::tanh(cv);
        (*tanh_c)[j] = tc;
        h->values[j] = go * tc;
    }

    const bool rg =
        x->requires_grad || h_prev->requires_grad || c_prev->requires_grad || p.wx->requires_grad ||
        p.wh->requires_grad || p.b->requires_grad;
    h->requires_grad = rg;
    c->requires_grad = rg;
    if (tp.recording() && rg) {
        h->producer = &tp;
        c->producer = &tp;
        tp.record([x, h_prev, c_prev, p, h, c, gates, tanh_c, hd, din] {
            if (!h->has_grad() && !c->has_grad()) return;
            std::vector<double> dpre(static_cast<std::size_t>(4 * hd), 0.0);
            std::vector<double> dcprev_direct(static_cast<std::size_t>(hd), 0.0);
            for (std::int64_t j = 0; j < hd; ++j) {
                const double gi = (*gates)[j], gf = (*gates)[hd + j], go = (*gates)[2 * hd + j],
                             gc = (*gates)[3 * hd + j];
                const double dh = h->has_grad() ? h->grad[j] : 0.0;
                double dc = c->has_grad() ? c->grad[j] : 0.0;
                const double tc = (*tanh_c)[j];
                dc += dh * go * (1.0 - tc * tc);
                dpre[2 * hd + j] = dh * tc * go * (1.0 - go);                    // output gate
                dpre[j] = dc * gc * gi * (1.0 - gi);                             // input gate
                dpre[hd + j] = dc * c_prev->values[j] * gf * (1.0 - gf);         // forget gate
                dpre[3 * hd + j] = dc * gi * (1.0 - gc * gc);                    // candidate
                dcprev_direct[j] = dc * gf;
            }
            if (c_prev->requires_grad) {
                auto& g = c_prev->grad_buf();
                for (std::int64_t j = 0; j < hd; ++j) g[j] += dcprev_direct[j];
            }
            if (p.b->requires_grad) {
                auto& g = p.b->grad_buf();
                for (std::int64_t j = 0; j < 4 * hd; ++j) g[j] += dpre[j];
            }
            if (p.wx->requires_grad) {
                auto& g = p.wx->grad_buf();
                for (std::int64_t i = 0; i < din; ++i) {
                    const double xv = x->values[i];
                    if (xv == 0.0) continue;
                    double* grow = &g[i * 4 * hd];
                    for (std::int64_t j = 0; j < 4 * hd; ++j) grow[j] += xv * dpre[j];
                }
            }
            if (p.wh->requires_grad) {
                auto& g = p.wh->grad_buf();
                for (std::int64_t i = 0; i < hd; ++i) {
                    const double hv = h_prev->values[i];
                    if (hv == 0.0) continue;
                    double* grow = &g[i * 4 * hd];
                    for (std::int64_t j = 0; j < 4 * hd; ++j) grow[j] += hv * dpre[j];
                }
            }
            if (x->requires_grad) {
                auto& g = x->grad_buf();
                for (std::int64_t i = 0; i < din; ++i) {
                    const double* wrow = &p.wx->values[i * 4 * hd];
                    double s = 0.0;
                    for (std::int64_t j = 0; j < 4 * hd; ++j) s += wrow[j] * dpre[j];
                    g[i] += s;
                }
            }
            if (h_prev->requires_grad) {
                auto& g = h_prev->grad_buf();
                for (std::int64_t i = 0; i < hd; ++i) {
                    const double* wrow = &p.wh->values[i * 4 * hd];
                    double s = 0.0;
                    for (std::int64_t j = 0; j < 4 * hd; ++j) s += wrow[j] * dpre[j];
                    g[i] += s;
                }
            }
        });
    }
    return {h, c};
}

Tensor row(Tape& tp, const Tensor& m, std::int64_t r) {
    require(m->shape.size() == 2, "row: rank-2 tensor required");
    require(r >= 0 && r < m->shape[0], "row: index out of range");
    const std::int64_t d = m->shape[1];
    auto out = out_like(tp, {d}, {&m});
    std::memcpy(out->values.data(), &m->values[r * d], static_cast<std::size_t>(d) * sizeof(double));
    if (should_record(tp, out)) {
        tp.record([m, out, r, d] {
            if (!out->has_grad() || !m->requires_grad) return;
            double* g = &m->grad_buf()[r * d];
            for (std::int64_t j = 0; j < d; ++j) g[j] += out->grad[j];
        });
    }
    return out;
}

Tensor rows(Tape& tp, const Tensor& m, std::int64_t lo, std::int64_t hi) {
    require(m->shape.size() == 2, "rows: rank-2 tensor required");
    require(0 <= lo && lo < hi && hi <= m->shape[0], "rows: bad range");
    const std::int64_t d = m->shape[1];
    auto out = out_like(tp, {hi - lo, d}, {&m});
    std::memcpy(out->values.data(), &m->values[lo * d], out->values.size() * sizeof(double));
    if (should_record(tp, out)) {
        tp.record([m, out, lo, d] {
            if (!out->has_grad() || !m->requires_grad) return;
            auto& g = m->grad_buf();
            for (std::size_t i = 0; i < out->grad.size(); ++i) g[lo * d + i] += out->grad[i];
        });
    }
    return out;
}

Tensor reshape(Tape& tp, const Tensor& t, std::vector<std::int64_t> shape) {
    require(shape_product(shape) == t->size(), "reshape: element count mismatch");
    auto out = out_like(tp, std::move(shape), {&t});
    out->values = t->values;
    if (should_record(tp, out)) {
        tp.record([t, out] {
            if (!out->has_grad() || !t->requires_grad) return;
            auto& g = t->grad_buf();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += out->grad[i];
        });
    }
    return out;
}

Tensor masked_entropy(Tape& tp, const Tensor& logp, const std::vector<char>& allowed) {
    require(logp->shape.size() == 1, "masked_entropy: rank-1 only");
    require(allowed.size() == logp->values.size(), "masked_entropy: mask size mismatch");
    auto out = out_like(tp, {1}, {&logp});
    double h = 0.0;
    for (std::size_t j = 0; j < allowed.size(); ++j) {
        if (allowed[j]) h -= std::exp(logp->values[j]) * logp->values[j];
    }
    out->values[0] = h;
    if (should_record(tp, out)) {
        tp.record([logp, out, allowed] {
            if (!out->has_grad() || !logp->requires_grad) return;
            auto& g = logp->grad_buf();
            const double go = out->grad[0];
            for (std::size_t j = 0; j < allowed.size(); ++j) {
                if (allowed[j]) g[j] -= go * std::exp(logp->values[j]) * (logp->values[j] + 1.0);
            }
        });
    }
    return out;
}

Tensor concat_rows(Tape& tp, const std::vector<Tensor>& parts) {
    require(!parts.empty(), "concat_rows: no inputs");
    const std::int64_t cols = parts[0]->cols();
    std::int64_t rows = 0;
    bool rg = false;
    for (const auto& p : parts) {
        require(p->cols() == cols, "concat_rows: column mismatch");
        rows += p->rows();
        rg = rg || p->requires_grad;
    }
    auto out = make_tensor({rows, cols});
    out->requires_grad = rg;
    if (tp.recording() && rg) out->producer = &tp;
    std::int64_t at = 0;
    for (const auto& p : parts) {
        std::memcpy(&out->values[at], p->values.data(), p->values.size() * sizeof(double));
        at += p->size();
    }
    if (tp.recording() && rg) {
        tp.record([parts, out] {
            if (!out->has_grad()) return;
            std::int64_t at = 0;
            for (const auto& p : parts) {
                if (p->requires_grad) {
                    auto& g = p->grad_buf();
                    for (std::size_t i = 0; i < g.size(); ++i) g[i] += out->grad[at + i];
                }
                at += p->size();
            }
        });
    }
    return out;
}

double mean_gold_logprob(const Tensor& logits, const std::vector<std::int64_t>& targets) {
    if (logits->shape.size() != 2) throw NumericError("mean_gold_logprob: logits must be rank-2");
    const std::int64_t rows = logits->shape[0], v = logits->shape[1];
    if (static_cast<std::int64_t>(targets.size()) != rows)
        throw NumericError("mean_gold_logprob: output rows " + std::to_string(rows) + " vs gold length " +
                           std::to_string(targets.size()));
    double total = 0.0;
    for (std::int64_t r = 0; r < rows; ++r) {
        const double* xr = &logits->values[r * v];
        double mx = xr[0];
        for (std::int64_t j = 1; j < v; ++j) mx = std::max(mx, xr[j]);
        double se = 0.0;
        for (std::int64_t j = 0; j < v; ++j) se += std::exp(xr[j] - mx);
        total += xr[targets[r]] - (mx + std::log(se));
    }
    return total / static_cast<double>(rows);
}

void check_finite(const Tensor& t, const char* what) {
    if (!t->all_finite()) throw NumericError(std::string("non-finite values in ") + what);
}

}  // namespace sac::ops
