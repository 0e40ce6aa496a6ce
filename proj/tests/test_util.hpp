#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "sac/ops.hpp"
#include "sac/rng.hpp"
#include "sac/tensor.hpp"

namespace sac::test {

inline Tensor rand_tensor(Rng& rng, std::vector<std::int64_t> shape, bool requires_grad = true, double lo = -1.0,
                          double hi = 1.0) {
    auto t = make_tensor(std::move(shape), requires_grad);
    for (auto& v : t->values) v = rng.uniform(lo, hi);
    return t;
}

// Central finite-difference check of d(loss)/d(input) for every element of
// every requires_grad input. `forward` must rebuild the computation from the
// current input values on the given tape and return a scalar.
// Returns the worst relative error (floored denominator).
inline double gradcheck(const std::vector<Tensor>& inputs, const std::function<Tensor(Tape&)>& forward,
                        double eps = 1e-6) {
    Tape tape;
    Tensor loss = forward(tape);
    tape.backward(loss);
    std::vector<std::vector<double>> analytic;
    for (const auto& in : inputs) {
        analytic.push_back(in->has_grad() ? in->grad : std::vector<double>(in->values.size(), 0.0));
        in->zero_grad();
    }
    double worst = 0.0;
    for (std::size_t t = 0; t < inputs.size(); ++t) {
        auto& in = inputs[t];
        if (!in->requires_grad) continue;
        for (std::size_t i = 0; i < in->values.size(); ++i) {
            const double orig = in->values[i];
            in->values[i] = orig + eps;
            Tape tp;  // throwaway forward-only tapes
            const double lp = forward(tp)->values[0];
            in->values[i] = orig - eps;
            Tape tm;
            const double lm = forward(tm)->values[0];
            in->values[i] = orig;
            const double fd = (lp - lm) / (2.0 * eps);
            const double an = analytic[t][i];
            const double err = std::abs(fd - an) / std::max({1e-2, std::abs(fd), std::abs(an)});
            worst = std::max(worst, err);
        }
    }
    return worst;
}

}  // namespace sac::test
