#include "sac/param_store.hpp"

#include <cmath>

namespace sac {

Tensor ParamStore::add(const std::string& name, Tensor t) {
    if (params_.count(name)) throw ConfigError("duplicate parameter name: " + name);
    t->requires_grad = true;
    params_[name] = t;
    return t;
}

Tensor ParamStore::get(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw ConfigError("unknown parameter: " + name);
    return it->second;
}

std::int64_t ParamStore::total_elements() const {
    std::int64_t n = 0;
    for (const auto& [name, t] : params_) n += t->size();
    return n;
}

void ParamStore::zero_grads() {
    for (auto& [name, t] : params_) t->zero_grad();
}

double ParamStore::grad_global_norm() const {
    double ss = 0.0;
    for (const auto& [name, t] : params_) {
        for (double g : t->grad) ss += g * g;
    }
    return std::sqrt(ss);
}

void ParamStore::clip_global_norm(double max_norm) {
    const double norm = grad_global_norm();
    if (norm <= max_norm || norm == 0.0) return;
    const double s = max_norm / norm;
    for (auto& [name, t] : params_) {
        for (double& g : t->grad) g *= s;
    }
}

void ParamStore::adam_step(double lr, double beta1, double beta2, double eps) {
    for (const auto& [name, t] : params_) {
        if (!t->has_grad()) throw NumericError("adam_step: missing gradient for parameter " + name);
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t_));
    for (auto& [name, t] : params_) {
        auto& slot = slots_[name];
        if (slot.m.empty()) {
            slot.m.assign(t->values.size(), 0.0);
            slot.v.assign(t->values.size(), 0.0);
        }
        for (std::size_t i = 0; i < t->values.size(); ++i) {
            const double g = t->grad[i];
            slot.m[i] = beta1 * slot.m[i] + (1.0 - beta1) * g;
            slot.v[i] = beta2 * slot.v[i] + (1.0 - beta2) * g * g;
            const double mhat = slot.m[i] / bc1;
            const double vhat = slot.v[i] / bc2;
            t->values[i] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
        t->zero_grad();
    }
}

void init_glorot(Tensor& t, Rng& rng, std::int64_t fan_in, std::int64_t fan_out) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (auto& v : t->values) v = rng.uniform(-bound, bound);
}

void init_uniform(Tensor& t, Rng& rng, double lo, double hi) {
    for (auto& v : t->values) v = rng.uniform(lo, hi);
}

}  // namespace sac
