#pragma once

#include <map>
#include <string>
#include <vector>

#include "sac/rng.hpp"
#include "sac/tensor.hpp"

namespace sac {

// Named parameter map with Adam slots. Iteration order is deterministic
// (sorted by name), which fixes the update and serialization order.
class ParamStore {
  public:
    struct Slots {
        std::vector<double> m;
        std::vector<double> v;
    };

    // Registers a freshly created tensor. Throws on duplicate names.
    Tensor add(const std::string& name, Tensor t);
    // Registers a tensor owned elsewhere (shared parameters).
    Tensor share(const std::string& name, Tensor t) { return add(name, std::move(t)); }

    Tensor get(const std::string& name) const;
    bool contains(const std::string& name) const { return params_.count(name) > 0; }
    const std::map<std::string, Tensor>& params() const { return params_; }
    std::int64_t total_elements() const;

    void zero_grads();
    double grad_global_norm() const;
    // Scales all gradients so the global norm does not exceed max_norm.
    void clip_global_norm(double max_norm);

    // One Adam update with bias correction; gradients are zeroed afterwards.
    // Throws if any parameter has no populated gradient buffer.
    void adam_step(double lr, double beta1, double beta2, double eps);

    std::int64_t step_count() const { return t_; }

  private:
    std::map<std::string, Tensor> params_;
    std::map<std::string, Slots> slots_;
    std::int64_t t_ = 0;
};

// Uniform in +-sqrt(6/(fan_in+fan_out)). Biases are zero-initialized.
void init_glorot(Tensor& t, Rng& rng, std::int64_t fan_in, std::int64_t fan_out);
void init_uniform(Tensor& t, Rng& rng, double lo, double hi);

}  // namespace sac
