#pragma once

#include <cstdint>

#include "sac/real.hpp"
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace sac {

// Errors surfaced to the CLI exit-code mapping.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Live/peak element counters for activation-memory instrumentation.
struct AllocStats {
    std::int64_t live = 0;
    std::int64_t peak = 0;
    void on_alloc(std::int64_t n) {
        live += n;
        if (live > peak) peak = live;
    }
    void on_free(std::int64_t n) { live -= n; }
    // Restart peak tracking from the current live count.
    void reset_peak() { peak = live; }
};

AllocStats& alloc_stats();

class Tape;

class TensorData {
  public:
    std::vector<std::int64_t> shape;
    std::vector<real> values;
    std::vector<real> grad;  // empty until first accumulation
    bool requires_grad = false;
    const Tape* producer = nullptr;

    TensorData(std::vector<std::int64_t> shape_, bool requires_grad_);
    ~TensorData();
    TensorData(const TensorData&) = delete;
    TensorData& operator=(const TensorData&) = delete;

    std::int64_t size() const { return static_cast<std::int64_t>(values.size()); }
    std::int64_t rows() const { return shape.empty() ? 1 : shape[0]; }
    std::int64_t cols() const { return shape.size() < 2 ? size() / rows() : shape[1]; }

    real& at(std::int64_t i) { return values[static_cast<std::size_t>(i)]; }
    real at(std::int64_t i) const { return values[static_cast<std::size_t>(i)]; }
    real& at(std::int64_t r, std::int64_t c) { return values[static_cast<std::size_t>(r * cols() + c)]; }
    real at(std::int64_t r, std::int64_t c) const { return values[static_cast<std::size_t>(r * cols() + c)]; }

    // Ensures the grad buffer exists (zero-filled) and returns it.
    std::vector<real>& grad_buf();
    bool has_grad() const { return !grad.empty(); }
    void zero_grad();
    bool all_finite() const;
};

using Tensor = std::shared_ptr<TensorData>;

Tensor make_tensor(std::vector<std::int64_t> shape, bool requires_grad = false);
Tensor make_tensor(std::vector<std::int64_t> shape, std::vector<double> vals, bool requires_grad = false);
Tensor make_tensor(std::vector<std::int64_t> shape, std::initializer_list<double> vals, bool requires_grad = false);
Tensor scalar_tensor(double v);

std::int64_t shape_product(const std::vector<std::int64_t>& shape);
std::string shape_str(const std::vector<std::int64_t>& shape);

// Ordered record of executed differentiable operations. Replaying it backward
// visits operations in exact reverse execution order. backward() may be called
// once per forward pass; a second call without a new tape is an error.
class Tape {
  public:
    explicit Tape(bool recording = true) : recording_(recording) {}

    bool recording() const { return recording_; }
    std::size_t op_count() const { return ops_.size(); }

    void record(std::function<void()> backward_fn) {
        if (recording_) ops_.push_back(std::move(backward_fn));
    }

    // Seeds d(loss)/d(loss) = 1 and accumulates gradients into every
    // requires_grad tensor reachable from the recorded ops.
    void backward(const Tensor& loss);

  private:
    std::vector<std::function<void()>> ops_;
    bool recording_;
    bool consumed_ = false;
};

}  // namespace sac
