#include "sac/tensor.hpp"

#include <cmath>
#include <sstream>

namespace sac {

AllocStats& alloc_stats() {
    static AllocStats stats;
    return stats;
}

std::int64_t shape_product(const std::vector<std::int64_t>& shape) {
    std::int64_t p = 1;
    for (auto d : shape) p *= d;
    return p;
}

std::string shape_str(const std::vector<std::int64_t>& shape) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << "x";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

TensorData::TensorData(std::vector<std::int64_t> shape_, bool requires_grad_)
    : shape(std::move(shape_)), requires_grad(requires_grad_) {
    for (auto d : shape) {
        if (d <= 0) throw NumericError("tensor dimension must be positive, got shape " + shape_str(shape));
    }
    values.assign(static_cast<std::size_t>(shape_product(shape)), 0.0);
    alloc_stats().on_alloc(size());
}

TensorData::~TensorData() {
    alloc_stats().on_free(size() + static_cast<std::int64_t>(grad.size()));
}

std::vector<real>& TensorData::grad_buf() {
    if (grad.empty()) {
        grad.assign(values.size(), 0.0);
        alloc_stats().on_alloc(size());
    }
    return grad;
}

void TensorData::zero_grad() {
    if (!grad.empty()) grad.assign(grad.size(), 0.0);
}

bool TensorData::all_finite() const {
    for (real v : values) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

Tensor make_tensor(std::vector<std::int64_t> shape, bool requires_grad) {
    return std::make_shared<TensorData>(std::move(shape), requires_grad);
}

Tensor make_tensor(std::vector<std::int64_t> shape, std::vector<double> vals, bool requires_grad) {
    auto t = std::make_shared<TensorData>(std::move(shape), requires_grad);
    if (static_cast<std::int64_t>(vals.size()) != t->size()) {
        throw NumericError("value count " + std::to_string(vals.size()) + " does not match shape " +
                           shape_str(t->shape));
    }
    t->values = std::move(vals);
    return t;
}

Tensor make_tensor(std::vector<std::int64_t> shape, std::initializer_list<double> vals, bool requires_grad) {
    return make_tensor(std::move(shape), std::vector<double>(vals), requires_grad);
}

Tensor scalar_tensor(double v) { return make_tensor({1}, std::vector<double>{v}); }

void Tape::backward(const Tensor& loss) {
    if (!recording_) throw NumericError("backward called on a non-recording tape");
    if (consumed_) throw NumericError("backward called twice on the same tape");
    if (loss->size() != 1) throw NumericError("backward requires a scalar loss, got shape " + shape_str(loss->shape));
    if (loss->producer != this) throw NumericError("backward called on a tensor not produced by this tape");
    consumed_ = true;
    loss->grad_buf()[0] += 1.0;
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
}

}  // namespace sac
