#include "efc/tensor.hpp"

#include <cmath>
#include <cstring>
#include <functional>
#include <numeric>
#include <sstream>

namespace efc {

int64_t shape_numel(const std::vector<int64_t>& shape) {
    int64_t n = 1;
    for (int64_t e : shape) {
        if (e <= 0) throw config_error("tensor extents must be positive, got " + shape_str(shape));
        n *= e;
    }
    return n;
}

std::string shape_str(const std::vector<int64_t>& shape) {
    std::ostringstream os;
    os << "(";
    for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ")";
    return os.str();
}

Tensor::Tensor(std::vector<int64_t> shape, bool requires_grad) : shape_(std::move(shape)) {
    int64_t n = shape_numel(shape_);
    buf_ = std::make_shared<Buffer>();
    buf_->v.assign(static_cast<size_t>(n), 0.0f);
    buf_->rg = requires_grad;
    if (requires_grad) buf_->g.assign(static_cast<size_t>(n), 0.0f);
}

Tensor Tensor::zeros(std::vector<int64_t> shape, bool requires_grad) {
    return Tensor(std::move(shape), requires_grad);
}

Tensor Tensor::full(std::vector<int64_t> shape, float value, bool requires_grad) {
    Tensor t(std::move(shape), requires_grad);
    std::fill(t.buf_->v.begin(), t.buf_->v.end(), value);
    return t;
}

Tensor Tensor::from(std::vector<int64_t> shape, std::vector<float> values, bool requires_grad) {
    int64_t n = shape_numel(shape);
    if (static_cast<int64_t>(values.size()) != n) {
        throw config_error("value count " + std::to_string(values.size()) + " does not match shape " +
                           shape_str(shape));
    }
    Tensor t;
    t.shape_ = std::move(shape);
    t.buf_ = std::make_shared<Buffer>();
    t.buf_->v = std::move(values);
    t.buf_->rg = requires_grad;
    if (requires_grad) t.buf_->g.assign(static_cast<size_t>(n), 0.0f);
    return t;
}

Tensor Tensor::scalar(float value, bool requires_grad) {
    return from({1}, {value}, requires_grad);
}

int64_t Tensor::numel() const {
    return buf_ ? static_cast<int64_t>(buf_->v.size()) : 0;
}

int64_t Tensor::dim(int i) const {
    if (i < 0 || i >= static_cast<int>(shape_.size()))
        throw config_error("dim index out of range for shape " + shape_str(shape_));
    return shape_[static_cast<size_t>(i)];
}

float* Tensor::data() { return buf_->v.data(); }
const float* Tensor::data() const { return buf_->v.data(); }

float* Tensor::grad() {
    if (!buf_->rg) throw config_error("grad() on a tensor without requires_grad");
    return buf_->g.data();
}

const float* Tensor::grad() const {
    if (!buf_->rg) throw config_error("grad() on a tensor without requires_grad");
    return buf_->g.data();
}

bool Tensor::requires_grad() const { return buf_ && buf_->rg; }

void Tensor::set_requires_grad(bool rg) {
    buf_->rg = rg;
    if (rg && buf_->g.size() != buf_->v.size()) {
        buf_->g.assign(buf_->v.size(), 0.0f);
    }
    if (!rg) buf_->g.clear();
}

void Tensor::zero_grad() {
    if (buf_ && buf_->rg) std::fill(buf_->g.begin(), buf_->g.end(), 0.0f);
}

Tensor Tensor::clone() const {
    Tensor t;
    t.shape_ = shape_;
    t.buf_ = std::make_shared<Buffer>(*buf_);
    return t;
}

Tensor Tensor::reshaped(std::vector<int64_t> shape) const {
    if (shape_numel(shape) != numel()) {
        throw config_error("reshape " + shape_str(shape_) + " -> " + shape_str(shape) +
                           " changes element count");
    }
    Tensor t;
    t.shape_ = std::move(shape);
    t.buf_ = buf_;
    return t;
}

float Tensor::item() const {
    if (numel() != 1) throw config_error("item() on tensor with " + std::to_string(numel()) + " elements");
    return buf_->v[0];
}

int64_t Tensor::flat_index(std::initializer_list<int64_t> idx) const {
    if (idx.size() != shape_.size())
        throw config_error("index rank mismatch for shape " + shape_str(shape_));
    int64_t flat = 0;
    size_t k = 0;
    for (int64_t i : idx) {
        if (i < 0 || i >= shape_[k]) throw config_error("index out of bounds for shape " + shape_str(shape_));
        flat = flat * shape_[k] + i;
        ++k;
    }
    return flat;
}

float& Tensor::at(std::initializer_list<int64_t> idx) {
    return buf_->v[static_cast<size_t>(flat_index(idx))];
}

float Tensor::at(std::initializer_list<int64_t> idx) const {
    return buf_->v[static_cast<size_t>(flat_index(idx))];
}

void Tensor::ensure_finite(const char* what) const {
    // exponent-bits scan (vectorizable); NaN and Inf both have all-ones exponents
    const float* p = buf_->v.data();
    const size_t n = buf_->v.size();
    uint32_t any = 0;
    for (size_t i = 0; i < n; ++i) {
        uint32_t bits;
        std::memcpy(&bits, &p[i], 4);
        any |= static_cast<uint32_t>((bits & 0x7F800000u) == 0x7F800000u);
    }
    if (any) {
        for (size_t i = 0; i < n; ++i) {
            if (!std::isfinite(p[i]))
                throw numeric_error(std::string(what) + ": non-finite value at flat index " +
                                    std::to_string(i));
        }
    }
}

void Tape::backward(Tensor& loss) {
    if (loss.numel() != 1) throw config_error("backward() expects a scalar loss");
    if (!loss.requires_grad()) throw config_error("backward() on a loss without grad");
    loss.grad()[0] = 1.0f;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
}

}  // namespace efc
