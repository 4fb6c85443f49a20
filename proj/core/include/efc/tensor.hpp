#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "efc/errors.hpp"

namespace efc {

// Dense row-major f32 tensor with an optional same-shape gradient buffer.
// Copies are shallow (shared buffer); clone() makes a deep copy. A tensor
// created with requires_grad participates in reverse-mode differentiation
// through the Tape recorded by the ops in ops.hpp.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int64_t> shape, bool requires_grad = false);

    static Tensor zeros(std::vector<int64_t> shape, bool requires_grad = false);
    static Tensor full(std::vector<int64_t> shape, float value, bool requires_grad = false);
    static Tensor from(std::vector<int64_t> shape, std::vector<float> values, bool requires_grad = false);
    static Tensor scalar(float value, bool requires_grad = false);

    bool defined() const { return buf_ != nullptr; }
    const std::vector<int64_t>& shape() const { return shape_; }
    int64_t ndim() const { return static_cast<int64_t>(shape_.size()); }
    int64_t numel() const;
    int64_t dim(int i) const;

    float* data();
    const float* data() const;
    float* grad();
    const float* grad() const;

    bool requires_grad() const;
    void set_requires_grad(bool rg);
    void zero_grad();

    Tensor clone() const;
    // Same buffer, new shape (element count must match). Grad is shared too.
    Tensor reshaped(std::vector<int64_t> shape) const;

    float item() const;  // numel()==1 only
    float& at(std::initializer_list<int64_t> idx);
    float at(std::initializer_list<int64_t> idx) const;

    // Throws numeric_error naming `what` if any element is NaN/Inf.
    void ensure_finite(const char* what) const;

private:
    struct Buffer {
        std::vector<float> v;
        std::vector<float> g;  // empty unless requires_grad
        bool rg = false;
    };
    std::vector<int64_t> shape_;
    std::shared_ptr<Buffer> buf_;

    int64_t flat_index(std::initializer_list<int64_t> idx) const;
};

int64_t shape_numel(const std::vector<int64_t>& shape);
std::string shape_str(const std::vector<int64_t>& shape);

// Records backward closures during forward passes; backward() runs them in
// reverse. One tape per training step; pass nullptr to ops for inference.
class Tape {
public:
    void record(std::function<void()> fn) { nodes_.push_back(std::move(fn)); }
    // Seeds d(loss)/d(loss)=1 and propagates. `loss` must be scalar with grad.
    void backward(Tensor& loss);
    void clear() { nodes_.clear(); }
    size_t size() const { return nodes_.size(); }

private:
    std::vector<std::function<void()>> nodes_;
};

}  // namespace efc
