#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vpred/common.hpp"
#include "vpred/rng.hpp"

namespace vpred {

// Dense row-major float32 tensor. Keeps value semantics: ops return fresh
// tensors, nothing aliases.
class Tensor {
  public:
    Tensor() = default;
    explicit Tensor(std::vector<int> shape, float fill = 0.0f);

    static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }
    static Tensor full(std::vector<int> shape, float v) { return Tensor(std::move(shape), v); }
    static Tensor from_data(std::vector<int> shape, std::vector<float> data);
    static Tensor randn(std::vector<int> shape, Rng& rng, float stddev = 1.0f);

    int ndim() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
    const std::vector<int>& shape() const { return shape_; }
    int64_t numel() const { return static_cast<int64_t>(data_.size()); }
    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    float* data() { return data_.data(); }
    const float* data() const { return data_.data(); }
    std::vector<float>& vec() { return data_; }
    const std::vector<float>& vec() const { return data_; }

    float& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
    float operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

    // 4D accessors (N,C,H,W); bounds are the caller's responsibility.
    float& at(int n, int c, int h, int w) {
        return data_[static_cast<size_t>(((static_cast<int64_t>(n) * shape_[1] + c) * shape_[2] + h) * shape_[3] + w)];
    }
    float at(int n, int c, int h, int w) const {
        return data_[static_cast<size_t>(((static_cast<int64_t>(n) * shape_[1] + c) * shape_[2] + h) * shape_[3] + w)];
    }
    float* ptr(int n, int c, int h, int w) {
        return data_.data() + ((static_cast<int64_t>(n) * shape_[1] + c) * shape_[2] + h) * shape_[3] + w;
    }
    const float* ptr(int n, int c, int h, int w) const {
        return data_.data() + ((static_cast<int64_t>(n) * shape_[1] + c) * shape_[2] + h) * shape_[3] + w;
    }

    std::string shape_str() const;

    // NaN/Inf anywhere is an error state; `where` names the op for the message.
    void check_finite(const char* where) const;

    double sum() const;
    double sum_squares() const;
    float min_value() const;
    float max_value() const;

    void fill(float v);
    void add_scaled(const Tensor& other, float scale);  // *this += scale * other
    void scale_inplace(float factor);

  private:
    std::vector<int> shape_;
    std::vector<float> data_;
};

// Global switch for per-op finite checks. On by default; the training loop
// turns it off for throughput and checks the loss scalar instead.
bool finite_checks_enabled();
void set_finite_checks(bool enabled);

int64_t shape_numel(const std::vector<int>& shape);

}  // namespace vpred
