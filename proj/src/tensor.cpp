#include "vpred/tensor.hpp"

#include <atomic>
#include <cmath>
#include <sstream>

namespace vpred {

namespace {
std::atomic<bool> g_finite_checks{true};
}

bool finite_checks_enabled() { return g_finite_checks.load(std::memory_order_relaxed); }
void set_finite_checks(bool enabled) { g_finite_checks.store(enabled, std::memory_order_relaxed); }

int64_t shape_numel(const std::vector<int>& shape) {
    int64_t n = 1;
    for (int d : shape) {
        require(d > 0, strfmt("tensor dims must be positive, got %d", d));
        n *= d;
    }
    return n;
}

Tensor::Tensor(std::vector<int> shape, float fill) : shape_(std::move(shape)) {
    data_.assign(static_cast<size_t>(shape_numel(shape_)), fill);
}

Tensor Tensor::from_data(std::vector<int> shape, std::vector<float> data) {
    Tensor t;
    int64_t n = shape_numel(shape);
    require(n == static_cast<int64_t>(data.size()),
            strfmt("from_data: shape wants %lld values, got %zu", static_cast<long long>(n), data.size()));
    t.shape_ = std::move(shape);
    t.data_ = std::move(data);
    return t;
}

Tensor Tensor::randn(std::vector<int> shape, Rng& rng, float stddev) {
    Tensor t(std::move(shape));
    for (auto& v : t.data_) {
        v = rng.normal_f() * stddev;
    }
    return t;
}

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape_.size(); ++i) {
        os << shape_[i] << (i + 1 < shape_.size() ? "," : "");
    }
    os << "]";
    return os.str();
}

void Tensor::check_finite(const char* where) const {
    for (size_t i = 0; i < data_.size(); ++i) {
        if (!std::isfinite(data_[i])) {
            fail(strfmt("%s: non-finite value %g at flat index %zu (shape %s)", where,
                        static_cast<double>(data_[i]), i, shape_str().c_str()));
        }
    }
}

double Tensor::sum() const {
    double s = 0.0;
    for (float v : data_) {
        s += v;
    }
    return s;
}

double Tensor::sum_squares() const {
    double s = 0.0;
    for (float v : data_) {
        s += static_cast<double>(v) * v;
    }
    return s;
}

float Tensor::min_value() const {
    float m = data_.empty() ? 0.0f : data_[0];
    for (float v : data_) {
        m = std::min(m, v);
    }
    return m;
}

float Tensor::max_value() const {
    float m = data_.empty() ? 0.0f : data_[0];
    for (float v : data_) {
        m = std::max(m, v);
    }
    return m;
}

void Tensor::fill(float v) { data_.assign(data_.size(), v); }

void Tensor::add_scaled(const Tensor& other, float scale) {
    require(same_shape(other), "add_scaled: shape mismatch " + shape_str() + " vs " + other.shape_str());
    for (size_t i = 0; i < data_.size(); ++i) {
        data_[i] += scale * other.data_[i];
    }
}

void Tensor::scale_inplace(float factor) {
    for (auto& v : data_) {
        v *= factor;
    }
}

}  // namespace vpred
