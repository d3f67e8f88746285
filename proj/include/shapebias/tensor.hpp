#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "shapebias/rng.hpp"

namespace shapebias {

// Dense row-major n-d array. The whole pipeline runs on TensorT<double>;
// TensorT<float> is available for storage and for the speed-oriented kernel
// variants.
template <typename T>
class TensorT {
  public:
    TensorT() = default;

    explicit TensorT(std::vector<int64_t> shape) : shape_(std::move(shape)) {
        data_.assign(static_cast<size_t>(count(shape_)), T(0));
    }

    TensorT(std::vector<int64_t> shape, std::vector<T> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (count(shape_) != static_cast<int64_t>(data_.size())) {
            throw std::invalid_argument("tensor: shape " + shape_str() + " does not match " +
                                        std::to_string(data_.size()) + " values");
        }
    }

    static TensorT full(std::vector<int64_t> shape, T value) {
        TensorT t(std::move(shape));
        for (auto& v : t.data_) v = value;
        return t;
    }

    static TensorT uniform(std::vector<int64_t> shape, RngStream& rng, T lo = T(0), T hi = T(1)) {
        TensorT t(std::move(shape));
        for (auto& v : t.data_) v = static_cast<T>(rng.uniform(lo, hi));
        return t;
    }

    const std::vector<int64_t>& shape() const { return shape_; }
    size_t rank() const { return shape_.size(); }
    int64_t dim(size_t i) const { return shape_.at(i); }
    int64_t numel() const { return static_cast<int64_t>(data_.size()); }
    bool empty() const { return data_.empty(); }

    std::span<T> data() { return data_; }
    std::span<const T> data() const { return data_; }
    T* raw() { return data_.data(); }
    const T* raw() const { return data_.data(); }

    T& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
    const T& operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

    // Value with a new shape of identical element count.
    TensorT reshaped(std::vector<int64_t> shape) const {
        if (count(shape) != numel()) {
            throw std::invalid_argument("reshape: element count mismatch");
        }
        return TensorT(std::move(shape), data_);
    }

    bool same_shape(const TensorT& o) const { return shape_ == o.shape_; }

    bool all_finite() const {
        for (const T& v : data_) {
            if (!std::isfinite(static_cast<double>(v))) return false;
        }
        return true;
    }

    std::string shape_str() const {
        std::ostringstream os;
        os << '[';
        for (size_t i = 0; i < shape_.size(); ++i) os << (i ? "x" : "") << shape_[i];
        os << ']';
        return os.str();
    }

    static int64_t count(const std::vector<int64_t>& shape) {
        int64_t n = 1;
        for (int64_t d : shape) {
            if (d <= 0) throw std::invalid_argument("tensor: non-positive dimension");
            n *= d;
        }
        return n;
    }

  private:
    std::vector<int64_t> shape_;
    std::vector<T> data_;
};

using Tensor = TensorT<double>;
using TensorF = TensorT<float>;

template <typename T>
bool bit_equal(const TensorT<T>& a, const TensorT<T>& b) {
    if (!a.same_shape(b)) return false;
    for (int64_t i = 0; i < a.numel(); ++i) {
        if (a[i] != b[i]) return false;
    }
    return true;
}

template <typename T>
double max_abs_diff(const TensorT<T>& a, const TensorT<T>& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("max_abs_diff: shape mismatch");
    double m = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i) {
        m = std::max(m, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
    }
    return m;
}

} // namespace shapebias
