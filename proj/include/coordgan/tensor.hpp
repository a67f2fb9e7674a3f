#pragma once

#include <cstdint>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "coordgan/rng.hpp"

namespace coordgan {

using Shape = std::vector<int64_t>;

inline int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int64_t d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "(";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << ")";
    return os.str();
}

// Dense row-major tensor with shared storage. Ops always allocate fresh
// outputs; reshape is the only aliasing operation.
template <class T>
class TensorT {
public:
    TensorT() = default;

    explicit TensorT(Shape shape)
        : shape_(std::move(shape)),
          data_(std::make_shared<std::vector<T>>(size_t(shape_numel(shape_)), T(0))) {}

    static TensorT zeros(Shape shape) { return TensorT(std::move(shape)); }

    static TensorT full(Shape shape, T v) {
        TensorT t(std::move(shape));
        std::fill(t.data(), t.data() + t.numel(), v);
        return t;
    }

    static TensorT scalar(T v) { return full({1}, v); }

    static TensorT from(Shape shape, std::vector<T> values) {
        if (shape_numel(shape) != int64_t(values.size()))
            throw std::invalid_argument("tensor: value count does not match shape " + shape_str(shape));
        TensorT t;
        t.shape_ = std::move(shape);
        t.data_ = std::make_shared<std::vector<T>>(std::move(values));
        return t;
    }

    static TensorT randn(Shape shape, Rng& rng, T stddev = T(1)) {
        TensorT t(std::move(shape));
        T* p = t.data();
        for (int64_t i = 0, n = t.numel(); i < n; ++i) p[i] = T(rng.normal()) * stddev;
        return t;
    }

    static TensorT rand_uniform(Shape shape, Rng& rng, T lo, T hi) {
        TensorT t(std::move(shape));
        T* p = t.data();
        for (int64_t i = 0, n = t.numel(); i < n; ++i) p[i] = T(rng.uniform(double(lo), double(hi)));
        return t;
    }

    bool defined() const { return data_ != nullptr; }
    const Shape& shape() const { return shape_; }
    int ndim() const { return int(shape_.size()); }
    int64_t dim(int i) const { return shape_[size_t(i)]; }
    int64_t numel() const { return data_ ? int64_t(data_->size()) : 0; }

    T* data() { return data_->data(); }
    const T* data() const { return data_->data(); }
    T& operator[](int64_t i) { return (*data_)[size_t(i)]; }
    const T& operator[](int64_t i) const { return (*data_)[size_t(i)]; }

    // Aliasing view with a new shape of equal element count.
    TensorT reshaped(Shape shape) const {
        if (shape_numel(shape) != numel())
            throw std::invalid_argument("reshape: element count mismatch " + shape_str(shape_) +
                                        " -> " + shape_str(shape));
        TensorT t;
        t.shape_ = std::move(shape);
        t.data_ = data_;
        return t;
    }

    TensorT clone() const {
        TensorT t;
        t.shape_ = shape_;
        t.data_ = std::make_shared<std::vector<T>>(*data_);
        return t;
    }

    template <class U>
    TensorT<U> cast() const {
        TensorT<U> t{shape_};
        const T* src = data();
        U* dst = t.data();
        for (int64_t i = 0, n = numel(); i < n; ++i) dst[i] = U(src[i]);
        return t;
    }

    bool same_shape(const TensorT& o) const { return shape_ == o.shape_; }

private:
    Shape shape_;
    std::shared_ptr<std::vector<T>> data_;
};

using Tensor = TensorT<float>;

// Production scalar type for training/eval paths; tests may instantiate the
// templated core with double for finite-difference work.
using real = float;

}  // namespace coordgan
