#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace ul {

// Dense row-major numeric array. The float instantiation is the model/runtime
// carrier; the double instantiation exists for the gradient-check harness.
template <class S>
struct ArrayT {
    std::vector<int> shape;
    std::vector<S> v;

    ArrayT() = default;
    explicit ArrayT(std::vector<int> shape_) : shape(std::move(shape_)) {
        v.assign(numel_of(shape), S(0));
    }
    ArrayT(std::vector<int> shape_, std::vector<S> values) : shape(std::move(shape_)), v(std::move(values)) {
        if (v.size() != numel_of(shape)) {
            throw std::runtime_error("array: shape/value size mismatch");
        }
    }

    static size_t numel_of(const std::vector<int>& shape) {
        size_t n = 1;
        for (int d : shape) {
            if (d < 0) throw std::runtime_error("array: negative dimension");
            n *= static_cast<size_t>(d);
        }
        return n;
    }

    size_t numel() const { return v.size(); }
    int rank() const { return static_cast<int>(shape.size()); }
    bool is_scalar() const { return numel() == 1 && shape.empty(); }

    int dim(int i) const {
        if (i < 0) i += rank();
        return shape.at(static_cast<size_t>(i));
    }

    // product of all dims except the last; 1 for rank-0
    size_t rows() const {
        if (shape.empty()) return 1;
        return numel() / static_cast<size_t>(shape.back());
    }

    S& at(size_t i) { return v[i]; }
    S at(size_t i) const { return v[i]; }

    bool all_finite() const {
        for (S x : v) {
            if (!std::isfinite(static_cast<double>(x))) return false;
        }
        return true;
    }

    static ArrayT scalar(S x) {
        ArrayT a;
        a.v.assign(1, x);
        return a;
    }
    static ArrayT zeros(std::vector<int> shape) { return ArrayT(std::move(shape)); }
    static ArrayT full(std::vector<int> shape, S x) {
        ArrayT a(std::move(shape));
        a.v.assign(a.v.size(), x);
        return a;
    }

    template <class T>
    ArrayT<T> cast() const {
        ArrayT<T> out;
        out.shape = shape;
        out.v.resize(v.size());
        for (size_t i = 0; i < v.size(); ++i) out.v[i] = static_cast<T>(v[i]);
        return out;
    }

    bool same_shape(const ArrayT& o) const { return shape == o.shape; }
};

using Array = ArrayT<float>;

inline std::string shape_str(const std::vector<int>& shape) {
    std::string s = "[";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

}  // namespace ul
