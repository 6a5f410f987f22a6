#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

#include "ifdiff/errors.hpp"

namespace ifdiff {

/// Dense row-major tensor of 64-bit floats. The whole project runs in
/// double precision so analytic gradients can be checked against finite
/// differences without noise-floor games.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> shape) : shape_(std::move(shape)) {
        data_.assign(check_shape(shape_), 0.0);
    }

    Tensor(std::vector<std::size_t> shape, std::vector<double> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (check_shape(shape_) != data_.size()) {
            throw ShapeError("tensor data length does not match shape");
        }
    }

    static Tensor from_values(std::initializer_list<double> vals) {
        return Tensor({vals.size()}, std::vector<double>(vals));
    }

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t size() const { return data_.size(); }
    std::size_t rank() const { return shape_.size(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& values() { return data_; }
    const std::vector<double>& values() const { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

private:
    static std::size_t check_shape(const std::vector<std::size_t>& shape) {
        if (shape.empty()) throw ShapeError("empty shape is not allowed");
        std::size_t n = 1;
        for (std::size_t d : shape) {
            if (d == 0) throw ShapeError("zero dimension is not allowed");
            n *= d;
        }
        return n;
    }

    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

namespace detail {
inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b)) {
        throw ShapeError(std::string("shape mismatch in ") + op);
    }
}
inline void require_nonempty(const Tensor& a, const char* op) {
    if (a.size() == 0) {
        throw ShapeError(std::string("empty tensor in ") + op);
    }
}
}  // namespace detail

inline Tensor add(const Tensor& a, const Tensor& b) {
    detail::require_same_shape(a, b, "add");
    Tensor out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
    return out;
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
    detail::require_same_shape(a, b, "sub");
    Tensor out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
    return out;
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
    detail::require_same_shape(a, b, "mul");
    Tensor out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
    return out;
}

inline Tensor scale(const Tensor& a, double s) {
    Tensor out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * s;
    return out;
}

/// Sum in flat index order. The reduction order is part of the contract:
/// identical inputs give bitwise identical results on every run.
inline double sum(const Tensor& a) {
    detail::require_nonempty(a, "sum");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i];
    return acc;
}

inline double mean(const Tensor& a) {
    detail::require_nonempty(a, "mean");
    return sum(a) / static_cast<double>(a.size());
}

}  // namespace ifdiff
