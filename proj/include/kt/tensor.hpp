#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "kt/error.hpp"

namespace kt::num {

using Shape = std::vector<std::size_t>;

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
    os << "]";
    return os.str();
}

inline std::size_t shape_count(const Shape& s) {
    std::size_t n = 1;
    for (auto d : s) n *= d;
    return n;
}

// Dense row-major tensor of doubles. Rank 1 (vectors) and rank 2
// (matrices) cover everything the models here need; elementwise ops are
// rank-agnostic.
struct Tensor {
    Shape shape;
    std::vector<double> data;

    Tensor() = default;
    Tensor(Shape s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
        if (data.size() != shape_count(shape))
            throw shape_error("tensor value count " + std::to_string(data.size()) +
                              " does not match shape " + shape_str(shape));
    }

    static Tensor zeros(Shape s) {
        Tensor t;
        t.shape = std::move(s);
        t.data.assign(shape_count(t.shape), 0.0);
        return t;
    }
    static Tensor full(Shape s, double v) {
        Tensor t = zeros(std::move(s));
        for (auto& x : t.data) x = v;
        return t;
    }
    static Tensor vec(std::vector<double> d) {
        Shape s{d.size()};
        return Tensor(std::move(s), std::move(d));
    }
    static Tensor scalar(double v) { return Tensor({1}, {v}); }
    static Tensor mat(std::size_t r, std::size_t c, std::vector<double> d) {
        return Tensor({r, c}, std::move(d));
    }

    std::size_t size() const { return data.size(); }
    std::size_t rank() const { return shape.size(); }
    std::size_t rows() const { return shape.empty() ? 0 : shape[0]; }
    std::size_t cols() const { return shape.size() < 2 ? 1 : shape[1]; }

    double& at(std::size_t i) { return data[i]; }
    double at(std::size_t i) const { return data[i]; }
    double& at(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }

    bool finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b))
        throw shape_error(std::string(op) + ": shapes " + shape_str(a.shape) + " and " +
                          shape_str(b.shape) + " do not match");
}

} // namespace kt::num
