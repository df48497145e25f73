#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace emoseg {

struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline long shape_numel(const std::vector<int>& shape) {
    long n = 1;
    for (int d : shape) {
        if (d < 0) throw ShapeError("negative dimension");
        n *= d;
    }
    return n;
}

// Dense row-major tensor. Scalar type is float for training and double for
// gradient checking; uint8_t appears only in file I/O.
template <typename S>
struct Tensor {
    std::vector<int> shape;
    std::vector<S> data;

    Tensor() = default;
    explicit Tensor(std::vector<int> sh, S fill = S(0))
        : shape(std::move(sh)), data(static_cast<size_t>(shape_numel(shape)), fill) {}

    static Tensor scalar(S v) {
        Tensor t(std::vector<int>{});
        t.data[0] = v;
        return t;
    }

    long numel() const { return static_cast<long>(data.size()); }

    int dim(int i) const { return shape[static_cast<size_t>(i)]; }
    int rank() const { return static_cast<int>(shape.size()); }

    S& operator[](long i) { return data[static_cast<size_t>(i)]; }
    const S& operator[](long i) const { return data[static_cast<size_t>(i)]; }

    // [C,H,W] accessor
    S& at3(int c, int i, int j) {
        return data[(static_cast<size_t>(c) * shape[1] + i) * shape[2] + j];
    }
    const S& at3(int c, int i, int j) const {
        return data[(static_cast<size_t>(c) * shape[1] + i) * shape[2] + j];
    }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    void check_finite(const char* what) const {
        for (const S& v : data)
            if (!std::isfinite(static_cast<double>(v)))
                throw NumericError(std::string("non-finite value in ") + what);
    }
};

inline std::string shape_str(const std::vector<int>& s) {
    std::string out = "[";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

template <typename S>
void require_same_shape(const Tensor<S>& a, const Tensor<S>& b, const char* op) {
    if (!a.same_shape(b))
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape) + " vs " +
                         shape_str(b.shape));
}

}  // namespace emoseg
