#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace scw {

// Dense row-major double tensor. Shape is a list of extents; rank 0 is not
// used, scalars are shape {1}.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;

    Tensor() = default;

    explicit Tensor(std::vector<int> s, double fill = 0.0) : shape(std::move(s)) {
        data.assign(static_cast<size_t>(numel_of(shape)), fill);
    }

    static Tensor scalar(double v) {
        Tensor t({1});
        t.data[0] = v;
        return t;
    }

    static int64_t numel_of(const std::vector<int>& s) {
        if (s.empty()) throw std::invalid_argument("tensor shape must be non-empty");
        int64_t n = 1;
        for (int d : s) {
            if (d <= 0) throw std::invalid_argument("tensor extent must be positive");
            n *= d;
        }
        return n;
    }

    int numel() const { return static_cast<int>(data.size()); }
    int rank() const { return static_cast<int>(shape.size()); }
    int dim(int i) const { return shape.at(static_cast<size_t>(i)); }

    double& operator[](int i) { return data[static_cast<size_t>(i)]; }
    double operator[](int i) const { return data[static_cast<size_t>(i)]; }

    // 2-d/3-d accessors; callers keep hot loops on raw data instead.
    double& at(int i, int j) { return data[static_cast<size_t>(i) * shape[1] + j]; }
    double at(int i, int j) const { return data[static_cast<size_t>(i) * shape[1] + j]; }
    double& at(int i, int j, int k) {
        return data[(static_cast<size_t>(i) * shape[1] + j) * shape[2] + k];
    }
    double at(int i, int j, int k) const {
        return data[(static_cast<size_t>(i) * shape[1] + j) * shape[2] + k];
    }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    std::string shape_str() const {
        std::string s = "[";
        for (size_t i = 0; i < shape.size(); ++i) {
            if (i) s += ",";
            s += std::to_string(shape[i]);
        }
        return s + "]";
    }
};

}  // namespace scw
