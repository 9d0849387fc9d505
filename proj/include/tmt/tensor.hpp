#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "tmt/errors.hpp"

namespace tmt {

std::string shape_str(const std::vector<std::size_t>& shape);

// Dense row-major n-d array of doubles. The universal value type: every
// kernel consumes and produces these. Invariants: all extents >= 1 and
// product(shape) == data.size(), enforced at construction.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> shape);
    Tensor(std::vector<std::size_t> shape, std::vector<double> data);

    static Tensor scalar(double v) { return Tensor({1}, {v}); }
    static Tensor zeros(std::vector<std::size_t> shape) { return Tensor(std::move(shape)); }
    static Tensor full(std::vector<std::size_t> shape, double v);

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t numel() const { return data_.size(); }
    std::size_t extent(std::size_t axis) const { return shape_[axis]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& vec() { return data_; }
    const std::vector<double>& vec() const { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    // 2-d / 3-d accessors (row-major)
    double& at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
    double at(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }
    double& at(std::size_t i, std::size_t j, std::size_t k) {
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }
    double at(std::size_t i, std::size_t j, std::size_t k) const {
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
    bool is_scalar() const { return numel() == 1; }
    bool all_finite() const;

    // Same data, new shape (numel must match).
    Tensor reshaped(std::vector<std::size_t> new_shape) const;

    std::string shape_string() const { return shape_str(shape_); }

private:
    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

// strides/extent decomposition for axis-wise loops: outer * n * inner
struct AxisSplit {
    std::size_t outer, n, inner;
};
AxisSplit split_axis(const std::vector<std::size_t>& shape, std::size_t axis);

} // namespace tmt
