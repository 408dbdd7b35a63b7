#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace point3d {

/// Dense row-major tensor of 64-bit floats.
///
/// Tensors are plain values: copy/move semantics, no views, no aliasing.
/// Shape is fixed at construction and every dimension must be positive.
/// All heavy arithmetic lives in kernels.hpp (serial + OpenMP paths) and
/// tape.hpp (differentiable ops).
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<int> shape);
    Tensor(std::vector<int> shape, std::vector<double> data);

    static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }
    static Tensor full(std::vector<int> shape, double value);
    static Tensor scalar(double value) { return Tensor({1}, {value}); }

    bool empty() const { return data_.empty(); }
    int rank() const { return static_cast<int>(shape_.size()); }
    int dim(int axis) const { return shape_[static_cast<size_t>(axis)]; }
    const std::vector<int>& shape() const { return shape_; }
    int64_t numel() const { return static_cast<int64_t>(data_.size()); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& vec() { return data_; }
    const std::vector<double>& vec() const { return data_; }

    double& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
    double operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

    // Rank-checked indexed access.
    double& at(int i, int j);
    double at(int i, int j) const;
    double& at(int c, int y, int x);
    double at(int c, int y, int x) const;
    double& at(int a, int b, int y, int x);
    double at(int a, int b, int y, int x) const;

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
    bool all_finite() const;
    std::string shape_str() const;

private:
    std::vector<int> shape_;
    std::vector<double> data_;
};

// Throws DimensionError when shapes differ; `what` names the operation.
void require_same_shape(const Tensor& a, const Tensor& b, const char* what);

} // namespace point3d
