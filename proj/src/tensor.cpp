#include "point3d/tensor.hpp"

#include <cmath>
#include <sstream>

#include "point3d/error.hpp"

namespace point3d {

namespace {

int64_t checked_numel(const std::vector<int>& shape) {
    if (shape.empty()) {
        throw ContractError("Tensor shape must have at least one dimension");
    }
    int64_t n = 1;
    for (int d : shape) {
        if (d <= 0) {
            std::ostringstream os;
            os << "Tensor dimensions must be positive, got " << d;
            throw ContractError(os.str());
        }
        n *= d;
    }
    return n;
}

} // namespace

Tensor::Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
    data_.assign(static_cast<size_t>(checked_numel(shape_)), 0.0);
}

Tensor::Tensor(std::vector<int> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    int64_t n = checked_numel(shape_);
    if (n != static_cast<int64_t>(data_.size())) {
        std::ostringstream os;
        os << "Tensor data size " << data_.size() << " does not match shape " << shape_str();
        throw ContractError(os.str());
    }
}

Tensor Tensor::full(std::vector<int> shape, double value) {
    Tensor t(std::move(shape));
    for (auto& v : t.data_) v = value;
    return t;
}

double& Tensor::at(int i, int j) {
    return data_[static_cast<size_t>(i) * dim(1) + j];
}

double Tensor::at(int i, int j) const {
    return data_[static_cast<size_t>(i) * dim(1) + j];
}

double& Tensor::at(int c, int y, int x) {
    return data_[(static_cast<size_t>(c) * dim(1) + y) * dim(2) + x];
}

double Tensor::at(int c, int y, int x) const {
    return data_[(static_cast<size_t>(c) * dim(1) + y) * dim(2) + x];
}

double& Tensor::at(int a, int b, int y, int x) {
    return data_[((static_cast<size_t>(a) * dim(1) + b) * dim(2) + y) * dim(3) + x];
}

double Tensor::at(int a, int b, int y, int x) const {
    return data_[((static_cast<size_t>(a) * dim(1) + b) * dim(2) + y) * dim(3) + x];
}

bool Tensor::all_finite() const {
    for (double v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape_.size(); ++i) {
        if (i) os << "x";
        os << shape_[i];
    }
    os << "]";
    return os.str();
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (!a.same_shape(b)) {
        throw DimensionError(std::string(what) + ": shape mismatch " + a.shape_str() +
                             " vs " + b.shape_str());
    }
}

} // namespace point3d
