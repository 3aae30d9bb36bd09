#include "saife/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "saife/errors.hpp"

namespace saife::nn {

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

Tensor::Tensor(Shape shape, float fill)
    : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<float> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_numel(shape_) != data_.size())
        throw DimensionError("tensor: shape " + shape_str(shape_) + " does not hold " +
                             std::to_string(data_.size()) + " values");
}

Tensor Tensor::from(Shape shape, std::initializer_list<float> values) {
    return Tensor(std::move(shape), std::vector<float>(values));
}

Tensor Tensor::reshaped(Shape shape) const {
    if (shape_numel(shape) != data_.size())
        throw DimensionError("reshape: " + shape_str(shape_) + " -> " + shape_str(shape));
    return Tensor(std::move(shape), data_);
}

void Tensor::fill(float v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](float v) { return std::isfinite(v); });
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (a.shape() != b.shape())
        throw DimensionError(std::string(what) + ": shape mismatch " + shape_str(a.shape()) +
                             " vs " + shape_str(b.shape()));
}

void require_rank(const Tensor& t, std::size_t rank, const char* what) {
    if (t.rank() != rank)
        throw DimensionError(std::string(what) + ": expected rank " + std::to_string(rank) +
                             ", got " + shape_str(t.shape()));
}

}  // namespace saife::nn
