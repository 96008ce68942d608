#include "ris/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace ris::inline RIS_PRECISION {

std::size_t shape_size(const Shape& shape) {
    std::size_t n = 1;
    for (int d : shape) {
        if (d < 0) throw std::invalid_argument("negative dimension in shape " + shape_str(shape));
        n *= static_cast<std::size_t>(d);
    }
    return n;
}

std::string shape_str(const Shape& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

Tensor::Tensor(Shape shape, Real fill) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<Real> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != shape_size(shape_))
        throw std::invalid_argument("tensor data size " + std::to_string(data_.size()) + " does not match shape " +
                                    shape_str(shape_));
}

std::span<Real> Tensor::row(int r) {
    const auto cols = static_cast<std::size_t>(shape_.at(1));
    return {data_.data() + static_cast<std::size_t>(r) * cols, cols};
}

std::span<const Real> Tensor::row(int r) const {
    const auto cols = static_cast<std::size_t>(shape_.at(1));
    return {data_.data() + static_cast<std::size_t>(r) * cols, cols};
}

Real Tensor::item() const {
    if (data_.size() != 1) throw std::logic_error("item() on tensor of shape " + shape_str(shape_));
    return data_[0];
}

Tensor Tensor::reshaped(Shape shape) const {
    if (shape_size(shape) != data_.size())
        throw std::invalid_argument("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
    return Tensor(std::move(shape), data_);
}

void Tensor::fill(Real v) { std::fill(data_.begin(), data_.end(), v); }

void Tensor::add_(const Tensor& other) {
    check_same_shape(*this, other, "add_");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
}

void Tensor::scale_(Real s) {
    for (auto& v : data_) v *= s;
}

bool Tensor::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](Real v) { return std::isfinite(v); });
}

Real Tensor::min() const {
    if (data_.empty()) throw std::logic_error("min() of empty tensor");
    return *std::min_element(data_.begin(), data_.end());
}

Real Tensor::max() const {
    if (data_.empty()) throw std::logic_error("max() of empty tensor");
    return *std::max_element(data_.begin(), data_.end());
}

Real Tensor::sum() const { return std::accumulate(data_.begin(), data_.end(), Real(0)); }

void check_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (a.shape() != b.shape())
        throw std::invalid_argument(std::string(what) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                                    shape_str(b.shape()));
}

}  // namespace ris
