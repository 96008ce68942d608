#ifndef RIS_TENSOR_HPP
#define RIS_TENSOR_HPP

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

// Each precision lives in its own inline namespace so float and double
// builds of the library can be linked into one program.
#ifdef RIS_REAL_DOUBLE
#define RIS_PRECISION f64
#else
#define RIS_PRECISION f32
#endif

namespace ris::inline RIS_PRECISION {

#ifdef RIS_REAL_DOUBLE
using Real = double;
#else
using Real = float;
#endif

using Shape = std::vector<int>;

std::size_t shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);

// Dense row-major array. NCHW for image batches, [rows, cols] for matrices.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, Real fill = Real(0));
    Tensor(Shape shape, std::vector<Real> data);

    static Tensor scalar(Real v) { return Tensor({1}, v); }
    static Tensor zeros_like(const Tensor& t) { return Tensor(t.shape_); }

    const Shape& shape() const noexcept { return shape_; }
    int rank() const noexcept { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_.at(static_cast<std::size_t>(i)); }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    Real* data() noexcept { return data_.data(); }
    const Real* data() const noexcept { return data_.data(); }
    std::span<Real> values() noexcept { return data_; }
    std::span<const Real> values() const noexcept { return data_; }
    std::vector<Real>& storage() noexcept { return data_; }
    const std::vector<Real>& storage() const noexcept { return data_; }

    Real& operator[](std::size_t i) noexcept { return data_[i]; }
    Real operator[](std::size_t i) const noexcept { return data_[i]; }

    // Row access for rank-2 tensors.
    std::span<Real> row(int r);
    std::span<const Real> row(int r) const;

    Real item() const;
    Tensor reshaped(Shape shape) const;
    void fill(Real v);
    void add_(const Tensor& other);
    void scale_(Real s);

    bool all_finite() const noexcept;
    Real min() const;
    Real max() const;
    Real sum() const;

    friend bool operator==(const Tensor& a, const Tensor& b) = default;

private:
    Shape shape_;
    std::vector<Real> data_;
};

void check_same_shape(const Tensor& a, const Tensor& b, const char* what);

}  // namespace ris

#endif  // RIS_TENSOR_HPP
