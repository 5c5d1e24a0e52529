#pragma once

#include "cvak/error.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstring>
#include <functional>
#include <numbers>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

namespace cvak {

using cscalar = std::complex<double>;
using Shape = std::vector<std::size_t>;

inline constexpr double pi = std::numbers::pi;

// Hot loops use these instead of operator* to avoid the libgcc NaN-recovery
// path of complex multiplication.
inline cscalar cmul(cscalar a, cscalar b)
{
    return {a.real() * b.real() - a.imag() * b.imag(), a.real() * b.imag() + a.imag() * b.real()};
}

/// conj(a) * b
inline cscalar cmul_conj(cscalar a, cscalar b)
{
    return {a.real() * b.real() + a.imag() * b.imag(), a.real() * b.imag() - a.imag() * b.real()};
}

inline double magnitude(cscalar z) { return std::abs(z); }

/// Phase in [-pi, pi); phase(0) is 0.
inline double phase(cscalar z)
{
    if (z.real() == 0.0 && z.imag() == 0.0) {
        return 0.0;
    }
    const double a = std::atan2(z.imag(), z.real());
    return a >= pi ? -pi : a;
}

/// Complex sign exp(i*phase(z)); sign(0) is 0.
inline cscalar complex_sign(cscalar z)
{
    const double r = std::abs(z);
    if (r == 0.0) {
        return {0.0, 0.0};
    }
    return {z.real() / r, z.imag() / r};
}

/// Wraps an angle into [-pi, pi).
inline double wrap_angle(double a)
{
    double w = std::remainder(a, 2.0 * pi);
    if (w >= pi) {
        w -= 2.0 * pi;
    }
    if (w < -pi) {
        w += 2.0 * pi;
    }
    return w;
}

inline std::size_t shape_size(const Shape& s)
{
    return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>{});
}

inline std::string shape_string(const Shape& s)
{
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) {
        os << (i ? "," : "") << s[i];
    }
    os << ']';
    return os.str();
}

/// Dense row-major complex tensor.
class CTensor {
public:
    CTensor() = default;

    explicit CTensor(Shape shape) : shape_(std::move(shape)), data_(shape_size(shape_)) {}

    CTensor(Shape shape, std::vector<cscalar> data) : shape_(std::move(shape)), data_(std::move(data))
    {
        if (data_.size() != shape_size(shape_)) {
            throw ShapeError("CTensor: data length " + std::to_string(data_.size()) + " does not match shape "
                             + shape_string(shape_));
        }
    }

    static CTensor zeros(Shape shape) { return CTensor(std::move(shape)); }

    static CTensor scalar(cscalar v) { return CTensor({1}, {v}); }

    static CTensor real(Shape shape, std::span<const double> values)
    {
        CTensor t(std::move(shape));
        if (values.size() != t.size()) {
            throw ShapeError("CTensor::real: value count does not match shape");
        }
        std::transform(values.begin(), values.end(), t.data_.begin(), [](double v) { return cscalar{v, 0.0}; });
        return t;
    }

    [[nodiscard]] const Shape& shape() const noexcept { return shape_; }
    [[nodiscard]] std::size_t size() const noexcept { return data_.size(); }
    [[nodiscard]] std::size_t rank() const noexcept { return shape_.size(); }
    [[nodiscard]] std::size_t dim(std::size_t i) const { return shape_.at(i); }
    [[nodiscard]] bool empty() const noexcept { return data_.empty(); }

    [[nodiscard]] std::span<const cscalar> data() const noexcept { return data_; }
    [[nodiscard]] std::span<cscalar> data() noexcept { return data_; }

    cscalar& operator[](std::size_t i) { return data_[i]; }
    const cscalar& operator[](std::size_t i) const { return data_[i]; }

    [[nodiscard]] CTensor reshaped(Shape shape) const
    {
        if (shape_size(shape) != size()) {
            throw ShapeError("reshape: " + shape_string(shape_) + " vs " + shape_string(shape));
        }
        return CTensor(std::move(shape), data_);
    }

    /// Rows [begin, end) along the leading dimension.
    [[nodiscard]] CTensor slice(std::size_t begin, std::size_t end) const
    {
        if (rank() == 0 || begin > end || end > shape_[0]) {
            throw ShapeError("slice: bad range for shape " + shape_string(shape_));
        }
        const std::size_t row = size() / std::max<std::size_t>(shape_[0], 1);
        Shape s = shape_;
        s[0] = end - begin;
        return CTensor(std::move(s), std::vector<cscalar>(data_.begin() + static_cast<std::ptrdiff_t>(begin * row),
                                                          data_.begin() + static_cast<std::ptrdiff_t>(end * row)));
    }

    /// Overwrites rows starting at `begin` with `rows`.
    void assign_rows(std::size_t begin, const CTensor& rows)
    {
        const std::size_t row = size() / std::max<std::size_t>(shape_[0], 1);
        if (rows.size() % std::max<std::size_t>(row, 1) != 0 || begin * row + rows.size() > size()) {
            throw ShapeError("assign_rows: " + shape_string(rows.shape()) + " into " + shape_string(shape_));
        }
        std::copy(rows.data_.begin(), rows.data_.end(), data_.begin() + static_cast<std::ptrdiff_t>(begin * row));
    }

    [[nodiscard]] bool all_finite() const
    {
        return std::all_of(data_.begin(), data_.end(),
                           [](cscalar z) { return std::isfinite(z.real()) && std::isfinite(z.imag()); });
    }

private:
    Shape shape_;
    std::vector<cscalar> data_;
};

/// Bit-level equality, distinguishing -0.0 from 0.0 and comparing NaN payloads.
inline bool bitwise_equal(const CTensor& a, const CTensor& b)
{
    return a.shape() == b.shape()
           && (a.size() == 0 || std::memcmp(a.data().data(), b.data().data(), a.size() * sizeof(cscalar)) == 0);
}

inline void require_same_shape(const char* op, const CTensor& a, const CTensor& b)
{
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs "
                         + shape_string(b.shape()));
    }
}

} // namespace cvak
