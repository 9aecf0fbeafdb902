#pragma once

#include <cassert>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "falcon/errors.hpp"

namespace falcon {

namespace detail {

inline std::string shape_string(std::span<const std::size_t> shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i > 0) s += ", ";
        s += std::to_string(shape[i]);
    }
    s += "]";
    return s;
}

} // namespace detail

/// Dense n-way tensor of doubles.
///
/// Storage is row-major: the last index varies fastest, and the stride of
/// axis a is the product of the extents of axes a+1..n-1.  Every axis must
/// have extent >= 1; a tensor always owns its storage.
class Tensor {
public:
    Tensor() : shape_{1}, strides_{1}, data_(1, 0.0) {}

    explicit Tensor(std::vector<std::size_t> shape)
        : shape_(std::move(shape)) {
        init_strides();
        data_.assign(size_, 0.0);
    }

    Tensor(std::vector<std::size_t> shape, std::vector<double> data)
        : shape_(std::move(shape)) {
        init_strides();
        if (data.size() != size_)
            throw shape_error("tensor data holds " + std::to_string(data.size()) +
                              " values but shape " + detail::shape_string(shape_) +
                              " requires " + std::to_string(size_));
        data_ = std::move(data);
    }

    std::size_t ndim() const { return shape_.size(); }
    std::size_t size() const { return size_; }
    const std::vector<std::size_t>& shape() const { return shape_; }

    std::size_t extent(std::size_t axis) const {
        if (axis >= shape_.size())
            throw shape_error("axis " + std::to_string(axis) + " out of range for a " +
                              std::to_string(shape_.size()) + "-way tensor");
        return shape_[axis];
    }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& values() { return data_; }
    const std::vector<double>& values() const { return data_; }

    double operator[](std::size_t flat) const {
        assert(flat < size_);
        return data_[flat];
    }
    double& operator[](std::size_t flat) {
        assert(flat < size_);
        return data_[flat];
    }

    template <typename... Ix>
    double operator()(Ix... ix) const {
        static_assert((std::is_integral_v<Ix> && ...), "indices must be integral");
        return data_[offset({static_cast<std::size_t>(ix)...})];
    }

    template <typename... Ix>
    double& operator()(Ix... ix) {
        static_assert((std::is_integral_v<Ix> && ...), "indices must be integral");
        return data_[offset({static_cast<std::size_t>(ix)...})];
    }

    /// Row-major flat offset of a multi-index.
    std::size_t flat_index(std::span<const std::size_t> idx) const {
        if (idx.size() != shape_.size())
            throw shape_error("multi-index has " + std::to_string(idx.size()) +
                              " entries for a " + std::to_string(shape_.size()) +
                              "-way tensor");
        std::size_t flat = 0;
        for (std::size_t a = 0; a < idx.size(); ++a) {
            if (idx[a] >= shape_[a])
                throw shape_error("index " + std::to_string(idx[a]) + " out of range on axis " +
                                  std::to_string(a) + " of shape " + detail::shape_string(shape_));
            flat += idx[a] * strides_[a];
        }
        return flat;
    }

    /// Inverse of flat_index.
    std::vector<std::size_t> multi_index(std::size_t flat) const {
        if (flat >= size_)
            throw shape_error("flat index " + std::to_string(flat) + " out of range for size " +
                              std::to_string(size_));
        std::vector<std::size_t> idx(shape_.size());
        for (std::size_t a = 0; a < shape_.size(); ++a) {
            idx[a] = flat / strides_[a];
            flat %= strides_[a];
        }
        return idx;
    }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

private:
    std::size_t offset(std::initializer_list<std::size_t> ix) const {
        assert(ix.size() == shape_.size());
        std::size_t flat = 0;
        std::size_t a = 0;
        for (std::size_t i : ix) {
            assert(i < shape_[a]);
            flat += i * strides_[a];
            ++a;
        }
        return flat;
    }

    void init_strides() {
        if (shape_.empty())
            throw shape_error("tensor must have at least one axis");
        for (std::size_t e : shape_)
            if (e == 0)
                throw shape_error("zero extent in shape " + detail::shape_string(shape_));
        strides_.assign(shape_.size(), 1);
        for (std::size_t a = shape_.size(); a-- > 1;)
            strides_[a - 1] = strides_[a] * shape_[a];
        size_ = strides_[0] * shape_[0];
    }

    std::vector<std::size_t> shape_;
    std::vector<std::size_t> strides_;
    std::size_t size_ = 0;
    std::vector<double> data_;
};

/// Geometry of one 2-d convolution layer.
struct ConvDims {
    std::size_t kernel_size = 1;   // square window, D x D taps
    std::size_t in_channels = 1;   // M
    std::size_t out_channels = 1;  // N
    std::size_t in_height = 1;
    std::size_t in_width = 1;
    std::size_t stride = 1;
    std::size_t padding = 0;

    /// Throws shape_error unless every field is in range and the padded
    /// input admits at least one window placement per axis.
    void validate() const {
        if (kernel_size < 1 || in_channels < 1 || out_channels < 1 ||
            in_height < 1 || in_width < 1 || stride < 1)
            throw shape_error("conv dims must be positive: D=" + std::to_string(kernel_size) +
                              " M=" + std::to_string(in_channels) +
                              " N=" + std::to_string(out_channels) +
                              " H=" + std::to_string(in_height) +
                              " W=" + std::to_string(in_width) +
                              " s=" + std::to_string(stride));
        if (kernel_size > in_height + 2 * padding || kernel_size > in_width + 2 * padding)
            throw shape_error("degenerate geometry: window " + std::to_string(kernel_size) +
                              " exceeds padded input " +
                              std::to_string(in_height + 2 * padding) + "x" +
                              std::to_string(in_width + 2 * padding));
    }

    std::size_t output_height() const {
        validate();
        return (in_height + 2 * padding - kernel_size) / stride + 1;
    }

    std::size_t output_width() const {
        validate();
        return (in_width + 2 * padding - kernel_size) / stride + 1;
    }
};

/// Swaps the last two axes of a 4-way tensor:
/// out[i, j, n, m] = k[i, j, m, n].
inline Tensor transpose_3_4(const Tensor& k) {
    if (k.ndim() != 4)
        throw shape_error("transpose_3_4 expects a 4-way tensor, got " +
                          detail::shape_string(k.shape()));
    const std::size_t e0 = k.extent(0), e1 = k.extent(1);
    const std::size_t e2 = k.extent(2), e3 = k.extent(3);
    Tensor out({e0, e1, e3, e2});
    for (std::size_t i = 0; i < e0; ++i)
        for (std::size_t j = 0; j < e1; ++j)
            for (std::size_t m = 0; m < e2; ++m)
                for (std::size_t n = 0; n < e3; ++n)
                    out(i, j, n, m) = k(i, j, m, n);
    return out;
}

/// Frobenius norm: sqrt of the sum of squared entries, accumulated in
/// storage order.
inline double frobenius_norm(const Tensor& t) {
    double acc = 0.0;
    for (std::size_t p = 0; p < t.size(); ++p)
        acc += t[p] * t[p];
    return std::sqrt(acc);
}

/// Matricizes one output-channel slice of a 4-way kernel K (D x D x M x N):
/// the result has shape (D*D) x M with row i*D + j holding K[i, j, :, n].
inline Tensor unfold_output_slice(const Tensor& k, std::size_t n) {
    if (k.ndim() != 4)
        throw shape_error("unfold_output_slice expects a 4-way tensor, got " +
                          detail::shape_string(k.shape()));
    if (n >= k.extent(3))
        throw shape_error("output channel " + std::to_string(n) + " out of range, kernel has " +
                          std::to_string(k.extent(3)));
    const std::size_t e0 = k.extent(0), e1 = k.extent(1), m_ext = k.extent(2);
    Tensor out({e0 * e1, m_ext});
    for (std::size_t i = 0; i < e0; ++i)
        for (std::size_t j = 0; j < e1; ++j)
            for (std::size_t m = 0; m < m_ext; ++m)
                out(i * e1 + j, m) = k(i, j, m, n);
    return out;
}

} // namespace falcon
