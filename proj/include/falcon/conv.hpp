#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "falcon/errors.hpp"
#include "falcon/tensor.hpp"

namespace falcon {

/// Output spatial extents (H', W') for a validated geometry.
inline std::pair<std::size_t, std::size_t> output_dims(const ConvDims& dims) {
    dims.validate();
    return {dims.output_height(), dims.output_width()};
}

namespace detail {

inline void check_activation(const Tensor& t, const char* what) {
    if (t.ndim() != 3)
        throw shape_error(std::string(what) + " must be 3-way H x W x C, got " +
                          shape_string(t.shape()));
}

// Padded input tap: coordinates are taken on the padded grid, taps that fall
// outside the physical input read as zero.  Counters tick for every tap so a
// padding tap costs the same multiply-add as an interior one.
inline double tap(const Tensor& input, std::ptrdiff_t h, std::ptrdiff_t w, std::size_t c) {
    if (h < 0 || w < 0 ||
        h >= static_cast<std::ptrdiff_t>(input.extent(0)) ||
        w >= static_cast<std::ptrdiff_t>(input.extent(1)))
        return 0.0;
    return input(static_cast<std::size_t>(h), static_cast<std::size_t>(w), c);
}

inline ConvDims make_dims(const Tensor& input, std::size_t kernel_size,
                          std::size_t in_channels, std::size_t out_channels,
                          std::size_t stride, std::size_t padding) {
    ConvDims d;
    d.kernel_size = kernel_size;
    d.in_channels = in_channels;
    d.out_channels = out_channels;
    d.in_height = input.extent(0);
    d.in_width = input.extent(1);
    d.stride = stride;
    d.padding = padding;
    d.validate();
    return d;
}

} // namespace detail

/// Standard convolution.  input is H x W x M, kernel is D x D x M x N with a
/// square window; output is H' x W' x N with
///   O[h', w', n] = sum_{i, j, m} K[i, j, m, n] * I[h'*s + i - p, w'*s + j - p, m]
/// summed i outer, j middle, m inner.  Out-of-range taps read zero but still
/// count toward *mac_count.
inline Tensor conv2d_standard(const Tensor& input, const Tensor& kernel,
                              std::size_t stride, std::size_t padding,
                              std::uint64_t* mac_count = nullptr) {
    detail::check_activation(input, "input");
    if (kernel.ndim() != 4)
        throw shape_error("kernel must be 4-way D x D x M x N, got " +
                          detail::shape_string(kernel.shape()));
    if (kernel.extent(0) != kernel.extent(1))
        throw shape_error("kernel window must be square, got " +
                          detail::shape_string(kernel.shape()));
    if (kernel.extent(2) != input.extent(2))
        throw shape_error("kernel expects " + std::to_string(kernel.extent(2)) +
                          " input channels, input has " + std::to_string(input.extent(2)));

    const std::size_t d = kernel.extent(0);
    const std::size_t m_ext = kernel.extent(2);
    const std::size_t n_ext = kernel.extent(3);
    const ConvDims dims = detail::make_dims(input, d, m_ext, n_ext, stride, padding);
    const std::size_t oh = dims.output_height(), ow = dims.output_width();
    const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(padding);

    Tensor out({oh, ow, n_ext});
    std::uint64_t macs = 0;
    for (std::size_t hp = 0; hp < oh; ++hp)
        for (std::size_t wp = 0; wp < ow; ++wp)
            for (std::size_t n = 0; n < n_ext; ++n) {
                double acc = 0.0;
                for (std::size_t i = 0; i < d; ++i)
                    for (std::size_t j = 0; j < d; ++j)
                        for (std::size_t m = 0; m < m_ext; ++m) {
                            const std::ptrdiff_t h = static_cast<std::ptrdiff_t>(hp * stride + i) - pad;
                            const std::ptrdiff_t w = static_cast<std::ptrdiff_t>(wp * stride + j) - pad;
                            acc += kernel(i, j, m, n) * detail::tap(input, h, w, m);
                            ++macs;
                        }
                out(hp, wp, n) = acc;
            }
    if (mac_count) *mac_count += macs;
    return out;
}

/// Depthwise convolution: one D x D filter per channel, no cross-channel sum.
/// input is H x W x C, kernel is D x D x C, output is H' x W' x C.
inline Tensor conv2d_depthwise(const Tensor& input, const Tensor& kernel,
                               std::size_t stride, std::size_t padding,
                               std::uint64_t* mac_count = nullptr) {
    detail::check_activation(input, "input");
    if (kernel.ndim() != 3)
        throw shape_error("depthwise kernel must be 3-way D x D x C, got " +
                          detail::shape_string(kernel.shape()));
    if (kernel.extent(0) != kernel.extent(1))
        throw shape_error("kernel window must be square, got " +
                          detail::shape_string(kernel.shape()));
    if (kernel.extent(2) != input.extent(2))
        throw shape_error("depthwise kernel has " + std::to_string(kernel.extent(2)) +
                          " channels, input has " + std::to_string(input.extent(2)));

    const std::size_t d = kernel.extent(0);
    const std::size_t c_ext = kernel.extent(2);
    const ConvDims dims = detail::make_dims(input, d, c_ext, c_ext, stride, padding);
    const std::size_t oh = dims.output_height(), ow = dims.output_width();
    const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(padding);

    Tensor out({oh, ow, c_ext});
    std::uint64_t macs = 0;
    for (std::size_t hp = 0; hp < oh; ++hp)
        for (std::size_t wp = 0; wp < ow; ++wp)
            for (std::size_t c = 0; c < c_ext; ++c) {
                double acc = 0.0;
                for (std::size_t i = 0; i < d; ++i)
                    for (std::size_t j = 0; j < d; ++j) {
                        const std::ptrdiff_t h = static_cast<std::ptrdiff_t>(hp * stride + i) - pad;
                        const std::ptrdiff_t w = static_cast<std::ptrdiff_t>(wp * stride + j) - pad;
                        acc += kernel(i, j, c) * detail::tap(input, h, w, c);
                        ++macs;
                    }
                out(hp, wp, c) = acc;
            }
    if (mac_count) *mac_count += macs;
    return out;
}

/// 1x1 convolution with an input-major matrix: input is H x W x M, matrix is
/// M x N, output is H x W x N with O[h, w, n] = sum_m P[m, n] * I[h, w, m].
inline Tensor conv2d_pointwise(const Tensor& input, const Tensor& matrix,
                               std::uint64_t* mac_count = nullptr) {
    detail::check_activation(input, "input");
    if (matrix.ndim() != 2)
        throw shape_error("pointwise matrix must be 2-way M x N, got " +
                          detail::shape_string(matrix.shape()));
    if (matrix.extent(0) != input.extent(2))
        throw shape_error("pointwise matrix has " + std::to_string(matrix.extent(0)) +
                          " input channels, input has " + std::to_string(input.extent(2)));

    const std::size_t h_ext = input.extent(0), w_ext = input.extent(1);
    const std::size_t m_ext = matrix.extent(0), n_ext = matrix.extent(1);
    Tensor out({h_ext, w_ext, n_ext});
    std::uint64_t macs = 0;
    for (std::size_t h = 0; h < h_ext; ++h)
        for (std::size_t w = 0; w < w_ext; ++w)
            for (std::size_t n = 0; n < n_ext; ++n) {
                double acc = 0.0;
                for (std::size_t m = 0; m < m_ext; ++m) {
                    acc += matrix(m, n) * input(h, w, m);
                    ++macs;
                }
                out(h, w, n) = acc;
            }
    if (mac_count) *mac_count += macs;
    return out;
}

/// Group convolution: channels split into g contiguous blocks, kernels[i] is
/// a D x D x (M/g) x (N/g) kernel applied to block i, outputs concatenated in
/// group order.
inline Tensor conv2d_group(const Tensor& input, const std::vector<Tensor>& kernels,
                           std::size_t stride, std::size_t padding,
                           std::uint64_t* mac_count = nullptr) {
    detail::check_activation(input, "input");
    const std::size_t groups = kernels.size();
    if (groups < 1)
        throw shape_error("group convolution needs at least one kernel");
    const std::size_t m_total = input.extent(2);
    if (m_total % groups != 0)
        throw shape_error(std::to_string(groups) + " groups do not divide " +
                          std::to_string(m_total) + " input channels");
    const std::size_t m_per = m_total / groups;
    for (std::size_t g = 0; g < groups; ++g) {
        if (kernels[g].ndim() != 4)
            throw shape_error("group kernel " + std::to_string(g) + " must be 4-way, got " +
                              detail::shape_string(kernels[g].shape()));
        if (!kernels[g].same_shape(kernels[0]))
            throw shape_error("group kernel " + std::to_string(g) +
                              " disagrees with kernel 0 on shape");
    }
    if (kernels[0].extent(2) != m_per)
        throw shape_error("group kernels take " + std::to_string(kernels[0].extent(2)) +
                          " channels each, expected " + std::to_string(m_per));

    const std::size_t h_ext = input.extent(0), w_ext = input.extent(1);
    const std::size_t n_per = kernels[0].extent(3);
    Tensor block({h_ext, w_ext, m_per});
    Tensor out;
    for (std::size_t g = 0; g < groups; ++g) {
        for (std::size_t h = 0; h < h_ext; ++h)
            for (std::size_t w = 0; w < w_ext; ++w)
                for (std::size_t m = 0; m < m_per; ++m)
                    block(h, w, m) = input(h, w, g * m_per + m);
        Tensor part = conv2d_standard(block, kernels[g], stride, padding, mac_count);
        if (g == 0) {
            out = Tensor({part.extent(0), part.extent(1), groups * n_per});
        }
        for (std::size_t h = 0; h < part.extent(0); ++h)
            for (std::size_t w = 0; w < part.extent(1); ++w)
                for (std::size_t n = 0; n < n_per; ++n)
                    out(h, w, g * n_per + n) = part(h, w, n);
    }
    return out;
}

} // namespace falcon
