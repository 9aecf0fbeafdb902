#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

#include "falcon/conv.hpp"
#include "falcon/errors.hpp"
#include "falcon/gep.hpp"
#include "falcon/tensor.hpp"

namespace falcon {

namespace detail {

// Pointwise stage first (out-channel-major matrix, stride 1, full input),
// then the depthwise stage carries the stride and padding.
inline Tensor falcon_pair_forward(const Tensor& input, const Tensor& p, const Tensor& d,
                                  std::size_t stride, std::size_t padding,
                                  std::uint64_t* mac_count) {
    check_activation(input, "input");
    if (p.extent(1) != input.extent(2))
        throw shape_error("pointwise factor takes " + std::to_string(p.extent(1)) +
                          " input channels, input has " + std::to_string(input.extent(2)));
    const std::size_t h_ext = input.extent(0), w_ext = input.extent(1);
    const std::size_t m_ext = p.extent(1), n_ext = p.extent(0);

    Tensor mixed({h_ext, w_ext, n_ext});
    std::uint64_t macs = 0;
    for (std::size_t h = 0; h < h_ext; ++h)
        for (std::size_t w = 0; w < w_ext; ++w)
            for (std::size_t n = 0; n < n_ext; ++n) {
                double acc = 0.0;
                for (std::size_t m = 0; m < m_ext; ++m) {
                    acc += p(n, m) * input(h, w, m);
                    ++macs;
                }
                mixed(h, w, n) = acc;
            }
    if (mac_count) *mac_count += macs;
    return conv2d_depthwise(mixed, d, stride, padding, mac_count);
}

} // namespace detail

/// Two-stage forward pass of a rank-1 factor pair: channel mixing by the
/// N x M pointwise factor, then the D x D x N depthwise stage with the given
/// stride and padding.  Equivalent to conv2d_standard with gep_falcon(f).
inline Tensor falcon_forward(const Tensor& input, const FalconFactors& f,
                             std::size_t stride, std::size_t padding,
                             std::uint64_t* mac_count = nullptr) {
    validate_falcon_factors(f);
    if (f.rank() != 1)
        throw shape_error("falcon_forward expects exactly one factor pair, got " +
                          std::to_string(f.rank()));
    return detail::falcon_pair_forward(input, f.pointwise[0], f.depthwise[0],
                                       stride, padding, mac_count);
}

/// Depthwise stage first (D x D x M, carrying stride and padding), then the
/// M x N pointwise stage.  Equivalent to conv2d_standard with gep_dpconv(f).
inline Tensor dpconv_forward(const Tensor& input, const DpconvFactors& f,
                             std::size_t stride, std::size_t padding,
                             std::uint64_t* mac_count = nullptr) {
    validate_dpconv_factors(f);
    Tensor filtered = conv2d_depthwise(input, f.depthwise, stride, padding, mac_count);
    return conv2d_pointwise(filtered, f.pointwise, mac_count);
}

/// Sum of per-pair forward passes, accumulated in ascending pair order.
inline Tensor falcon_rank_k_forward(const Tensor& input, const FalconFactors& f,
                                    std::size_t stride, std::size_t padding,
                                    std::uint64_t* mac_count = nullptr) {
    validate_falcon_factors(f);
    Tensor out;
    for (std::size_t r = 0; r < f.rank(); ++r) {
        Tensor term = detail::falcon_pair_forward(input, f.pointwise[r], f.depthwise[r],
                                                  stride, padding, mac_count);
        if (r == 0) {
            out = std::move(term);
        } else {
            for (std::size_t q = 0; q < out.size(); ++q)
                out[q] += term[q];
        }
    }
    return out;
}

/// Interleaves g contiguous channel blocks: the channel at position c moves
/// to position (c mod (C/g)) * g + c / (C/g).  Spatial layout is untouched.
inline Tensor channel_shuffle(const Tensor& t, std::size_t groups) {
    detail::check_activation(t, "input");
    const std::size_t c_ext = t.extent(2);
    if (groups < 1)
        throw shape_error("group count must be positive");
    if (c_ext % groups != 0)
        throw shape_error(std::to_string(groups) + " groups do not divide " +
                          std::to_string(c_ext) + " channels");
    const std::size_t per = c_ext / groups;
    Tensor out({t.extent(0), t.extent(1), c_ext});
    for (std::size_t h = 0; h < t.extent(0); ++h)
        for (std::size_t w = 0; w < t.extent(1); ++w)
            for (std::size_t c = 0; c < c_ext; ++c)
                out(h, w, (c % per) * groups + c / per) = t(h, w, c);
    return out;
}

/// Half-width variant: the factor pair transforms the first M/2 channels
/// (stride 1, spatial size preserved), the last M/2 pass through untouched,
/// and the concatenated halves are shuffled with two groups.
inline Tensor falcon_branch_forward(const Tensor& input, const FalconFactors& f,
                                    std::size_t padding,
                                    std::uint64_t* mac_count = nullptr) {
    detail::check_activation(input, "input");
    validate_falcon_factors(f);
    if (f.rank() != 1)
        throw shape_error("falcon_branch_forward expects exactly one factor pair, got " +
                          std::to_string(f.rank()));
    const std::size_t m_ext = input.extent(2);
    if (m_ext % 2 != 0)
        throw shape_error("branch input needs an even channel count, got " +
                          std::to_string(m_ext));
    const std::size_t half = m_ext / 2;
    const Tensor& p = f.pointwise[0];
    const Tensor& d = f.depthwise[0];
    if (p.extent(0) != half || p.extent(1) != half)
        throw shape_error("branch pointwise factor must be " + std::to_string(half) + "x" +
                          std::to_string(half) + ", got " + detail::shape_string(p.shape()));

    const std::size_t h_ext = input.extent(0), w_ext = input.extent(1);
    ConvDims dims;
    dims.kernel_size = d.extent(0);
    dims.in_channels = half;
    dims.out_channels = half;
    dims.in_height = h_ext;
    dims.in_width = w_ext;
    dims.stride = 1;
    dims.padding = padding;
    if (dims.output_height() != h_ext || dims.output_width() != w_ext)
        throw shape_error("branch padding " + std::to_string(padding) +
                          " does not preserve the " + std::to_string(h_ext) + "x" +
                          std::to_string(w_ext) + " spatial extent under a " +
                          std::to_string(d.extent(0)) + "-tap window");

    Tensor left_in({h_ext, w_ext, half});
    for (std::size_t h = 0; h < h_ext; ++h)
        for (std::size_t w = 0; w < w_ext; ++w)
            for (std::size_t c = 0; c < half; ++c)
                left_in(h, w, c) = input(h, w, c);
    Tensor left = detail::falcon_pair_forward(left_in, p, d, 1, padding, mac_count);

    Tensor merged({h_ext, w_ext, m_ext});
    for (std::size_t h = 0; h < h_ext; ++h)
        for (std::size_t w = 0; w < w_ext; ++w) {
            for (std::size_t c = 0; c < half; ++c)
                merged(h, w, c) = left(h, w, c);
            for (std::size_t c = half; c < m_ext; ++c)
                merged(h, w, c) = input(h, w, c);
        }
    return channel_shuffle(merged, 2);
}

} // namespace falcon
