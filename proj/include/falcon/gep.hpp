#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "falcon/errors.hpp"
#include "falcon/tensor.hpp"

namespace falcon {

/// Rank-k factor set in pointwise-then-depthwise orientation.
/// pointwise[r] is N x M (out_channels major), depthwise[r] is D x D x N.
struct FalconFactors {
    std::vector<Tensor> pointwise;
    std::vector<Tensor> depthwise;

    std::size_t rank() const { return pointwise.size(); }
};

/// Factor pair in depthwise-then-pointwise orientation.
/// depthwise is D x D x M (in_channels major), pointwise is M x N.
struct DpconvFactors {
    Tensor depthwise;
    Tensor pointwise;
};

namespace detail {

inline void check_falcon_pair(const Tensor& p, const Tensor& d, std::size_t r) {
    const std::string at = " (factor pair " + std::to_string(r) + ")";
    if (p.ndim() != 2)
        throw shape_error("pointwise factor must be 2-way, got " +
                          shape_string(p.shape()) + at);
    if (d.ndim() != 3)
        throw shape_error("depthwise factor must be 3-way, got " +
                          shape_string(d.shape()) + at);
    if (d.extent(2) != p.extent(0))
        throw shape_error("depthwise channel count " + std::to_string(d.extent(2)) +
                          " does not match pointwise row count " +
                          std::to_string(p.extent(0)) + at);
}

} // namespace detail

inline void validate_falcon_factors(const FalconFactors& f) {
    if (f.pointwise.empty())
        throw shape_error("factor set is empty");
    if (f.pointwise.size() != f.depthwise.size())
        throw shape_error("factor set holds " + std::to_string(f.pointwise.size()) +
                          " pointwise but " + std::to_string(f.depthwise.size()) +
                          " depthwise tensors");
    for (std::size_t r = 0; r < f.rank(); ++r) {
        detail::check_falcon_pair(f.pointwise[r], f.depthwise[r], r);
        if (!f.pointwise[r].same_shape(f.pointwise[0]) ||
            !f.depthwise[r].same_shape(f.depthwise[0]))
            throw shape_error("factor pair " + std::to_string(r) +
                              " disagrees with pair 0 on shape");
    }
}

inline void validate_dpconv_factors(const DpconvFactors& f) {
    if (f.depthwise.ndim() != 3)
        throw shape_error("depthwise factor must be 3-way, got " +
                          detail::shape_string(f.depthwise.shape()));
    if (f.pointwise.ndim() != 2)
        throw shape_error("pointwise factor must be 2-way, got " +
                          detail::shape_string(f.pointwise.shape()));
    if (f.depthwise.extent(2) != f.pointwise.extent(0))
        throw shape_error("depthwise channel count " + std::to_string(f.depthwise.extent(2)) +
                          " does not match pointwise row count " +
                          std::to_string(f.pointwise.extent(0)));
}

/// Generalized elementwise product over one shared axis.  A is p-way with
/// trailing extent M, B is q-way with leading extent M; the result is
/// (p+q-1)-way:
///   out[i..., m, j...] = A[i..., m] * B[m, j...].
inline Tensor gep_general(const Tensor& a, const Tensor& b) {
    const std::size_t common = a.extent(a.ndim() - 1);
    if (b.extent(0) != common)
        throw shape_error("shared axis mismatch: A ends with " + std::to_string(common) +
                          ", B starts with " + std::to_string(b.extent(0)));
    std::vector<std::size_t> shape(a.shape().begin(), a.shape().end());
    shape.insert(shape.end(), b.shape().begin() + 1, b.shape().end());
    Tensor out(shape);

    const std::size_t lead = a.size() / common;
    const std::size_t trail = b.size() / common;
    for (std::size_t ia = 0; ia < lead; ++ia)
        for (std::size_t m = 0; m < common; ++m) {
            const double av = a[ia * common + m];
            for (std::size_t ib = 0; ib < trail; ++ib)
                out[(ia * common + m) * trail + ib] = av * b[m * trail + ib];
        }
    return out;
}

/// Expands depthwise-then-pointwise factors into a full 4-way kernel:
///   K[i, j, m, n] = D[i, j, m] * P[m, n].
inline Tensor gep_dpconv(const DpconvFactors& f) {
    validate_dpconv_factors(f);
    return gep_general(f.depthwise, f.pointwise);
}

/// Expands one pointwise/depthwise pair (pointwise-first orientation) into a
/// full 4-way kernel:
///   K[i, j, m, n] = P[n, m] * D[i, j, n].
inline Tensor gep_falcon(const FalconFactors& f) {
    validate_falcon_factors(f);
    if (f.rank() != 1)
        throw shape_error("gep_falcon expects exactly one factor pair, got " +
                          std::to_string(f.rank()));
    const Tensor& p = f.pointwise[0];
    const Tensor& d = f.depthwise[0];
    const std::size_t e0 = d.extent(0), e1 = d.extent(1);
    const std::size_t n_ext = p.extent(0), m_ext = p.extent(1);
    Tensor out({e0, e1, m_ext, n_ext});
    for (std::size_t i = 0; i < e0; ++i)
        for (std::size_t j = 0; j < e1; ++j)
            for (std::size_t m = 0; m < m_ext; ++m)
                for (std::size_t n = 0; n < n_ext; ++n)
                    out(i, j, m, n) = p(n, m) * d(i, j, n);
    return out;
}

/// Sum of per-pair expansions, accumulated in ascending pair order.
inline Tensor gep_rank_k(const FalconFactors& f) {
    validate_falcon_factors(f);
    FalconFactors pair;
    pair.pointwise.resize(1);
    pair.depthwise.resize(1);
    Tensor out;
    for (std::size_t r = 0; r < f.rank(); ++r) {
        pair.pointwise[0] = f.pointwise[r];
        pair.depthwise[0] = f.depthwise[r];
        Tensor term = gep_falcon(pair);
        if (r == 0) {
            out = std::move(term);
        } else {
            for (std::size_t q = 0; q < out.size(); ++q)
                out[q] += term[q];
        }
    }
    return out;
}

/// Per-group expansion of depthwise/pointwise factor lists; group i yields
/// the kernel gep_dpconv({depthwise[i], pointwise[i]}).
inline std::vector<Tensor> gep_group(const std::vector<Tensor>& depthwise,
                                     const std::vector<Tensor>& pointwise,
                                     std::size_t groups) {
    if (groups < 1)
        throw shape_error("group count must be positive");
    if (depthwise.size() != groups || pointwise.size() != groups)
        throw shape_error("expected " + std::to_string(groups) + " factor pairs, got " +
                          std::to_string(depthwise.size()) + " depthwise and " +
                          std::to_string(pointwise.size()) + " pointwise");
    std::vector<Tensor> out;
    out.reserve(groups);
    for (std::size_t g = 0; g < groups; ++g) {
        DpconvFactors f{depthwise[g], pointwise[g]};
        validate_dpconv_factors(f);
        if (!depthwise[g].same_shape(depthwise[0]) || !pointwise[g].same_shape(pointwise[0]))
            throw shape_error("group " + std::to_string(g) + " disagrees with group 0 on shape");
        out.push_back(gep_dpconv(f));
    }
    return out;
}

} // namespace falcon
