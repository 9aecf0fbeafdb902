#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "falcon/errors.hpp"
#include "falcon/tensor.hpp"

namespace falcon {

/// Layer flavor for parameter and work accounting.  expansion is the width
/// multiplier of the expanded pointwise-depthwise-pointwise flavor; groups is
/// the group count of the grouped-depthwise-grouped flavor.  Both default to
/// the neutral value and are ignored by the other flavors.
struct ConvType {
    enum class Kind {
        stconv,
        falcon,
        falcon_branch,
        dpconv,
        pdpconv,
        gdgconv,
        pdpconv_split,
        stconv_branch,
    };

    Kind kind = Kind::stconv;
    double expansion = 1.0;
    std::size_t groups = 1;
};

inline const char* to_string(ConvType::Kind kind) {
    switch (kind) {
    case ConvType::Kind::stconv: return "stconv";
    case ConvType::Kind::falcon: return "falcon";
    case ConvType::Kind::falcon_branch: return "falcon_branch";
    case ConvType::Kind::dpconv: return "dpconv";
    case ConvType::Kind::pdpconv: return "pdpconv";
    case ConvType::Kind::gdgconv: return "gdgconv";
    case ConvType::Kind::pdpconv_split: return "pdpconv_split";
    case ConvType::Kind::stconv_branch: return "stconv_branch";
    }
    return "?";
}

inline ConvType::Kind conv_kind_from_string(const std::string& token) {
    if (token == "stconv") return ConvType::Kind::stconv;
    if (token == "falcon") return ConvType::Kind::falcon;
    if (token == "falcon_branch") return ConvType::Kind::falcon_branch;
    if (token == "dpconv") return ConvType::Kind::dpconv;
    if (token == "pdpconv") return ConvType::Kind::pdpconv;
    if (token == "gdgconv") return ConvType::Kind::gdgconv;
    if (token == "pdpconv_split") return ConvType::Kind::pdpconv_split;
    if (token == "stconv_branch") return ConvType::Kind::stconv_branch;
    throw format_error("unknown conv type '" + token +
                       "' (expected stconv, falcon, falcon_branch, dpconv, pdpconv, "
                       "gdgconv, pdpconv_split, or stconv_branch)");
}

/// One layer of an architecture: a name for reporting, its geometry, its
/// flavor, and the factorization rank (meaningful for falcon layers).
struct LayerSpec {
    std::string name;
    ConvDims dims;
    ConvType conv;
    std::size_t rank = 1;
};

namespace detail {

// Count formulas divide exactly or not at all: a fractional parameter or
// multiply-add count means the layer cannot be realized as specified.
inline std::uint64_t exact_div(std::uint64_t v, std::uint64_t by, const char* what) {
    if (v % by != 0)
        throw shape_error(std::string(what) + " = " + std::to_string(v) +
                          " is not divisible by " + std::to_string(by));
    return v / by;
}

inline std::uint64_t exact_scale(double t, std::uint64_t v, const char* what) {
    const double x = t * static_cast<double>(v);
    if (!(x >= 0.0) || x > 9007199254740992.0 || x != std::floor(x))
        throw shape_error(std::string(what) + " * " + std::to_string(v) +
                          " is not an exact nonnegative integer");
    return static_cast<std::uint64_t>(x);
}

inline void check_groups(const ConvType& conv, std::uint64_t m, std::uint64_t n) {
    if (conv.groups < 1)
        throw shape_error("group count must be positive");
    if (m % conv.groups != 0 || n % conv.groups != 0)
        throw shape_error(std::to_string(conv.groups) + " groups do not divide channels " +
                          std::to_string(m) + " -> " + std::to_string(n));
}

inline void check_rank_neutral(const ConvType& conv, std::size_t rank) {
    if (rank != 1)
        throw shape_error("rank " + std::to_string(rank) + " applies to falcon layers, not " +
                          to_string(conv.kind));
}

inline void check_expansion(const ConvType& conv) {
    if (!(conv.expansion > 0.0))
        throw shape_error("width multiplier must be positive");
}

inline void check_square_channels(const ConvType& conv, std::uint64_t m, std::uint64_t n) {
    if (m != n)
        throw shape_error(std::string(to_string(conv.kind)) + " needs equal channel counts, got " +
                          std::to_string(m) + " -> " + std::to_string(n));
}

} // namespace detail

/// Weight count of one layer.
inline std::uint64_t count_params(const ConvType& conv, const ConvDims& dims,
                                  std::size_t rank = 1) {
    dims.validate();
    if (rank < 1)
        throw shape_error("rank must be positive");
    const std::uint64_t d2 = static_cast<std::uint64_t>(dims.kernel_size) * dims.kernel_size;
    const std::uint64_t m = dims.in_channels;
    const std::uint64_t n = dims.out_channels;

    switch (conv.kind) {
    case ConvType::Kind::stconv:
        detail::check_rank_neutral(conv, rank);
        return d2 * m * n;
    case ConvType::Kind::falcon:
        return rank * (m * n + d2 * n);
    case ConvType::Kind::falcon_branch:
        detail::check_rank_neutral(conv, rank);
        detail::check_square_channels(conv, m, n);
        return detail::exact_div(m * m, 4, "M*M") + detail::exact_div(d2 * m, 2, "D*D*M");
    case ConvType::Kind::dpconv:
        detail::check_rank_neutral(conv, rank);
        return m * n + d2 * m;
    case ConvType::Kind::pdpconv:
        detail::check_rank_neutral(conv, rank);
        detail::check_expansion(conv);
        return detail::exact_scale(conv.expansion, m * m + d2 * m + m * n, "t");
    case ConvType::Kind::gdgconv:
        detail::check_rank_neutral(conv, rank);
        detail::check_groups(conv, m, n);
        return detail::exact_div(m * n / conv.groups + d2 * n + n * n / conv.groups, 4,
                                 "MN/g + D*D*N + N*N/g");
    case ConvType::Kind::pdpconv_split:
        detail::check_rank_neutral(conv, rank);
        return detail::exact_div(m * m + d2 * m, 2, "M*M + D*D*M");
    case ConvType::Kind::stconv_branch:
        detail::check_rank_neutral(conv, rank);
        detail::check_square_channels(conv, m, n);
        return detail::exact_div(d2 * m * m, 4, "D*D*M*M");
    }
    throw shape_error("unknown conv type");
}

/// Multiply-add count of one layer's forward pass.
inline std::uint64_t count_flops(const ConvType& conv, const ConvDims& dims,
                                 std::size_t rank = 1) {
    dims.validate();
    if (rank < 1)
        throw shape_error("rank must be positive");
    const std::uint64_t d2 = static_cast<std::uint64_t>(dims.kernel_size) * dims.kernel_size;
    const std::uint64_t m = dims.in_channels;
    const std::uint64_t n = dims.out_channels;
    const std::uint64_t hw = static_cast<std::uint64_t>(dims.in_height) * dims.in_width;
    const std::uint64_t ohw =
        static_cast<std::uint64_t>(dims.output_height()) * dims.output_width();

    switch (conv.kind) {
    case ConvType::Kind::stconv:
        detail::check_rank_neutral(conv, rank);
        return ohw * d2 * m * n;
    case ConvType::Kind::falcon:
        return rank * (hw * m * n + ohw * d2 * n);
    case ConvType::Kind::falcon_branch:
        detail::check_rank_neutral(conv, rank);
        detail::check_square_channels(conv, m, n);
        return detail::exact_div(hw * m * m, 4, "HWMM") +
               detail::exact_div(hw * d2 * m, 2, "HW D*D*M");
    case ConvType::Kind::dpconv:
        detail::check_rank_neutral(conv, rank);
        return hw * d2 * m + ohw * m * n;
    case ConvType::Kind::pdpconv:
        detail::check_rank_neutral(conv, rank);
        detail::check_expansion(conv);
        return detail::exact_scale(conv.expansion, hw * m * m + ohw * d2 * m + ohw * m * n, "t");
    case ConvType::Kind::gdgconv:
        detail::check_rank_neutral(conv, rank);
        detail::check_groups(conv, m, n);
        return detail::exact_div(hw * m * n / conv.groups + ohw * d2 * n + ohw * n * n / conv.groups,
                                 4, "HWMN/g + H'W'D*D*N + H'W'N*N/g");
    case ConvType::Kind::pdpconv_split:
        detail::check_rank_neutral(conv, rank);
        return detail::exact_div(hw * (m * m + d2 * m), 2, "HW(M*M + D*D*M)");
    case ConvType::Kind::stconv_branch:
        detail::check_rank_neutral(conv, rank);
        detail::check_square_channels(conv, m, n);
        return detail::exact_div(hw * d2 * m * m, 4, "HW D*D*M*M");
    }
    throw shape_error("unknown conv type");
}

/// Standard-over-factorized parameter ratio at the given rank: the rank-1
/// ratio of exact integer counts, divided by the rank.
inline double compression_rate(const ConvDims& dims, std::size_t rank = 1) {
    dims.validate();
    if (rank < 1)
        throw shape_error("rank must be positive");
    const std::uint64_t d2 = static_cast<std::uint64_t>(dims.kernel_size) * dims.kernel_size;
    const std::uint64_t m = dims.in_channels;
    const std::uint64_t n = dims.out_channels;
    return static_cast<double>(d2 * m * n) / static_cast<double>(m * n + d2 * n) /
           static_cast<double>(rank);
}

/// Standard-over-factorized multiply-add ratio at the given rank.
inline double computation_reduction_rate(const ConvDims& dims, std::size_t rank = 1) {
    dims.validate();
    if (rank < 1)
        throw shape_error("rank must be positive");
    const std::uint64_t d2 = static_cast<std::uint64_t>(dims.kernel_size) * dims.kernel_size;
    const std::uint64_t m = dims.in_channels;
    const std::uint64_t n = dims.out_channels;
    const std::uint64_t hw = static_cast<std::uint64_t>(dims.in_height) * dims.in_width;
    const std::uint64_t ohw =
        static_cast<std::uint64_t>(dims.output_height()) * dims.output_width();
    return static_cast<double>(ohw * d2 * m * n) /
           static_cast<double>(hw * m * n + ohw * d2 * n) / static_cast<double>(rank);
}

struct LayerReport {
    std::string name;
    ConvType conv;
    std::size_t rank = 1;
    ConvDims dims;
    std::uint64_t params = 0;
    std::uint64_t flops = 0;
    std::uint64_t stconv_params = 0;
    std::uint64_t stconv_flops = 0;
};

struct ArchReport {
    std::vector<LayerReport> layers;
    std::uint64_t total_params = 0;
    std::uint64_t total_flops = 0;
    std::uint64_t total_stconv_params = 0;
    std::uint64_t total_stconv_flops = 0;

    double param_ratio() const {
        return static_cast<double>(total_stconv_params) / static_cast<double>(total_params);
    }
    double flop_ratio() const {
        return static_cast<double>(total_stconv_flops) / static_cast<double>(total_flops);
    }
};

/// Per-layer and whole-architecture accounting, with the same architecture
/// in standard form as the baseline.  Per-layer failures carry the layer
/// name.
inline ArchReport analyze_architecture(const std::vector<LayerSpec>& layers) {
    if (layers.empty())
        throw shape_error("architecture holds no layers");
    const ConvType baseline{ConvType::Kind::stconv, 1.0, 1};
    ArchReport report;
    for (const LayerSpec& l : layers) {
        LayerReport row;
        row.name = l.name;
        row.conv = l.conv;
        row.rank = l.rank;
        row.dims = l.dims;
        try {
            row.params = count_params(l.conv, l.dims, l.rank);
            row.flops = count_flops(l.conv, l.dims, l.rank);
            row.stconv_params = count_params(baseline, l.dims);
            row.stconv_flops = count_flops(baseline, l.dims);
        } catch (const shape_error& e) {
            throw shape_error("layer '" + l.name + "': " + e.what());
        }
        report.total_params += row.params;
        report.total_flops += row.flops;
        report.total_stconv_params += row.stconv_params;
        report.total_stconv_flops += row.stconv_flops;
        report.layers.push_back(std::move(row));
    }
    return report;
}

} // namespace falcon
