#pragma once

#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <limits>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "falcon/analysis.hpp"
#include "falcon/conv.hpp"
#include "falcon/errors.hpp"
#include "falcon/falcon_ops.hpp"
#include "falcon/fitting.hpp"
#include "falcon/gep.hpp"
#include "falcon/io.hpp"
#include "falcon/tensor.hpp"

namespace falcon {

/// Exit codes shared by every subcommand.
enum exit_code : int {
    exit_ok = 0,
    exit_verify_failed = 1,
    exit_input_error = 2,
    exit_compute_error = 3,
};

namespace detail {

// Fixed six significant digits, locale independent.
inline std::string fmt6(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 6);
    return std::string(buf, res.ptr);
}

inline std::string shape_text(const Tensor& t) {
    return shape_string(t.shape());
}

// Factor container loaded from disk, in whichever orientation the file holds.
struct LoadedFactors {
    bool pointwise_first = false;
    FalconFactors falcon;
    DpconvFactors dpconv;
};

inline LoadedFactors load_factors(const std::vector<NamedTensor>& tensors) {
    LoadedFactors lf;
    if (find_tensor(tensors, "P.0") || find_tensor(tensors, "D.0")) {
        lf.pointwise_first = true;
        for (std::size_t r = 0;; ++r) {
            const Tensor* p = find_tensor(tensors, "P." + std::to_string(r));
            const Tensor* d = find_tensor(tensors, "D." + std::to_string(r));
            if (!p && !d)
                break;
            if (!p || !d)
                throw format_error("factor pair " + std::to_string(r) +
                                   " is incomplete: need both P." + std::to_string(r) +
                                   " and D." + std::to_string(r));
            lf.falcon.pointwise.push_back(*p);
            lf.falcon.depthwise.push_back(*d);
        }
        if (tensors.size() != 2 * lf.falcon.rank())
            throw format_error("factor file holds tensors outside the P.r/D.r pairs");
        validate_falcon_factors(lf.falcon);
        return lf;
    }
    const Tensor* d = find_tensor(tensors, "D");
    const Tensor* p = find_tensor(tensors, "P");
    if (d && p) {
        if (tensors.size() != 2)
            throw format_error("factor file holds tensors besides D and P");
        lf.dpconv.depthwise = *d;
        lf.dpconv.pointwise = *p;
        validate_dpconv_factors(lf.dpconv);
        return lf;
    }
    throw format_error("no factor tensors found: expected P.0/D.0 pairs or D and P");
}

inline const Tensor& load_kernel(const std::vector<NamedTensor>& tensors, const char* where) {
    const Tensor* k = find_tensor(tensors, "K");
    if (!k)
        throw format_error(std::string(where) + " holds no tensor 'K'");
    if (k->ndim() != 4)
        throw format_error("tensor 'K' must be 4-way, got " + shape_text(*k));
    return *k;
}

template <typename Fn>
int run_guarded(std::ostream& err, Fn&& fn) {
    try {
        return fn();
    } catch (const fit_error& e) {
        err << "error: " << e.what() << "\n";
        return exit_compute_error;
    } catch (const format_error& e) {
        err << "error: " << e.what() << "\n";
        return exit_input_error;
    } catch (const shape_error& e) {
        err << "error: " << e.what() << "\n";
        return exit_input_error;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return exit_compute_error;
    }
}

} // namespace detail

struct CompressOptions {
    std::string input;
    std::string output;
    std::size_t rank = 1;
    FitMethod method = FitMethod::svd;
    FitOrientation orientation = FitOrientation::falcon;
    FitInit init = FitInit::warm_svd;
    double learning_rate = 0.001;
    std::size_t max_iters = 1000;
    double tolerance = 1e-8;
    std::uint64_t seed = 0;
};

/// Factorizes the kernel K of the input file and writes the factors.
inline int cmd_compress(const CompressOptions& opts, std::ostream& out, std::ostream& err) {
    return detail::run_guarded(err, [&]() {
        const std::vector<NamedTensor> tensors = read_ftk(opts.input);
        const Tensor& kernel = detail::load_kernel(tensors, "input");

        FitConfig cfg;
        cfg.rank = opts.rank;
        cfg.method = opts.method;
        cfg.orientation = opts.orientation;
        cfg.init = opts.init;
        cfg.learning_rate = opts.learning_rate;
        cfg.max_iters = opts.max_iters;
        cfg.tolerance = opts.tolerance;
        cfg.seed = opts.seed;

        double res = 0.0;
        std::vector<NamedTensor> factors;
        if (opts.orientation == FitOrientation::falcon) {
            const FalconFactors f = (opts.method == FitMethod::svd)
                                        ? fit_svd(kernel, opts.rank)
                                        : fit_iterative(kernel, cfg);
            res = residual(kernel, f);
            for (std::size_t r = 0; r < f.rank(); ++r)
                factors.push_back({"P." + std::to_string(r), f.pointwise[r]});
            for (std::size_t r = 0; r < f.rank(); ++r)
                factors.push_back({"D." + std::to_string(r), f.depthwise[r]});
        } else {
            const DpconvFactors f = fit_dpconv(kernel, opts.rank, cfg);
            res = residual(kernel, f);
            factors.push_back({"D", f.depthwise});
            factors.push_back({"P", f.pointwise});
        }
        write_ftk(opts.output, factors);

        const double kn = frobenius_norm(kernel);
        const double rel = kn > 0.0 ? res / kn : 0.0;
        out << "residual " << detail::fmt6(res) << "\n";
        out << "relative_residual " << detail::fmt6(rel) << "\n";
        return exit_ok;
    });
}

struct ReconstructOptions {
    std::string factors;
    std::string output;
};

/// Expands a factor file back into a full kernel K.
inline int cmd_reconstruct(const ReconstructOptions& opts, std::ostream& out,
                           std::ostream& err) {
    return detail::run_guarded(err, [&]() {
        const detail::LoadedFactors lf = detail::load_factors(read_ftk(opts.factors));
        const Tensor kernel =
            lf.pointwise_first ? gep_rank_k(lf.falcon) : gep_dpconv(lf.dpconv);
        write_ftk(opts.output, {{"K", kernel}});
        out << "kernel " << detail::shape_text(kernel) << "\n";
        return exit_ok;
    });
}

struct VerifyOptions {
    std::string kernel;
    std::string factors;
    double tolerance = 1e-6;
};

/// Compares a factor file against a reference kernel.
inline int cmd_verify(const VerifyOptions& opts, std::ostream& out, std::ostream& err) {
    return detail::run_guarded(err, [&]() {
        const std::vector<NamedTensor> ktens = read_ftk(opts.kernel);
        const Tensor& kernel = detail::load_kernel(ktens, "kernel file");
        const detail::LoadedFactors lf = detail::load_factors(read_ftk(opts.factors));
        const Tensor recon =
            lf.pointwise_first ? gep_rank_k(lf.falcon) : gep_dpconv(lf.dpconv);
        if (!recon.same_shape(kernel))
            throw shape_error("factors reconstruct " + detail::shape_text(recon) +
                              " but kernel is " + detail::shape_text(kernel));

        double acc = 0.0;
        for (std::size_t q = 0; q < kernel.size(); ++q) {
            const double dd = recon[q] - kernel[q];
            acc += dd * dd;
        }
        const double res = std::sqrt(acc);
        const double kn = frobenius_norm(kernel);
        const double rel = kn > 0.0
                               ? res / kn
                               : (res > 0.0 ? std::numeric_limits<double>::infinity() : 0.0);
        out << "residual " << detail::fmt6(res) << "\n";
        out << "relative_residual " << detail::fmt6(rel) << "\n";

        const std::size_t e0 = kernel.extent(0), e1 = kernel.extent(1);
        const std::size_t m_ext = kernel.extent(2), n_ext = kernel.extent(3);
        for (std::size_t n = 0; n < n_ext; ++n) {
            double cacc = 0.0;
            for (std::size_t i = 0; i < e0; ++i)
                for (std::size_t j = 0; j < e1; ++j)
                    for (std::size_t m = 0; m < m_ext; ++m) {
                        const double dd = recon(i, j, m, n) - kernel(i, j, m, n);
                        cacc += dd * dd;
                    }
            out << "channel " << n << " residual " << detail::fmt6(std::sqrt(cacc)) << "\n";
        }

        const bool pass = rel <= opts.tolerance;
        out << (pass ? "pass" : "fail") << "\n";
        return pass ? exit_ok : exit_verify_failed;
    });
}

struct ForwardOptions {
    std::string model;
    std::string input;
    std::string output;
    std::size_t stride = 1;
    std::size_t padding = 0;
};

/// Runs one layer forward from a kernel or factor file and writes O.
inline int cmd_forward(const ForwardOptions& opts, std::ostream& out, std::ostream& err) {
    return detail::run_guarded(err, [&]() {
        const std::vector<NamedTensor> model = read_ftk(opts.model);
        const std::vector<NamedTensor> itens = read_ftk(opts.input);
        const Tensor* input = find_tensor(itens, "I");
        if (!input)
            throw format_error("input file holds no tensor 'I'");
        if (input->ndim() != 3)
            throw format_error("tensor 'I' must be 3-way, got " + detail::shape_text(*input));

        std::uint64_t macs = 0;
        Tensor output;
        if (find_tensor(model, "K")) {
            const Tensor& kernel = detail::load_kernel(model, "model file");
            if (model.size() != 1)
                throw format_error("model file holds tensors besides K");
            output = conv2d_standard(*input, kernel, opts.stride, opts.padding, &macs);
        } else {
            const detail::LoadedFactors lf = detail::load_factors(model);
            output = lf.pointwise_first
                         ? falcon_rank_k_forward(*input, lf.falcon, opts.stride,
                                                 opts.padding, &macs)
                         : dpconv_forward(*input, lf.dpconv, opts.stride, opts.padding, &macs);
        }
        write_ftk(opts.output, {{"O", output}});
        out << "output " << detail::shape_text(output) << "\n";
        out << "macs " << macs << "\n";
        return exit_ok;
    });
}

struct RatesOptions {
    ConvDims dims;
    std::size_t rank = 1;
};

/// Prints exact parameter/work counts and the two reduction ratios.
inline int cmd_rates(const RatesOptions& opts, std::ostream& out, std::ostream& err) {
    return detail::run_guarded(err, [&]() {
        const ConvType stconv{ConvType::Kind::stconv, 1.0, 1};
        const ConvType fal{ConvType::Kind::falcon, 1.0, 1};
        out << "params_stconv " << count_params(stconv, opts.dims) << "\n";
        out << "params_falcon " << count_params(fal, opts.dims, opts.rank) << "\n";
        out << "flops_stconv " << count_flops(stconv, opts.dims) << "\n";
        out << "flops_falcon " << count_flops(fal, opts.dims, opts.rank) << "\n";
        out << "compression_rate " << detail::fmt6(compression_rate(opts.dims, opts.rank))
            << "\n";
        out << "computation_reduction_rate "
            << detail::fmt6(computation_reduction_rate(opts.dims, opts.rank)) << "\n";
        return exit_ok;
    });
}

struct AnalyzeOptions {
    std::string config;
    std::string conv_override;  // empty keeps per-layer types
    std::size_t rank_override = 0;  // 0 keeps per-layer ranks
    std::string csv;  // empty writes no CSV
};

/// Whole-architecture accounting from a config file.
inline int cmd_analyze(const AnalyzeOptions& opts, std::ostream& out, std::ostream& err) {
    return detail::run_guarded(err, [&]() {
        std::vector<LayerSpec> layers = parse_arch_config_file(opts.config);
        if (!opts.conv_override.empty()) {
            const ConvType::Kind kind = conv_kind_from_string(opts.conv_override);
            for (LayerSpec& l : layers)
                l.conv.kind = kind;
        }
        if (opts.rank_override != 0)
            for (LayerSpec& l : layers)
                l.rank = opts.rank_override;

        const ArchReport report = analyze_architecture(layers);
        out << "# convolution layers only; BN, ReLU, and bias terms are not counted\n";
        for (const LayerReport& row : report.layers)
            out << "layer " << row.name << " " << to_string(row.conv.kind) << " params "
                << row.params << " flops " << row.flops << "\n";
        out << "total_params " << report.total_params << "\n";
        out << "total_flops " << report.total_flops << "\n";
        out << "total_params_stconv " << report.total_stconv_params << "\n";
        out << "total_flops_stconv " << report.total_stconv_flops << "\n";
        out << "param_ratio " << detail::fmt6(report.param_ratio()) << "\n";
        out << "flop_ratio " << detail::fmt6(report.flop_ratio()) << "\n";

        if (!opts.csv.empty()) {
            std::ofstream csv(opts.csv, std::ios::trunc);
            if (!csv)
                throw format_error("cannot open '" + opts.csv + "' for writing");
            csv << "layer,type,params,flops\n";
            for (const LayerReport& row : report.layers)
                csv << row.name << "," << to_string(row.conv.kind) << "," << row.params
                    << "," << row.flops << "\n";
            if (!csv)
                throw format_error("write to '" + opts.csv + "' failed");
        }
        return exit_ok;
    });
}

} // namespace falcon
