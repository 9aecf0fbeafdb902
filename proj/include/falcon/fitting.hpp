#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "falcon/errors.hpp"
#include "falcon/gep.hpp"
#include "falcon/svd.hpp"
#include "falcon/tensor.hpp"

namespace falcon {

enum class FitMethod { svd, iterative };
enum class FitOrientation { falcon, dpconv };
enum class FitInit { warm_svd, random };

/// Knobs for kernel factorization.  The moment constants beta1/beta2/epsilon
/// and the zero weight decay pin down the decoupled-weight-decay update rule
/// used by the iterative path; they are deliberate defaults of this toolkit.
struct FitConfig {
    std::size_t rank = 1;
    FitMethod method = FitMethod::svd;
    FitOrientation orientation = FitOrientation::falcon;
    FitInit init = FitInit::warm_svd;
    double learning_rate = 0.001;
    std::size_t max_iters = 1000;
    double tolerance = 1e-8;
    std::uint64_t seed = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double weight_decay = 0.0;
};

namespace detail {

inline void check_kernel(const Tensor& kernel) {
    if (kernel.ndim() != 4)
        throw shape_error("kernel must be 4-way D x D x M x N, got " +
                          shape_string(kernel.shape()));
}

inline void check_rank(const Tensor& kernel, std::size_t k) {
    const std::size_t maxk = std::min(kernel.extent(0) * kernel.extent(1), kernel.extent(2));
    if (k < 1 || k > maxk)
        throw fit_error("rank " + std::to_string(k) + " out of range [1, " +
                        std::to_string(maxk) + "] for kernel " +
                        shape_string(kernel.shape()));
}

// Rescale guard: a balancing factor this close to one is rounding noise, and
// skipping it keeps normalization idempotent at the bit level.
inline constexpr double near_one_tol() {
    return 64.0 * std::numeric_limits<double>::epsilon();
}

// Balance one depthwise slice (len entries, stride dstride starting at dbase)
// against one pointwise row (contiguous, prow[0..plen)), then flip signs so
// the slice's largest-magnitude entry (first in storage order on ties) is
// positive.  Slices with a zero side are left untouched.
inline void balance_slice(double* dbase, std::size_t len, std::size_t dstride,
                          double* prow, std::size_t plen) {
    double a2 = 0.0;
    for (std::size_t q = 0; q < len; ++q)
        a2 += dbase[q * dstride] * dbase[q * dstride];
    double b2 = 0.0;
    for (std::size_t q = 0; q < plen; ++q)
        b2 += prow[q] * prow[q];
    if (a2 == 0.0 || b2 == 0.0)
        return;

    const double c = std::sqrt(std::sqrt(b2) / std::sqrt(a2));
    if (std::fabs(c - 1.0) > near_one_tol()) {
        for (std::size_t q = 0; q < len; ++q)
            dbase[q * dstride] *= c;
        for (std::size_t q = 0; q < plen; ++q)
            prow[q] /= c;
    }

    double peak = 0.0;
    double peak_abs = -1.0;
    for (std::size_t q = 0; q < len; ++q) {
        const double v = std::fabs(dbase[q * dstride]);
        if (v > peak_abs) {
            peak_abs = v;
            peak = dbase[q * dstride];
        }
    }
    if (peak < 0.0) {
        for (std::size_t q = 0; q < len; ++q)
            dbase[q * dstride] = -dbase[q * dstride];
        for (std::size_t q = 0; q < plen; ++q)
            prow[q] = -prow[q];
    }
}

} // namespace detail

/// Canonical scaling: for every factor pair and channel the depthwise slice
/// and the pointwise row get equal norms and a positive leading depthwise
/// peak.  The reconstructed kernel is unchanged up to rounding, and applying
/// the map twice equals applying it once.
inline FalconFactors normalize_factors(FalconFactors f) {
    validate_falcon_factors(f);
    const std::size_t taps = f.depthwise[0].extent(0) * f.depthwise[0].extent(1);
    const std::size_t n_ext = f.pointwise[0].extent(0);
    const std::size_t m_ext = f.pointwise[0].extent(1);
    for (std::size_t r = 0; r < f.rank(); ++r)
        for (std::size_t n = 0; n < n_ext; ++n)
            detail::balance_slice(f.depthwise[r].data() + n, taps, n_ext,
                                  f.pointwise[r].data() + n * m_ext, m_ext);
    return f;
}

inline DpconvFactors normalize_factors(DpconvFactors f) {
    validate_dpconv_factors(f);
    const std::size_t taps = f.depthwise.extent(0) * f.depthwise.extent(1);
    const std::size_t m_ext = f.pointwise.extent(0);
    const std::size_t n_ext = f.pointwise.extent(1);
    for (std::size_t m = 0; m < m_ext; ++m)
        detail::balance_slice(f.depthwise.data() + m, taps, m_ext,
                              f.pointwise.data() + m * n_ext, n_ext);
    return f;
}

/// Frobenius distance between a kernel and its factor reconstruction.
inline double residual(const Tensor& kernel, const FalconFactors& f) {
    detail::check_kernel(kernel);
    Tensor recon = gep_rank_k(f);
    if (!recon.same_shape(kernel))
        throw shape_error("factors reconstruct " + detail::shape_string(recon.shape()) +
                          " but kernel is " + detail::shape_string(kernel.shape()));
    double acc = 0.0;
    for (std::size_t q = 0; q < recon.size(); ++q) {
        const double d = recon[q] - kernel[q];
        acc += d * d;
    }
    return std::sqrt(acc);
}

inline double residual(const Tensor& kernel, const DpconvFactors& f) {
    detail::check_kernel(kernel);
    Tensor recon = gep_dpconv(f);
    if (!recon.same_shape(kernel))
        throw shape_error("factors reconstruct " + detail::shape_string(recon.shape()) +
                          " but kernel is " + detail::shape_string(kernel.shape()));
    double acc = 0.0;
    for (std::size_t q = 0; q < recon.size(); ++q) {
        const double d = recon[q] - kernel[q];
        acc += d * d;
    }
    return std::sqrt(acc);
}

namespace detail {

// Gradient of ||reconstruction - kernel||_F^2 given the elementwise residual
// R = reconstruction - kernel.
inline FalconFactors falcon_gradient(const Tensor& resid, const FalconFactors& f) {
    const std::size_t e0 = resid.extent(0), e1 = resid.extent(1);
    const std::size_t m_ext = resid.extent(2), n_ext = resid.extent(3);
    FalconFactors g;
    g.pointwise.assign(f.rank(), Tensor({n_ext, m_ext}));
    g.depthwise.assign(f.rank(), Tensor({e0, e1, n_ext}));
    for (std::size_t r = 0; r < f.rank(); ++r) {
        const Tensor& p = f.pointwise[r];
        const Tensor& d = f.depthwise[r];
        for (std::size_t i = 0; i < e0; ++i)
            for (std::size_t j = 0; j < e1; ++j)
                for (std::size_t n = 0; n < n_ext; ++n) {
                    double acc = 0.0;
                    for (std::size_t m = 0; m < m_ext; ++m)
                        acc += resid(i, j, m, n) * p(n, m);
                    g.depthwise[r](i, j, n) = 2.0 * acc;
                }
        for (std::size_t n = 0; n < n_ext; ++n)
            for (std::size_t m = 0; m < m_ext; ++m) {
                double acc = 0.0;
                for (std::size_t i = 0; i < e0; ++i)
                    for (std::size_t j = 0; j < e1; ++j)
                        acc += resid(i, j, m, n) * d(i, j, n);
                g.pointwise[r](n, m) = 2.0 * acc;
            }
    }
    return g;
}

inline DpconvFactors dpconv_gradient(const Tensor& resid, const DpconvFactors& f) {
    const std::size_t e0 = resid.extent(0), e1 = resid.extent(1);
    const std::size_t m_ext = resid.extent(2), n_ext = resid.extent(3);
    DpconvFactors g;
    g.depthwise = Tensor({e0, e1, m_ext});
    g.pointwise = Tensor({m_ext, n_ext});
    for (std::size_t i = 0; i < e0; ++i)
        for (std::size_t j = 0; j < e1; ++j)
            for (std::size_t m = 0; m < m_ext; ++m) {
                double acc = 0.0;
                for (std::size_t n = 0; n < n_ext; ++n)
                    acc += resid(i, j, m, n) * f.pointwise(m, n);
                g.depthwise(i, j, m) = 2.0 * acc;
            }
    for (std::size_t m = 0; m < m_ext; ++m)
        for (std::size_t n = 0; n < n_ext; ++n) {
            double acc = 0.0;
            for (std::size_t i = 0; i < e0; ++i)
                for (std::size_t j = 0; j < e1; ++j)
                    acc += resid(i, j, m, n) * f.depthwise(i, j, m);
            g.pointwise(m, n) = 2.0 * acc;
        }
    return g;
}

// First-moment/second-moment optimizer state over a flat list of tensors.
struct AdamState {
    std::vector<std::vector<double>> m1, m2;
    std::size_t t = 0;

    void init(const std::vector<Tensor*>& params) {
        m1.clear();
        m2.clear();
        for (const Tensor* p : params) {
            m1.emplace_back(p->size(), 0.0);
            m2.emplace_back(p->size(), 0.0);
        }
    }

    void step(const std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads,
              const FitConfig& cfg) {
        ++t;
        const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
        const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
        for (std::size_t i = 0; i < params.size(); ++i) {
            Tensor& p = *params[i];
            const Tensor& g = *grads[i];
            for (std::size_t q = 0; q < p.size(); ++q) {
                const double gq = g[q];
                m1[i][q] = cfg.beta1 * m1[i][q] + (1.0 - cfg.beta1) * gq;
                m2[i][q] = cfg.beta2 * m2[i][q] + (1.0 - cfg.beta2) * gq * gq;
                const double mh = m1[i][q] / bc1;
                const double vh = m2[i][q] / bc2;
                p[q] -= cfg.learning_rate *
                        (mh / (std::sqrt(vh) + cfg.epsilon) + cfg.weight_decay * p[q]);
            }
        }
    }
};

inline double random_init_scale(const Tensor& kernel) {
    const double taps = static_cast<double>(kernel.extent(0) * kernel.extent(1));
    const double chans = static_cast<double>(kernel.extent(2) * kernel.extent(3));
    const double kn = frobenius_norm(kernel);
    return kn / (std::sqrt(taps) * std::sqrt(chans));
}

} // namespace detail

/// Closed-form factorization: every output channel's window-by-input-channel
/// unfolding is independently approximated by its leading k singular triplets,
/// which is the Frobenius-optimal rank-k fit per channel.  Factor weights are
/// split as sqrt(sigma) on each side, then canonically normalized.
inline FalconFactors fit_svd(const Tensor& kernel, std::size_t k) {
    detail::check_kernel(kernel);
    detail::check_rank(kernel, k);
    const std::size_t e0 = kernel.extent(0), e1 = kernel.extent(1);
    const std::size_t m_ext = kernel.extent(2), n_ext = kernel.extent(3);

    FalconFactors f;
    f.pointwise.assign(k, Tensor({n_ext, m_ext}));
    f.depthwise.assign(k, Tensor({e0, e1, n_ext}));
    for (std::size_t n = 0; n < n_ext; ++n) {
        const Tensor slab = unfold_output_slice(kernel, n);
        const SvdResult s = truncated_svd(slab, k);
        for (std::size_t r = 0; r < k; ++r) {
            const double w = std::sqrt(s.singular_values[r]);
            for (std::size_t i = 0; i < e0; ++i)
                for (std::size_t j = 0; j < e1; ++j)
                    f.depthwise[r](i, j, n) = w * s.left(i * e1 + j, r);
            for (std::size_t m = 0; m < m_ext; ++m)
                f.pointwise[r](n, m) = w * s.right(m, r);
        }
    }
    return normalize_factors(std::move(f));
}

/// Gradient of ||gep_rank_k(f) - kernel||_F^2 with respect to every factor
/// entry, returned in factor layout.
inline FalconFactors objective_gradient(const Tensor& kernel, const FalconFactors& f) {
    detail::check_kernel(kernel);
    validate_falcon_factors(f);
    Tensor resid = gep_rank_k(f);
    if (!resid.same_shape(kernel))
        throw shape_error("factors reconstruct " + detail::shape_string(resid.shape()) +
                          " but kernel is " + detail::shape_string(kernel.shape()));
    for (std::size_t q = 0; q < resid.size(); ++q)
        resid[q] -= kernel[q];
    return detail::falcon_gradient(resid, f);
}

/// Full-batch first-order fit of pointwise-first factors.  Each iteration
/// reconstructs the kernel, takes the exact objective gradient, and applies
/// one moment-based update; the loop stops when the residual norm changes by
/// at most tolerance * ||kernel||_F, and throws fit_error if the residual
/// stops being finite.
inline FalconFactors fit_iterative(const Tensor& kernel, const FitConfig& cfg) {
    detail::check_kernel(kernel);
    if (cfg.orientation != FitOrientation::falcon)
        throw fit_error("fit_iterative handles the pointwise-first orientation; "
                        "use fit_dpconv for the depthwise-first one");
    detail::check_rank(kernel, cfg.rank);
    const std::size_t e0 = kernel.extent(0), e1 = kernel.extent(1);
    const std::size_t m_ext = kernel.extent(2), n_ext = kernel.extent(3);

    FalconFactors f;
    if (cfg.init == FitInit::warm_svd) {
        f = fit_svd(kernel, cfg.rank);
    } else {
        std::mt19937_64 rng(cfg.seed);
        std::normal_distribution<double> dist(0.0, 1.0);
        const double scale = detail::random_init_scale(kernel);
        f.pointwise.assign(cfg.rank, Tensor({n_ext, m_ext}));
        f.depthwise.assign(cfg.rank, Tensor({e0, e1, n_ext}));
        for (std::size_t r = 0; r < cfg.rank; ++r) {
            for (std::size_t q = 0; q < f.pointwise[r].size(); ++q)
                f.pointwise[r][q] = scale * dist(rng);
            for (std::size_t q = 0; q < f.depthwise[r].size(); ++q)
                f.depthwise[r][q] = scale * dist(rng);
        }
    }

    std::vector<Tensor*> params;
    for (std::size_t r = 0; r < cfg.rank; ++r) {
        params.push_back(&f.pointwise[r]);
        params.push_back(&f.depthwise[r]);
    }
    detail::AdamState adam;
    adam.init(params);

    const double kn = frobenius_norm(kernel);
    double prev = std::numeric_limits<double>::infinity();
    for (std::size_t it = 0; it < cfg.max_iters; ++it) {
        Tensor resid = gep_rank_k(f);
        double acc = 0.0;
        for (std::size_t q = 0; q < resid.size(); ++q) {
            resid[q] -= kernel[q];
            acc += resid[q] * resid[q];
        }
        const double res = std::sqrt(acc);
        if (!std::isfinite(res))
            throw fit_error("fit diverged at iteration " + std::to_string(it));
        if (std::fabs(prev - res) <= cfg.tolerance * kn)
            break;
        prev = res;

        const FalconFactors g = detail::falcon_gradient(resid, f);
        std::vector<const Tensor*> grads;
        for (std::size_t r = 0; r < cfg.rank; ++r) {
            grads.push_back(&g.pointwise[r]);
            grads.push_back(&g.depthwise[r]);
        }
        adam.step(params, grads, cfg);
    }
    return normalize_factors(std::move(f));
}

/// Depthwise-first factorization.  The closed form runs one rank-1 SVD per
/// input channel on its window-by-output-channel unfolding; the iterative
/// path mirrors fit_iterative in this orientation.  Only rank 1 exists here:
/// the per-channel window filter admits no rank expansion on this side.
inline DpconvFactors fit_dpconv(const Tensor& kernel, std::size_t k = 1,
                                const FitConfig& cfg = FitConfig{}) {
    detail::check_kernel(kernel);
    if (k != 1)
        throw fit_error("depthwise-first factorization supports rank 1 only, got rank " +
                        std::to_string(k));
    const std::size_t e0 = kernel.extent(0), e1 = kernel.extent(1);
    const std::size_t m_ext = kernel.extent(2), n_ext = kernel.extent(3);

    const auto svd_fit = [&]() {
        DpconvFactors f;
        f.depthwise = Tensor({e0, e1, m_ext});
        f.pointwise = Tensor({m_ext, n_ext});
        Tensor slab({e0 * e1, n_ext});
        for (std::size_t m = 0; m < m_ext; ++m) {
            for (std::size_t i = 0; i < e0; ++i)
                for (std::size_t j = 0; j < e1; ++j)
                    for (std::size_t n = 0; n < n_ext; ++n)
                        slab(i * e1 + j, n) = kernel(i, j, m, n);
            const SvdResult s = truncated_svd(slab, 1);
            const double w = std::sqrt(s.singular_values[0]);
            for (std::size_t i = 0; i < e0; ++i)
                for (std::size_t j = 0; j < e1; ++j)
                    f.depthwise(i, j, m) = w * s.left(i * e1 + j, 0);
            for (std::size_t n = 0; n < n_ext; ++n)
                f.pointwise(m, n) = w * s.right(n, 0);
        }
        return f;
    };

    DpconvFactors f;
    if (cfg.method == FitMethod::svd) {
        f = svd_fit();
    } else {
        if (cfg.init == FitInit::warm_svd) {
            f = svd_fit();
        } else {
            std::mt19937_64 rng(cfg.seed);
            std::normal_distribution<double> dist(0.0, 1.0);
            const double scale = detail::random_init_scale(kernel);
            f.depthwise = Tensor({e0, e1, m_ext});
            f.pointwise = Tensor({m_ext, n_ext});
            for (std::size_t q = 0; q < f.depthwise.size(); ++q)
                f.depthwise[q] = scale * dist(rng);
            for (std::size_t q = 0; q < f.pointwise.size(); ++q)
                f.pointwise[q] = scale * dist(rng);
        }

        std::vector<Tensor*> params{&f.depthwise, &f.pointwise};
        detail::AdamState adam;
        adam.init(params);

        const double kn = frobenius_norm(kernel);
        double prev = std::numeric_limits<double>::infinity();
        for (std::size_t it = 0; it < cfg.max_iters; ++it) {
            Tensor resid = gep_dpconv(f);
            double acc = 0.0;
            for (std::size_t q = 0; q < resid.size(); ++q) {
                resid[q] -= kernel[q];
                acc += resid[q] * resid[q];
            }
            const double res = std::sqrt(acc);
            if (!std::isfinite(res))
                throw fit_error("fit diverged at iteration " + std::to_string(it));
            if (std::fabs(prev - res) <= cfg.tolerance * kn)
                break;
            prev = res;

            const DpconvFactors g = detail::dpconv_gradient(resid, f);
            std::vector<const Tensor*> grads{&g.depthwise, &g.pointwise};
            adam.step(params, grads, cfg);
        }
    }
    return normalize_factors(std::move(f));
}

} // namespace falcon
