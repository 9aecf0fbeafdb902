#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <vector>

#include "falcon/fitting.hpp"
#include "falcon/gep.hpp"
#include "falcon/svd.hpp"
#include "falcon/tensor.hpp"
#include "oracles.hpp"

using falcon::DpconvFactors;
using falcon::FalconFactors;
using falcon::FitConfig;
using falcon::FitInit;
using falcon::FitMethod;
using falcon::FitOrientation;
using falcon::fit_error;
using falcon::Tensor;

namespace {

FalconFactors random_falcon(std::mt19937_64& rng, std::size_t d, std::size_t m,
                            std::size_t n, std::size_t rank) {
    FalconFactors f;
    for (std::size_t r = 0; r < rank; ++r) {
        f.pointwise.push_back(oracle::random_tensor({n, m}, rng));
        f.depthwise.push_back(oracle::random_tensor({d, d, n}, rng));
    }
    return f;
}

double objective(const Tensor& kernel, const FalconFactors& f) {
    const double r = falcon::residual(kernel, f);
    return r * r;
}

} // namespace

TEST_CASE("fit_svd residual equals the per-channel tail energy") {
    std::mt19937_64 rng(301);
    for (int trial = 0; trial < 10; ++trial) {
        const std::size_t d = 2 + rng() % 2, m = 3 + rng() % 3, n = 2 + rng() % 3;
        const Tensor kernel = oracle::random_tensor({d, d, m, n}, rng);
        const std::size_t maxk = std::min(d * d, m);
        for (std::size_t k = 1; k <= maxk; ++k) {
            const FalconFactors f = falcon::fit_svd(kernel, k);
            const double res = falcon::residual(kernel, f);

            double tail = 0.0;
            for (std::size_t ch = 0; ch < n; ++ch) {
                const Tensor slab = falcon::unfold_output_slice(kernel, ch);
                const std::vector<double> sv =
                    oracle::singular_values_reference(slab, maxk);
                for (std::size_t r = k; r < sv.size(); ++r)
                    tail += sv[r] * sv[r];
            }
            REQUIRE(std::fabs(res * res - tail) <
                    1e-9 * std::max(1.0, falcon::frobenius_norm(kernel)));
        }
    }
}

TEST_CASE("fit_svd beats random candidates of the same rank") {
    std::mt19937_64 rng(307);
    const std::size_t d = 3, m = 4, n = 3, k = 2;
    const Tensor kernel = oracle::random_tensor({d, d, m, n}, rng);
    const FalconFactors best = falcon::fit_svd(kernel, k);
    const double best_res = falcon::residual(kernel, best);
    for (int cand = 0; cand < 100; ++cand) {
        const FalconFactors trial = random_falcon(rng, d, m, n, k);
        REQUIRE(falcon::residual(kernel, trial) >= best_res - 1e-12);
    }
}

TEST_CASE("exactly factorable kernels are recovered") {
    std::mt19937_64 rng(311);
    for (int trial = 0; trial < 15; ++trial) {
        const std::size_t d = 1 + rng() % 3, m = 1 + rng() % 5, n = 1 + rng() % 4;
        const std::size_t maxk = std::min(d * d, m);
        const std::size_t k = 1 + rng() % maxk;
        const Tensor kernel = falcon::gep_rank_k(random_falcon(rng, d, m, n, k));
        const FalconFactors f = falcon::fit_svd(kernel, k);
        REQUIRE(falcon::residual(kernel, f) <=
                1e-8 * std::max(falcon::frobenius_norm(kernel), 1e-30));
    }
}

TEST_CASE("residual never grows with rank") {
    std::mt19937_64 rng(313);
    const std::size_t d = 3, m = 6, n = 4;
    const Tensor kernel = oracle::random_tensor({d, d, m, n}, rng);
    double prev = falcon::frobenius_norm(kernel);
    for (std::size_t k = 1; k <= std::min(d * d, m); ++k) {
        const double res = falcon::residual(kernel, falcon::fit_svd(kernel, k));
        REQUIRE(res <= prev + 1e-12);
        prev = res;
    }
    // Full rank represents the kernel exactly.
    REQUIRE(prev <= 1e-10 * falcon::frobenius_norm(kernel));
}

TEST_CASE("fit_svd rank bounds") {
    const Tensor kernel({2, 2, 3, 2});
    REQUIRE_THROWS_AS(falcon::fit_svd(kernel, 0), fit_error);
    REQUIRE_THROWS_AS(falcon::fit_svd(kernel, 4), fit_error);  // min(4, 3) = 3
    REQUIRE_THROWS_AS(falcon::fit_svd(Tensor({2, 2, 3}), 1), falcon::shape_error);
}

TEST_CASE("normalize_factors canonical form") {
    std::mt19937_64 rng(317);
    const std::size_t d = 3, m = 4, n = 3, k = 2;
    FalconFactors f = random_falcon(rng, d, m, n, k);
    const Tensor before = falcon::gep_rank_k(f);
    const FalconFactors g = falcon::normalize_factors(f);

    SECTION("reconstruction is preserved") {
        REQUIRE(oracle::rel_diff(falcon::gep_rank_k(g), before) < 1e-12);
    }

    SECTION("slice and row norms balance, peak is positive") {
        for (std::size_t r = 0; r < k; ++r)
            for (std::size_t ch = 0; ch < n; ++ch) {
                double a2 = 0.0, peak = 0.0, peak_abs = -1.0;
                for (std::size_t i = 0; i < d; ++i)
                    for (std::size_t j = 0; j < d; ++j) {
                        const double v = g.depthwise[r](i, j, ch);
                        a2 += v * v;
                        if (std::fabs(v) > peak_abs) {
                            peak_abs = std::fabs(v);
                            peak = v;
                        }
                    }
                double b2 = 0.0;
                for (std::size_t mm = 0; mm < m; ++mm)
                    b2 += g.pointwise[r](ch, mm) * g.pointwise[r](ch, mm);
                REQUIRE(std::fabs(std::sqrt(a2) - std::sqrt(b2)) <
                        1e-12 * std::max(std::sqrt(a2), 1.0));
                REQUIRE(peak > 0.0);
            }
    }

    SECTION("applying twice changes nothing") {
        const FalconFactors gg = falcon::normalize_factors(g);
        for (std::size_t r = 0; r < k; ++r) {
            REQUIRE(oracle::max_abs_diff(gg.pointwise[r], g.pointwise[r]) == 0.0);
            REQUIRE(oracle::max_abs_diff(gg.depthwise[r], g.depthwise[r]) == 0.0);
        }
    }

    SECTION("rescaled pairs normalize to the same form") {
        FalconFactors scaled = f;
        for (std::size_t ch = 0; ch < n; ++ch) {
            for (std::size_t i = 0; i < d; ++i)
                for (std::size_t j = 0; j < d; ++j)
                    scaled.depthwise[0](i, j, ch) *= -3.5;
            for (std::size_t mm = 0; mm < m; ++mm)
                scaled.pointwise[0](ch, mm) /= -3.5;
        }
        const FalconFactors h = falcon::normalize_factors(scaled);
        for (std::size_t r = 0; r < k; ++r) {
            REQUIRE(oracle::rel_diff(h.pointwise[r], g.pointwise[r]) < 1e-12);
            REQUIRE(oracle::rel_diff(h.depthwise[r], g.depthwise[r]) < 1e-12);
        }
    }

    SECTION("zero slices are untouched") {
        FalconFactors z = random_falcon(rng, 2, 3, 2, 1);
        for (std::size_t i = 0; i < 2; ++i)
            for (std::size_t j = 0; j < 2; ++j)
                z.depthwise[0](i, j, 0) = 0.0;
        const FalconFactors zn = falcon::normalize_factors(z);
        for (std::size_t i = 0; i < 2; ++i)
            for (std::size_t j = 0; j < 2; ++j)
                REQUIRE(zn.depthwise[0](i, j, 0) == 0.0);
        for (std::size_t mm = 0; mm < 3; ++mm)
            REQUIRE(zn.pointwise[0](0, mm) == z.pointwise[0](0, mm));
    }
}

TEST_CASE("normalize_factors dpconv orientation") {
    std::mt19937_64 rng(331);
    DpconvFactors f;
    f.depthwise = oracle::random_tensor({3, 3, 4}, rng);
    f.pointwise = oracle::random_tensor({4, 3}, rng);
    const Tensor before = falcon::gep_dpconv(f);
    const DpconvFactors g = falcon::normalize_factors(f);
    REQUIRE(oracle::rel_diff(falcon::gep_dpconv(g), before) < 1e-12);
    for (std::size_t m = 0; m < 4; ++m) {
        double a2 = 0.0, peak = 0.0, peak_abs = -1.0;
        for (std::size_t i = 0; i < 3; ++i)
            for (std::size_t j = 0; j < 3; ++j) {
                const double v = g.depthwise(i, j, m);
                a2 += v * v;
                if (std::fabs(v) > peak_abs) {
                    peak_abs = std::fabs(v);
                    peak = v;
                }
            }
        double b2 = 0.0;
        for (std::size_t n = 0; n < 3; ++n)
            b2 += g.pointwise(m, n) * g.pointwise(m, n);
        REQUIRE(std::fabs(std::sqrt(a2) - std::sqrt(b2)) < 1e-12 * std::sqrt(a2));
        REQUIRE(peak > 0.0);
    }
    const DpconvFactors gg = falcon::normalize_factors(g);
    REQUIRE(oracle::max_abs_diff(gg.depthwise, g.depthwise) == 0.0);
    REQUIRE(oracle::max_abs_diff(gg.pointwise, g.pointwise) == 0.0);
}

TEST_CASE("objective_gradient matches central differences") {
    std::mt19937_64 rng(337);
    const std::size_t d = 2, m = 3, n = 2, k = 2;
    const Tensor kernel = oracle::random_tensor({d, d, m, n}, rng);
    FalconFactors f = random_falcon(rng, d, m, n, k);
    const FalconFactors g = falcon::objective_gradient(kernel, f);

    const auto check_entry = [&](Tensor& param, const Tensor& grad, std::size_t q) {
        const double keep = param[q];
        const double h = 1e-6 * std::max(1.0, std::fabs(keep));
        param[q] = keep + h;
        const double up = objective(kernel, f);
        param[q] = keep - h;
        const double dn = objective(kernel, f);
        param[q] = keep;
        const double fd = (up - dn) / (2.0 * h);
        REQUIRE(std::fabs(fd - grad[q]) < 1e-4 * std::max(1.0, std::fabs(grad[q])));
    };

    for (std::size_t r = 0; r < k; ++r) {
        for (std::size_t q = 0; q < f.pointwise[r].size(); ++q)
            check_entry(f.pointwise[r], g.pointwise[r], q);
        for (std::size_t q = 0; q < f.depthwise[r].size(); ++q)
            check_entry(f.depthwise[r], g.depthwise[r], q);
    }
}

TEST_CASE("gradient vanishes at the closed-form optimum") {
    std::mt19937_64 rng(347);
    const std::size_t d = 3, m = 5, n = 3;
    const Tensor kernel = oracle::random_tensor({d, d, m, n}, rng);
    for (std::size_t k : {std::size_t{1}, std::size_t{2}}) {
        const FalconFactors f = falcon::fit_svd(kernel, k);
        const FalconFactors g = falcon::objective_gradient(kernel, f);
        const double scale = 1.0 + falcon::frobenius_norm(kernel);
        for (std::size_t r = 0; r < k; ++r) {
            for (std::size_t q = 0; q < g.pointwise[r].size(); ++q)
                REQUIRE(std::fabs(g.pointwise[r][q]) < 1e-9 * scale);
            for (std::size_t q = 0; q < g.depthwise[r].size(); ++q)
                REQUIRE(std::fabs(g.depthwise[r][q]) < 1e-9 * scale);
        }
    }
}

TEST_CASE("warm-started iteration stays at the closed-form solution") {
    std::mt19937_64 rng(349);
    const Tensor kernel = oracle::random_tensor({3, 3, 4, 3}, rng);
    const double svd_res = falcon::residual(kernel, falcon::fit_svd(kernel, 2));

    FitConfig cfg;
    cfg.rank = 2;
    cfg.method = FitMethod::iterative;
    cfg.init = FitInit::warm_svd;
    const FalconFactors f = falcon::fit_iterative(kernel, cfg);
    REQUIRE(std::fabs(falcon::residual(kernel, f) - svd_res) <=
            1e-6 * falcon::frobenius_norm(kernel));
}

TEST_CASE("randomly started iteration fits a factorable kernel") {
    std::mt19937_64 rng(353);
    const Tensor kernel = falcon::gep_rank_k(random_falcon(rng, 2, 2, 2, 1));

    FitConfig cfg;
    cfg.rank = 1;
    cfg.method = FitMethod::iterative;
    cfg.init = FitInit::random;
    cfg.seed = 7;
    cfg.learning_rate = 0.05;
    cfg.max_iters = 2000;
    cfg.tolerance = 0.0;
    const FalconFactors f = falcon::fit_iterative(kernel, cfg);
    REQUIRE(falcon::residual(kernel, f) <= 0.05 * falcon::frobenius_norm(kernel));
}

TEST_CASE("iteration reports divergence") {
    std::mt19937_64 rng(359);
    const Tensor kernel = oracle::random_tensor({2, 2, 2, 2}, rng);
    FitConfig cfg;
    cfg.rank = 1;
    cfg.method = FitMethod::iterative;
    cfg.learning_rate = 1e300;
    REQUIRE_THROWS_AS(falcon::fit_iterative(kernel, cfg), fit_error);
}

TEST_CASE("fit_iterative argument checks") {
    const Tensor kernel({2, 2, 3, 2});
    FitConfig cfg;
    cfg.orientation = FitOrientation::dpconv;
    REQUIRE_THROWS_AS(falcon::fit_iterative(kernel, cfg), fit_error);
    cfg.orientation = FitOrientation::falcon;
    cfg.rank = 9;
    REQUIRE_THROWS_AS(falcon::fit_iterative(kernel, cfg), fit_error);
}

TEST_CASE("zero kernels fit cleanly") {
    const Tensor kernel({3, 3, 2, 2});
    const FalconFactors f = falcon::fit_svd(kernel, 1);
    REQUIRE(falcon::residual(kernel, f) == 0.0);
    FitConfig cfg;
    cfg.method = FitMethod::iterative;
    const FalconFactors g = falcon::fit_iterative(kernel, cfg);
    REQUIRE(falcon::residual(kernel, g) == 0.0);
}

TEST_CASE("fit_dpconv closed form") {
    std::mt19937_64 rng(367);

    SECTION("recovers an exactly factorable kernel") {
        for (int trial = 0; trial < 10; ++trial) {
            DpconvFactors truth;
            truth.depthwise = oracle::random_tensor({3, 3, 3}, rng);
            truth.pointwise = oracle::random_tensor({3, 4}, rng);
            const Tensor kernel = falcon::gep_dpconv(truth);
            const DpconvFactors f = falcon::fit_dpconv(kernel);
            REQUIRE(falcon::residual(kernel, f) <=
                    1e-10 * falcon::frobenius_norm(kernel));
        }
    }

    SECTION("matches the dual orientation's closed form") {
        for (int trial = 0; trial < 10; ++trial) {
            const Tensor kernel = oracle::random_tensor({3, 3, 4, 3}, rng);
            const double dp_res = falcon::residual(kernel, falcon::fit_dpconv(kernel));
            const Tensor flipped = falcon::transpose_3_4(kernel);
            const double fa_res = falcon::residual(flipped, falcon::fit_svd(flipped, 1));
            REQUIRE(std::fabs(dp_res - fa_res) <= 1e-10 * falcon::frobenius_norm(kernel));
        }
    }

    SECTION("beats random candidates") {
        const Tensor kernel = oracle::random_tensor({3, 3, 4, 3}, rng);
        const double best = falcon::residual(kernel, falcon::fit_dpconv(kernel));
        for (int cand = 0; cand < 100; ++cand) {
            DpconvFactors trial;
            trial.depthwise = oracle::random_tensor({3, 3, 4}, rng);
            trial.pointwise = oracle::random_tensor({4, 3}, rng);
            REQUIRE(falcon::residual(kernel, trial) >= best - 1e-12);
        }
    }

    SECTION("only rank 1 exists") {
        const Tensor kernel = oracle::random_tensor({3, 3, 4, 3}, rng);
        REQUIRE_THROWS_AS(falcon::fit_dpconv(kernel, 2), fit_error);
    }

    SECTION("iterative path with a warm start") {
        const Tensor kernel = oracle::random_tensor({3, 3, 3, 3}, rng);
        const double svd_res = falcon::residual(kernel, falcon::fit_dpconv(kernel));
        FitConfig cfg;
        cfg.method = FitMethod::iterative;
        cfg.init = FitInit::warm_svd;
        const DpconvFactors f = falcon::fit_dpconv(kernel, 1, cfg);
        REQUIRE(std::fabs(falcon::residual(kernel, f) - svd_res) <=
                1e-6 * falcon::frobenius_norm(kernel));
    }
}

TEST_CASE("residual checks reconstruction shape") {
    std::mt19937_64 rng(373);
    const Tensor kernel = oracle::random_tensor({3, 3, 4, 2}, rng);
    const FalconFactors f = random_falcon(rng, 3, 4, 3, 1);  // wrong N
    REQUIRE_THROWS_AS(falcon::residual(kernel, f), falcon::shape_error);
}
