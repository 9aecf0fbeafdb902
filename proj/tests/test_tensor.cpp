#include <catch2/catch_amalgamated.hpp>

#include <random>
#include <vector>

#include "falcon/tensor.hpp"
#include "oracles.hpp"

using falcon::ConvDims;
using falcon::shape_error;
using falcon::Tensor;

namespace {

Tensor iota(std::vector<std::size_t> shape) {
    Tensor t(std::move(shape));
    for (std::size_t q = 0; q < t.size(); ++q)
        t[q] = static_cast<double>(q);
    return t;
}

} // namespace

TEST_CASE("construction and addressing") {
    Tensor t({2, 3, 4});
    REQUIRE(t.ndim() == 3);
    REQUIRE(t.size() == 24);
    for (std::size_t q = 0; q < t.size(); ++q)
        REQUIRE(t[q] == 0.0);

    t = iota({2, 3, 4});
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 0; j < 3; ++j)
            for (std::size_t k = 0; k < 4; ++k)
                REQUIRE(t(i, j, k) == static_cast<double>((i * 3 + j) * 4 + k));

    REQUIRE_THROWS_AS(Tensor({2, 0, 3}), shape_error);
    REQUIRE_THROWS_AS(Tensor(std::vector<std::size_t>{}), shape_error);
    REQUIRE_THROWS_AS(Tensor({2, 2}, {1.0, 2.0, 3.0}), shape_error);
    REQUIRE_THROWS_AS(t.extent(3), shape_error);
}

TEST_CASE("flat indexing round-trips") {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t ndim = 1 + rng() % 4;
        std::vector<std::size_t> shape(ndim);
        for (std::size_t a = 0; a < ndim; ++a)
            shape[a] = 1 + rng() % 5;
        const Tensor t(shape);
        for (std::size_t flat = 0; flat < t.size(); ++flat) {
            const std::vector<std::size_t> idx = t.multi_index(flat);
            REQUIRE(t.flat_index(idx) == flat);
            for (std::size_t a = 0; a < ndim; ++a)
                REQUIRE(idx[a] < shape[a]);
        }
    }

    const Tensor t({2, 3});
    const std::vector<std::size_t> bad{2, 0};
    REQUIRE_THROWS_AS(t.flat_index(bad), shape_error);
    const std::vector<std::size_t> wrong_arity{0};
    REQUIRE_THROWS_AS(t.flat_index(wrong_arity), shape_error);
    REQUIRE_THROWS_AS(t.multi_index(6), shape_error);
}

TEST_CASE("transpose_3_4 enumerated") {
    // 1 x 1 x 2 x 3 holding 0..5: the transpose is 1 x 1 x 3 x 2 and entry
    // (0, 0, n, m) picks up value m * 3 + n.
    const Tensor k = iota({1, 1, 2, 3});
    const Tensor kt = falcon::transpose_3_4(k);
    REQUIRE(kt.shape() == std::vector<std::size_t>{1, 1, 3, 2});
    for (std::size_t n = 0; n < 3; ++n)
        for (std::size_t m = 0; m < 2; ++m)
            REQUIRE(kt(0, 0, n, m) == static_cast<double>(m * 3 + n));
}

TEST_CASE("transpose_3_4 is an involution") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t d = 1 + rng() % 3;
        const Tensor k = oracle::random_tensor(
            {d, d, 1 + rng() % 4, 1 + rng() % 4}, rng);
        const Tensor back = falcon::transpose_3_4(falcon::transpose_3_4(k));
        REQUIRE(back.shape() == k.shape());
        REQUIRE(oracle::max_abs_diff(back, k) == 0.0);
    }
    REQUIRE_THROWS_AS(falcon::transpose_3_4(Tensor({2, 2, 2})), shape_error);
}

TEST_CASE("frobenius_norm") {
    REQUIRE(falcon::frobenius_norm(Tensor({2}, {3.0, 4.0})) == 5.0);
    REQUIRE(falcon::frobenius_norm(Tensor({4, 5})) == 0.0);

    std::mt19937_64 rng(13);
    for (int trial = 0; trial < 20; ++trial) {
        Tensor t = oracle::random_tensor({2 + rng() % 3, 2 + rng() % 3}, rng);
        const double base = falcon::frobenius_norm(t);
        Tensor scaled = t;
        for (std::size_t q = 0; q < scaled.size(); ++q)
            scaled[q] *= 2.0;  // power-of-two scale keeps the identity exact
        REQUIRE(falcon::frobenius_norm(scaled) == 2.0 * base);
    }
}

TEST_CASE("unfold_output_slice enumerated") {
    const Tensor k = iota({2, 2, 2, 2});
    const Tensor a0 = falcon::unfold_output_slice(k, 0);
    REQUIRE(a0.shape() == std::vector<std::size_t>{4, 2});
    const double want0[4][2] = {{0, 2}, {4, 6}, {8, 10}, {12, 14}};
    for (std::size_t r = 0; r < 4; ++r)
        for (std::size_t m = 0; m < 2; ++m)
            REQUIRE(a0(r, m) == want0[r][m]);

    const Tensor a1 = falcon::unfold_output_slice(k, 1);
    for (std::size_t r = 0; r < 4; ++r)
        for (std::size_t m = 0; m < 2; ++m)
            REQUIRE(a1(r, m) == want0[r][m] + 1.0);

    REQUIRE_THROWS_AS(falcon::unfold_output_slice(k, 2), shape_error);
    REQUIRE_THROWS_AS(falcon::unfold_output_slice(Tensor({2, 2, 2}), 0), shape_error);
}

TEST_CASE("unfold matches direct reads on random kernels") {
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t d = 1 + rng() % 3;
        const std::size_t m_ext = 1 + rng() % 4, n_ext = 1 + rng() % 4;
        const Tensor k = oracle::random_tensor({d, d, m_ext, n_ext}, rng);
        for (std::size_t n = 0; n < n_ext; ++n) {
            const Tensor a = falcon::unfold_output_slice(k, n);
            for (std::size_t i = 0; i < d; ++i)
                for (std::size_t j = 0; j < d; ++j)
                    for (std::size_t m = 0; m < m_ext; ++m)
                        REQUIRE(a(i * d + j, m) == k(i, j, m, n));
        }
    }
}

TEST_CASE("conv geometry") {
    ConvDims dims;
    dims.kernel_size = 3;
    dims.in_channels = 4;
    dims.out_channels = 5;
    dims.in_height = 5;
    dims.in_width = 7;
    dims.stride = 2;
    dims.padding = 1;
    REQUIRE(dims.output_height() == 3);  // (5 + 2 - 3) / 2 + 1
    REQUIRE(dims.output_width() == 4);   // (7 + 2 - 3) / 2 + 1

    dims.stride = 1;
    REQUIRE(dims.output_height() == 5);
    REQUIRE(dims.output_width() == 7);

    SECTION("degenerate window") {
        ConvDims bad = dims;
        bad.kernel_size = 8;
        bad.padding = 1;
        REQUIRE_THROWS_AS(bad.validate(), shape_error);
        bad.padding = 2;  // window fits again: 8 <= 5 + 4
        REQUIRE_NOTHROW(bad.validate());
        REQUIRE(bad.output_height() == 2);
        bad.in_height = 4;
        bad.in_width = 4;
        bad.kernel_size = 4;
        bad.padding = 0;
        REQUIRE_NOTHROW(bad.validate());
        REQUIRE(bad.output_height() == 1);
    }

    SECTION("zero fields") {
        ConvDims bad = dims;
        bad.stride = 0;
        REQUIRE_THROWS_AS(bad.validate(), shape_error);
        bad = dims;
        bad.in_channels = 0;
        REQUIRE_THROWS_AS(bad.validate(), shape_error);
        bad = dims;
        bad.kernel_size = 0;
        REQUIRE_THROWS_AS(bad.validate(), shape_error);
    }
}
