#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "falcon/errors.hpp"
#include "falcon/tensor.hpp"

namespace falcon {

/// Leading part of a singular value decomposition: A ~ sum_r s[r] u_r v_r^T
/// with s descending, u_r the columns of left (rows x k) and v_r the columns
/// of right (cols x k).
struct SvdResult {
    std::vector<double> singular_values;
    Tensor left;
    Tensor right;
};

namespace detail {

// Cyclic Jacobi eigensolver for a symmetric matrix held row-major in a.
// On return a's diagonal holds the eigenvalues (unsorted) and the columns of
// vecs the matching eigenvectors.
inline void jacobi_eigh(std::vector<double>& a, std::size_t n, std::vector<double>& vecs) {
    vecs.assign(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        vecs[i * n + i] = 1.0;
    if (n < 2)
        return;

    double total = 0.0;
    for (double x : a)
        total += x * x;
    if (total == 0.0)
        return;
    const double stop = total * 1e-30;  // off-diagonal energy target

    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j)
                off += 2.0 * a[i * n + j] * a[i * n + j];
        if (off <= stop)
            break;

        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a[p * n + q];
                if (apq == 0.0)
                    continue;
                const double app = a[p * n + p];
                const double aqq = a[q * n + q];
                const double tau = (aqq - app) / (2.0 * apq);
                const double t = (tau >= 0.0)
                                     ? 1.0 / (tau + std::sqrt(1.0 + tau * tau))
                                     : -1.0 / (-tau + std::sqrt(1.0 + tau * tau));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = t * c;

                for (std::size_t r = 0; r < n; ++r) {
                    if (r == p || r == q)
                        continue;
                    const double arp = a[r * n + p];
                    const double arq = a[r * n + q];
                    a[r * n + p] = a[p * n + r] = c * arp - s * arq;
                    a[r * n + q] = a[q * n + r] = s * arp + c * arq;
                }
                a[p * n + p] = app - t * apq;
                a[q * n + q] = aqq + t * apq;
                a[p * n + q] = a[q * n + p] = 0.0;

                for (std::size_t r = 0; r < n; ++r) {
                    const double vrp = vecs[r * n + p];
                    const double vrq = vecs[r * n + q];
                    vecs[r * n + p] = c * vrp - s * vrq;
                    vecs[r * n + q] = s * vrp + c * vrq;
                }
            }
    }
}

} // namespace detail

/// Leading k singular triplets of a 2-way tensor.  The eigenproblem is solved
/// on the smaller Gram matrix (A A^T or A^T A); the other side's vectors are
/// recovered as A^T u / s or A v / s.  Singular values too close to zero for
/// that division to carry meaning get zero vectors on the recovered side.
inline SvdResult truncated_svd(const Tensor& a, std::size_t k) {
    if (a.ndim() != 2)
        throw shape_error("truncated_svd expects a 2-way tensor, got " +
                          detail::shape_string(a.shape()));
    const std::size_t rows = a.extent(0), cols = a.extent(1);
    const std::size_t maxk = std::min(rows, cols);
    if (k < 1 || k > maxk)
        throw shape_error("rank " + std::to_string(k) + " out of range [1, " +
                          std::to_string(maxk) + "] for a " + std::to_string(rows) + "x" +
                          std::to_string(cols) + " matrix");

    const bool small_side_rows = rows <= cols;
    const std::size_t g = small_side_rows ? rows : cols;

    std::vector<double> gram(g * g, 0.0);
    for (std::size_t i = 0; i < g; ++i)
        for (std::size_t j = i; j < g; ++j) {
            double acc = 0.0;
            if (small_side_rows) {
                for (std::size_t c = 0; c < cols; ++c)
                    acc += a(i, c) * a(j, c);
            } else {
                for (std::size_t r = 0; r < rows; ++r)
                    acc += a(r, i) * a(r, j);
            }
            gram[i * g + j] = gram[j * g + i] = acc;
        }

    std::vector<double> vecs;
    detail::jacobi_eigh(gram, g, vecs);

    std::vector<std::size_t> order(g);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
        return gram[x * g + x] > gram[y * g + y];
    });

    const double lead = std::max(gram[order[0] * g + order[0]], 0.0);
    const double sigma1 = std::sqrt(lead);
    const double cutoff = sigma1 * std::numeric_limits<double>::epsilon();

    SvdResult res;
    res.singular_values.resize(k);
    res.left = Tensor({rows, k});
    res.right = Tensor({cols, k});
    for (std::size_t r = 0; r < k; ++r) {
        const std::size_t e = order[r];
        const double sigma = std::sqrt(std::max(gram[e * g + e], 0.0));
        res.singular_values[r] = sigma;
        if (small_side_rows) {
            for (std::size_t i = 0; i < rows; ++i)
                res.left(i, r) = vecs[i * g + e];
            if (sigma > cutoff) {
                for (std::size_t c = 0; c < cols; ++c) {
                    double acc = 0.0;
                    for (std::size_t i = 0; i < rows; ++i)
                        acc += a(i, c) * res.left(i, r);
                    res.right(c, r) = acc / sigma;
                }
            }
        } else {
            for (std::size_t c = 0; c < cols; ++c)
                res.right(c, r) = vecs[c * g + e];
            if (sigma > cutoff) {
                for (std::size_t i = 0; i < rows; ++i) {
                    double acc = 0.0;
                    for (std::size_t c = 0; c < cols; ++c)
                        acc += a(i, c) * res.right(c, r);
                    res.left(i, r) = acc / sigma;
                }
            }
        }
    }
    return res;
}

} // namespace falcon
