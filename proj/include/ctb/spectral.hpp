#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <stdexcept>

#include "ctb/rng.hpp"
#include "ctb/sparse.hpp"
#include "ctb/tensor.hpp"

namespace ctb {

/// Largest singular value of a linear map, via power iteration on M^T M.
/// `apply` and `apply_transpose` must implement the same matrix. Fixed seed
/// keeps the estimate reproducible run to run.
inline double power_iteration_sigma_max(
    std::size_t domain_dim,
    const std::function<void(const double*, double*)>& apply, std::size_t range_dim,
    const std::function<void(const double*, double*)>& apply_transpose,
    std::size_t max_iters = 500, double tol = 1e-12, std::uint64_t seed = 12345) {
    if (domain_dim == 0 || range_dim == 0)
        throw std::invalid_argument("power_iteration: empty operator");
    Rng rng(seed);
    std::vector<double> v(domain_dim), av(range_dim), w(domain_dim);
    for (double& x : v) x = uniform(rng, -1.0, 1.0);
    double nv = 0.0;
    for (double x : v) nv += x * x;
    nv = std::sqrt(nv);
    for (double& x : v) x /= nv;

    double lambda = 0.0;
    for (std::size_t it = 0; it < max_iters; ++it) {
        apply(v.data(), av.data());
        apply_transpose(av.data(), w.data());
        double nw = 0.0;
        for (double x : w) nw += x * x;
        nw = std::sqrt(nw);
        if (nw == 0.0) return 0.0;
        double lambda_new = 0.0;  // Rayleigh quotient v^T (M^T M) v = |Mv|^2
        for (double x : av) lambda_new += x * x;
        for (std::size_t i = 0; i < domain_dim; ++i) v[i] = w[i] / nw;
        if (it > 0 && std::fabs(lambda_new - lambda) <= tol * std::fabs(lambda_new)) {
            lambda = lambda_new;
            break;
        }
        lambda = lambda_new;
    }
    return std::sqrt(lambda);
}

inline double sigma_max(const CsrMatrix& m, std::size_t max_iters = 500,
                        double tol = 1e-12, std::uint64_t seed = 12345) {
    return power_iteration_sigma_max(
        m.cols(), [&](const double* x, double* y) { m.apply(x, y); }, m.rows(),
        [&](const double* x, double* y) { m.apply_transpose(x, y); }, max_iters, tol,
        seed);
}

}  // namespace ctb
