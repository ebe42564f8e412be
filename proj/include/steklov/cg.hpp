#pragma once

// Jacobi-preconditioned conjugate gradients for SPD systems, plus a
// constant-deflated variant for consistent singular systems whose kernel is
// the constant vector (periodic Steklov pencils without Dirichlet data).

#include <vector>

#include "steklov/sparse.hpp"

namespace steklov {

struct CgOptions {
    double tol = 1e-10; // relative residual target
    int max_iters = 0;  // 0: defaults to 20 * dimension
    bool deflate_constants = false;
};

inline std::vector<double> solve_spd(const SparseSymMatrix& matrix, const std::vector<double>& rhs,
                                     const CgOptions& opts) {
    const int n = matrix.dimension();
    if (static_cast<int>(rhs.size()) != n) throw numeric_error("solve_spd: rhs size mismatch");
    const int max_iters = opts.max_iters > 0 ? opts.max_iters : 20 * n;

    std::vector<double> inv_diag = matrix.diagonal();
    for (double& d : inv_diag) d = d > 0.0 ? 1.0 / d : 1.0;

    auto project = [&](std::vector<double>& v) {
        if (!opts.deflate_constants) return;
        double mean = 0.0;
        for (double x : v) mean += x;
        mean /= n;
        for (double& x : v) x -= mean;
    };

    std::vector<double> x(n, 0.0);
    std::vector<double> r = rhs;
    project(r);
    const double rhs_norm = vecops::norm2(r);
    if (rhs_norm == 0.0) return x;

    std::vector<double> z(n), p(n), Ap(n);
    for (int i = 0; i < n; ++i) z[i] = inv_diag[i] * r[i];
    project(z);
    p = z;
    double rz = vecops::dot(r, z);

    for (int iter = 0; iter < max_iters; ++iter) {
        matrix.apply(p, Ap);
        const double pAp = vecops::dot(p, Ap);
        if (!(pAp > 0.0))
            throw numeric_error("solve_spd: matrix is not positive definite on the search space");
        const double alpha = rz / pAp;
        vecops::axpy(alpha, p, x);
        vecops::axpy(-alpha, Ap, r);
        if (vecops::norm2(r) <= opts.tol * rhs_norm) {
            project(x);
            return x;
        }
        for (int i = 0; i < n; ++i) z[i] = inv_diag[i] * r[i];
        project(z);
        const double rz_next = vecops::dot(r, z);
        const double beta = rz_next / rz;
        rz = rz_next;
        for (int i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
    }
    throw numeric_error("solve_spd: no convergence after " + std::to_string(max_iters) +
                        " iterations (matrix singular or indefinite?)");
}

inline std::vector<double> solve_spd(const SparseSymMatrix& matrix, const std::vector<double>& rhs,
                                     double tol = 1e-10) {
    CgOptions opts;
    opts.tol = tol;
    return solve_spd(matrix, rhs, opts);
}

} // namespace steklov
