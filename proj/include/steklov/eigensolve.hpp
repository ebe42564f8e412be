#pragma once

// Generalized symmetric eigensolvers for the two pencil shapes the toolkit
// needs:
//
//  * steklov_eigs: A v = lambda B v with A SPD (or positive semidefinite with
//    the constant vector as kernel, handled by deflation) and B symmetric
//    indefinite with a large kernel. Solved as the mu-pencil B v = mu A v
//    (mu = 1/lambda) by Lanczos on the A-self-adjoint operator C = A^{-1} B,
//    matrix-free with inner CG solves. Both ends of the mu-spectrum come out
//    of one Krylov subspace; mu ~ 0 modes are the discrete B-kernel and are
//    filtered out.
//
//  * dirichlet_eigs: K u = kappa M u with both SPD; shift-invert at 0, i.e.
//    the same Lanczos on K^{-1} M taking the largest mu = 1/kappa.
//
// Determinism: the start vector and any restart injections come from a seeded
// LCG stream; all loops have fixed order. Identical inputs and seed give
// bit-identical results on one platform.

#include <cstdint>
#include <string>
#include <vector>

#include "steklov/cg.hpp"
#include "steklov/sparse.hpp"

namespace steklov {

namespace densela {

/// Eigen decomposition of a symmetric tridiagonal matrix (QL with implicit
/// shifts). `d` holds the diagonal on input, ascending eigenvalues on output;
/// `e` the subdiagonal in e[0..n-2]. `z` returns eigenvectors column-wise
/// (z[i*n+j] = i-th component of the j-th eigenvector).
inline void tridiag_eig(std::vector<double>& d, std::vector<double>& e, std::vector<double>& z,
                        int n) {
    z.assign(static_cast<std::size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i) z[static_cast<std::size_t>(i) * n + i] = 1.0;
    if (n == 1) return;
    e.resize(n, 0.0);
    e[n - 1] = 0.0;

    for (int l = 0; l < n; ++l) {
        int iter = 0;
        int m;
        do {
            for (m = l; m < n - 1; ++m) {
                const double dd = std::abs(d[m]) + std::abs(d[m + 1]);
                if (std::abs(e[m]) <= 1e-300 + 2.3e-16 * dd) break;
            }
            if (m != l) {
                if (iter++ == 50) throw numeric_error("tridiag_eig: no convergence");
                double g = (d[l + 1] - d[l]) / (2.0 * e[l]);
                double r = std::hypot(g, 1.0);
                g = d[m] - d[l] + e[l] / (g + (g >= 0 ? std::abs(r) : -std::abs(r)));
                double s = 1.0, c = 1.0, p = 0.0;
                for (int i = m - 1; i >= l; --i) {
                    double f = s * e[i];
                    const double b = c * e[i];
                    r = std::hypot(f, g);
                    e[i + 1] = r;
                    if (r == 0.0) {
                        d[i + 1] -= p;
                        e[m] = 0.0;
                        break;
                    }
                    s = f / r;
                    c = g / r;
                    g = d[i + 1] - p;
                    r = (d[i] - g) * s + 2.0 * c * b;
                    p = s * r;
                    d[i + 1] = g + p;
                    g = c * r - b;
                    for (int k = 0; k < n; ++k) {
                        f = z[static_cast<std::size_t>(k) * n + i + 1];
                        z[static_cast<std::size_t>(k) * n + i + 1] =
                            s * z[static_cast<std::size_t>(k) * n + i] + c * f;
                        z[static_cast<std::size_t>(k) * n + i] =
                            c * z[static_cast<std::size_t>(k) * n + i] - s * f;
                    }
                }
                if (r == 0.0 && m - 1 >= l) continue;
                d[l] -= p;
                e[l] = g;
                e[m] = 0.0;
            }
        } while (m != l);
    }
    // Sort ascending, carrying eigenvectors along.
    for (int i = 0; i < n - 1; ++i) {
        int kmin = i;
        for (int j = i + 1; j < n; ++j)
            if (d[j] < d[kmin]) kmin = j;
        if (kmin != i) {
            std::swap(d[i], d[kmin]);
            for (int r = 0; r < n; ++r)
                std::swap(z[static_cast<std::size_t>(r) * n + i],
                          z[static_cast<std::size_t>(r) * n + kmin]);
        }
    }
}

/// Cyclic Jacobi eigen decomposition for small dense symmetric matrices.
/// `a` is row-major n x n; returns ascending eigenvalues in `w`, eigenvectors
/// column-wise in `v`.
inline void jacobi_eig(std::vector<double> a, int n, std::vector<double>& w,
                       std::vector<double>& v) {
    v.assign(static_cast<std::size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i) * n + i] = 1.0;
    auto at = [&](std::vector<double>& m, int i, int j) -> double& {
        return m[static_cast<std::size_t>(i) * n + j];
    };
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j) off += at(a, i, j) * at(a, i, j);
        if (off <= 1e-300) break;
        double scale = 0.0;
        for (int i = 0; i < n; ++i) scale = std::max(scale, std::abs(at(a, i, i)));
        if (std::sqrt(off) <= 1e-15 * std::max(scale, 1e-300)) break;
        for (int p = 0; p < n - 1; ++p) {
            for (int q = p + 1; q < n; ++q) {
                const double apq = at(a, p, q);
                if (std::abs(apq) <= 1e-300) continue;
                const double theta = (at(a, q, q) - at(a, p, p)) / (2.0 * apq);
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (int i = 0; i < n; ++i) {
                    const double aip = at(a, i, p), aiq = at(a, i, q);
                    at(a, i, p) = c * aip - s * aiq;
                    at(a, i, q) = s * aip + c * aiq;
                }
                for (int i = 0; i < n; ++i) {
                    const double api = at(a, p, i), aqi = at(a, q, i);
                    at(a, p, i) = c * api - s * aqi;
                    at(a, q, i) = s * api + c * aqi;
                }
                for (int i = 0; i < n; ++i) {
                    const double vip = at(v, i, p), viq = at(v, i, q);
                    at(v, i, p) = c * vip - s * viq;
                    at(v, i, q) = s * vip + c * viq;
                }
            }
        }
    }
    w.assign(n, 0.0);
    for (int i = 0; i < n; ++i) w[i] = a[static_cast<std::size_t>(i) * n + i];
    for (int i = 0; i < n - 1; ++i) {
        int kmin = i;
        for (int j = i + 1; j < n; ++j)
            if (w[j] < w[kmin]) kmin = j;
        if (kmin != i) {
            std::swap(w[i], w[kmin]);
            for (int r = 0; r < n; ++r)
                std::swap(v[static_cast<std::size_t>(r) * n + i],
                          v[static_cast<std::size_t>(r) * n + kmin]);
        }
    }
}

/// Lower Cholesky factor of a small dense SPD matrix (row-major).
inline std::vector<double> cholesky_lower(std::vector<double> g, int n) {
    std::vector<double> l(static_cast<std::size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j <= i; ++j) {
            double s = g[static_cast<std::size_t>(i) * n + j];
            for (int k = 0; k < j; ++k)
                s -= l[static_cast<std::size_t>(i) * n + k] * l[static_cast<std::size_t>(j) * n + k];
            if (i == j) {
                if (!(s > 0.0)) throw numeric_error("cholesky: matrix not positive definite");
                l[static_cast<std::size_t>(i) * n + j] = std::sqrt(s);
            } else {
                l[static_cast<std::size_t>(i) * n + j] = s / l[static_cast<std::size_t>(j) * n + j];
            }
        }
    }
    return l;
}

} // namespace densela

struct EigenPair {
    double eigenvalue = 0.0;
    std::vector<double> vector; // on the reduced dof space
    double residual_norm = 0.0; // ||A v - lambda B v||_2 / ||A v||_2
    enum class Normalization { b_plus_one, b_minus_one, m_normalized, custom } normalization =
        Normalization::custom;
};

/// Two-sided Steklov spectrum: 0 < lambda^{1,+} <= lambda^{2,+} <= ... and
/// 0 > lambda^{1,-} >= lambda^{2,-} >= ...
struct SpectrumSlice {
    std::vector<EigenPair> positives;
    std::vector<EigenPair> negatives;
};

/// Thrown when the discrete pencil has fewer eigenvalues of a sign than asked.
class spectrum_count_error : public numeric_error {
public:
    explicit spectrum_count_error(const std::string& what) : numeric_error(what) {}
};

struct EigOptions {
    int k_pos = 1;
    int k_neg = 1;
    bool deflate_constants = false; // restrict the pencil away from the constant kernel of A
    std::uint64_t seed = 1;
    double inner_tol = 1e-12;    // CG tolerance for A-solves
    double residual_tol = 1e-8;  // required relative pencil residual
    int max_subspace = 0;        // 0: 10*max(k_pos,k_neg) + 40
};

namespace detail {

class LcgStream {
public:
    explicit LcgStream(std::uint64_t seed) : state_(seed * 0x9E3779B97F4A7C15ull + 1ull) {}
    double next_centered() {
        state_ = state_ * 6364136223846793005ull + 1442695040888963407ull;
        return static_cast<double>(state_ >> 11) * 0x1.0p-53 - 0.5;
    }

private:
    std::uint64_t state_;
};

struct RitzInfo {
    double mu;
    double bound; // A-norm residual estimate of the mu-pencil
    int index;    // column within the Lanczos basis coefficients
};

/// One Lanczos pass on the pencil B v = mu A v in the A-inner product,
/// matrix-free with inner CG solves; full reorthogonalization, deterministic
/// seeded start, restart injection on breakdown.
struct LanczosRun {
    std::vector<double> mus;                     // selected Ritz values
    std::vector<std::vector<double>> vectors;    // matching Ritz vectors
    double most_negative_ritz = 0.0;             // over the whole subspace
    double most_positive_ritz = 0.0;
    int got_pos = 0;
    int got_neg = 0;
    bool exhausted = false;                      // subspace ran out before cap
};

inline LanczosRun lanczos_pencil_run(const SparseSymMatrix& A, const SparseSymMatrix& B,
                                     int k_pos, int k_neg, bool deflate_constants,
                                     std::uint64_t seed, double inner_tol, int cap,
                                     double kernel_cut, int min_iters = 0,
                                     double ritz_tol = 1e-11) {
    const int n = A.dimension();
    const double normA = A.norm_1();

    CgOptions cg;
    cg.tol = inner_tol;
    cg.deflate_constants = deflate_constants;

    std::vector<double> b_ones;
    double ones_B_ones = 0.0;
    if (deflate_constants) {
        std::vector<double> ones(n, 1.0);
        b_ones = B.apply(ones);
        for (double v : b_ones) ones_B_ones += v;
        if (std::abs(ones_B_ones) < 1e-12 * std::max(B.norm_1(), 1e-300))
            throw numeric_error("steklov_eigs: deflation needs 1^T B 1 != 0");
    }
    auto deflate = [&](std::vector<double>& v) {
        if (!deflate_constants) return;
        const double coef = vecops::dot(b_ones, v) / ones_B_ones;
        for (double& x : v) x -= coef;
    };

    LcgStream rng(seed);
    auto fresh_vector = [&]() {
        std::vector<double> v(n);
        for (double& x : v) x = rng.next_centered();
        return v;
    };

    std::vector<std::vector<double>> basis;
    std::vector<double> alpha, beta;
    basis.reserve(std::min(cap + 1, n + 1));

    auto a_orthonormalize = [&](std::vector<double>& w) -> double {
        std::vector<double> Aw;
        for (int pass = 0; pass < 2; ++pass) {
            A.apply(w, Aw);
            for (const auto& v : basis) vecops::axpy(-vecops::dot(Aw, v), v, w);
        }
        deflate(w);
        A.apply(w, Aw);
        const double nrm2 = vecops::dot(w, Aw);
        return nrm2 > 0.0 ? std::sqrt(nrm2) : 0.0;
    };

    {
        std::vector<double> v0 = fresh_vector();
        deflate(v0);
        const double nrm = a_orthonormalize(v0);
        if (!(nrm > 0.0)) throw numeric_error("steklov_eigs: degenerate start vector");
        vecops::scale(1.0 / nrm, v0);
        basis.push_back(std::move(v0));
    }

    std::vector<double> d, e, z;
    std::vector<RitzInfo> ritz;
    double theta_scale = 0.0;

    // The completed Krylov dimension is alpha.size(); basis holds one vector
    // more (the candidate for the next step). T_m couples through beta[0..m-2]
    // and beta[m-1] feeds the Ritz residual bound.
    auto recompute_ritz = [&]() {
        const int m = static_cast<int>(alpha.size());
        d = alpha;
        e.assign(m, 0.0);
        for (int i = 0; i + 1 < m; ++i) e[i] = beta[i];
        densela::tridiag_eig(d, e, z, m);
        ritz.clear();
        theta_scale = 0.0;
        const double beta_last = beta.empty() ? 0.0 : beta[m - 1];
        for (int i = 0; i < m; ++i) {
            const double last = z[static_cast<std::size_t>(m - 1) * m + i];
            ritz.push_back({d[i], std::abs(beta_last * last), i});
            theta_scale = std::max(theta_scale, std::abs(d[i]));
        }
    };

    auto converged = [&](const RitzInfo& r) {
        return r.bound <= ritz_tol * std::max(std::abs(r.mu), 1e-3 * theta_scale);
    };

    auto ends_converged = [&]() -> bool {
        if (static_cast<int>(alpha.size()) < std::max({2, k_pos + k_neg, min_iters}))
            return false;
        recompute_ritz();
        int got_pos = 0, got_neg = 0;
        for (int i = static_cast<int>(ritz.size()) - 1; i >= 0 && got_pos < k_pos; --i) {
            if (ritz[i].mu <= kernel_cut) break;
            if (!converged(ritz[i])) return false;
            ++got_pos;
        }
        for (int i = 0; i < static_cast<int>(ritz.size()) && got_neg < k_neg; ++i) {
            if (ritz[i].mu >= -kernel_cut) break;
            if (!converged(ritz[i])) return false;
            ++got_neg;
        }
        return got_pos >= k_pos && got_neg >= k_neg;
    };

    LanczosRun out;
    while (static_cast<int>(alpha.size()) < cap) {
        const int j = static_cast<int>(basis.size()) - 1;
        const std::vector<double>& vj = basis[j];
        std::vector<double> Bv = B.apply(vj);
        std::vector<double> w = solve_spd(A, Bv, cg);
        deflate(w);
        const double alpha_j = vecops::dot(Bv, vj);
        alpha.resize(j + 1, 0.0);
        alpha[j] = alpha_j;
        vecops::axpy(-alpha_j, vj, w);
        if (j > 0 && beta.size() >= static_cast<std::size_t>(j))
            vecops::axpy(-beta[j - 1], basis[j - 1], w);
        double beta_j = a_orthonormalize(w);
        const double scale = std::max({std::abs(alpha_j), beta_j, 1e-300});
        if (beta_j <= 1e-13 * scale || !(beta_j > 0.0)) {
            // Invariant subspace: continue with a fresh direction if any remains.
            std::vector<double> inj = fresh_vector();
            deflate(inj);
            const double nrm = a_orthonormalize(inj);
            if (nrm <= 1e-10 * std::sqrt(normA * n)) {
                out.exhausted = true;
                break;
            }
            vecops::scale(1.0 / nrm, inj);
            beta.resize(j + 1, 0.0);
            beta[j] = 0.0;
            basis.push_back(std::move(inj));
        } else {
            vecops::scale(1.0 / beta_j, w);
            beta.resize(j + 1, 0.0);
            beta[j] = beta_j;
            basis.push_back(std::move(w));
        }
        if (ends_converged()) break;
    }
    recompute_ritz();

    if (!ritz.empty()) {
        out.most_negative_ritz = ritz.front().mu;
        out.most_positive_ritz = ritz.back().mu;
    }

    std::vector<int> selected;
    for (int i = static_cast<int>(ritz.size()) - 1; i >= 0 && out.got_pos < k_pos; --i) {
        if (ritz[i].mu <= kernel_cut) break;
        selected.push_back(i);
        ++out.got_pos;
    }
    for (int i = 0; i < static_cast<int>(ritz.size()) && out.got_neg < k_neg; ++i) {
        if (ritz[i].mu >= -kernel_cut) break;
        selected.push_back(i);
        ++out.got_neg;
    }

    const int m = static_cast<int>(alpha.size());
    for (int idx : selected) {
        const int col = ritz[idx].index;
        std::vector<double> y(n, 0.0);
        for (int r = 0; r < m; ++r) {
            const double coef = z[static_cast<std::size_t>(r) * m + col];
            if (coef != 0.0) vecops::axpy(coef, basis[r], y);
        }
        out.mus.push_back(ritz[idx].mu);
        out.vectors.push_back(std::move(y));
    }
    return out;
}

/// A + tau B as a fresh canonical matrix.
inline SparseSymMatrix shifted_pencil_matrix(const SparseSymMatrix& A, const SparseSymMatrix& B,
                                             double tau) {
    SparseSymMatrix out(A.dimension());
    for (const auto& e : A.entries()) out.add(e.row, e.col, e.value);
    for (const auto& e : B.entries()) out.add(e.row, e.col, tau * e.value);
    out.finalize();
    return out;
}

} // namespace detail

namespace detail {

/// One full two-sided solve at a given Ritz tolerance and subspace budget.
/// Throws numeric_error on non-convergence (retryable by the caller) and
/// spectrum_count_error when the pencil genuinely lacks requested eigenvalues.
inline SpectrumSlice steklov_attempt(const SparseSymMatrix& A, const SparseSymMatrix& B,
                                     const EigOptions& opts, double mu_kernel_cut,
                                     double ritz_tol, int extra_subspace) {
    const int n = A.dimension();
    const int k_pos = opts.k_pos;
    const int k_neg = opts.k_neg;
    const int cap_pos = std::min(
        n, (opts.max_subspace > 0 ? opts.max_subspace : 10 * std::max(k_pos, 1) + 40) +
               extra_subspace);
    const int cap_neg = std::min(
        n, (opts.max_subspace > 0 ? opts.max_subspace : 10 * std::max(k_neg, 1) + 40) +
               extra_subspace);

    // Run 1: positives, plus a probe of the negative end that sizes the shift.
    const int probe_iters = k_pos == 0 ? std::min({40, cap_pos, n}) : 0;
    LanczosRun run_pos =
        lanczos_pencil_run(A, B, k_pos, /*k_neg=*/0, opts.deflate_constants, opts.seed,
                           opts.inner_tol, k_pos == 0 ? probe_iters : cap_pos, mu_kernel_cut,
                           probe_iters, ritz_tol);
    if (k_pos > 0 && run_pos.got_pos < k_pos) {
        if (run_pos.exhausted)
            throw spectrum_count_error(
                "steklov_eigs: fewer than " + std::to_string(k_pos) +
                " positive eigenvalues in the discrete pencil (found " +
                std::to_string(run_pos.got_pos) + ")");
        throw numeric_error("steklov_eigs: positive end did not converge within the subspace cap");
    }

    // Run 2: negatives through the shifted pencil.
    std::vector<double> neg_mus;
    std::vector<std::vector<double>> neg_vectors;
    if (k_neg > 0) {
        if (!(run_pos.most_negative_ritz < -mu_kernel_cut))
            throw spectrum_count_error(
                "steklov_eigs: no negative eigenvalues detected in the discrete pencil");
        double tau = 0.5 / std::abs(run_pos.most_negative_ritz);
        LanczosRun run_neg;
        bool ok = false;
        for (int backoff = 0; backoff < 5 && !ok; ++backoff) {
            try {
                // A + tau B has no constant kernel (1^T B 1 != 0 whenever the
                // original pencil needed deflation), so this run never deflates;
                // the former kernel surfaces as the harmless nu = 1/tau mode.
                const SparseSymMatrix At = shifted_pencil_matrix(A, B, tau);
                run_neg = lanczos_pencil_run(At, B, /*k_pos=*/0, k_neg,
                                             /*deflate_constants=*/false, opts.seed,
                                             opts.inner_tol, cap_neg, mu_kernel_cut,
                                             /*min_iters=*/0, ritz_tol);
                ok = true;
            } catch (const spectrum_count_error&) {
                throw;
            } catch (const numeric_error&) {
                tau *= 0.5; // A + tau B was not positive definite; back off
            }
        }
        if (!ok)
            throw numeric_error("steklov_eigs: could not form an SPD shifted pencil "
                                "for the negative end");
        if (run_neg.got_neg < k_neg) {
            if (run_neg.exhausted)
                throw spectrum_count_error(
                    "steklov_eigs: fewer than " + std::to_string(k_neg) +
                    " negative eigenvalues in the discrete pencil (found " +
                    std::to_string(run_neg.got_neg) + ")");
            throw numeric_error(
                "steklov_eigs: negative end did not converge within the subspace cap");
        }
        // nu back to mu: mu = nu / (1 - tau nu).
        for (std::size_t i = 0; i < run_neg.mus.size(); ++i) {
            const double nu = run_neg.mus[i];
            neg_mus.push_back(nu / (1.0 - tau * nu));
            neg_vectors.push_back(std::move(run_neg.vectors[i]));
        }
    }

    // Combined dense Rayleigh-Ritz refinement against the original pencil:
    // solve the projected pencil in span of every selected vector, which makes
    // the returned set simultaneously A-orthonormal and B-orthogonal.
    std::vector<std::vector<double>> Y;
    for (std::size_t i = 0; i < run_pos.mus.size(); ++i)
        if (run_pos.mus[i] > mu_kernel_cut) Y.push_back(std::move(run_pos.vectors[i]));
    for (auto& v : neg_vectors) Y.push_back(std::move(v));
    const int ns = static_cast<int>(Y.size());
    if (ns == 0) throw numeric_error("steklov_eigs: no eigenpairs selected");

    std::vector<double> GA(static_cast<std::size_t>(ns) * ns, 0.0);
    std::vector<double> GB(static_cast<std::size_t>(ns) * ns, 0.0);
    {
        std::vector<double> tmp;
        for (int i = 0; i < ns; ++i) {
            A.apply(Y[i], tmp);
            for (int j = 0; j <= i; ++j) {
                const double gij = vecops::dot(tmp, Y[j]);
                GA[static_cast<std::size_t>(i) * ns + j] = gij;
                GA[static_cast<std::size_t>(j) * ns + i] = gij;
            }
            B.apply(Y[i], tmp);
            for (int j = 0; j <= i; ++j) {
                const double gij = vecops::dot(tmp, Y[j]);
                GB[static_cast<std::size_t>(i) * ns + j] = gij;
                GB[static_cast<std::size_t>(j) * ns + i] = gij;
            }
        }
    }
    const std::vector<double> L = densela::cholesky_lower(GA, ns);
    std::vector<double> S = GB; // becomes L^{-1} GB L^{-T}
    for (int col = 0; col < ns; ++col) {
        for (int i = 0; i < ns; ++i) {
            double acc = S[static_cast<std::size_t>(i) * ns + col];
            for (int k = 0; k < i; ++k)
                acc -= L[static_cast<std::size_t>(i) * ns + k] *
                       S[static_cast<std::size_t>(k) * ns + col];
            S[static_cast<std::size_t>(i) * ns + col] =
                acc / L[static_cast<std::size_t>(i) * ns + i];
        }
    }
    for (int row = 0; row < ns; ++row) {
        for (int j = 0; j < ns; ++j) {
            double acc = S[static_cast<std::size_t>(row) * ns + j];
            for (int k = 0; k < j; ++k)
                acc -= S[static_cast<std::size_t>(row) * ns + k] *
                       L[static_cast<std::size_t>(j) * ns + k];
            S[static_cast<std::size_t>(row) * ns + j] =
                acc / L[static_cast<std::size_t>(j) * ns + j];
        }
    }
    std::vector<double> mu_ref, Q;
    densela::jacobi_eig(S, ns, mu_ref, Q);

    std::vector<double> W = Q; // becomes L^{-T} Q
    for (int col = 0; col < ns; ++col) {
        for (int i = ns - 1; i >= 0; --i) {
            double acc = W[static_cast<std::size_t>(i) * ns + col];
            for (int k = i + 1; k < ns; ++k)
                acc -= L[static_cast<std::size_t>(k) * ns + i] *
                       W[static_cast<std::size_t>(k) * ns + col];
            W[static_cast<std::size_t>(i) * ns + col] =
                acc / L[static_cast<std::size_t>(i) * ns + i];
        }
    }

    SpectrumSlice out;
    std::vector<double> Av, Bvv;
    for (int c = 0; c < ns; ++c) {
        const double mu = mu_ref[c];
        if (std::abs(mu) <= mu_kernel_cut) continue;
        std::vector<double> vec(n, 0.0);
        for (int i = 0; i < ns; ++i) {
            const double coef = W[static_cast<std::size_t>(i) * ns + c];
            if (coef != 0.0) vecops::axpy(coef, Y[i], vec);
        }
        // Sign convention: first appreciable component positive.
        double peak = 0.0;
        for (double x : vec) peak = std::max(peak, std::abs(x));
        for (double x : vec) {
            if (std::abs(x) > 1e-12 * peak) {
                if (x < 0.0) vecops::scale(-1.0, vec);
                break;
            }
        }
        B.apply(vec, Bvv);
        const double vBv = vecops::dot(vec, Bvv);
        if (vBv == 0.0) continue;
        vecops::scale(1.0 / std::sqrt(std::abs(vBv)), vec);

        EigenPair pair;
        pair.eigenvalue = 1.0 / mu;
        pair.normalization = vBv > 0.0 ? EigenPair::Normalization::b_plus_one
                                       : EigenPair::Normalization::b_minus_one;
        A.apply(vec, Av);
        B.apply(vec, Bvv);
        std::vector<double> resid = Av;
        vecops::axpy(-pair.eigenvalue, Bvv, resid);
        const double denom = vecops::norm2(Av);
        pair.residual_norm = denom > 0.0 ? vecops::norm2(resid) / denom : vecops::norm2(resid);
        pair.vector = std::move(vec);
        if (mu > 0.0)
            out.positives.push_back(std::move(pair));
        else
            out.negatives.push_back(std::move(pair));
    }

    std::sort(out.positives.begin(), out.positives.end(),
              [](const EigenPair& a, const EigenPair& b) { return a.eigenvalue < b.eigenvalue; });
    std::sort(out.negatives.begin(), out.negatives.end(),
              [](const EigenPair& a, const EigenPair& b) { return a.eigenvalue > b.eigenvalue; });
    if (static_cast<int>(out.positives.size()) > k_pos) out.positives.resize(k_pos);
    if (static_cast<int>(out.negatives.size()) > k_neg) out.negatives.resize(k_neg);
    if (static_cast<int>(out.positives.size()) < k_pos ||
        static_cast<int>(out.negatives.size()) < k_neg)
        throw spectrum_count_error("steklov_eigs: refinement lost eigenpairs near the kernel cut");

    for (const auto* group : {&out.positives, &out.negatives})
        for (const auto& p : *group)
            if (p.residual_norm > opts.residual_tol)
                throw numeric_error("steklov_eigs: eigenpair residual " +
                                    fmt_g17(p.residual_norm) + " exceeds tolerance " +
                                    fmt_g17(opts.residual_tol));
    return out;
}

} // namespace detail

/// Two-sided generalized Steklov eigensolver for A v = lambda B v, computed
/// through the mu = 1/lambda pencil B v = mu A v.
///
/// The positive end of the mu-spectrum is well separated and comes from a
/// plain Lanczos run on C = A^{-1} B. The negative end accumulates at 0 next
/// to the B-kernel cluster, so it is extracted from the spectrally transformed
/// pencil B v = nu (A + tau B) v with 0 < tau < |lambda^{1,-}|, which is again
/// an SPD-pencil Lanczos (nu = mu/(1 + tau mu); lambda = 1/nu - tau). tau is
/// estimated from the first run's most negative Ritz value and reduced until
/// A + tau B is positive definite.
///
/// Residuals of every returned pair are verified against the original pencil;
/// attempts retry with a tighter Ritz criterion and a larger subspace until
/// they meet opts.residual_tol.
inline SpectrumSlice steklov_eigs(const SparseSymMatrix& A, const SparseSymMatrix& B,
                                  const EigOptions& opts) {
    const int n = A.dimension();
    if (B.dimension() != n) throw numeric_error("steklov_eigs: A/B dimension mismatch");
    if (opts.k_pos < 0 || opts.k_neg < 0 || opts.k_pos + opts.k_neg == 0)
        throw numeric_error("steklov_eigs: bad eigenpair counts");

    const double normA = A.norm_1();
    const double normB = B.norm_1();
    if (!(normB > 0.0)) throw spectrum_count_error("steklov_eigs: B is zero");
    const double mu_kernel_cut = 1e-10 * normB / normA;

    const int attempts = 3;
    for (int attempt = 0; attempt < attempts; ++attempt) {
        const double ritz_tol = 1e-11 / std::pow(10.0, attempt);
        const int extra = attempt * (5 * std::max(opts.k_pos + opts.k_neg, 1) + 20);
        try {
            return detail::steklov_attempt(A, B, opts, mu_kernel_cut, ritz_tol, extra);
        } catch (const spectrum_count_error&) {
            throw; // not retryable: the pencil lacks the requested eigenvalues
        } catch (const numeric_error&) {
            if (attempt + 1 == attempts) throw;
        }
    }
    throw numeric_error("steklov_eigs: unreachable");
}

inline SpectrumSlice steklov_eigs(const SparseSymMatrix& A, const SparseSymMatrix& B, int k) {
    EigOptions opts;
    opts.k_pos = k;
    opts.k_neg = k;
    return steklov_eigs(A, B, opts);
}

/// k smallest eigenvalues of K u = kappa M u, both SPD, M-orthonormal vectors.
inline std::vector<EigenPair> dirichlet_eigs(const SparseSymMatrix& K, const SparseSymMatrix& M,
                                             int k, std::uint64_t seed = 1,
                                             double residual_tol = 1e-8) {
    if (k < 1) throw numeric_error("dirichlet_eigs: k must be >= 1");
    if (k > K.dimension()) throw numeric_error("dirichlet_eigs: k exceeds matrix dimension");
    EigOptions opts;
    opts.k_pos = k;
    opts.k_neg = 0;
    opts.seed = seed;
    opts.residual_tol = residual_tol;
    SpectrumSlice slice = steklov_eigs(K, M, opts);
    // lambda = kappa here; vectors already satisfy v^T M v = 1.
    for (auto& p : slice.positives) p.normalization = EigenPair::Normalization::m_normalized;
    return std::move(slice.positives);
}

} // namespace steklov
