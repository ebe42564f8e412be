#pragma once

// The epsilon-level Steklov problem on the perforated domain, the three limit
// problems on the unperforated square, and the two-scale corrector expansion
// u_0 + eps * u_1 used to compare them.

#include <optional>
#include <string>
#include <vector>

#include "steklov/cell.hpp"

namespace steklov {

/// Map a physical point to cell coordinates y = x/eps mod 1, half-open wrap.
inline Vec2 wrap_to_cell(Vec2 x, int n) {
    double y1 = x.x * n - std::floor(x.x * n);
    double y2 = x.y * n - std::floor(x.y * n);
    if (y1 >= 1.0) y1 -= 1.0;
    if (y2 >= 1.0) y2 -= 1.0;
    return {y1, y2};
}

struct EpsilonPair {
    double lambda = 0.0;               // raw eigenvalue of the eps-problem
    std::vector<double> values;        // all mesh nodes, Dirichlet zeros included
    double eig_residual = 0.0;         // relative pencil residual
    double normalization_residual = 0.0;
};

struct EpsilonSpectrum {
    int n = 0;
    double epsilon = 0.0;
    SpectralCase spectral_case = SpectralCase::positive;
    std::vector<EpsilonPair> positives; // lambda ascending > 0
    std::vector<EpsilonPair> negatives; // lambda descending < 0
    std::vector<std::string> warnings;  // sanity-mode notes
};

struct EpsilonSolveOptions {
    double cg_tol = 1e-12;
    double eig_tol = 1e-8;
    std::uint64_t seed = 1;
    int max_dofs = 200000;
    bool sanity_positive_density = false; // accept a missing negative sequence
};

/// Solve the eps-level problem: stiffness with a(x/eps), boundary mass with
/// rho(x/eps) on the hole boundaries, Dirichlet outer boundary. Eigenvectors
/// are scaled to the case normalization: eps * int rho u^2 = +-1 for the
/// positive/negative cases, int rho u^2 = +-1 (no eps factor) when critical.
/// The negative case runs the positive pipeline on -rho and swaps the lists.
inline EpsilonSpectrum solve_epsilon(const CellGeometry& geometry, EpsilonLevel lvl,
                                     const CoefficientTensor& a, const DensityField& rho,
                                     SpectralCase spectral_case, int k,
                                     const EpsilonSolveOptions& opts = {}) {
    const int n = lvl.n;
    EpsilonSpectrum out;
    out.n = n;
    out.epsilon = lvl.epsilon();
    out.spectral_case = spectral_case;

    const bool reduced = spectral_case == SpectralCase::negative;
    const DensityField rho_eff = reduced ? negated(rho) : rho;

    const Mesh mesh = build_perforated_domain_mesh(geometry, n, opts.max_dofs);
    const DofMap dm = DofMap::dirichlet_on(mesh, BoundaryTag::DIRICHLET);

    auto a_eps = [&](Vec2 x) { return a.at(wrap_to_cell(x, n)); };
    auto rho_eps = [&](Vec2 x) { return rho_eff.at(wrap_to_cell(x, n)); };
    const SparseSymMatrix A = reduce(assemble_stiffness(mesh, a_eps), dm);
    const SparseSymMatrix B = reduce(assemble_boundary_mass(mesh, rho_eps, BoundaryTag::HOLE), dm);

    EigOptions eopts;
    eopts.k_pos = k;
    eopts.k_neg = k;
    eopts.seed = opts.seed;
    eopts.inner_tol = opts.cg_tol;
    eopts.residual_tol = opts.eig_tol;
    SpectrumSlice slice;
    try {
        slice = steklov_eigs(A, B, eopts);
    } catch (const spectrum_count_error& e) {
        if (!opts.sanity_positive_density) throw;
        out.warnings.emplace_back(std::string("no negative spectrum: ") + e.what());
        eopts.k_neg = 0;
        slice = steklov_eigs(A, B, eopts);
    }

    const double scale = spectral_case == SpectralCase::critical
                             ? 1.0
                             : 1.0 / std::sqrt(out.epsilon); // eps * int rho u^2 = +-1
    auto postprocess = [&](const EigenPair& p, double expected) {
        EpsilonPair ep;
        ep.lambda = p.eigenvalue;
        ep.eig_residual = p.residual_norm;
        std::vector<double> v = p.vector;
        vecops::scale(scale, v);
        const double quad = vecops::dot(B.apply(v), v) *
                            (spectral_case == SpectralCase::critical ? 1.0 : out.epsilon);
        ep.normalization_residual = std::abs(quad - expected);
        ep.values = dm.expand_vector(v);
        return ep;
    };

    for (const EigenPair& p : slice.positives) out.positives.push_back(postprocess(p, 1.0));
    for (const EigenPair& p : slice.negatives) out.negatives.push_back(postprocess(p, -1.0));

    if (reduced) {
        // undo the rho -> -rho reduction: swap lists and negate eigenvalues;
        // the stored normalizations already refer to the original rho.
        std::swap(out.positives, out.negatives);
        for (auto& p : out.positives) p.lambda = -p.lambda;
        for (auto& p : out.negatives) p.lambda = -p.lambda;
    }
    return out;
}

struct LimitPair {
    double value = 0.0;
    std::vector<double> values; // all Omega-mesh nodes, Dirichlet zeros included
    double normalization_residual = 0.0;
};

/// Limit spectrum on Omega. For the critical case, `pairs[k]` holds the
/// positive eigenvalue lambda_0^{k,+}; the negative one is its exact mirror
/// with the same eigenfunction.
struct LimitSpectrum {
    SpectralCase case_tag = SpectralCase::positive;
    std::vector<LimitPair> pairs;
};

namespace detail {

inline std::vector<EigenPair> limit_dirichlet_pairs(const Mesh& omega, SymTensor2 tensor, int k,
                                                    std::uint64_t seed, double eig_tol,
                                                    const DofMap& dm) {
    const SparseSymMatrix K = reduce(assemble_stiffness(omega, tensor), dm);
    const SparseSymMatrix M = reduce(assemble_volume_mass(omega), dm);
    return dirichlet_eigs(K, M, k, seed, eig_tol);
}

} // namespace detail

/// Positive case: eigenvalues of -div((q / M_S) grad u) = lambda u, with
/// int_Omega u^2 = 1 / M_S.
inline LimitSpectrum solve_limit_positive(const EffectiveTensor& q, double m_s_rho,
                                          const Mesh& omega, int k, std::uint64_t seed = 1,
                                          double eig_tol = 1e-8) {
    if (!(m_s_rho > 0.0)) throw numeric_error("solve_limit_positive: requires M_S(rho) > 0");
    if (!(q.min_eigenvalue() > 0.0)) throw numeric_error("solve_limit_positive: q not SPD");
    const DofMap dm = DofMap::dirichlet_on_outer(omega);
    const SparseSymMatrix M = reduce(assemble_volume_mass(omega), dm);
    auto eigs = detail::limit_dirichlet_pairs(omega, (1.0 / m_s_rho) * q.tensor(), k, seed,
                                              eig_tol, dm);
    LimitSpectrum out;
    out.case_tag = SpectralCase::positive;
    const double target = 1.0 / m_s_rho;
    for (auto& p : eigs) {
        LimitPair lp;
        lp.value = p.eigenvalue;
        vecops::scale(1.0 / std::sqrt(m_s_rho), p.vector);
        lp.normalization_residual =
            std::abs(vecops::dot(M.apply(p.vector), p.vector) - target) / target;
        lp.values = dm.expand_vector(p.vector);
        out.pairs.push_back(std::move(lp));
    }
    return out;
}

/// Negative case: 0 > xi_0^1 > xi_0^2 >= ..., int_Omega v^2 = -1 / M_S(rho~).
inline LimitSpectrum solve_limit_negative(const EffectiveTensor& q_tilde, double m_s_rho_tilde,
                                          const Mesh& omega, int k, std::uint64_t seed = 1,
                                          double eig_tol = 1e-8) {
    if (!(m_s_rho_tilde < 0.0))
        throw numeric_error("solve_limit_negative: requires M_S(rho~) < 0");
    if (!(q_tilde.min_eigenvalue() > 0.0)) throw numeric_error("solve_limit_negative: q~ not SPD");
    const DofMap dm = DofMap::dirichlet_on_outer(omega);
    const SparseSymMatrix M = reduce(assemble_volume_mass(omega), dm);
    auto eigs = detail::limit_dirichlet_pairs(
        omega, (1.0 / std::abs(m_s_rho_tilde)) * q_tilde.tensor(), k, seed, eig_tol, dm);
    LimitSpectrum out;
    out.case_tag = SpectralCase::negative;
    const double target = -1.0 / m_s_rho_tilde;
    for (auto& p : eigs) {
        LimitPair lp;
        lp.value = -p.eigenvalue; // descending, all negative
        vecops::scale(1.0 / std::sqrt(std::abs(m_s_rho_tilde)), p.vector);
        lp.normalization_residual =
            std::abs(vecops::dot(M.apply(p.vector), p.vector) - target) / target;
        lp.values = dm.expand_vector(p.vector);
        out.pairs.push_back(std::move(lp));
    }
    return out;
}

/// Critical case (quadratic pencil): K phi = kappa M phi and
/// lambda_0^{k,+-} = +-sqrt(kappa_k / nu^2), u^{k,+} = u^{k,-}, with
/// int_Omega u^2 = 1 / (2 lambda_0^{k,+} nu^2).
inline LimitSpectrum solve_limit_pencil(const EffectiveTensor& q, double nu_sq, const Mesh& omega,
                                        int k, std::uint64_t seed = 1, double eig_tol = 1e-8) {
    if (!(nu_sq > 0.0)) throw numeric_error("solve_limit_pencil: requires nu^2 > 0");
    if (!(q.min_eigenvalue() > 0.0)) throw numeric_error("solve_limit_pencil: q not SPD");
    const DofMap dm = DofMap::dirichlet_on_outer(omega);
    const SparseSymMatrix M = reduce(assemble_volume_mass(omega), dm);
    auto eigs = detail::limit_dirichlet_pairs(omega, q.tensor(), k, seed, eig_tol, dm);
    LimitSpectrum out;
    out.case_tag = SpectralCase::critical;
    for (auto& p : eigs) {
        LimitPair lp;
        lp.value = std::sqrt(p.eigenvalue / nu_sq);
        const double target = 1.0 / (2.0 * lp.value * nu_sq);
        vecops::scale(std::sqrt(target), p.vector);
        lp.normalization_residual =
            std::abs(vecops::dot(M.apply(p.vector), p.vector) - target) / target;
        lp.values = dm.expand_vector(p.vector);
        out.pairs.push_back(std::move(lp));
    }
    return out;
}

/// Grid-backed point-to-triangle lookup for meshes built on an m-subdivision
/// structured grid (cell meshes, perforated meshes, limit meshes).
class PointLocator {
public:
    PointLocator(const Mesh& mesh, int grid) : mesh_(&mesh), grid_(grid), cells_(grid * grid) {
        for (int t = 0; t < mesh.triangle_count(); ++t) {
            const Triangle& tr = mesh.triangles[t];
            double lo_x = 1e300, hi_x = -1e300, lo_y = 1e300, hi_y = -1e300;
            for (int v : {tr.a, tr.b, tr.c}) {
                lo_x = std::min(lo_x, mesh.nodes[v].x);
                hi_x = std::max(hi_x, mesh.nodes[v].x);
                lo_y = std::min(lo_y, mesh.nodes[v].y);
                hi_y = std::max(hi_y, mesh.nodes[v].y);
            }
            const int i0 = clamp_cell(static_cast<int>(std::floor(lo_x * grid_ - 1e-9)));
            const int i1 = clamp_cell(static_cast<int>(std::floor(hi_x * grid_ + 1e-9)));
            const int j0 = clamp_cell(static_cast<int>(std::floor(lo_y * grid_ - 1e-9)));
            const int j1 = clamp_cell(static_cast<int>(std::floor(hi_y * grid_ + 1e-9)));
            for (int j = j0; j <= j1; ++j)
                for (int i = i0; i <= i1; ++i) cells_[j * grid_ + i].push_back(t);
        }
    }

    struct Hit {
        int triangle;
        std::array<double, 3> bary;
    };

    /// Barycentric location with boundary tolerance; throws on failure.
    Hit locate(Vec2 p) const {
        const int i = clamp_cell(static_cast<int>(std::floor(p.x * grid_)));
        const int j = clamp_cell(static_cast<int>(std::floor(p.y * grid_)));
        int best_tri = -1;
        std::array<double, 3> best_bary{};
        double best_min = -1e300;
        for (int t : cells_[j * grid_ + i]) {
            const Triangle& tr = mesh_->triangles[t];
            const Vec2 p0 = mesh_->nodes[tr.a], p1 = mesh_->nodes[tr.b], p2 = mesh_->nodes[tr.c];
            const double area2 = cross(p1 - p0, p2 - p0);
            const double b0 = cross(p1 - p, p2 - p) / area2;
            const double b1 = cross(p2 - p, p0 - p) / area2;
            const double b2 = 1.0 - b0 - b1;
            const double mn = std::min({b0, b1, b2});
            if (mn > best_min) {
                best_min = mn;
                best_tri = t;
                best_bary = {b0, b1, b2};
            }
        }
        if (best_tri < 0 || best_min < -1e-6)
            throw numeric_error("point location failed at (" + fmt_g17(p.x) + ", " +
                                fmt_g17(p.y) + "): point is outside the mesh");
        return {best_tri, best_bary};
    }

    double interpolate(const std::vector<double>& nodal, Vec2 p) const {
        const Hit h = locate(p);
        const Triangle& tr = mesh_->triangles[h.triangle];
        return h.bary[0] * nodal[tr.a] + h.bary[1] * nodal[tr.b] + h.bary[2] * nodal[tr.c];
    }

private:
    int clamp_cell(int c) const { return std::min(std::max(c, 0), grid_ - 1); }

    const Mesh* mesh_;
    int grid_;
    std::vector<std::vector<int>> cells_;
};

/// Two-scale first-order expansion of a limit eigenfunction:
///   u(x) ~ u0(x) + eps * u1(x, x/eps)
/// with u1 = -sum_j du0/dx_j chi^j (+ lambda0 u0 chi^0 in the critical case).
/// The negative case evaluates theta(x/eps) * (v0 + eps v1) with the tilde
/// correctors instead.
class CorrectorExpansion {
public:
    CorrectorExpansion(const Mesh& omega, int omega_grid, std::vector<double> u0, double eps,
                       const Mesh& cell, int cell_grid, std::vector<double> chi1,
                       std::vector<double> chi2)
        : omega_(&omega), cell_(&cell), omega_loc_(omega, omega_grid), cell_loc_(cell, cell_grid),
          u0_(std::move(u0)), chi1_(std::move(chi1)), chi2_(std::move(chi2)), eps_(eps),
          n_(static_cast<int>(std::lround(1.0 / eps))) {}

    /// Critical-case extra term lambda0 * u0(x) * chi0(y).
    void set_pencil_term(double lambda0, std::vector<double> chi0) {
        lambda0_ = lambda0;
        chi0_ = std::move(chi0);
    }

    /// Negative-case factorization: multiply the whole expansion by theta(y).
    void set_theta_factor(std::vector<double> theta) { theta_ = std::move(theta); }

    double eval_u0(Vec2 x) const { return omega_loc_.interpolate(u0_, x); }

    double eval(Vec2 x) const {
        const PointLocator::Hit h = omega_loc_.locate(x);
        const Triangle& tr = omega_->triangles[h.triangle];
        const double u0 =
            h.bary[0] * u0_[tr.a] + h.bary[1] * u0_[tr.b] + h.bary[2] * u0_[tr.c];
        const fem::TriGeom g = fem::tri_geom(*omega_, h.triangle);
        Vec2 grad{0.0, 0.0};
        for (int i = 0; i < 3; ++i) grad = grad + u0_[g.v[i]] * g.grad[i];

        const Vec2 y = wrap_to_cell(x, n_);
        double u1 = -(grad.x * cell_loc_.interpolate(chi1_, y) +
                      grad.y * cell_loc_.interpolate(chi2_, y));
        if (!chi0_.empty()) u1 += lambda0_ * u0 * cell_loc_.interpolate(chi0_, y);
        double value = u0 + eps_ * u1;
        if (!theta_.empty()) value *= cell_loc_.interpolate(theta_, y);
        return value;
    }

private:
    const Mesh* omega_;
    const Mesh* cell_;
    PointLocator omega_loc_;
    PointLocator cell_loc_;
    std::vector<double> u0_;
    std::vector<double> chi1_;
    std::vector<double> chi2_;
    std::vector<double> chi0_;
    std::vector<double> theta_;
    double eps_ = 0.0;
    double lambda0_ = 0.0;
    int n_ = 0;
};

struct CorrectorComparison {
    double dist_with_corrector = 0.0; // ||u_eps - (u0 + eps u1)|| on eps-mesh nodes
    double dist_u0_only = 0.0;        // ||u_eps - u0||
    double ratio() const { return dist_with_corrector / dist_u0_only; }
};

/// Node-wise l2 comparison on the eps-mesh, all three fields normalized to
/// unit norm and sign-aligned with the computed eigenfunction.
inline CorrectorComparison compare_expansion(const Mesh& eps_mesh,
                                             const std::vector<double>& u_eps,
                                             const CorrectorExpansion& expansion) {
    const int n = eps_mesh.node_count();
    std::vector<double> u = u_eps, e(n), z(n);
    for (int i = 0; i < n; ++i) {
        e[i] = expansion.eval(eps_mesh.nodes[i]);
        z[i] = expansion.eval_u0(eps_mesh.nodes[i]);
    }
    auto unit = [](std::vector<double>& v) {
        const double nn = vecops::norm2(v);
        if (nn > 0.0) vecops::scale(1.0 / nn, v);
    };
    unit(u);
    unit(e);
    unit(z);
    if (vecops::dot(u, e) < 0.0) vecops::scale(-1.0, e);
    if (vecops::dot(u, z) < 0.0) vecops::scale(-1.0, z);
    CorrectorComparison out;
    std::vector<double> du = u;
    vecops::axpy(-1.0, e, du);
    out.dist_with_corrector = vecops::norm2(du);
    du = u;
    vecops::axpy(-1.0, z, du);
    out.dist_u0_only = vecops::norm2(du);
    return out;
}

} // namespace steklov
