#pragma once

// Periodic cell problems on Y* and the effective data derived from them:
// correctors chi^1, chi^2, the homogenized tensor q, the surface average
// M_S(rho), and the case-specific extras (chi^0 and nu^2 for the critical
// case; the first negative local Steklov eigencouple and the theta-weighted
// tilde tensor for the negative spectrum).

#include <optional>
#include <utility>
#include <vector>

#include "steklov/assemble.hpp"
#include "steklov/cg.hpp"
#include "steklov/dofmap.hpp"
#include "steklov/eigensolve.hpp"
#include "steklov/meshgen.hpp"

namespace steklov {

enum class SpectralCase { positive, negative, critical };

inline const char* to_string(SpectralCase c) {
    switch (c) {
    case SpectralCase::positive: return "positive";
    case SpectralCase::negative: return "negative";
    case SpectralCase::critical: return "critical";
    }
    return "?";
}

struct CorrectorField {
    enum class Which { chi1, chi2, chi0 };
    Which which = Which::chi1;
    std::vector<double> values; // all mesh nodes, periodic by construction
    double mean = 0.0;          // volume-weighted mean after recentering
};

struct EffectiveTensor {
    double q11 = 0.0;
    double q12 = 0.0;
    double q22 = 0.0;

    SymTensor2 tensor() const { return {q11, q12, q22}; }
    double min_eigenvalue() const { return tensor().min_eigenvalue(); }
};

struct LocalSteklovData {
    double lambda1_neg = 0.0;
    std::vector<double> theta1_neg; // strictly positive, max-normalized
    double surface_integral_rho_theta_sq = 0.0;
};

struct TildeData {
    EffectiveTensor q_tilde;
    double M_S_rho_tilde = 0.0;
    CorrectorField chi_t1;
    CorrectorField chi_t2;
};

struct HomogenizedData {
    SpectralCase spectral_case = SpectralCase::positive;
    double M_S_rho = 0.0; // surface average of the original density
    EffectiveTensor q;
    CorrectorField chi1;
    CorrectorField chi2;
    // critical case
    std::optional<CorrectorField> chi0;
    std::optional<double> nu_sq;
    // negative-spectrum machinery (on the reduced density for the negative case)
    std::optional<LocalSteklovData> local;
    std::optional<TildeData> tilde;
};

/// 2-point Gauss quadrature of a scalar field over tagged edges.
template <ScalarEvaluator ScalarF>
double tagged_quadrature(const Mesh& mesh, ScalarF&& f, BoundaryTag tag) {
    if (!mesh.has_tag(tag)) throw numeric_error("tagged_quadrature: no edges with this tag");
    const double offset = 0.5 / std::sqrt(3.0);
    double total = 0.0;
    for (const auto& e : mesh.boundary_edges) {
        if (e.tag != tag) continue;
        const Vec2 pa = mesh.nodes[e.a], pb = mesh.nodes[e.b];
        const double len = norm(pb - pa);
        for (double t : {0.5 - offset, 0.5 + offset})
            total += 0.5 * len * f(pa + t * (pb - pa));
    }
    return total;
}

/// M_S(rho): integral of the density over the hole boundary S.
inline double surface_average(const Mesh& mesh, const DensityField& rho) {
    return tagged_quadrature(mesh, [&rho](Vec2 y) { return rho.at(y); }, BoundaryTag::HOLE);
}

namespace detail {

/// Volume-mass-weighted mean over Y*, subtracted in place.
inline double recenter(const Mesh& mesh, const SparseSymMatrix& volume_mass,
                       std::vector<double>& values) {
    const std::vector<double> Mv = volume_mass.apply(values);
    double integral = 0.0, area = 0.0;
    for (double v : Mv) integral += v;
    const std::vector<double> ones(mesh.node_count(), 1.0);
    const std::vector<double> M1 = volume_mass.apply(ones);
    for (double v : M1) area += v;
    const double mean = integral / area;
    for (double& v : values) v -= mean;
    return mean;
}

} // namespace detail

/// Solve the periodic cell problem a(chi, v) = l_j(v) for the corrector in
/// direction j (0 or 1); returns the recentered nodal field on all Y* nodes.
/// `scale_nodes` switches to the theta-squared-weighted coefficients.
inline CorrectorField solve_corrector(const Mesh& mesh, const CoefficientTensor& a, int j,
                                      double cg_tol = 1e-10,
                                      const std::vector<double>* scale_nodes = nullptr) {
    if (mesh.periodic_pairs.empty())
        throw numeric_error("solve_corrector: mesh has no periodic pairing");
    const DofMap dm = DofMap::periodic(mesh, /*pin_one_node=*/true);
    const SparseSymMatrix A = reduce(assemble_stiffness(mesh, a, scale_nodes), dm);
    const std::vector<double> load = assemble_cell_load(mesh, a, j, scale_nodes);
    const std::vector<double> x = solve_spd(A, dm.reduce_vector(load), cg_tol);

    CorrectorField chi;
    chi.which = j == 0 ? CorrectorField::Which::chi1 : CorrectorField::Which::chi2;
    chi.values = dm.expand_vector(x);
    detail::recenter(mesh, assemble_volume_mass(mesh), chi.values);
    chi.mean = 0.0;
    return chi;
}

/// Homogenized tensor q_ij = int a_ij - sum_l int a_il d(chi^j)/dy_l, with the
/// same quadrature as assembly. The recomputed q21 must agree with q12.
inline EffectiveTensor effective_tensor(const Mesh& mesh, const CoefficientTensor& a,
                                        const CorrectorField& chi1, const CorrectorField& chi2,
                                        const std::vector<double>* scale_nodes = nullptr) {
    if (static_cast<int>(chi1.values.size()) != mesh.node_count() ||
        static_cast<int>(chi2.values.size()) != mesh.node_count())
        throw numeric_error("effective_tensor: corrector/mesh mismatch");

    const auto bary = fem::midpoint_quad_bary();
    double raw[2][2] = {{0.0, 0.0}, {0.0, 0.0}}; // int a_il dchi^j/dy_l accumulated
    double vol[2][2] = {{0.0, 0.0}, {0.0, 0.0}}; // int a_ij
    const CorrectorField* chis[2] = {&chi1, &chi2};
    for (int t = 0; t < mesh.triangle_count(); ++t) {
        const fem::TriGeom g = fem::tri_geom(mesh, t);
        const auto pts = fem::midpoint_quad_points(mesh, t);
        SymTensor2 integrated{0, 0, 0};
        for (int q = 0; q < 3; ++q) {
            SymTensor2 aq = a.at(pts[q]);
            if (scale_nodes) {
                double s = 0.0;
                for (int l = 0; l < 3; ++l) s += bary[q][l] * (*scale_nodes)[g.v[l]];
                aq = (s * s) * aq;
            }
            integrated.a11 += g.area / 3.0 * aq.a11;
            integrated.a12 += g.area / 3.0 * aq.a12;
            integrated.a22 += g.area / 3.0 * aq.a22;
        }
        vol[0][0] += integrated.a11;
        vol[0][1] += integrated.a12;
        vol[1][0] += integrated.a12;
        vol[1][1] += integrated.a22;
        for (int j = 0; j < 2; ++j) {
            Vec2 grad{0.0, 0.0};
            for (int i = 0; i < 3; ++i)
                grad = grad + chis[j]->values[g.v[i]] * g.grad[i];
            const Vec2 flux = integrated.apply(grad); // rows of a times grad
            raw[0][j] += flux.x;
            raw[1][j] += flux.y;
        }
    }
    const double q11 = vol[0][0] - raw[0][0];
    const double q12 = vol[0][1] - raw[0][1];
    const double q21 = vol[1][0] - raw[1][0];
    const double q22 = vol[1][1] - raw[1][1];
    if (std::abs(q12 - q21) > 1e-10 * std::max(1.0, std::abs(q11)))
        throw numeric_error("effective_tensor: symmetry cross-check failed, |q12-q21| = " +
                            fmt_g17(std::abs(q12 - q21)));
    EffectiveTensor q{q11, 0.5 * (q12 + q21), q22};
    if (!(q.min_eigenvalue() > 0.0))
        throw numeric_error("effective_tensor: not positive definite");
    return q;
}

/// Corrector-energy route to the same tensor: int a (e_j - D chi^j).(e_i - D chi^i).
/// Algebraically equal to `effective_tensor`; kept as an internal consistency oracle.
inline EffectiveTensor effective_tensor_energy(const Mesh& mesh, const CoefficientTensor& a,
                                               const CorrectorField& chi1,
                                               const CorrectorField& chi2,
                                               const std::vector<double>* scale_nodes = nullptr) {
    const auto bary = fem::midpoint_quad_bary();
    const CorrectorField* chis[2] = {&chi1, &chi2};
    double q[2][2] = {{0, 0}, {0, 0}};
    for (int t = 0; t < mesh.triangle_count(); ++t) {
        const fem::TriGeom g = fem::tri_geom(mesh, t);
        const auto pts = fem::midpoint_quad_points(mesh, t);
        SymTensor2 integrated{0, 0, 0};
        for (int qq = 0; qq < 3; ++qq) {
            SymTensor2 aq = a.at(pts[qq]);
            if (scale_nodes) {
                double s = 0.0;
                for (int l = 0; l < 3; ++l) s += bary[qq][l] * (*scale_nodes)[g.v[l]];
                aq = (s * s) * aq;
            }
            integrated.a11 += g.area / 3.0 * aq.a11;
            integrated.a12 += g.area / 3.0 * aq.a12;
            integrated.a22 += g.area / 3.0 * aq.a22;
        }
        Vec2 dir[2];
        for (int j = 0; j < 2; ++j) {
            Vec2 grad{0.0, 0.0};
            for (int i = 0; i < 3; ++i) grad = grad + chis[j]->values[g.v[i]] * g.grad[i];
            dir[j] = (j == 0 ? Vec2{1, 0} : Vec2{0, 1}) - grad;
        }
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j) q[i][j] += dot(integrated.apply(dir[j]), dir[i]);
    }
    return {q[0][0], 0.5 * (q[0][1] + q[1][0]), q[1][1]};
}

/// Critical-case corrector: a(chi0, v) = int_S rho v. Requires a compatible
/// (zero surface average) density.
inline CorrectorField solve_chi0(const Mesh& mesh, const CoefficientTensor& a,
                                 const DensityField& rho, double tol_zero, double cg_tol = 1e-10) {
    const double ms = surface_average(mesh, rho);
    if (std::abs(ms) > tol_zero)
        throw numeric_error("solve_chi0: compatibility violated, M_S(rho) = " + fmt_g17(ms));
    const DofMap dm = DofMap::periodic(mesh, true);
    const SparseSymMatrix A = reduce(assemble_stiffness(mesh, a), dm);
    // load_i = int_S rho phi_i, realized as the rho-weighted boundary mass
    // acting on the all-ones vector.
    const SparseSymMatrix B = assemble_boundary_mass(mesh, rho, BoundaryTag::HOLE);
    const std::vector<double> load = B.apply(std::vector<double>(mesh.node_count(), 1.0));
    const std::vector<double> x = solve_spd(A, dm.reduce_vector(load), cg_tol);

    CorrectorField chi;
    chi.which = CorrectorField::Which::chi0;
    chi.values = dm.expand_vector(x);
    detail::recenter(mesh, assemble_volume_mass(mesh), chi.values);
    chi.mean = 0.0;
    return chi;
}

/// nu^2 = a(chi0, chi0), cross-checked against int_S rho chi0 (the two sides
/// of the chi0 problem tested with chi0 itself).
inline double nu_squared(const Mesh& mesh, const CoefficientTensor& a, const CorrectorField& chi0,
                         const DensityField& rho) {
    const SparseSymMatrix A = assemble_stiffness(mesh, a);
    const double energy = A.quadratic_form(chi0.values);
    const SparseSymMatrix B = assemble_boundary_mass(mesh, rho, BoundaryTag::HOLE);
    const std::vector<double> load = B.apply(std::vector<double>(mesh.node_count(), 1.0));
    const double surface = vecops::dot(load, chi0.values);
    const double scale = std::max({std::abs(energy), std::abs(surface), 1e-30});
    if (std::abs(energy - surface) > 1e-8 * scale)
        throw numeric_error("nu_squared: energy/surface cross-check mismatch: " + fmt_g17(energy) +
                            " vs " + fmt_g17(surface));
    return energy;
}

struct LocalSteklovOptions {
    double cg_tol = 1e-12;
    double eig_tol = 1e-8;
    std::uint64_t seed = 1;
};

/// First negative eigencouple of the periodic cell Steklov problem, with the
/// eigenfunction sign-fixed positive and max-normalized. Requires M_S(rho) > 0.
inline LocalSteklovData local_steklov_first_negative(const Mesh& mesh, const CoefficientTensor& a,
                                                     const DensityField& rho,
                                                     const LocalSteklovOptions& opts = {}) {
    const double ms = surface_average(mesh, rho);
    if (!(ms > 0.0))
        throw numeric_error("local_steklov_first_negative: requires M_S(rho) > 0, got " +
                            fmt_g17(ms));
    const DofMap dm = DofMap::periodic(mesh, /*pin_one_node=*/false);
    const SparseSymMatrix A = reduce(assemble_stiffness(mesh, a), dm);
    const SparseSymMatrix B = reduce(assemble_boundary_mass(mesh, rho, BoundaryTag::HOLE), dm);

    EigOptions eopts;
    eopts.k_pos = 0;
    eopts.k_neg = 1;
    eopts.deflate_constants = true;
    eopts.seed = opts.seed;
    eopts.inner_tol = opts.cg_tol;
    eopts.residual_tol = opts.eig_tol;
    SpectrumSlice slice = steklov_eigs(A, B, eopts); // throws if no negative eigenvalue

    LocalSteklovData data;
    data.lambda1_neg = slice.negatives[0].eigenvalue;
    data.theta1_neg = dm.expand_vector(slice.negatives[0].vector);

    // Flip toward the dominant sign, then demand strict positivity.
    double peak = 0.0;
    for (double v : data.theta1_neg) peak = std::abs(v) > std::abs(peak) ? v : peak;
    if (peak < 0.0)
        for (double& v : data.theta1_neg) v = -v;
    double vmin = data.theta1_neg[0], vmax = data.theta1_neg[0];
    for (double v : data.theta1_neg) {
        vmin = std::min(vmin, v);
        vmax = std::max(vmax, v);
    }
    if (!(vmin > 0.0))
        throw numeric_error("local_steklov_first_negative: eigenfunction changes sign "
                            "(min/max = " +
                            fmt_g17(vmin / vmax) + "); discretization too coarse");
    for (double& v : data.theta1_neg) v /= vmax;

    const SparseSymMatrix Bfull = assemble_boundary_mass(mesh, rho, BoundaryTag::HOLE);
    data.surface_integral_rho_theta_sq = Bfull.quadratic_form(data.theta1_neg);
    if (!(data.surface_integral_rho_theta_sq < 0.0))
        throw numeric_error("local_steklov_first_negative: int_S rho theta^2 is not negative");
    return data;
}

/// Tilde tensor and density average for the factorized negative spectrum:
/// coefficients weighted by the squared P1 interpolant of theta_1^-.
inline TildeData tilde_data(const Mesh& mesh, const CoefficientTensor& a, const DensityField& rho,
                            const LocalSteklovData& local, double cg_tol = 1e-10) {
    if (static_cast<int>(local.theta1_neg.size()) != mesh.node_count())
        throw numeric_error("tilde_data: theta/mesh mismatch");
    TildeData out;
    out.chi_t1 = solve_corrector(mesh, a, 0, cg_tol, &local.theta1_neg);
    out.chi_t2 = solve_corrector(mesh, a, 1, cg_tol, &local.theta1_neg);
    out.chi_t1.which = CorrectorField::Which::chi1;
    out.chi_t2.which = CorrectorField::Which::chi2;
    out.q_tilde = effective_tensor(mesh, a, out.chi_t1, out.chi_t2, &local.theta1_neg);
    const SparseSymMatrix B = assemble_boundary_mass(mesh, rho, BoundaryTag::HOLE);
    out.M_S_rho_tilde = B.quadratic_form(local.theta1_neg);
    if (!(out.M_S_rho_tilde < 0.0))
        throw numeric_error("tilde_data: M_S(rho~) = " + fmt_g17(out.M_S_rho_tilde) +
                            " is not negative; theta_1^- is inconsistent");
    return out;
}

inline DensityField negated(const DensityField& rho) {
    DensityField out;
    out.rho = Expr::parse("-(" + rho.rho.to_string() + ")");
    if (rho.surface_average_hint) out.surface_average_hint = -*rho.surface_average_hint;
    return out;
}

struct CellPipelineOptions {
    double cg_tol = 1e-10;
    double eig_tol = 1e-8;
    std::uint64_t seed = 1;
    double tol_zero_coeff = 1e-10; // critical when |M_S| <= coeff * perimeter
    bool want_tilde = true;        // negative-spectrum machinery for sign-changing cases
};

/// Classify the density by its surface average. `tol_zero` is the absolute
/// threshold (usually tol_zero_coeff times the hole perimeter).
inline SpectralCase classify_case(double m_s, double tol_zero) {
    if (std::abs(m_s) <= tol_zero) return SpectralCase::critical;
    return m_s > 0.0 ? SpectralCase::positive : SpectralCase::negative;
}

/// Full cell pipeline: correctors, effective tensor, and case extras.
/// For the negative case the density is negated internally and the extras
/// refer to the reduced (positive-average) problem.
inline HomogenizedData compute_homogenized_data(const Mesh& mesh, const CoefficientTensor& a,
                                                const DensityField& rho,
                                                const CellPipelineOptions& opts = {},
                                                std::optional<SpectralCase> forced_case = {}) {
    HomogenizedData data;
    data.M_S_rho = surface_average(mesh, rho);
    const double perimeter = mesh.tagged_perimeter(BoundaryTag::HOLE);
    data.spectral_case =
        forced_case ? *forced_case : classify_case(data.M_S_rho, opts.tol_zero_coeff * perimeter);

    data.chi1 = solve_corrector(mesh, a, 0, opts.cg_tol);
    data.chi2 = solve_corrector(mesh, a, 1, opts.cg_tol);
    data.q = effective_tensor(mesh, a, data.chi1, data.chi2);

    if (data.spectral_case == SpectralCase::critical) {
        data.chi0 = solve_chi0(mesh, a, rho, opts.tol_zero_coeff * perimeter + 1e-12, opts.cg_tol);
        data.nu_sq = nu_squared(mesh, a, *data.chi0, rho);
    } else if (opts.want_tilde) {
        const DensityField rho_eff =
            data.spectral_case == SpectralCase::negative ? negated(rho) : rho;
        LocalSteklovOptions lopts;
        lopts.cg_tol = std::min(opts.cg_tol, 1e-12);
        lopts.eig_tol = opts.eig_tol;
        lopts.seed = opts.seed;
        data.local = local_steklov_first_negative(mesh, a, rho_eff, lopts);
        data.tilde = tilde_data(mesh, a, rho_eff, *data.local, opts.cg_tol);
    }
    return data;
}

} // namespace steklov
