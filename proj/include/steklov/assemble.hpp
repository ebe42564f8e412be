#pragma once

// P1 finite element assembly on triangle meshes.
//
// Quadrature: edge-midpoint 3-point rule for volume terms with variable
// coefficients (exact for quadratics), 2-point Gauss on straight boundary
// edges. The optional `scale_nodes` argument multiplies the integrand by the
// squared P1 interpolant of the given nodal field, which is how the
// theta-weighted tilde coefficients enter.

#include <array>
#include <concepts>
#include <vector>

#include "steklov/coeffs.hpp"
#include "steklov/mesh.hpp"
#include "steklov/sparse.hpp"

namespace steklov {

namespace fem {

struct TriGeom {
    std::array<int, 3> v;
    std::array<Vec2, 3> grad; // P1 basis gradients, constant per triangle
    double area;
};

inline TriGeom tri_geom(const Mesh& mesh, int t) {
    const Triangle& tr = mesh.triangles[t];
    const Vec2 p0 = mesh.nodes[tr.a], p1 = mesh.nodes[tr.b], p2 = mesh.nodes[tr.c];
    const double a2 = cross(p1 - p0, p2 - p0); // twice the signed area
    TriGeom g;
    g.v = {tr.a, tr.b, tr.c};
    g.area = 0.5 * a2;
    g.grad[0] = {(p1.y - p2.y) / a2, (p2.x - p1.x) / a2};
    g.grad[1] = {(p2.y - p0.y) / a2, (p0.x - p2.x) / a2};
    g.grad[2] = {(p0.y - p1.y) / a2, (p1.x - p0.x) / a2};
    return g;
}

// Edge-midpoint rule: barycentric (1/2,1/2,0) cyclic, each with weight 1/3.
inline std::array<Vec2, 3> midpoint_quad_points(const Mesh& mesh, int t) {
    const Triangle& tr = mesh.triangles[t];
    const Vec2 p0 = mesh.nodes[tr.a], p1 = mesh.nodes[tr.b], p2 = mesh.nodes[tr.c];
    return {0.5 * (p0 + p1), 0.5 * (p1 + p2), 0.5 * (p2 + p0)};
}

inline std::array<std::array<double, 3>, 3> midpoint_quad_bary() {
    return {{{0.5, 0.5, 0.0}, {0.0, 0.5, 0.5}, {0.5, 0.0, 0.5}}};
}

} // namespace fem

template <class F>
concept TensorEvaluator = requires(F f, Vec2 y) {
    { f(y) } -> std::convertible_to<SymTensor2>;
};

template <class F>
concept ScalarEvaluator = requires(F f, Vec2 y) {
    { f(y) } -> std::convertible_to<double>;
};

/// Stiffness matrix: (i,j) entry is sum_K int_K (a grad phi_j) . grad phi_i.
template <TensorEvaluator TensorF>
SparseSymMatrix assemble_stiffness(const Mesh& mesh, TensorF&& a,
                                   const std::vector<double>* scale_nodes = nullptr) {
    SparseSymMatrix A(mesh.node_count());
    const auto bary = fem::midpoint_quad_bary();
    for (int t = 0; t < mesh.triangle_count(); ++t) {
        const fem::TriGeom g = fem::tri_geom(mesh, t);
        const auto pts = fem::midpoint_quad_points(mesh, t);
        SymTensor2 integrated{0.0, 0.0, 0.0}; // int_K a dy (optionally weighted)
        for (int q = 0; q < 3; ++q) {
            SymTensor2 aq = a(pts[q]);
            if (scale_nodes) {
                double s = 0.0;
                for (int l = 0; l < 3; ++l) s += bary[q][l] * (*scale_nodes)[g.v[l]];
                aq = (s * s) * aq;
            }
            integrated.a11 += g.area / 3.0 * aq.a11;
            integrated.a12 += g.area / 3.0 * aq.a12;
            integrated.a22 += g.area / 3.0 * aq.a22;
        }
        for (int i = 0; i < 3; ++i)
            for (int j = i; j < 3; ++j)
                A.add(g.v[i], g.v[j], dot(integrated.apply(g.grad[j]), g.grad[i]));
    }
    A.finalize();
    return A;
}

inline SparseSymMatrix assemble_stiffness(const Mesh& mesh, const CoefficientTensor& a,
                                          const std::vector<double>* scale_nodes = nullptr) {
    return assemble_stiffness(mesh, [&a](Vec2 y) { return a.at(y); }, scale_nodes);
}

/// Constant-tensor convenience (limit problems).
inline SparseSymMatrix assemble_stiffness(const Mesh& mesh, SymTensor2 a) {
    return assemble_stiffness(mesh, [a](Vec2) { return a; });
}

/// Boundary mass on edges with `tag`: (i,j) entry is int_e rho phi_j phi_i.
template <ScalarEvaluator ScalarF>
SparseSymMatrix assemble_boundary_mass(const Mesh& mesh, ScalarF&& rho, BoundaryTag tag,
                                       const std::vector<double>* scale_nodes = nullptr) {
    if (!mesh.has_tag(tag)) throw numeric_error("assemble_boundary_mass: no edges with this tag");
    SparseSymMatrix B(mesh.node_count());
    // 2-point Gauss on [0,1]: t = 1/2 -+ 1/(2 sqrt 3), weights 1/2.
    const double offset = 0.5 / std::sqrt(3.0);
    const std::array<double, 2> ts = {0.5 - offset, 0.5 + offset};
    for (const auto& e : mesh.boundary_edges) {
        if (e.tag != tag) continue;
        const Vec2 pa = mesh.nodes[e.a], pb = mesh.nodes[e.b];
        const double len = norm(pb - pa);
        double m_aa = 0.0, m_ab = 0.0, m_bb = 0.0;
        for (double t : ts) {
            const Vec2 p = pa + t * (pb - pa);
            double r = rho(p);
            if (scale_nodes) {
                const double s =
                    (1.0 - t) * (*scale_nodes)[e.a] + t * (*scale_nodes)[e.b];
                r *= s * s;
            }
            const double w = 0.5 * len * r;
            m_aa += w * (1.0 - t) * (1.0 - t);
            m_ab += w * (1.0 - t) * t;
            m_bb += w * t * t;
        }
        B.add(e.a, e.a, m_aa);
        B.add(e.a, e.b, m_ab);
        B.add(e.b, e.b, m_bb);
    }
    B.finalize();
    return B;
}

inline SparseSymMatrix assemble_boundary_mass(const Mesh& mesh, const DensityField& rho,
                                              BoundaryTag tag,
                                              const std::vector<double>* scale_nodes = nullptr) {
    return assemble_boundary_mass(mesh, [&rho](Vec2 y) { return rho.at(y); }, tag, scale_nodes);
}

/// Consistent P1 mass matrix, exact per-triangle integration.
inline SparseSymMatrix assemble_volume_mass(const Mesh& mesh) {
    SparseSymMatrix M(mesh.node_count());
    for (int t = 0; t < mesh.triangle_count(); ++t) {
        const fem::TriGeom g = fem::tri_geom(mesh, t);
        const double w = g.area / 12.0;
        for (int i = 0; i < 3; ++i)
            for (int j = i; j < 3; ++j) M.add(g.v[i], g.v[j], i == j ? 2.0 * w : w);
    }
    M.finalize();
    return M;
}

/// Cell-problem load l_j(v) = sum_k int (a e_j)_k dv/dy_k, as a nodal vector.
template <TensorEvaluator TensorF>
std::vector<double> assemble_cell_load(const Mesh& mesh, TensorF&& a, int j,
                                       const std::vector<double>* scale_nodes = nullptr) {
    if (j != 0 && j != 1) throw numeric_error("assemble_cell_load: direction must be 0 or 1");
    std::vector<double> rhs(mesh.node_count(), 0.0);
    const auto bary = fem::midpoint_quad_bary();
    const Vec2 ej = j == 0 ? Vec2{1.0, 0.0} : Vec2{0.0, 1.0};
    for (int t = 0; t < mesh.triangle_count(); ++t) {
        const fem::TriGeom g = fem::tri_geom(mesh, t);
        const auto pts = fem::midpoint_quad_points(mesh, t);
        Vec2 flux{0.0, 0.0}; // int_K a e_j dy
        for (int q = 0; q < 3; ++q) {
            SymTensor2 aq = a(pts[q]);
            if (scale_nodes) {
                double s = 0.0;
                for (int l = 0; l < 3; ++l) s += bary[q][l] * (*scale_nodes)[g.v[l]];
                aq = (s * s) * aq;
            }
            flux = flux + (g.area / 3.0) * aq.apply(ej);
        }
        for (int i = 0; i < 3; ++i) rhs[g.v[i]] += dot(flux, g.grad[i]);
    }
    return rhs;
}

inline std::vector<double> assemble_cell_load(const Mesh& mesh, const CoefficientTensor& a, int j,
                                              const std::vector<double>* scale_nodes = nullptr) {
    return assemble_cell_load(mesh, [&a](Vec2 y) { return a.at(y); }, j, scale_nodes);
}

} // namespace steklov
