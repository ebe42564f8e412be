#pragma once

// Coefficient tensor a(y) and surface density rho(y) built from expressions,
// plus the named presets used as canonical fixtures.

#include <optional>
#include <string>

#include "steklov/common.hpp"
#include "steklov/expr.hpp"

namespace steklov {

/// Symmetric 2x2 coefficient tensor field; symmetry is structural (a21 == a12).
struct CoefficientTensor {
    Expr a11;
    Expr a12;
    Expr a22;

    SymTensor2 at(Vec2 y) const { return {a11.eval(y), a12.eval(y), a22.eval(y)}; }

    /// Smallest eigenvalue of a(y) over a grid x grid sample of the unit cell.
    double sampled_min_eigenvalue(int grid = 64) const {
        double lo = std::numeric_limits<double>::infinity();
        for (int i = 0; i <= grid; ++i) {
            for (int j = 0; j <= grid; ++j) {
                const Vec2 y{static_cast<double>(i) / grid, static_cast<double>(j) / grid};
                lo = std::min(lo, at(y).min_eigenvalue());
            }
        }
        return lo;
    }

    void require_elliptic(double alpha_min, int grid = 64) const {
        const double lo = sampled_min_eigenvalue(grid);
        if (!(lo >= alpha_min))
            throw config_error("coefficient tensor not elliptic: sampled min eigenvalue " +
                               fmt_g17(lo) + " < " + fmt_g17(alpha_min));
    }

    void require_periodic(int n_samples = 16, double tol = 1e-9) const {
        if (!a11.periodic_on_unit_cell(n_samples, tol) ||
            !a12.periodic_on_unit_cell(n_samples, tol) ||
            !a22.periodic_on_unit_cell(n_samples, tol))
            throw config_error("coefficient tensor entries are not Y-periodic");
    }
};

/// Scalar surface density field.
struct DensityField {
    Expr rho;
    std::optional<double> surface_average_hint;

    double at(Vec2 y) const { return rho.eval(y); }

    void require_periodic(int n_samples = 16, double tol = 1e-9) const {
        if (!rho.periodic_on_unit_cell(n_samples, tol))
            throw config_error("density expression is not Y-periodic");
    }
};

/// Named tensor presets: "identity", "smooth-checker".
inline CoefficientTensor coefficient_preset(const std::string& name) {
    if (name == "identity")
        return {Expr::parse("1"), Expr::parse("0"), Expr::parse("1")};
    if (name == "smooth-checker") {
        Expr d = Expr::parse("2 + sin(2*pi*y1)*sin(2*pi*y2)");
        return {d, Expr::parse("0"), d};
    }
    throw config_error("unknown coefficient preset '" + name + "'");
}

/// Named density presets: "rho-one", "rho-odd", "rho-shifted" (uses shift c).
inline DensityField density_preset(const std::string& name, double c = 0.0) {
    if (name == "rho-one") return {Expr::parse("1"), 1.0};
    if (name == "rho-odd") return {Expr::parse("sin(2*pi*y1)"), 0.0};
    if (name == "rho-shifted")
        return {Expr::parse(fmt_g17(c) + " + sin(2*pi*y1)"), c};
    throw config_error("unknown density preset '" + name + "'");
}

} // namespace steklov
