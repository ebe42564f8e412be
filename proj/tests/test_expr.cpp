#include "doctest.h"

#include <random>

#include "steklov/coeffs.hpp"
#include "steklov/expr.hpp"

using namespace steklov;

TEST_CASE("parse literals and arithmetic") {
    CHECK(Expr::parse("1").eval(0.0, 0.0) == doctest::Approx(1.0));
    CHECK(Expr::parse("2 + sin(2*pi*y1)").eval(0.25, 0.0) == doctest::Approx(3.0));
    CHECK(Expr::parse("cos(2*pi*y2)").eval(0.0, 0.5) == doctest::Approx(-1.0));
    CHECK(Expr::parse("y1*y2").eval(0.25, 0.5) == doctest::Approx(0.125));
    CHECK(Expr::parse("min(y1, y2)").eval(0.3, 0.7) == doctest::Approx(0.3));
    CHECK(Expr::parse("max(y1, -y2)").eval(0.3, 0.7) == doctest::Approx(0.3));
    CHECK(Expr::parse("abs(-2)").eval(0, 0) == doctest::Approx(2.0));
    CHECK(Expr::parse("exp(0)").eval(0, 0) == doctest::Approx(1.0));
    // unary minus binds tighter than multiplication
    CHECK(Expr::parse("-2*3").eval(0, 0) == doctest::Approx(-6.0));
    CHECK(Expr::parse("2 - 3 - 4").eval(0, 0) == doctest::Approx(-5.0));
    CHECK(Expr::parse("12/4/3").eval(0, 0) == doctest::Approx(1.0));
}

TEST_CASE("syntax errors carry byte offsets") {
    try {
        Expr::parse("y1 +");
        FAIL("expected parse error");
    } catch (const expr_error& e) {
        CHECK(e.offset() == 4);
    }
    CHECK_THROWS_AS(Expr::parse(""), expr_error);
    CHECK_THROWS_AS(Expr::parse("bogus(y1)"), expr_error);
    CHECK_THROWS_AS(Expr::parse("sin y1"), expr_error);
    CHECK_THROWS_AS(Expr::parse("min(y1)"), expr_error);
    CHECK_THROWS_AS(Expr::parse("(y1"), expr_error);
    CHECK_THROWS_AS(Expr::parse("y1 y2"), expr_error);
    try {
        Expr::parse("y1 + z3");
        FAIL("expected unknown identifier error");
    } catch (const expr_error& e) {
        CHECK(e.offset() == 5);
    }
}

TEST_CASE("division by near-zero is an eval error") {
    Expr e = Expr::parse("1/(y1-y1)");
    CHECK_THROWS_AS(e.eval(0.3, 0.4), numeric_error);
    CHECK(Expr::parse("1/(1+y1)").eval(1.0, 0.0) == doctest::Approx(0.5));
}

TEST_CASE("eval is deterministic bit for bit") {
    Expr e = Expr::parse("exp(sin(2*pi*y1)*cos(2*pi*y2)) + y1/(0.5 + y2)");
    const double a = e.eval(0.123456789, 0.987654321);
    const double b = e.eval(0.123456789, 0.987654321);
    CHECK(a == b);
}

TEST_CASE("print/parse round-trip preserves evaluations") {
    const char* cases[] = {
        "1",
        "2 + sin(2*pi*y1)",
        "-y1*y2 + max(y1, y2/2)",
        "(2+sin(2*pi*y1)*sin(2*pi*y2))",
        "1 - (y1 - y2)",
        "min(abs(y1-0.5), exp(-y2))/(2 + cos(2*pi*y1))",
        "-(y1 + y2)*3 - 4/(1 + y1*y1)",
    };
    std::mt19937_64 gen(12345);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (const char* text : cases) {
        CAPTURE(text);
        Expr e = Expr::parse(text);
        Expr round = Expr::parse(e.to_string());
        for (int i = 0; i < 100; ++i) {
            const double y1 = unif(gen), y2 = unif(gen);
            const double a = e.eval(y1, y2);
            const double b = round.eval(y1, y2);
            CHECK(std::abs(a - b) <= 1e-15 * std::max(1.0, std::abs(a)));
        }
    }
}

TEST_CASE("periodicity check on the unit cell") {
    CHECK(Expr::parse("sin(2*pi*y1)").periodic_on_unit_cell(16, 1e-12));
    CHECK_FALSE(Expr::parse("y1").periodic_on_unit_cell(16, 1e-12));
    CHECK(Expr::parse("3.5").periodic_on_unit_cell(4, 0.0));
    CHECK(Expr::parse("sin(2*pi*y1)*cos(4*pi*y2)").periodic_on_unit_cell(33, 1e-9));
    CHECK_FALSE(Expr::parse("y1*y2").periodic_on_unit_cell(8, 1e-9));
    CHECK_THROWS_AS(Expr::parse("1").periodic_on_unit_cell(3, 1e-9), config_error);
}

TEST_CASE("coefficient presets") {
    CoefficientTensor id = coefficient_preset("identity");
    CHECK(id.at({0.3, 0.7}).a11 == doctest::Approx(1.0));
    CHECK(id.at({0.3, 0.7}).a12 == doctest::Approx(0.0));

    CoefficientTensor checker = coefficient_preset("smooth-checker");
    // sampled ellipticity on the 64x64 grid reports min eigenvalue >= 1
    CHECK(checker.sampled_min_eigenvalue(64) >= 1.0);
    checker.require_elliptic(1.0);
    checker.require_periodic();

    DensityField odd = density_preset("rho-odd");
    CHECK(odd.at({0.25, 0.0}) == doctest::Approx(1.0));
    DensityField shifted = density_preset("rho-shifted", 0.5);
    CHECK(shifted.at({0.25, 0.0}) == doctest::Approx(1.5));
    CHECK(density_preset("rho-one").at({0.9, 0.1}) == doctest::Approx(1.0));
    CHECK_THROWS_AS(coefficient_preset("nope"), config_error);
    CHECK_THROWS_AS(density_preset("nope"), config_error);
}

TEST_CASE("ellipticity rejection") {
    CoefficientTensor bad{Expr::parse("y1"), Expr::parse("0"), Expr::parse("1")};
    CHECK_THROWS_AS(bad.require_elliptic(0.5, 16), config_error);
}
