#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <string_view>

namespace steklov {

inline constexpr double kPi = 3.14159265358979323846;

/// Configuration / input-validation failure (CLI exit code 2).
class config_error : public std::runtime_error {
public:
    explicit config_error(const std::string& what) : std::runtime_error(what) {}
};

/// Numerical failure: solver breakdown, invariant violation (CLI exit code 3).
class numeric_error : public std::runtime_error {
public:
    explicit numeric_error(const std::string& what) : std::runtime_error(what) {}
};

/// Filesystem / format failure (CLI exit code 4).
class io_error : public std::runtime_error {
public:
    explicit io_error(const std::string& what) : std::runtime_error(what) {}
};

struct Vec2 {
    double x = 0.0;
    double y = 0.0;
};

inline Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
inline Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
inline Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Vec2 a) { return std::hypot(a.x, a.y); }

/// Symmetric 2x2 tensor, upper-triangle storage.
struct SymTensor2 {
    double a11 = 0.0;
    double a12 = 0.0;
    double a22 = 0.0;

    Vec2 apply(Vec2 v) const { return {a11 * v.x + a12 * v.y, a12 * v.x + a22 * v.y}; }

    double min_eigenvalue() const {
        const double mean = 0.5 * (a11 + a22);
        const double dev = std::hypot(0.5 * (a11 - a22), a12);
        return mean - dev;
    }

    double max_eigenvalue() const {
        const double mean = 0.5 * (a11 + a22);
        const double dev = std::hypot(0.5 * (a11 - a22), a12);
        return mean + dev;
    }
};

inline SymTensor2 operator*(double s, SymTensor2 t) { return {s * t.a11, s * t.a12, s * t.a22}; }

/// Shortest decimal form that round-trips a double exactly.
inline std::string fmt_g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

} // namespace steklov
