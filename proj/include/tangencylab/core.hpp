#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

// Small numeric kernel shared by every module: 2-vectors and 2x2 matrices,
// exact 2x2 singular decomposition, angle/slope conventions, C^3 window
// polynomials used by the chart blends, a deterministic RNG and a least
// squares line fit for the report generators.

namespace tlab {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    Vec2() = default;
    Vec2(double x_, double y_) : x(x_), y(y_) {}

    Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
    Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
    Vec2 operator*(double s) const { return {x * s, y * s}; }
    Vec2 operator/(double s) const { return {x / s, y / s}; }
    double dot(const Vec2& o) const { return x * o.x + y * o.y; }
    double norm() const { return std::hypot(x, y); }
    double norm2() const { return x * x + y * y; }
    Vec2 normalized() const {
        const double n = norm();
        if (n == 0.0) throw std::domain_error("cannot normalize zero vector");
        return {x / n, y / n};
    }
};

inline Vec2 operator*(double s, const Vec2& v) { return v * s; }

struct Mat2 {
    // row-major: [[a, b], [c, d]]
    double a = 0.0, b = 0.0, c = 0.0, d = 0.0;

    Mat2() = default;
    Mat2(double a_, double b_, double c_, double d_) : a(a_), b(b_), c(c_), d(d_) {}

    static Mat2 identity() { return {1.0, 0.0, 0.0, 1.0}; }
    static Mat2 diag(double u, double v) { return {u, 0.0, 0.0, v}; }

    Vec2 operator*(const Vec2& v) const { return {a * v.x + b * v.y, c * v.x + d * v.y}; }
    Mat2 operator*(const Mat2& m) const {
        return {a * m.a + b * m.c, a * m.b + b * m.d,
                c * m.a + d * m.c, c * m.b + d * m.d};
    }
    Mat2 operator*(double s) const { return {a * s, b * s, c * s, d * s}; }
    Mat2 operator+(const Mat2& m) const { return {a + m.a, b + m.b, c + m.c, d + m.d}; }
    double det() const { return a * d - b * c; }
    double frob() const { return std::sqrt(a * a + b * b + c * c + d * d); }
};

// slope(v) = |v2| / |v1|; +inf for vertical directions.
inline double slope_of(const Vec2& v) {
    if (v.x == 0.0) return std::numeric_limits<double>::infinity();
    return std::abs(v.y) / std::abs(v.x);
}

// Unsigned angle between two lines (directions defined up to sign), in [0, pi/2].
inline double line_angle(const Vec2& u, const Vec2& v) {
    const double cross = std::abs(u.x * v.y - u.y * v.x);
    const double dot = std::abs(u.dot(v));
    return std::atan2(cross, dot);
}

// Angle of a direction to the vertical axis, in [0, pi/2].
inline double angle_to_vertical(const Vec2& v) { return line_angle(v, Vec2{0.0, 1.0}); }

struct Svd2 {
    double smax = 0.0;   // larger singular value
    double smin = 0.0;   // smaller singular value
    Vec2 vmax;           // right singular vector for smax
    Vec2 vmin;           // right singular vector for smin (most contracted input direction)
};

// Closed-form SVD of a 2x2 matrix via the eigen decomposition of M^T M.
inline Svd2 svd2x2(const Mat2& m) {
    const double e = m.a * m.a + m.c * m.c;   // (M^T M)_11
    const double f = m.a * m.b + m.c * m.d;   // (M^T M)_12
    const double g = m.b * m.b + m.d * m.d;   // (M^T M)_22
    const double tr = e + g;
    const double diff = e - g;
    const double root = std::hypot(diff, 2.0 * f);
    const double l1 = 0.5 * (tr + root);

    Svd2 out;
    out.smax = std::sqrt(std::max(l1, 0.0));
    // the small value via the determinant avoids cancellation when the gap is large
    out.smin = (out.smax > 0.0) ? std::abs(m.det()) / out.smax : 0.0;

    // Eigenvector of M^T M for the larger eigenvalue.
    Vec2 v1;
    if (std::abs(f) > 1e-300) {
        v1 = Vec2{f, l1 - e}.normalized();
    } else {
        v1 = (e >= g) ? Vec2{1.0, 0.0} : Vec2{0.0, 1.0};
    }
    out.vmax = v1;
    out.vmin = Vec2{-v1.y, v1.x};
    return out;
}

// Septic smoothstep: s7(0)=0, s7(1)=1 with three vanishing derivatives at both
// ends, so windows built from it give C^3 gluing.
inline double s7(double t) {
    if (t <= 0.0) return 0.0;
    if (t >= 1.0) return 1.0;
    const double t4 = t * t * t * t;
    return t4 * (35.0 - 84.0 * t + 70.0 * t * t - 20.0 * t * t * t);
}

inline double s7_deriv(double t) {
    if (t <= 0.0 || t >= 1.0) return 0.0;
    const double t3 = t * t * t;
    const double u = 1.0 - t;
    return 140.0 * t3 * u * u * u;
}

// Antiderivative of s7 with S7(0) = 0. S7(1) = 1/2.
inline double s7_integral(double t) {
    if (t <= 0.0) return 0.0;
    if (t >= 1.0) return 0.5 + (t - 1.0);
    const double t5 = t * t * t * t * t;
    return t5 * (7.0 - 14.0 * t + 10.0 * t * t - 2.5 * t * t * t);
}

// Moments of s7 needed by closed-form profile integration:
//   s7_m1 = integral_0^1 t * s7(t) dt,  s7_m2 = integral_0^1 t^2 * s7(t) dt.
inline constexpr double s7_m1() { return 35.0 / 6.0 - 12.0 + 70.0 / 8.0 - 20.0 / 9.0; }
inline constexpr double s7_m2() { return 5.0 - 84.0 / 8.0 + 70.0 / 9.0 - 2.0; }

// One-sided C^3 falling window: 1 on [0, lo], 0 on [hi, inf).
struct FallingWindow {
    double lo = 0.0;
    double hi = 1.0;

    double value(double r) const {
        r = std::abs(r);
        if (r <= lo) return 1.0;
        if (r >= hi) return 0.0;
        return 1.0 - s7((r - lo) / (hi - lo));
    }
    // derivative with respect to the signed coordinate r
    double deriv(double r) const {
        const double ar = std::abs(r);
        if (ar <= lo || ar >= hi) return 0.0;
        const double sgn = (r >= 0.0) ? 1.0 : -1.0;
        return -sgn * s7_deriv((ar - lo) / (hi - lo)) / (hi - lo);
    }
};

// splitmix64: deterministic, platform independent seed sequence / RNG core.
struct Rng {
    std::uint64_t state;

    explicit Rng(std::uint64_t seed = 0x9e3779b97f4a7c15ULL) : state(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }
    // uniform in [0, 1)
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
    // uniform in [lo, hi)
    double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }
    // uniform integer in [0, n)
    std::uint64_t next_below(std::uint64_t n) { return next_u64() % n; }
};

struct LineFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r2 = 0.0;
};

// Ordinary least squares y = slope*x + intercept.
inline LineFit fit_line(const std::vector<double>& xs, const std::vector<double>& ys) {
    if (xs.size() != ys.size() || xs.size() < 2)
        throw std::invalid_argument("fit_line needs >= 2 paired samples");
    const double n = static_cast<double>(xs.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sx += xs[i];
        sy += ys[i];
        sxx += xs[i] * xs[i];
        sxy += xs[i] * ys[i];
        syy += ys[i] * ys[i];
    }
    const double den = n * sxx - sx * sx;
    if (std::abs(den) < 1e-300) throw std::domain_error("degenerate line fit");
    LineFit out;
    out.slope = (n * sxy - sx * sy) / den;
    out.intercept = (sy - out.slope * sx) / n;
    const double sstot = syy - sy * sy / n;
    double ssres = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double r = ys[i] - (out.slope * xs[i] + out.intercept);
        ssres += r * r;
    }
    out.r2 = (sstot > 0) ? 1.0 - ssres / sstot : 1.0;
    return out;
}

inline bool nearly_equal(double a, double b, double rel_tol, double abs_tol = 0.0) {
    const double diff = std::abs(a - b);
    if (diff <= abs_tol) return true;
    return diff <= rel_tol * std::max(std::abs(a), std::abs(b));
}

}  // namespace tlab
