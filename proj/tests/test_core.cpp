#include <gtest/gtest.h>

#include <cmath>

#include "tangencylab/core.hpp"

using namespace tlab;

TEST(Svd2x2, MatchesHandComputedAntidiagonal) {
    // [[0, s], [-b, 0]]: singular values s and b, most contracted input (1,0)
    const Mat2 m{0.0, 2.0, -4e-4, 0.0};
    const auto svd = svd2x2(m);
    EXPECT_NEAR(svd.smax, 2.0, 1e-14);
    EXPECT_NEAR(svd.smin, 4e-4, 1e-16);
    EXPECT_NEAR(std::abs(svd.vmin.x), 1.0, 1e-12);
    EXPECT_NEAR(svd.vmin.y, 0.0, 1e-12);
}

TEST(Svd2x2, AgreesWithBruteForceOnRandomMatrices) {
    Rng rng(7);
    for (int trial = 0; trial < 200; ++trial) {
        const Mat2 m{rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-3, 3),
                     rng.uniform(-3, 3)};
        const auto svd = svd2x2(m);
        double lo = 1e300, hi = 0.0;
        Vec2 vlo{1, 0};
        for (int i = 0; i < 20000; ++i) {
            const double t = M_PI * i / 20000.0;
            const Vec2 v{std::cos(t), std::sin(t)};
            const double n = (m * v).norm();
            if (n < lo) {
                lo = n;
                vlo = v;
            }
            hi = std::max(hi, n);
        }
        // the sampled minimum overshoots the true one by up to the grid
        // resolution crossed with the large singular value
        const double h = M_PI / 20000.0;
        const double res = (svd.smax * h) * (svd.smax * h) /
                               (2.0 * std::max(svd.smin, svd.smax * h)) +
                           1e-9;
        EXPECT_LE(svd.smin, lo + 1e-9);
        EXPECT_NEAR(svd.smin, lo, res);
        EXPECT_NEAR(svd.smax, hi, 1e-6 * std::max(1.0, hi));
        if (svd.smax - svd.smin > 1e-3) {
            EXPECT_LT(line_angle(svd.vmin, vlo), 1e-3);
        }
    }
}

TEST(Smoothstep, SepticEndpointContact) {
    EXPECT_DOUBLE_EQ(s7(0.0), 0.0);
    EXPECT_DOUBLE_EQ(s7(1.0), 1.0);
    EXPECT_DOUBLE_EQ(s7_deriv(0.0), 0.0);
    EXPECT_DOUBLE_EQ(s7_deriv(1.0), 0.0);
    // derivative of the integral is the function
    for (double t : {0.1, 0.3, 0.5, 0.77, 0.93}) {
        const double h = 1e-6;
        const double fd = (s7_integral(t + h) - s7_integral(t - h)) / (2 * h);
        EXPECT_NEAR(fd, s7(t), 1e-9);
        const double fd2 = (s7(t + h) - s7(t - h)) / (2 * h);
        EXPECT_NEAR(fd2, s7_deriv(t), 1e-6);
    }
    EXPECT_NEAR(s7_integral(1.0), 0.5, 1e-15);
}

TEST(Smoothstep, MomentsMatchQuadrature) {
    // trapezoid oracle for the closed-form moments
    double m1 = 0.0, m2 = 0.0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const double t = (i + 0.5) / n;
        m1 += t * s7(t) / n;
        m2 += t * t * s7(t) / n;
    }
    EXPECT_NEAR(s7_m1(), m1, 1e-8);
    EXPECT_NEAR(s7_m2(), m2, 1e-8);
}

TEST(FallingWindow, ValueAndDerivative) {
    const FallingWindow w{0.5, 1.5};
    EXPECT_DOUBLE_EQ(w.value(0.2), 1.0);
    EXPECT_DOUBLE_EQ(w.value(2.0), 0.0);
    EXPECT_DOUBLE_EQ(w.value(-0.2), 1.0);
    for (double r : {0.7, 1.0, 1.3, -0.9, -1.2}) {
        const double h = 1e-7;
        const double fd = (w.value(r + h) - w.value(r - h)) / (2 * h);
        EXPECT_NEAR(fd, w.deriv(r), 1e-6);
    }
}

TEST(LineAngle, ConventionUnsignedBetweenLines) {
    EXPECT_NEAR(line_angle({1, 0}, {0, 1}), M_PI / 2, 1e-15);
    EXPECT_NEAR(line_angle({1, 0}, {-1, 0}), 0.0, 1e-15);
    EXPECT_NEAR(line_angle({1, 1}, {1, 0}), M_PI / 4, 1e-15);
    EXPECT_NEAR(angle_to_vertical({1e-6, 1.0}), 1e-6, 1e-12);
}

TEST(Rng, DeterministicAcrossInstances) {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
    Rng c(43);
    EXPECT_NE(Rng(42).next_u64(), c.next_u64());
    Rng d(1);
    for (int i = 0; i < 1000; ++i) {
        const double x = d.next_double();
        EXPECT_GE(x, 0.0);
        EXPECT_LT(x, 1.0);
    }
}

TEST(FitLine, RecoversKnownSlope) {
    std::vector<double> xs, ys;
    for (int i = 0; i < 50; ++i) {
        xs.push_back(i * 0.1);
        ys.push_back(2.5 * i * 0.1 - 1.0);
    }
    const auto fit = fit_line(xs, ys);
    EXPECT_NEAR(fit.slope, 2.5, 1e-12);
    EXPECT_NEAR(fit.intercept, -1.0, 1e-12);
    EXPECT_NEAR(fit.r2, 1.0, 1e-12);
}
