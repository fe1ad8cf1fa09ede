#include <gtest/gtest.h>

#include <cmath>

#include "tangencylab/cocycle.hpp"
#include "tangencylab/model.hpp"
#include "tangencylab/verify_model.hpp"

using namespace tlab;
using namespace tlab::model;

namespace {

const ModelParams P = default_model_params();

// Minimal double-double arithmetic for the unrenormalized product oracle.
struct DD {
    double hi = 0.0, lo = 0.0;
};

DD dd_add(DD a, DD b) {
    double s = a.hi + b.hi;
    double v = s - a.hi;
    double e = (a.hi - (s - v)) + (b.hi - v);
    e += a.lo + b.lo;
    double hi = s + e;
    return {hi, e - (hi - s)};
}

DD dd_mul(double a, double b) {
    double p = a * b;
    double e = std::fma(a, b, -p);
    return {p, e};
}

DD dd_mul(DD a, double b) {
    DD p = dd_mul(a.hi, b);
    p.lo += a.lo * b;
    double hi = p.hi + p.lo;
    return {hi, p.lo - (hi - p.hi)};
}

struct DDVec {
    DD x, y;
};

DDVec dd_apply(const Mat2& m, const DDVec& v) {
    return {dd_add(dd_mul(v.x, m.a), dd_mul(v.y, m.b)),
            dd_add(dd_mul(v.x, m.c), dd_mul(v.y, m.d))};
}

}  // namespace

TEST(Cocycle, ZeroStepsIsTheInitialState) {
    const DeskModel m = build_desk_model(P, 0.0, 0.0, false);
    const auto s = cocycle(m, {Chart::P, 0.2, 0.1}, 0);
    EXPECT_EQ(s.step, 0);
    EXPECT_DOUBLE_EQ(s.vector.x, 1.0);
    EXPECT_DOUBLE_EQ(s.vector.y, 0.0);
    EXPECT_DOUBLE_EQ(s.lognorm, 0.0);
}

TEST(Cocycle, ExactGrowthInTheLinearQChart) {
    // lognorm = n log sigma2 while the orbit stays in the Q chart
    const DeskModel m = build_desk_model(P, 0.0, 0.0, false);
    const PhasePoint z{Chart::Q, 1e-3, 0.4};
    for (int n : {1, 2, 3}) {
        const auto s = cocycle(m, z, n);
        EXPECT_NEAR(s.lognorm, n * std::log(P.sigma2), 1e-9);
        EXPECT_DOUBLE_EQ(s.vector.x, 1.0);
    }
}

TEST(Cocycle, OneStepOutsideCriticalRegionExpandsPastSigma0) {
    const DeskModel m = build_desk_model(P, 0.0, 0.0, false);
    Rng rng(17);
    for (int i = 0; i < 300; ++i) {
        const auto z = [&]() -> PhasePoint {
            const auto& g = m.geometry();
            switch (rng.next_below(3)) {
                case 0: return {Chart::P, rng.uniform(0.01, g.x_left), rng.uniform(-0.9, 0.9)};
                case 1:
                    return {Chart::Q, rng.uniform(-g.lambda_q, g.lambda_q),
                            rng.uniform(-0.9, 0.9)};
                default: return {Chart::Fold, rng.uniform(-g.r0, g.r0), rng.uniform(-0.9, 0.9)};
            }
        }();
        if (m.in_R_delta(z)) continue;
        const Vec2 w = m.deriv(z) * Vec2{1.0, 0.0};
        EXPECT_GE(std::log(w.norm()), std::log(P.sigma0)) << chart_name(z.chart);
    }
}

TEST(Cocycle, RenormalizedProductMatchesExtendedPrecisionOracle) {
    // exp(lognorm) equals the unrenormalized product norm to 1e-9 relative for
    // n <= 30, with the product accumulated in double-double arithmetic
    const DeskModel m = build_desk_model(P, 0.0, 0.0, false);
    Rng rng(4242);
    int checked = 0;
    while (checked < 40) {
        PhasePoint z{Chart::P, rng.uniform(0.02, 0.8), rng.uniform(-0.9, 0.9)};
        const int n = 5 + static_cast<int>(rng.next_below(26));
        try {
            const auto s = cocycle(m, z, n);
            DDVec w{{1.0, 0.0}, {0.0, 0.0}};
            PhasePoint cur = *m.eval(z);
            double rescale_log = 0.0;
            for (int j = 0; j < n; ++j) {
                w = dd_apply(m.deriv(cur), w);
                const double mag = std::max(std::abs(w.x.hi), std::abs(w.y.hi));
                if (mag > 1e100 || (mag > 0 && mag < 1e-100)) {
                    w.x = dd_mul(w.x, 1.0 / mag);
                    w.y = dd_mul(w.y, 1.0 / mag);
                    rescale_log += std::log(mag);
                }
                cur = *m.eval(cur);
            }
            const double oracle_log =
                0.5 * std::log(w.x.hi * w.x.hi + w.y.hi * w.y.hi) + rescale_log;
            EXPECT_NEAR(s.lognorm, oracle_log, 1e-9 * std::max(1.0, std::abs(oracle_log)));
            ++checked;
        } catch (const OrbitEscape&) {
            // unlucky seed; try another
        }
    }
}

TEST(ExpandingCheck, LinearChartEqualityAndMonotonicity) {
    const DeskModel m = build_desk_model(P, 0.0, 0.0, false);
    const PhasePoint z{Chart::Q, 1e-3, 0.2};
    const auto at_rate = expanding_check(m, z, 3, P.sigma2);
    EXPECT_TRUE(at_rate.expanding);
    EXPECT_NEAR(at_rate.margin, 0.0, 1e-12);
    // any lambda <= 1 is satisfied whenever the orbit actually expands
    const auto weak = expanding_check(m, z, 3, 1.0);
    EXPECT_TRUE(weak.expanding);
    EXPECT_GT(weak.margin, 0.0);
}

TEST(ExpandingCheck, FailsThroughADeepFoldPass) {
    // the horizontal vector is crushed at the critical center
    const DeskModel m = build_desk_model(P, 0.0, 0.0, false);
    const PhasePoint z{Chart::Fold, 0.0, 0.0};
    const auto chk = expanding_check(m, z, 1, 1.05);
    EXPECT_FALSE(chk.expanding);
    EXPECT_LT(chk.margin, 0.0);
}

TEST(Lyapunov, FixedPointExponentsExact) {
    const DeskModel m = build_desk_model(P, 0.0, 0.0, false);
    EXPECT_NEAR(lyapunov_estimate(m, m.fixed_p(), 200), std::log(P.sigma1), 1e-10);
    EXPECT_NEAR(lyapunov_estimate(m, m.fixed_q(), 200), std::log(P.sigma2), 1e-10);
}

TEST(OrbitEscapeError, CarriesTheEscapeTime) {
    const DeskModel m = build_desk_model(P, 0.0, 0.0, false);
    try {
        orbit(m, {Chart::P, -0.9, 0.0}, 50);
        FAIL() << "expected escape";
    } catch (const OrbitEscape& e) {
        EXPECT_GE(e.time(), 1);
        EXPECT_LT(e.time(), 10);
    }
}
