#include <gtest/gtest.h>

#include <cmath>

#include "tangencylab/core.hpp"
#include "tangencylab/model.hpp"
#include "tangencylab/verify_model.hpp"

using namespace tlab;
using namespace tlab::model;

namespace {
const ModelParams P = default_model_params();
}

TEST(ValidateConstants, DefaultsPassWithPositiveMargins) {
    const auto rep = validate_constants(P);
    EXPECT_TRUE(rep.pass);
    for (const auto& c : rep.checks) {
        EXPECT_TRUE(c.pass) << c.invariant;
        EXPECT_GT(c.margin, 0.0) << c.invariant;
    }
}

TEST(ValidateConstants, ChainViolationsAreDetectedIndividually) {
    {
        ModelParams bad = P;
        bad.C1_factor = 3.0;  // C1 = 3 sigma1/delta^2 breaks C1 >= 4 sigma1/delta^2
        const auto rep = validate_constants(bad);
        EXPECT_FALSE(rep.pass);
        EXPECT_FALSE(rep.find("C1 >= 4*sigma1/delta^2")->pass);
        EXPECT_TRUE(rep.find("B1 >= C1")->pass);
    }
    {
        ModelParams bad = P;
        bad.A2 = 2.0 * bad.K * bad.b;
        const auto rep = validate_constants(bad);
        EXPECT_FALSE(rep.pass);
        EXPECT_FALSE(rep.find("max(A2,B2,C2) <= K*b")->pass);
    }
}

TEST(LocalForm, OriginAndConstantTerm) {
    // all terms vanish at the origin with a = theta = 0
    const Vec2 z0 = local_form(P, 0.0, 0.0, {0.0, 0.0});
    EXPECT_DOUBLE_EQ(z0.x, 0.0);
    EXPECT_DOUBLE_EQ(z0.y, 0.0);
    // only the constant term survives at the center
    const Vec2 z1 = local_form(P, 3e-5, -2e-5, {0.0, 0.0});
    EXPECT_DOUBLE_EQ(z1.x, 3e-5);
    EXPECT_DOUBLE_EQ(z1.y, 0.0);
}

TEST(LocalForm, CubicSignatureOnTheAxis) {
    // (a,theta)=(0,0), z=(x,0) -> (B1 x^3, -b x)
    const double x = 0.6 * P.delta();
    const Vec2 img = local_form(P, 0.0, 0.0, {x, 0.0});
    EXPECT_NEAR(img.x, P.b1() * x * x * x, 1e-18);
    EXPECT_DOUBLE_EQ(img.y, -P.b * x);
}

TEST(LocalFormDeriv, LinearPartAtOrigin) {
    const Mat2 D = local_form_deriv(P, 0.0, 0.0, {0.0, 0.0});
    EXPECT_DOUBLE_EQ(D.a, 0.0);
    EXPECT_DOUBLE_EQ(D.b, P.sigma1);
    EXPECT_DOUBLE_EQ(D.c, -P.b);
    EXPECT_DOUBLE_EQ(D.d, 0.0);
}

TEST(LocalFormDeriv, FiniteDifferenceOracle) {
    Rng rng(11);
    const double d = P.delta();
    const double h = 1e-6 * d;
    for (int trial = 0; trial < 20; ++trial) {
        const double a = rng.uniform(-P.eta(), P.eta());
        const double th = rng.uniform(-P.eta(), P.eta());
        const Vec2 z{rng.uniform(-d, d), rng.uniform(-d, d)};
        const Mat2 D = local_form_deriv(P, a, th, z);
        const Vec2 fxp = local_form(P, a, th, {z.x + h, z.y});
        const Vec2 fxm = local_form(P, a, th, {z.x - h, z.y});
        const Vec2 fyp = local_form(P, a, th, {z.x, z.y + h});
        const Vec2 fym = local_form(P, a, th, {z.x, z.y - h});
        const Mat2 FD{(fxp.x - fxm.x) / (2 * h), (fyp.x - fym.x) / (2 * h),
                      (fxp.y - fxm.y) / (2 * h), (fyp.y - fym.y) / (2 * h)};
        const double scale = std::max(1.0, D.frob());
        EXPECT_NEAR(D.a, FD.a, 1e-6 * scale);
        EXPECT_NEAR(D.b, FD.b, 1e-6 * scale);
        EXPECT_NEAR(D.c, FD.c, 1e-6 * scale);
        EXPECT_NEAR(D.d, FD.d, 1e-6 * scale);
    }
}

TEST(LocalFormDeriv, ImageSlopeOfHorizontalMinimizedAtCenter) {
    // theta < 0, z = (x, 0): |D.(1,0)| slope to vertical is minimized at x = 0
    // where the tangent is (A1|theta|, -b); the 1D sampling oracle confirms.
    const double th = -0.5 * P.eta();
    const double d = P.delta();
    double best_ratio = 1e300;
    double best_x = -1.0;
    for (int i = 0; i <= 4000; ++i) {
        const double x = -d + 2.0 * d * i / 4000.0;
        const Mat2 D = local_form_deriv(P, 0.0, th, {x, 0.0});
        const Vec2 v = D * Vec2{1.0, 0.0};
        const double ratio = std::abs(v.y) / std::abs(v.x);  // inverse slope of the image
        if (ratio < 1e300 && std::abs(v.x) > 0) {
            const double r = std::abs(v.x) / std::abs(v.y);
            if (r < best_ratio) {
                best_ratio = r;
                best_x = x;
            }
        }
    }
    EXPECT_NEAR(best_x, 0.0, 2.0 * d / 4000.0 + 1e-12);
    EXPECT_NEAR(best_ratio, P.a1() * std::abs(th) / P.b, 1e-6 * best_ratio);
}

// ---------------------------------------------------------------------------

TEST(DeskModel, FixedPointsAndLinearizations) {
    const DeskModel m = build_desk_model(P, 0.0, 0.0);
    const auto imgP = m.eval(m.fixed_p());
    ASSERT_TRUE(imgP.has_value());
    EXPECT_EQ(imgP->chart, Chart::P);
    EXPECT_DOUBLE_EQ(imgP->x, 0.0);
    EXPECT_DOUBLE_EQ(imgP->y, 0.0);

    const auto imgQ = m.eval(m.fixed_q());
    ASSERT_TRUE(imgQ.has_value());
    EXPECT_EQ(imgQ->chart, Chart::Q);
    EXPECT_DOUBLE_EQ(imgQ->x, 0.0);
    EXPECT_DOUBLE_EQ(imgQ->y, 0.0);

    const Mat2 DQ = m.deriv(m.fixed_q());
    EXPECT_DOUBLE_EQ(DQ.a, P.sigma2);
    EXPECT_DOUBLE_EQ(DQ.d, P.b);
    EXPECT_DOUBLE_EQ(DQ.b, 0.0);
    EXPECT_DOUBLE_EQ(DQ.c, 0.0);
}

TEST(DeskModel, LocalFormExactOnCriticalSquare) {
    const DeskModel m = build_desk_model(P, 2e-5, -1e-5, false);
    Rng rng(3);
    const double d = P.delta();
    for (int i = 0; i < 200; ++i) {
        const Vec2 z{rng.uniform(-d, d), rng.uniform(-d, d)};
        const Vec2 phi = local_form(P, 2e-5, -1e-5, z);
        const Vec2 uv = m.strip_map(z.x, z.y);
        EXPECT_NEAR(uv.x, phi.x, 1e-15 + 1e-12 * std::abs(phi.x));
        EXPECT_NEAR(uv.y, P.q_y + phi.y, 1e-15);
        const Mat2 Dphi = local_form_deriv(P, 2e-5, -1e-5, z);
        const Mat2 Dm = m.strip_deriv(z.x, z.y);
        EXPECT_NEAR(Dm.a, Dphi.a, 1e-9 * std::max(1.0, std::abs(Dphi.a)));
        EXPECT_NEAR(Dm.b, Dphi.b, 1e-9 * std::max(1.0, std::abs(Dphi.b)));
        EXPECT_NEAR(Dm.c, Dphi.c, 1e-12);
        EXPECT_NEAR(Dm.d, Dphi.d, 1e-12);
    }
}

TEST(DeskModel, UnstableAxisInvariantForThreeIterates) {
    // chart-by-chart hand composition: a point on y=0 in the P chart follows
    // x -> sigma1 x and stays on the continuation of the unstable axis
    const DeskModel m = build_desk_model(P, 0.0, 0.0, false);
    PhasePoint z{Chart::P, 0.11, 0.0};
    double expected_x = 0.11;
    for (int i = 0; i < 3; ++i) {
        const auto next = m.eval(z);
        ASSERT_TRUE(next.has_value());
        expected_x *= P.sigma1;
        z = *next;
        if (z.chart == Chart::P) {
            EXPECT_DOUBLE_EQ(z.x, expected_x);
            EXPECT_DOUBLE_EQ(z.y, 0.0);
        } else {
            ASSERT_EQ(z.chart, Chart::Fold);
            EXPECT_DOUBLE_EQ(z.x + m.geometry().x_qhat, expected_x);
            EXPECT_DOUBLE_EQ(z.y, 0.0);
        }
    }
}

TEST(DeskModel, OrbitEscapesLeftOfStableManifold) {
    const DeskModel m = build_desk_model(P, 0.0, 0.0, false);
    PhasePoint z{Chart::P, -0.9, 0.3};
    int steps = 0;
    while (steps < 10) {
        const auto next = m.eval(z);
        if (!next) break;
        z = *next;
        ++steps;
    }
    EXPECT_LT(steps, 10);  // left half exits the modeled neighborhood
}

TEST(DeskModel, SeamContinuityAlongTheWafer) {
    // crossing the P -> fold strip boundary on the recurrent wafer |y| <= b
    const DeskModel m = build_desk_model(P, 0.0, 0.0, false);
    const auto& g = m.geometry();
    const double eps = 1e-9;
    for (double y : {0.0, 0.5 * P.b, -0.8 * P.b}) {
        const PhasePoint left{Chart::P, (g.x_left - eps) / P.sigma1, y / P.lambda1};
        const PhasePoint right{Chart::P, (g.x_left + eps) / P.sigma1, y / P.lambda1};
        const auto il = m.eval(left);
        const auto ir = m.eval(right);
        ASSERT_TRUE(il && ir);
        // one image is a P point at the strip edge, the other a fold point
        const Vec2 gl = m.to_global(*il);
        const Vec2 gr = m.to_global(*ir);
        EXPECT_NEAR(gl.x, gr.x, 1e-8);
        EXPECT_NEAR(gl.y, gr.y, 1e-8);
        // two more steps land both on the Q sheet; the jump stays wafer-sized
        const auto il2 = m.eval(*il);
        const auto ir2 = m.eval(*ir);
        ASSERT_TRUE(il2 && ir2);
        if (il2->chart == ir2->chart) {
            EXPECT_NEAR(il2->x, ir2->x, 2.0 * P.sigma1 * P.sigma1 * eps + 4.0 * P.sigma1 * P.b);
        }
    }
}

TEST(ConeExpansion, TenThousandSamplesNoViolations) {
    const DeskModel m = build_desk_model(P, 0.0, 0.0);
    const auto rep = verify_cone_expansion(m, 10000, 2024);
    EXPECT_EQ(rep.violations_outside, 0);
    EXPECT_EQ(rep.violations_boundary, 0);
    EXPECT_GT(rep.worst_norm_outside, P.sigma0);
    EXPECT_LT(rep.worst_slope_outside, 0.1);
    EXPECT_GT(rep.worst_norm_boundary, 2.0);
    EXPECT_LT(rep.worst_slope_boundary, 1.0 / 15.0);
    EXPECT_TRUE(rep.pass);
}

TEST(ConeExpansion, HorizontalVectorAtCriticalEdge) {
    // |DPhi.(1,0)| at z = (delta, 0), theta = 0 equals 3 B1 delta^2 >= 12 sigma1
    const DeskModel m = build_desk_model(P, 0.0, 0.0, false);
    const Vec2 w = m.strip_deriv(P.delta(), 0.0) * Vec2{1.0, 0.0};
    EXPECT_NEAR(w.norm(), 3.0 * P.b1() * P.delta() * P.delta(),
                1e-9 * 3.0 * P.b1() * P.delta() * P.delta());
    EXPECT_GE(w.norm(), 12.0 * P.sigma1);
    EXPECT_GT(w.norm(), 2.0);
}

TEST(ConeExpansion, SlopeTenthVectorAtCorner) {
    // norm at a corner of the critical square boundary stays above 2 sigma1
    const DeskModel m = build_desk_model(P, 0.0, 0.0, false);
    const double d = P.delta();
    const Vec2 v = Vec2{1.0, 0.1}.normalized();
    for (const Vec2 corner : {Vec2{d, d}, Vec2{d, -d}, Vec2{-d, d}, Vec2{-d, -d}}) {
        const Vec2 w = m.strip_deriv(corner.x, corner.y) * v;
        EXPECT_GE(w.norm(), 2.0 * P.sigma1);
    }
}

TEST(DerivativeConsistency, AnalyticJacobianMatchesFD) {
    const DeskModel m = build_desk_model(P, 1e-5, -2e-5, false);
    const auto rep = verify_deriv_consistency(m, 100);
    EXPECT_TRUE(rep.pass) << "worst relative error " << rep.worst_rel_error;
    EXPECT_GE(rep.samples, 300);
}

TEST(Dissipativity, DeterminantBoundAlongOrbits) {
    const DeskModel m = build_desk_model(P, 0.0, 0.0, false);
    const auto rep = verify_dissipativity(m);
    EXPECT_TRUE(rep.pass) << "fitted C = " << rep.fitted_C;
    EXPECT_LT(rep.fitted_C, 10.0);
    EXPECT_GT(rep.fitted_C, 0.0);
}

TEST(ChartOverlaps, RoundTripExact) {
    const DeskModel m = build_desk_model(P, 0.0, 0.0, false);
    const auto rep = verify_chart_overlaps(m, 1000);
    EXPECT_TRUE(rep.pass);
    EXPECT_LE(rep.worst_error, 1e-12);
}

TEST(FindThetaStar, PureLocalFormTangencyAtZero) {
    const double ts = find_theta_star(P, 0.0);
    EXPECT_NEAR(ts, 0.0, 1e-12 * P.eta());
    // residual angle at the tangency parameter
    const DeskModel m = build_desk_model(P, 0.0, ts, false);
    const Vec2 w = m.strip_deriv(0.0, 0.0) * Vec2{1.0, 0.0};
    EXPECT_LT(angle_to_vertical(w), 1e-10);
}

TEST(FindThetaStar, AngleBoundedAwayFromZeroBelowTangency) {
    model::DeskFamily fam(P);
    const double ts = find_theta_star(P, 0.0);
    for (double frac : {0.25, 0.5, 1.0}) {
        const double th = ts - frac * P.eta();
        const DeskModel m = fam.at(0.0, th);
        // min angle over the critical arc
        double mn = 1e300;
        const double d = P.delta();
        for (int i = 0; i <= 2000; ++i) {
            const double x = -d + 2 * d * i / 2000.0;
            const Vec2 w = m.strip_deriv(x, 0.0) * Vec2{1.0, 0.0};
            mn = std::min(mn, angle_to_vertical(w));
        }
        EXPECT_GT(mn, 0.5 * std::atan(P.a1() * frac * P.eta() / P.b));
    }
}

TEST(FindThetaStar, RobustToBlendWindowChanges) {
    // widening the coefficient taper perturbs the blend but not the tangency
    // parameter: the minimizing arc point sits in the shared exact core
    const double ts0 = find_theta_star(P, 0.0);
    ModelParams wider = P;
    wider.taper_units = 1.9;
    const double ts1 = find_theta_star(wider, 0.0);
    EXPECT_LT(std::abs(ts1 - ts0), 1e-10 * P.eta());
}

TEST(FoldProfile, MatchesAmbientPastTheBlend) {
    const DeskModel m = build_desk_model(P, 0.0, 0.0, false);
    const auto& g = m.geometry();
    // wafer map equals sigma1*x at the strip edges
    const Vec2 at_edge = m.strip_map(-g.r0, 0.0);
    EXPECT_NEAR(at_edge.x, -P.sigma1 * g.r0, 1e-10);
    EXPECT_NEAR(at_edge.y, P.q_y, 1e-12);
    // derivative equals sigma1 there
    const Mat2 D = m.strip_deriv(-g.r0 + 1e-9, 0.0);
    EXPECT_NEAR(D.a, P.sigma1, 1e-6);
}
