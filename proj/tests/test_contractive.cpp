#include <gtest/gtest.h>

#include <cmath>

#include "tangencylab/contractive.hpp"
#include "tangencylab/model.hpp"

using namespace tlab;
using namespace tlab::model;
using namespace tlab::fields;

namespace {

const ModelParams P = default_model_params();

// brute-force oracle: minimize |Df^k v| over a dense fan of unit directions
Vec2 brute_force_most_contracted(const DeskModel& m, const PhasePoint& z, int k,
                                 int n_dirs = 1000000, double* min_norm_log = nullptr) {
    double ls = 0.0;
    const Mat2 M = cocycle_product(m, z, k, ls);
    double best = std::numeric_limits<double>::max();
    Vec2 arg{1.0, 0.0};
    for (int i = 0; i < n_dirs; ++i) {
        const double t = M_PI * i / n_dirs;
        const Vec2 v{std::cos(t), std::sin(t)};
        const double n = (M * v).norm();
        if (n < best) {
            best = n;
            arg = v;
        }
    }
    if (min_norm_log) *min_norm_log = std::log(best) + ls;
    return arg;
}

}  // namespace

TEST(MostContracted, VerticalFoliationInTheQChart) {
    // in the linear chart the order-k contracted field is exactly vertical
    // with contraction b^k, for every k up to the guaranteed residence time
    const DeskModel m = build_desk_model(P, 0.0, 0.0, false);
    const PhasePoint z{Chart::Q, 2e-3, 0.45};
    for (int k = 1; k <= P.N; ++k) {
        const auto s = most_contracted(m, z, k);
        EXPECT_DOUBLE_EQ(s.direction.x, 0.0);
        EXPECT_DOUBLE_EQ(s.direction.y, 1.0);
        EXPECT_NEAR(s.contraction, std::pow(P.b, k), 1e-10 * std::pow(P.b, k));
        EXPECT_LT(s.gap, 0.9);
        EXPECT_TRUE(s.valid);
    }
}

TEST(MostContracted, HandComputedAntidiagonalCase) {
    // Df = [[0, sigma1], [-b, 0]] at the critical center: the most contracted
    // input is horizontal with contraction b
    const DeskModel m = build_desk_model(P, 0.0, 0.0, false);
    const auto s = most_contracted(m, m.qhat(), 1);
    EXPECT_NEAR(std::abs(s.direction.x), 1.0, 1e-12);
    EXPECT_NEAR(std::abs(s.direction.y), 0.0, 1e-12);
    EXPECT_NEAR(s.contraction, P.b, 1e-10 * P.b);
}

TEST(MostContracted, SignNormalizationSecondComponentNonNegative) {
    const DeskModel m = build_desk_model(P, 0.0, 0.0, false);
    Rng rng(5);
    for (int i = 0; i < 50; ++i) {
        PhasePoint z{Chart::P, rng.uniform(0.05, 0.9), rng.uniform(-0.5, 0.5)};
        try {
            const auto s = most_contracted(m, z, 1 + static_cast<int>(rng.next_below(10)));
            EXPECT_GE(s.direction.y, 0.0);
            EXPECT_NEAR(s.direction.norm(), 1.0, 1e-12);
        } catch (const std::exception&) {
        }
    }
}

TEST(MostContracted, AgreesWithBruteForceOracle) {
    // acceptance-grade check at a reduced sample count; the full 100-sample
    // sweep runs in the acceptance suite
    const DeskModel m = build_desk_model(P, 0.0, 0.0, false);
    Rng rng(31);
    int done = 0;
    while (done < 20) {
        PhasePoint z{Chart::P, rng.uniform(0.05, 0.9), rng.uniform(-0.8, 0.8)};
        const int k = 2 + static_cast<int>(rng.next_below(9));
        try {
            const auto s = most_contracted(m, z, k);
            const Vec2 bf = brute_force_most_contracted(m, z, k);
            EXPECT_LT(line_angle(s.direction, bf), 1e-5);
            ++done;
        } catch (const std::exception&) {
        }
    }
}

TEST(MostContracted, ContractionEqualsSmallSingularValue) {
    // applying the product to the computed direction reproduces the small
    // singular value; the check is meaningful while the singular gap stays
    // well above the direction's floating-point angular error
    const DeskModel m = build_desk_model(P, 0.0, 0.0, false);
    Rng rng(77);
    int done = 0;
    while (done < 30) {
        PhasePoint z{Chart::P, rng.uniform(0.05, 0.9), rng.uniform(-0.8, 0.8)};
        const int k = 1 + static_cast<int>(rng.next_below(3));
        try {
            const auto s = most_contracted(m, z, k);
            double ls = 0.0;
            const Mat2 M = cocycle_product(m, z, k, ls);
            const double direct = (M * s.direction).norm() * std::exp(ls);
            EXPECT_NEAR(s.contraction, direct, 1e-10 * std::max(direct, 1e-300));
            ++done;
        } catch (const std::exception&) {
        }
    }
}

TEST(MostContracted, ConformalityErrorWhenGapTooLarge) {
    // an isotropic derivative has no preferred contracted direction; the
    // corridor composed with its inverse scale is near-conformal only in
    // contrived spots, so check the guard directly on the P fixed point with
    // k = 0 products replaced by a nearly-singular-gap case: at P the one-step
    // gap is lambda1/sigma1, tiny, so instead verify the guard by requesting
    // an artificial threshold below it.
    const DeskModel m = build_desk_model(P, 0.0, 0.0, false);
    EXPECT_THROW(most_contracted(m, m.fixed_p(), 1, /*gap_threshold=*/1e-6),
                 ConformalityError);
}

TEST(MostContracted, OrderCoherenceDecaysGeometrically) {
    // angle(e^(l), e^(k)) <= (C b)^l with a moderate fitted C along a wafer orbit
    const DeskModel m = build_desk_model(P, 0.0, 0.0, false);
    const PhasePoint z{Chart::P, 0.3, 1e-5};
    const int kmax = 10;
    const auto ek = most_contracted(m, z, kmax);
    for (int l = 1; l < kmax; ++l) {
        const auto el = most_contracted(m, z, l);
        const double ang = line_angle(el.direction, ek.direction);
        if (ang > 0.0) {
            const double fitted_C = std::pow(ang, 1.0 / l) / P.b;
            EXPECT_LT(fitted_C, 100.0) << "l=" << l;
        }
    }
}

TEST(FieldContinuity, ConsecutiveArcSamplesNearlyParallel) {
    // sign normalization keeps the field continuous along a valid arc
    const DeskModel m = build_desk_model(P, 0.0, 0.0, false);
    Vec2 prev{0, 0};
    bool have_prev = false;
    for (int i = 0; i <= 200; ++i) {
        const double x = 0.25 + (0.35 - 0.25) * i / 200.0;  // P-chart arc
        try {
            const auto s = most_contracted(m, {Chart::P, x, 1e-4}, 6);
            if (have_prev) {
                EXPECT_LT(line_angle(prev, s.direction), 1e-2);
            }
            prev = s.direction;
            have_prev = true;
        } catch (const std::exception&) {
            have_prev = false;
        }
    }
}

TEST(CdLemma, LinearSegmentTrivialCase) {
    // item 5 ratio equals one when xi == zhat; vertical fields coincide
    DeskFamily fam(P);
    const PhasePoint zhat{Chart::Q, 1e-4, 0.3};
    const auto rep = verify_cd_lemma(fam, 0.0, 0.0, zhat, zhat, P.N);
    ASSERT_TRUE(rep.precondition_ok) << rep.note;
    const auto* it5 = rep.find("cocycle ratio in [1/10, 10]");
    ASSERT_NE(it5, nullptr);
    EXPECT_NEAR(it5->fitted, 1.0, 1e-9);
}

TEST(CdLemma, WaferSegmentPassesAllSixItems) {
    DeskFamily fam(P);
    const PhasePoint zhat{Chart::P, 0.25, 1e-4};
    PhasePoint xi = zhat;
    xi.y += 0.02;  // vertical offsets contract at rate b << tau
    const auto rep = verify_cd_lemma(fam, 0.0, -0.5 * P.eta(), zhat, xi, 12);
    ASSERT_TRUE(rep.precondition_ok) << rep.note;
    EXPECT_TRUE(rep.pass) << [&] {
        std::string s;
        for (const auto& it : rep.items)
            s += it.name + ": fitted=" + std::to_string(it.fitted) +
                 " pass=" + std::to_string(it.pass) + "; ";
        return s;
    }();
}

TEST(CdLemma, PreconditionFailureReportedNotThrown) {
    DeskFamily fam(P);
    // an orbit through the critical center is not lambda-expanding
    const PhasePoint zhat{Chart::Fold, 0.0, 0.0};
    const auto rep = verify_cd_lemma(fam, 0.0, 0.0, zhat, zhat, 6);
    EXPECT_FALSE(rep.precondition_ok);
    EXPECT_FALSE(rep.note.empty());
    EXPECT_FALSE(rep.pass);
}
