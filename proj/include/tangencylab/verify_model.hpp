#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "tangencylab/cocycle.hpp"
#include "tangencylab/core.hpp"
#include "tangencylab/model.hpp"

// Sampled verification of the hyperbolicity-outside-the-critical-region
// estimates: cone preservation with expansion away from R_delta, the
// sharpened bounds on its boundary, derivative/finite-difference agreement,
// and the dissipation bound along orbits.

namespace tlab::model {

struct ConeReport {
    int samples_outside = 0;
    int violations_outside = 0;
    double worst_norm_outside = 0.0;   // min over samples of |Df v|
    double worst_slope_outside = 0.0;  // max over samples of slope(Df v)
    int samples_boundary = 0;
    int violations_boundary = 0;
    double worst_norm_boundary = 0.0;
    double worst_slope_boundary = 0.0;
    bool pass = false;
};

namespace detail {

inline PhasePoint sample_chart_point(const DeskModel& m, Chart chart, Rng& rng) {
    const auto& g = m.geometry();
    switch (chart) {
        case Chart::P:
            return {Chart::P, rng.uniform(-1.0, g.x_left), rng.uniform(-1.0, 1.0)};
        case Chart::Fold:
            return {Chart::Fold, rng.uniform(-g.r0, g.r0), rng.uniform(-1.0, 1.0)};
        case Chart::Q:
            return {Chart::Q, rng.uniform(-g.lambda_q, g.lambda_q), rng.uniform(-1.0, 1.0)};
        case Chart::Corridor: {
            const double u = rng.uniform(g.lambda_q, g.band_hi);
            const double sgn = (rng.next_double() < 0.5) ? -1.0 : 1.0;
            return {Chart::Corridor, sgn * u, rng.uniform(-1.0, 1.0)};
        }
    }
    return {Chart::P, 0.0, 0.0};
}

}  // namespace detail

// Samples z outside R_delta with unit vectors of slope <= 1/10 and asserts
// the image stays in the cone and expands past sigma0; on the boundary of
// R_delta the sharper slope < 1/15 and norm > 2 thresholds apply.
inline ConeReport verify_cone_expansion(const DeskModel& m, int n_samples,
                                        std::uint64_t seed = 2024) {
    ConeReport rep;
    rep.worst_norm_outside = std::numeric_limits<double>::max();
    rep.worst_norm_boundary = std::numeric_limits<double>::max();
    Rng rng(seed);
    const double s0 = m.params().sigma0;
    const double d = m.geometry().delta;
    const Chart charts[4] = {Chart::P, Chart::Fold, Chart::Q, Chart::Corridor};

    for (int i = 0; i < n_samples; ++i) {
        PhasePoint z = detail::sample_chart_point(m, charts[rng.next_below(4)], rng);
        if (m.in_R_delta(z)) continue;
        const Vec2 v = Vec2{1.0, rng.uniform(-0.1, 0.1)}.normalized();
        const Vec2 w = m.deriv(z) * v;
        const double nn = w.norm();
        const double sl = slope_of(w);
        ++rep.samples_outside;
        rep.worst_norm_outside = std::min(rep.worst_norm_outside, nn);
        rep.worst_slope_outside = std::max(rep.worst_slope_outside, sl);
        if (!(nn > s0) || !(sl < 0.1)) ++rep.violations_outside;
    }

    const int nb = std::max(16, n_samples / 10);
    for (int i = 0; i < nb; ++i) {
        const double t = rng.uniform(-d, d);
        const int side = static_cast<int>(rng.next_below(4));
        PhasePoint z{Chart::Fold, 0.0, 0.0};
        switch (side) {
            case 0: z = {Chart::Fold, t, d}; break;
            case 1: z = {Chart::Fold, t, -d}; break;
            case 2: z = {Chart::Fold, d, t}; break;
            case 3: z = {Chart::Fold, -d, t}; break;
        }
        const Vec2 v = Vec2{1.0, rng.uniform(-0.1, 0.1)}.normalized();
        const Vec2 w = m.deriv(z) * v;
        const double nn = w.norm();
        const double sl = slope_of(w);
        ++rep.samples_boundary;
        rep.worst_norm_boundary = std::min(rep.worst_norm_boundary, nn);
        rep.worst_slope_boundary = std::max(rep.worst_slope_boundary, sl);
        if (!(nn > 2.0) || !(sl < 1.0 / 15.0)) ++rep.violations_boundary;
    }

    rep.pass = rep.violations_outside == 0 && rep.violations_boundary == 0;
    return rep;
}

struct DerivConsistencyReport {
    double worst_rel_error = 0.0;
    int samples = 0;
    bool pass = false;
};

// Central finite differences of eval against the analytic Jacobian, sampled
// per chart away from the chart seams so the stencil stays inside one region.
inline DerivConsistencyReport verify_deriv_consistency(const DeskModel& m, int per_chart = 100,
                                                       std::uint64_t seed = 77) {
    DerivConsistencyReport rep;
    Rng rng(seed);
    const auto& g = m.geometry();
    const double h = 1e-7;
    const double margin = 1e-5;

    auto eval_vec = [&](Chart chart, double x, double y) -> std::optional<Vec2> {
        const auto out = m.eval({chart, x, y});
        if (!out) return std::nullopt;
        // compare in the target chart frame; the step never crosses a seam,
        // so all four stencil images share a chart
        return Vec2{out->x, out->y};
    };

    struct Box {
        Chart chart;
        double x0, x1, y0, y1;
    };
    const Box boxes[4] = {
        {Chart::P, -1.0 / m.params().sigma1 + margin, g.x_left / m.params().sigma1 - margin,
         -0.9, 0.9},
        {Chart::Fold, -g.r0 + margin, g.r0 - margin, -0.9, 0.9},
        {Chart::Q, -g.lambda_q / m.params().sigma2 + margin,
         g.lambda_q / m.params().sigma2 - margin, -0.9, 0.9},
        {Chart::Corridor, g.lambda_q + margin, g.band_hi - margin, -0.9, 0.9},
    };

    for (const auto& box : boxes) {
        int done = 0;
        int guard = 0;
        while (done < per_chart && guard++ < per_chart * 50) {
            double x = rng.uniform(box.x0, box.x1);
            const double y = rng.uniform(box.y0, box.y1);
            if (box.chart == Chart::Corridor && rng.next_double() < 0.5) x = -x;
            const auto c0 = eval_vec(box.chart, x, y);
            const auto cxp = eval_vec(box.chart, x + h, y);
            const auto cxm = eval_vec(box.chart, x - h, y);
            const auto cyp = eval_vec(box.chart, x, y + h);
            const auto cym = eval_vec(box.chart, x, y - h);
            if (!c0 || !cxp || !cxm || !cyp || !cym) continue;
            // all stencil points must land in the same chart for the finite
            // difference to be meaningful
            const auto img0 = m.eval({box.chart, x, y});
            const auto imgxp = m.eval({box.chart, x + h, y});
            const auto imgxm = m.eval({box.chart, x - h, y});
            const auto imgyp = m.eval({box.chart, x, y + h});
            const auto imgym = m.eval({box.chart, x, y - h});
            if (imgxp->chart != img0->chart || imgxm->chart != img0->chart ||
                imgyp->chart != img0->chart || imgym->chart != img0->chart)
                continue;

            const Mat2 fd{(cxp->x - cxm->x) / (2 * h), (cyp->x - cym->x) / (2 * h),
                          (cxp->y - cxm->y) / (2 * h), (cyp->y - cym->y) / (2 * h)};
            const Mat2 an = m.deriv({box.chart, x, y});
            const double scale = std::max(1.0, an.frob());
            const double err = (Mat2{fd.a - an.a, fd.b - an.b, fd.c - an.c, fd.d - an.d}).frob() /
                               scale;
            rep.worst_rel_error = std::max(rep.worst_rel_error, err);
            ++rep.samples;
            ++done;
        }
    }
    rep.pass = rep.samples > 0 && rep.worst_rel_error < 1e-6;
    return rep;
}

struct DissipativityReport {
    double fitted_C = 0.0;  // max over samples of |det Df| / b
    int samples = 0;
    bool pass = false;
};

// |det Df| <= C b along orbits started near the attractor basin. Sampling is
// orbit-based: the dissipation claim concerns the dynamics near the wafer,
// not the far-off-wafer corners of the fold strip.
inline DissipativityReport verify_dissipativity(const DeskModel& m, int n_orbits = 64,
                                                int steps = 60, std::uint64_t seed = 5150) {
    DissipativityReport rep;
    Rng rng(seed);
    const double b = m.params().b;
    for (int i = 0; i < n_orbits; ++i) {
        PhasePoint z{Chart::P, rng.uniform(0.05, m.geometry().x_left), rng.uniform(-1.0, 1.0)};
        for (int j = 0; j < steps; ++j) {
            const double dd = std::abs(m.deriv(z).det());
            rep.fitted_C = std::max(rep.fitted_C, dd / b);
            ++rep.samples;
            const auto next = m.eval(z);
            if (!next) break;
            z = *next;
        }
    }
    rep.pass = rep.samples > 0 && rep.fitted_C < 10.0;
    return rep;
}

struct OverlapReport {
    double worst_error = 0.0;
    int samples = 0;
    bool pass = false;
};

// Round-trips random overlap points through the chart conversions.
inline OverlapReport verify_chart_overlaps(const DeskModel& m, int n_samples = 1000,
                                           std::uint64_t seed = 99) {
    OverlapReport rep;
    Rng rng(seed);
    const auto& g = m.geometry();
    for (int i = 0; i < n_samples; ++i) {
        if (i % 2 == 0) {
            const PhasePoint f{Chart::Fold, rng.uniform(-g.r0, g.r0), rng.uniform(-1.0, 1.0)};
            const auto p = m.convert(f, Chart::P);
            const auto back = m.convert(*p, Chart::Fold);
            const double err = std::hypot(back->x - f.x, back->y - f.y);
            rep.worst_error = std::max(rep.worst_error, err);
        } else {
            const double sgn = (rng.next_double() < 0.5) ? -1.0 : 1.0;
            const PhasePoint c{Chart::Corridor, sgn * rng.uniform(g.lambda_q, g.band_hi),
                               rng.uniform(-1.0, 1.0)};
            const auto q = m.convert(c, Chart::Q);
            const auto back = m.convert(*q, Chart::Corridor);
            const double err = std::hypot(back->x - c.x, back->y - c.y);
            rep.worst_error = std::max(rep.worst_error, err);
        }
        ++rep.samples;
    }
    rep.pass = rep.worst_error <= 1e-12;
    return rep;
}

}  // namespace tlab::model
