#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <stdexcept>
#include <vector>

#include "tangencylab/contractive.hpp"
#include "tangencylab/core.hpp"
#include "tangencylab/induction.hpp"
#include "tangencylab/manifold.hpp"
#include "tangencylab/model.hpp"

// Parameter-space tracking of the forming tangency: the minimal angle
// functional over the maintained critical set, theta-flat level curves of
// that functional, the correction procedure keeping the level pinned while
// the exclusion argument refines the surviving parameter arcs, and the final
// diagnostics at retained parameters.

namespace tlab::tangency {

using induction::InductionConstants;
using induction::ParamArc;
using induction::ParamPartition;
using manifold::AlmostFlatCurve;
using model::DeskFamily;
using model::DeskModel;
using model::PhasePoint;

class UndefinedAngle : public std::runtime_error {
  public:
    explicit UndefinedAngle(const std::string& what) : std::runtime_error(what) {}
};

// The maintained critical arc: the almost flat piece of W^u(P) through q_hat,
// in fold coordinates. All desk-scale critical approximations are anchored on
// it; the census of additional minimizers lives in the manifold module.
inline AlmostFlatCurve central_arc(const DeskModel& m, double half_len_factor = 0.8,
                                   int n_knots = 65) {
    AlmostFlatCurve arc;
    arc.chart = model::Chart::Fold;
    const double L = half_len_factor * m.geometry().delta;
    for (int i = 0; i < n_knots; ++i) {
        const double x = -L + 2.0 * L * i / (n_knots - 1);
        arc.xs.push_back(x);
        arc.ys.push_back(0.0);
    }
    arc.x0 = 0.0;
    arc.y0 = 0.0;
    return arc;
}

// minimal angle over the maintained critical set of order j
inline double angle_j(const DeskFamily& fam, double a, double theta_scaled, int j) {
    const DeskModel m = fam.at_scaled(a, theta_scaled);
    const auto arc = central_arc(m);
    try {
        const auto crit = manifold::find_critical_approx(m, arc, j);
        return crit.angle;
    } catch (const std::exception& e) {
        throw UndefinedAngle(std::string("angle_j undefined: ") + e.what());
    }
}

struct ThetaFlatCurve {
    std::vector<double> as;      // knots in a
    std::vector<double> thetas;  // scaled theta values in [-1, eps]
    int level_j = 0;
    int level_m = 0;
    double sup_d1 = 0.0, sup_d2 = 0.0, sup_d3 = 0.0;
    double C_flat = 0.0;

    double eval(double a) const {
        if (as.size() < 2) throw std::domain_error("curve needs >= 2 knots");
        std::size_t i =
            static_cast<std::size_t>(std::upper_bound(as.begin(), as.end(), a) - as.begin());
        if (i == 0) i = 1;
        if (i >= as.size()) i = as.size() - 1;
        --i;
        const double t = (a - as[i]) / (as[i + 1] - as[i]);
        return thetas[i] * (1.0 - t) + thetas[i + 1] * t;
    }

    void measure_flatness(double b) {
        sup_d1 = sup_d2 = sup_d3 = 0.0;
        for (std::size_t i = 0; i < as.size(); ++i) {
            if (i > 0) {
                const double d1 = (thetas[i] - thetas[i - 1]) / (as[i] - as[i - 1]);
                sup_d1 = std::max(sup_d1, std::abs(d1));
            }
            if (i > 0 && i + 1 < as.size()) {
                const double h1 = as[i] - as[i - 1], h2 = as[i + 1] - as[i];
                const double d2 = 2.0 *
                                  (thetas[i + 1] * h1 - thetas[i] * (h1 + h2) +
                                   thetas[i - 1] * h2) /
                                  (h1 * h2 * (h1 + h2));
                sup_d2 = std::max(sup_d2, std::abs(d2));
            }
            if (i > 1 && i + 1 < as.size()) {
                const double h = as[i] - as[i - 1];
                const double d3 = (thetas[i + 1] - 3.0 * thetas[i] + 3.0 * thetas[i - 1] -
                                   thetas[i - 2]) /
                                  (h * h * h);
                sup_d3 = std::max(sup_d3, std::abs(d3));
            }
        }
        C_flat = std::max({sup_d1, sup_d2, sup_d3}) / std::sqrt(b);
    }

    bool is_flat(double b, double C_bound) const {
        return std::max({sup_d1, sup_d2, sup_d3}) <= C_bound * std::sqrt(b);
    }
};

// Solves angle_j(a, theta) = target by bisection in theta over [-1, hi].
inline double solve_theta_level(const DeskFamily& fam, double a, int j, double target,
                                double residual_tol = 1e-12, double hi0 = 0.0) {
    double lo = -1.0, hi = hi0;
    double alo = angle_j(fam, a, lo, j);
    double ahi = angle_j(fam, a, hi, j);
    if (!(alo >= target && ahi <= target)) {
        // extend the upper end slightly past the tangency if needed
        hi = fam.params().theta_max_scaled;
        ahi = angle_j(fam, a, hi, j);
        if (!(alo >= target && ahi <= target))
            throw UndefinedAngle("level " + std::to_string(target) +
                                 " not bracketed by the theta range");
    }
    for (int it = 0; it < 100; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double am = angle_j(fam, a, mid, j);
        if (std::abs(am - target) < residual_tol) return mid;
        if (am > target) lo = mid;
        else hi = mid;
    }
    return 0.5 * (lo + hi);
}

// Initial level curve at order j = N: a horizontal line in theta, since the
// contracted field below order N is the exact vertical foliation.
inline ThetaFlatCurve build_initial_curve_level(const DeskFamily& fam, int m, double varrho,
                                                int n_knots = 33) {
    const auto& p = fam.params();
    const int j = p.N;
    const double level = std::pow(varrho, m);
    ThetaFlatCurve c;
    c.level_j = j;
    c.level_m = m;
    const double eta = p.eta();
    for (int i = 0; i < n_knots; ++i) {
        const double a = -eta + 2.0 * eta * i / (n_knots - 1);
        c.as.push_back(a);
        c.thetas.push_back(solve_theta_level(fam, a, j, level));
    }
    c.measure_flatness(p.b);
    return c;
}

inline ThetaFlatCurve build_initial_curve(const DeskFamily& fam, int m, int n_knots = 33) {
    return build_initial_curve_level(fam, m, 0.05, n_knots);
}

// One correction: re-solve the theta level pointwise on the surviving arcs at
// order j+1, interpolate across excluded gaps, and re-measure flatness.
inline ThetaFlatCurve correction_step(const DeskFamily& fam, const ThetaFlatCurve& curve,
                                      const ParamPartition& surviving, double varrho, int m) {
    const int j1 = curve.level_j + 1;
    const double level = std::pow(varrho, m);
    ThetaFlatCurve out;
    out.level_j = j1;
    out.level_m = m;

    for (std::size_t i = 0; i < curve.as.size(); ++i) {
        const double a = curve.as[i];
        bool covered = false;
        for (const auto& arc : surviving.arcs)
            if (a >= arc.lo && a <= arc.hi) covered = true;
        out.as.push_back(a);
        if (!covered) {
            // excluded gap: keep the old value; the gap dwarfs the correction
            out.thetas.push_back(curve.thetas[i]);
            continue;
        }
        // the correction is a perturbation of size O(b^j); bisect in a small
        // bracket around the current value, falling back to the full solve
        const double th0 = curve.thetas[i];
        const double pad =
            std::max(64.0 * std::pow(fam.params().b, curve.level_j), 1e-13) /
            fam.params().eta();
        double lo = th0 - pad, hi = th0 + pad;
        try {
            const double alo = angle_j(fam, a, lo, j1);
            const double ahi = angle_j(fam, a, hi, j1);
            if (alo >= level && ahi <= level) {
                double l = lo, h = hi;
                for (int it = 0; it < 80; ++it) {
                    const double mid = 0.5 * (l + h);
                    const double am = angle_j(fam, a, mid, j1);
                    if (std::abs(am - level) < 1e-13) {
                        l = h = mid;
                        break;
                    }
                    if (am > level) l = mid;
                    else h = mid;
                }
                out.thetas.push_back(0.5 * (l + h));
            } else {
                out.thetas.push_back(solve_theta_level(fam, a, j1, level));
            }
        } catch (const UndefinedAngle&) {
            out.thetas.push_back(th0);
        }
    }
    out.measure_flatness(fam.params().b);
    return out;
}

struct LimitRunStep {
    int k = 0;
    int level_j = 0;
    double retained_length = 0.0;
    double worst_level_error = 0.0;  // max over arcs |angle_j - varrho^m|
    double min_angle = 0.0;          // min over arcs of the angle
    std::size_t arc_count = 0;
};

struct LimitRun {
    ThetaFlatCurve curve;
    ParamPartition partition;
    std::vector<LimitRunStep> steps;
    bool completed = false;
    std::string note;
};

namespace detail {

inline PhasePoint critical_point_of(const DeskModel& m, int order) {
    const auto arc = central_arc(m);
    return manifold::find_critical_approx(m, arc, order).point;
}

inline std::vector<induction::BindingPoint> binding_points_of(const DeskModel& m, int order) {
    const auto arc = central_arc(m);
    const auto crit = manifold::find_critical_approx(m, arc, order);
    return {{crit.point, arc.tangent(crit.arc_x)}};
}

}  // namespace detail

// Alternates the exclusion step with the level correction up to j = m, then
// keeps excluding on the frozen curve up to k_max.
inline LimitRun run_to_limit(const DeskFamily& fam, int m, int k_max,
                             const InductionConstants& K, int n_knots = 33) {
    LimitRun run;
    const auto& p = fam.params();
    const double level = std::pow(K.varrho, m);

    run.curve = build_initial_curve_level(fam, m, K.varrho, n_knots);
    run.partition.time = 0;
    run.partition.arcs.push_back({-p.eta(), p.eta()});

    auto bind_order = [&](int j) { return std::min(j, K.k_max); };

    for (int k = p.N; k <= k_max; ++k) {
        const ThetaFlatCurve curve = run.curve;
        run.partition.theta_of_a = [&fam, curve](double a) {
            return fam.params().theta_raw(curve.eval(a));
        };
        const int order = bind_order(std::min(k, m));
        run.partition = induction::exclusion_step(
            fam, run.partition, k, K,
            [order](const DeskModel& mm) { return detail::critical_point_of(mm, order); },
            [order](const DeskModel& mm) { return detail::binding_points_of(mm, order); });

        if (run.partition.arcs.empty()) {
            run.note = "partition emptied at k=" + std::to_string(k);
            return run;
        }

        // corrections run while the level order is below m
        if (run.curve.level_j < m) {
            run.curve = correction_step(fam, run.curve, run.partition, K.varrho, m);
        }

        LimitRunStep step;
        step.k = k;
        step.level_j = run.curve.level_j;
        step.retained_length = induction::partition_length(run.partition);
        step.arc_count = run.partition.arcs.size();
        step.min_angle = std::numeric_limits<double>::max();
        step.worst_level_error = 0.0;
        const int jq = run.curve.level_j;
        for (const auto& arc : run.partition.arcs) {
            try {
                const double ang = angle_j(fam, arc.mid(), run.curve.eval(arc.mid()), jq);
                step.min_angle = std::min(step.min_angle, ang);
                step.worst_level_error =
                    std::max(step.worst_level_error, std::abs(ang - level));
            } catch (const UndefinedAngle&) {
                step.min_angle = 0.0;
            }
        }
        run.steps.push_back(step);
    }
    run.completed = true;
    return run;
}

struct HatOmegaReport {
    std::vector<int> ms;
    std::vector<double> sup_distances;   // between consecutive level curves
    std::vector<double> retained_lengths;
    std::vector<double> final_angles;    // min retained angle per m
    bool distances_decay = true;
};

// Convergence of the level-curve family as m grows.
inline HatOmegaReport hat_omega(const DeskFamily& fam, const std::vector<int>& m_list,
                                int k_max, const InductionConstants& K) {
    HatOmegaReport rep;
    std::vector<ThetaFlatCurve> curves;
    for (const int m : m_list) {
        auto run = run_to_limit(fam, m, k_max, K);
        rep.ms.push_back(m);
        rep.retained_lengths.push_back(induction::partition_length(run.partition));
        double mn = std::numeric_limits<double>::max();
        for (const auto& s : run.steps)
            if (s.k == k_max) mn = s.min_angle;
        rep.final_angles.push_back(mn);
        curves.push_back(run.curve);
    }
    for (std::size_t i = 1; i < curves.size(); ++i) {
        double sup = 0.0;
        for (double a = -fam.params().eta(); a <= fam.params().eta();
             a += fam.params().eta() / 8.0) {
            sup = std::max(sup, std::abs(curves[i].eval(a) - curves[i - 1].eval(a)));
        }
        rep.sup_distances.push_back(sup);
    }
    for (std::size_t i = 1; i < rep.sup_distances.size(); ++i)
        if (rep.sup_distances[i] > 0.9 * rep.sup_distances[i - 1]) rep.distances_decay = false;
    return rep;
}

// ---------------------------------------------------------------------------
// diagnostics

struct PeriodicPoint {
    PhasePoint point;
    int period = 0;
    double eig_max = 0.0;
    double eig_min = 0.0;
    double lyap = 0.0;  // log|eig_max| / period
    bool hyperbolic = false;
};

namespace detail {

// f^p in the chart of z, when the orbit returns to that chart
inline std::optional<std::pair<Vec2, Mat2>> iterate_in_chart(const DeskModel& m,
                                                             const PhasePoint& z, int p) {
    PhasePoint cur = z;
    Mat2 D = Mat2::identity();
    for (int j = 0; j < p; ++j) {
        if (!m.in_domain(cur)) return std::nullopt;
        D = m.deriv(cur) * D;
        const auto next = m.eval(cur);
        if (!next) return std::nullopt;
        cur = *next;
    }
    if (cur.chart != z.chart) return std::nullopt;
    return std::make_pair(Vec2{cur.x, cur.y}, D);
}

}  // namespace detail

// Newton search for periodic points of period <= p_max, seeded on a grid per
// chart; duplicates merged at 1e-8.
inline std::vector<PeriodicPoint> find_periodic_points(const DeskModel& m, int p_max,
                                                       int grid = 50) {
    std::vector<PeriodicPoint> found;
    const auto& g = m.geometry();

    struct Box {
        model::Chart chart;
        double x0, x1, y0, y1;
    };
    const Box boxes[3] = {
        {model::Chart::P, -0.99, g.x_left * 0.999, -0.99, 0.99},
        {model::Chart::Fold, -g.r0 * 0.999, g.r0 * 0.999, -0.99, 0.99},
        {model::Chart::Q, -g.lambda_q * 0.999, g.lambda_q * 0.999, -0.99, 0.99},
    };

    for (int p = 1; p <= p_max; ++p) {
        for (const auto& box : boxes) {
            for (int ix = 0; ix < grid; ++ix) {
                for (int iy = 0; iy < grid; ++iy) {
                    PhasePoint z{box.chart, box.x0 + (box.x1 - box.x0) * ix / (grid - 1),
                                 box.y0 + (box.y1 - box.y0) * iy / (grid - 1)};
                    // Newton iteration on f^p(z) - z
                    bool converged = false;
                    for (int it = 0; it < 30; ++it) {
                        const auto fp = detail::iterate_in_chart(m, z, p);
                        if (!fp) break;
                        const Vec2 F{fp->first.x - z.x, fp->first.y - z.y};
                        if (F.norm() < 1e-12) {
                            converged = true;
                            break;
                        }
                        const Mat2 J{fp->second.a - 1.0, fp->second.b, fp->second.c,
                                     fp->second.d - 1.0};
                        const double det = J.det();
                        if (std::abs(det) < 1e-300) break;
                        const Vec2 dz{(J.d * F.x - J.b * F.y) / det,
                                      (-J.c * F.x + J.a * F.y) / det};
                        z.x -= dz.x;
                        z.y -= dz.y;
                        if (!m.in_domain(z)) break;
                    }
                    if (!converged) continue;
                    const auto fp = detail::iterate_in_chart(m, z, p);
                    if (!fp) continue;
                    bool dup = false;
                    for (const auto& q : found) {
                        if (q.point.chart == z.chart && std::abs(q.point.x - z.x) < 1e-8 &&
                            std::abs(q.point.y - z.y) < 1e-8 && p % q.period == 0)
                            dup = true;
                    }
                    if (dup) continue;
                    // minimal period check
                    bool minimal = true;
                    for (int q = 1; q < p; ++q) {
                        if (p % q != 0) continue;
                        const auto fq = detail::iterate_in_chart(m, z, q);
                        if (fq && std::abs(fq->first.x - z.x) < 1e-9 &&
                            std::abs(fq->first.y - z.y) < 1e-9)
                            minimal = false;
                    }
                    if (!minimal) continue;

                    PeriodicPoint pp;
                    pp.point = z;
                    pp.period = p;
                    const Mat2 D = fp->second;
                    const double tr = D.a + D.d, det = D.det();
                    const double disc = tr * tr - 4.0 * det;
                    if (disc >= 0.0) {
                        const double r = std::sqrt(disc);
                        const double l1 = 0.5 * (tr + r), l2 = 0.5 * (tr - r);
                        pp.eig_max = std::max(std::abs(l1), std::abs(l2));
                        pp.eig_min = std::min(std::abs(l1), std::abs(l2));
                    } else {
                        pp.eig_max = pp.eig_min = std::sqrt(std::abs(det));
                    }
                    pp.lyap = std::log(pp.eig_max) / p;
                    pp.hyperbolic = pp.eig_max > 1.0 + 1e-9 && pp.eig_min < 1.0 - 1e-9;
                    found.push_back(pp);
                }
            }
        }
    }
    return found;
}

struct DiagnosticsReport {
    std::vector<PeriodicPoint> periodic_points;
    bool all_periodic_hyperbolic = true;
    double min_periodic_lyap = std::numeric_limits<double>::max();
    double lyap_P = 0.0;
    double lyap_Q = 0.0;
    int lyap_samples = 0;
    int lyap_positive = 0;
    double lyap_min_sampled = std::numeric_limits<double>::max();
    double tangency_recurrence = std::numeric_limits<double>::max();
};

inline DiagnosticsReport diagnostics(const DeskModel& m, int horizon, int p_max = 6,
                                     int n_lyap_samples = 1000, std::uint64_t seed = 31337) {
    DiagnosticsReport rep;
    rep.periodic_points = find_periodic_points(m, p_max);
    for (const auto& pp : rep.periodic_points) {
        rep.all_periodic_hyperbolic = rep.all_periodic_hyperbolic && pp.hyperbolic;
        rep.min_periodic_lyap = std::min(rep.min_periodic_lyap, pp.lyap);
    }

    rep.lyap_P = lyapunov_estimate(m, m.fixed_p(), horizon);
    rep.lyap_Q = lyapunov_estimate(m, m.fixed_q(), horizon);

    Rng rng(seed);
    for (int i = 0; i < n_lyap_samples; ++i) {
        PhasePoint z{model::Chart::P, rng.uniform(0.02, m.geometry().x_left),
                     rng.uniform(-1.0, 1.0)};
        try {
            const double l = lyapunov_estimate(m, z, horizon);
            ++rep.lyap_samples;
            if (l > 0.0) ++rep.lyap_positive;
            rep.lyap_min_sampled = std::min(rep.lyap_min_sampled, l);
        } catch (const OrbitEscape&) {
        }
    }

    // least distance of the forward orbit of the tangency point to itself
    try {
        const PhasePoint t0 = m.qhat();
        PhasePoint cur = t0;
        for (int j = 0; j < horizon; ++j) {
            const auto next = m.eval(cur);
            if (!next) break;
            cur = *next;
            const double d = m.distance(cur, t0);
            if (std::isfinite(d)) rep.tangency_recurrence = std::min(rep.tangency_recurrence, d);
        }
    } catch (const std::exception&) {
    }
    return rep;
}

}  // namespace tlab::tangency
