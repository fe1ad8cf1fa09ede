#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <vector>

#include "tangencylab/contractive.hpp"
#include "tangencylab/core.hpp"
#include "tangencylab/model.hpp"

// Growing W^u(P) by generations, graph-form bookkeeping of its almost flat
// pieces, and critical approximations of each order by angle minimization
// along those pieces.

namespace tlab::manifold {

using model::Chart;
using model::DeskModel;
using model::PhasePoint;

struct GenerationArc {
    int generation = 0;
    std::vector<PhasePoint> samples;  // ordered along the manifold
    double arclength = 0.0;
};

inline double polyline_length(const DeskModel& m, const std::vector<PhasePoint>& pts) {
    double len = 0.0;
    for (std::size_t i = 1; i < pts.size(); ++i) {
        const double d = m.distance(pts[i - 1], pts[i]);
        if (std::isfinite(d)) len += d;
    }
    return len;
}

class TracingError : public std::runtime_error {
  public:
    explicit TracingError(const std::string& what) : std::runtime_error(what) {}
};

// Arc of W^u(P) from P to the first crossing z~ of the critical square
// boundary, traced along the x axis of the P chart and into the fold strip.
// The crossing is resolved by bisection to 1e-9.
inline GenerationArc seed_generation_zero(const DeskModel& m, int n_samples = 600) {
    const auto& g = m.geometry();
    GenerationArc arc;
    arc.generation = 0;

    // W^u_loc(P) is the y=0 axis; the strip map fixes it as a curve until the
    // fold. The crossing of x_hat = -delta is a plain coordinate condition.
    const double x_start = 1e-6;
    const double x_cross_global = g.x_qhat - g.delta;

    const int nP = n_samples / 2;
    for (int i = 0; i < nP; ++i) {
        // geometric spacing in the P chart; the linear map makes log-spacing natural
        const double t = static_cast<double>(i) / (nP - 1);
        const double x = x_start * std::pow(g.x_left / x_start, t);
        arc.samples.push_back({Chart::P, x, 0.0});
    }
    const int nF = n_samples - nP;
    for (int i = 1; i <= nF; ++i) {
        // fold-strip part, from the strip edge to the critical boundary
        const double t = static_cast<double>(i) / nF;
        arc.samples.push_back({Chart::Fold, -g.r0 + t * (g.r0 - g.delta), 0.0});
    }
    // bisect the endpoint onto x_hat = -delta exactly (trivial here, but kept
    // as a guard for perturbed variants where the wafer is not exactly y=0)
    PhasePoint tail = arc.samples.back();
    if (std::abs((g.x_qhat + tail.x) - x_cross_global) > 1e-9)
        throw TracingError("generation-zero endpoint missed the critical boundary");
    arc.arclength = polyline_length(m, arc.samples);
    return arc;
}

// Fundamental tail of G0: the sub-arc whose image is the continuation past
// z~, i.e. points of G0 with f(z) beyond the endpoint.
inline GenerationArc fundamental_tail(const DeskModel& m, const GenerationArc& g0,
                                      int n_samples = 400) {
    (void)g0;  // the tail is a fixed sub-arc of it, resolved analytically
    const auto& g = m.geometry();
    GenerationArc tail;
    tail.generation = 0;
    const double x_end_global = g.x_qhat - g.delta;
    const double x_pre_global = x_end_global / m.params().sigma1;
    for (int i = 0; i <= n_samples; ++i) {
        const double t = static_cast<double>(i) / n_samples;
        const double x = x_pre_global + t * (x_end_global - x_pre_global);
        if (x <= g.x_left) {
            tail.samples.push_back({Chart::P, x, 0.0});
        } else {
            tail.samples.push_back({Chart::Fold, x - g.x_qhat, 0.0});
        }
    }
    tail.arclength = polyline_length(m, tail.samples);
    return tail;
}

class ResolutionError : public std::runtime_error {
  public:
    explicit ResolutionError(const std::string& what) : std::runtime_error(what) {}
};

// Next generation: the image arc of the previous one, refined by repeatedly
// bisecting the preimage of the worst-turning image segment. The refinement
// is budget-limited: near the cubic fold tip the total turning is order pi,
// so a fixed per-segment angle there cannot be met by any finite budget.
inline GenerationArc grow_generation(const DeskModel& m, const GenerationArc& prev,
                                     double angle_tol = 1e-3, std::size_t budget = 8000) {
    GenerationArc out;
    out.generation = prev.generation + 1;

    struct Node {
        PhasePoint pre;   // preimage (on prev arc)
        PhasePoint img;   // mapped point
        bool escaped;
    };
    auto map_node = [&](const PhasePoint& z) -> Node {
        const auto img = m.eval(z);
        if (!img) return {z, z, true};
        return {z, *img, false};
    };

    std::vector<Node> nodes;
    nodes.reserve(prev.samples.size());
    for (const auto& z : prev.samples) nodes.push_back(map_node(z));
    if (nodes.size() < 3) throw ResolutionError("previous arc too short to grow");

    auto turning_at = [&](const std::vector<Node>& ns, std::size_t i) -> double {
        // turning of the image polyline at interior node i
        if (i == 0 || i + 1 >= ns.size()) return 0.0;
        if (ns[i - 1].escaped || ns[i].escaped || ns[i + 1].escaped) return 0.0;
        const Vec2 d1 = m.to_global(ns[i].img) - m.to_global(ns[i - 1].img);
        const Vec2 d2 = m.to_global(ns[i + 1].img) - m.to_global(ns[i].img);
        if (!(d1.norm() > 0.0) || !(d2.norm() > 0.0)) return 0.0;
        if (!std::isfinite(d1.x + d2.x)) return 0.0;
        return line_angle(d1, d2);
    };

    while (nodes.size() < budget) {
        double worst = 0.0;
        std::size_t at = 0;
        for (std::size_t i = 1; i + 1 < nodes.size(); ++i) {
            const double t = turning_at(nodes, i);
            if (t > worst) {
                worst = t;
                at = i;
            }
        }
        if (worst <= angle_tol || at == 0) break;
        // bisect the longer adjacent preimage segment, staying inside one chart
        const auto split_seg = [&](std::size_t lo) -> bool {
            if (nodes[lo].pre.chart != nodes[lo + 1].pre.chart) return false;
            PhasePoint mid{nodes[lo].pre.chart, 0.5 * (nodes[lo].pre.x + nodes[lo + 1].pre.x),
                           0.5 * (nodes[lo].pre.y + nodes[lo + 1].pre.y)};
            nodes.insert(nodes.begin() + static_cast<std::ptrdiff_t>(lo) + 1, map_node(mid));
            return true;
        };
        const double len_l = std::abs(nodes[at].pre.x - nodes[at - 1].pre.x);
        const double len_r = std::abs(nodes[at + 1].pre.x - nodes[at].pre.x);
        bool did = false;
        if (len_l >= len_r) {
            did = split_seg(at - 1) || split_seg(at);
        } else {
            did = split_seg(at) || split_seg(at - 1);
        }
        if (!did) break;
    }

    for (const auto& n : nodes)
        if (!n.escaped) out.samples.push_back(n.img);
    if (out.samples.size() < 2) throw ResolutionError("image arc left the model domain");
    out.arclength = polyline_length(m, out.samples);
    return out;
}

struct AlmostFlatCurve {
    Chart chart = Chart::Fold;
    double x0 = 0.0, y0 = 0.0;         // base point
    std::vector<double> xs, ys;        // knots, absolute chart coordinates
    double sup_y = 0.0, sup_yp = 0.0, sup_ypp = 0.0;
    double C_flat = 0.0;               // max bound / sqrt(b)

    double x_min() const { return xs.front(); }
    double x_max() const { return xs.back(); }
    double half_length() const { return 0.5 * (xs.back() - xs.front()); }

    // piecewise cubic Hermite interpolation with finite-difference slopes
    double eval(double x) const {
        const auto seg = locate(x);
        const std::size_t i = seg.first;
        const double t = seg.second;
        const double h = xs[i + 1] - xs[i];
        const double m0 = knot_slope(i), m1 = knot_slope(i + 1);
        const double t2 = t * t, t3 = t2 * t;
        return (2 * t3 - 3 * t2 + 1) * ys[i] + (t3 - 2 * t2 + t) * h * m0 +
               (-2 * t3 + 3 * t2) * ys[i + 1] + (t3 - t2) * h * m1;
    }

    double eval_deriv(double x) const {
        const auto seg = locate(x);
        const std::size_t i = seg.first;
        const double t = seg.second;
        const double h = xs[i + 1] - xs[i];
        const double m0 = knot_slope(i), m1 = knot_slope(i + 1);
        const double t2 = t * t;
        return ((6 * t2 - 6 * t) * ys[i] + (3 * t2 - 4 * t + 1) * h * m0 +
                (-6 * t2 + 6 * t) * ys[i + 1] + (3 * t2 - 2 * t) * h * m1) /
               h;
    }

    PhasePoint at(double x) const { return {chart, x, eval(x)}; }
    Vec2 tangent(double x) const { return Vec2{1.0, eval_deriv(x)}.normalized(); }

  private:
    std::pair<std::size_t, double> locate(double x) const {
        if (xs.size() < 2) throw std::domain_error("flat curve needs >= 2 knots");
        std::size_t i =
            static_cast<std::size_t>(std::upper_bound(xs.begin(), xs.end(), x) - xs.begin());
        if (i == 0) i = 1;
        if (i >= xs.size()) i = xs.size() - 1;
        --i;
        const double t = (x - xs[i]) / (xs[i + 1] - xs[i]);
        return {i, t};
    }
    double knot_slope(std::size_t i) const {
        if (i == 0) return (ys[1] - ys[0]) / (xs[1] - xs[0]);
        if (i + 1 == xs.size())
            return (ys[i] - ys[i - 1]) / (xs[i] - xs[i - 1]);
        return (ys[i + 1] - ys[i - 1]) / (xs[i + 1] - xs[i - 1]);
    }
};

struct FlatFitResult {
    bool accepted = false;
    AlmostFlatCurve curve;
    double sup_y = 0.0, sup_yp = 0.0, sup_ypp = 0.0;
};

// Graph fit of a chart-tagged sample chain. Rejects when the chain is not
// x-monotone in its chart or the measured slope bound exceeds 0.1.
inline FlatFitResult fit_almost_flat(const std::vector<PhasePoint>& samples, double b) {
    FlatFitResult out;
    if (samples.size() < 4) return out;
    const Chart chart = samples.front().chart;
    for (const auto& s : samples)
        if (s.chart != chart) return out;
    for (std::size_t i = 1; i < samples.size(); ++i)
        if (!(samples[i].x > samples[i - 1].x)) return out;

    AlmostFlatCurve c;
    c.chart = chart;
    c.xs.reserve(samples.size());
    c.ys.reserve(samples.size());
    for (const auto& s : samples) {
        c.xs.push_back(s.x);
        c.ys.push_back(s.y);
    }
    const std::size_t mid = samples.size() / 2;
    c.x0 = c.xs[mid];
    c.y0 = c.ys[mid];

    double sy = 0.0, syp = 0.0, sypp = 0.0;
    for (std::size_t i = 0; i < c.xs.size(); ++i) {
        sy = std::max(sy, std::abs(c.ys[i] - c.y0));
        if (i > 0) {
            const double yp = (c.ys[i] - c.ys[i - 1]) / (c.xs[i] - c.xs[i - 1]);
            syp = std::max(syp, std::abs(yp));
        }
        if (i > 0 && i + 1 < c.xs.size()) {
            const double h1 = c.xs[i] - c.xs[i - 1];
            const double h2 = c.xs[i + 1] - c.xs[i];
            const double ypp =
                2.0 * (c.ys[i + 1] * h1 - c.ys[i] * (h1 + h2) + c.ys[i - 1] * h2) /
                (h1 * h2 * (h1 + h2));
            sypp = std::max(sypp, std::abs(ypp));
        }
    }
    out.sup_y = c.sup_y = sy;
    out.sup_yp = c.sup_yp = syp;
    out.sup_ypp = c.sup_ypp = sypp;
    c.C_flat = std::max({sy, syp, sypp}) / std::sqrt(b);
    out.curve = c;
    out.accepted = syp <= 0.1;
    return out;
}

struct CriticalApprox {
    int order = 0;
    PhasePoint point;
    int generation = 0;
    double angle = 0.0;
    double arc_x = 0.0;  // position on the host curve
    std::vector<std::pair<int, PhasePoint>> history;
};

class MinimizerError : public std::runtime_error {
  public:
    explicit MinimizerError(const std::string& what) : std::runtime_error(what) {}
};

// angle between the image tangent and the order-k contracted direction at the
// image of the arc point with abscissa x
inline double image_angle(const DeskModel& m, const AlmostFlatCurve& arc, double x, int k) {
    const PhasePoint z = arc.at(x);
    const Vec2 t = arc.tangent(x);
    const auto img = m.eval(z);
    if (!img) throw OrbitEscape(1, "arc image left the model domain");
    const Vec2 ti = m.deriv(z) * t;
    const auto e = fields::most_contracted(m, *img, k);
    return line_angle(ti, e.direction);
}

// Unique minimizer of the image angle along the arc: golden-section search
// refined by bisection on the angle derivative; uniqueness asserted by the
// sign-change count of that derivative along the arc.
inline CriticalApprox find_critical_approx(const DeskModel& m, const AlmostFlatCurve& arc, int k,
                                           int scan_points = 257) {
    const double lo = arc.x_min(), hi = arc.x_max();
    const double span = hi - lo;
    const double hd = std::max(span * 1e-7, 1e-14);
    auto ang = [&](double x) { return image_angle(m, arc, x, k); };
    auto dang = [&](double x) { return (ang(x + hd) - ang(x - hd)) / (2 * hd); };

    // uniqueness scan
    int sign_changes = 0;
    double prev = dang(lo + hd * 2);
    double bracket_lo = lo, bracket_hi = hi;
    for (int i = 1; i < scan_points; ++i) {
        const double x = lo + hd * 2 + (span - 4 * hd) * i / (scan_points - 1);
        const double d = dang(x);
        if (prev < 0.0 && d >= 0.0) {
            ++sign_changes;
            bracket_lo = lo + hd * 2 + (span - 4 * hd) * (i - 1) / (scan_points - 1);
            bracket_hi = x;
        }
        prev = d;
    }
    if (sign_changes != 1)
        throw MinimizerError("angle derivative has " + std::to_string(sign_changes) +
                             " sign changes along the arc");

    // bisection on the derivative
    double a = bracket_lo, b_ = bracket_hi;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (a + b_);
        const double d = dang(mid);
        if (d < 0.0) a = mid;
        else b_ = mid;
        if (std::abs(d) < 1e-11 && (b_ - a) < 1e-14 * std::max(1.0, std::abs(mid))) break;
    }
    const double xstar = 0.5 * (a + b_);

    CriticalApprox out;
    out.order = k;
    out.arc_x = xstar;
    out.point = arc.at(xstar);
    out.angle = ang(xstar);
    return out;
}

struct CriticalCensus {
    int order = 0;
    std::size_t flat_subarcs = 0;
    std::vector<CriticalApprox> minimizers;  // one per accepted flat sub-arc, where defined
};

// Sweeps a generation arc for maximal flat sub-arcs inside the critical
// square and collects the angle minimizers found on them. The census makes
// no completeness claim; it reports what the maintained arcs expose.
inline CriticalCensus critical_census(const DeskModel& m, const GenerationArc& gen, int order,
                                      double b) {
    CriticalCensus out;
    out.order = order;
    std::vector<PhasePoint> current;
    auto flush = [&]() {
        if (current.size() >= 2 &&
            current.back().x - current.front().x > 0.1 * m.geometry().delta) {
            // the census measures the maintained polyline; resample it so the
            // graph fit has enough knots even where the arc is stored sparsely
            std::vector<PhasePoint> dense;
            const int per_seg =
                std::max<int>(1, static_cast<int>(48 / (current.size() - 1)) + 1);
            for (std::size_t i = 0; i + 1 < current.size(); ++i) {
                for (int k = 0; k < per_seg; ++k) {
                    const double t = static_cast<double>(k) / per_seg;
                    dense.push_back({current[i].chart,
                                     current[i].x + t * (current[i + 1].x - current[i].x),
                                     current[i].y + t * (current[i + 1].y - current[i].y)});
                }
            }
            dense.push_back(current.back());
            const auto fit = fit_almost_flat(dense, b);
            if (fit.accepted && fit.curve.half_length() > 0.0) {
                ++out.flat_subarcs;
                try {
                    auto crit = find_critical_approx(m, fit.curve, order, 65);
                    crit.generation = gen.generation;
                    out.minimizers.push_back(crit);
                } catch (const std::exception&) {
                    // multi-minimum or invalid field: the sub-arc hosts none
                }
            }
        }
        current.clear();
    };
    for (const auto& z : gen.samples) {
        const bool inside = m.in_R_delta(z);
        const bool monotone =
            current.empty() || (z.chart == current.back().chart && z.x > current.back().x);
        if (inside && monotone) {
            current.push_back(z);
        } else {
            flush();
            if (inside) current.push_back(z);
        }
    }
    flush();
    return out;
}

// Transfers a critical approximation of order n to a nearby arc.
inline CriticalApprox induce_critical(const DeskModel& m, const CriticalApprox& z1,
                                      const AlmostFlatCurve& arc2, double rho) {
    const double rn = std::pow(rho, z1.order);
    if (arc2.half_length() < rn)
        throw MinimizerError("target arc shorter than rho^n around its center");
    const PhasePoint center = arc2.at(0.5 * (arc2.x_min() + arc2.x_max()));
    const double d = m.distance(z1.point, center);
    if (!(d < rn / 100.0))
        throw MinimizerError("source approximation too far from the target arc");
    CriticalApprox out = find_critical_approx(m, arc2, z1.order);
    out.history = z1.history;
    out.history.emplace_back(z1.order, z1.point);
    out.generation = z1.generation;
    return out;
}

}  // namespace tlab::manifold
