#pragma once

#include <cmath>
#include <optional>
#include <stdexcept>
#include <vector>

#include "tangencylab/config.hpp"
#include "tangencylab/core.hpp"
#include "tangencylab/interval_set.hpp"

// The cubic circle family and its parameter-exclusion run: a degree-two
// expanding circle map deformed on a small patch around the moving critical
// point x = a, where the derivative at the center equals eps = A|theta| and
// the local shape is the cubic eps*s + B*s^3. The patch profile is built from
// C^3 windows with an area-repayment bump so the map stays a monotone
// degree-two covering for the whole theta range.

namespace tlab::circle1d {

struct CircleParams {
    int degree = 2;
    double A = 2.5;          // theta coupling: eps = A * |theta|
    double B = 0.0;          // cubic coefficient; 0 means 0.5/delta1^2
    double delta1 = 3e-3;    // critical neighborhood radius
    double eta1 = 4e-9;      // a-parameter half range
    // Shear and localized smooth kink of the ambient doubling map:
    // x -> 2x + omega + gamma W(x) with W a C^3 bump supported on [0.85,0.95],
    // away from the patch, from J and from the fixed point. Pure x -> 2x mod 1
    // is exactly dyadic in floating point: every orbit's mantissa shifts out
    // until it collapses onto the fixed point lattice, fabricating
    // systematically deep returns. The kink re-randomizes the low bits at
    // every crossing while keeping the map an expanding degree-two covering.
    double omega = 0.3819660112501051;
    double gamma = 0.005;
    double abar = 0.1180339887498949;  // second preimage of the fixed point
    double zeta_J = 0.1;     // half width of the neighborhood J of the fixed point
    double c = 0.3;
    double c_tilde = 0.6;
    double c_hat = 0.28;
    double alpha = 0.08;
    double arc_floor = 0.0;     // refinement resolution limit; 0 means eta1 * 1e-4
    int max_arcs = 65536;
    int m0_cap = 40;
    int p_cap = 40;             // bound-period cap in the FA bookkeeping

    double cubic_B() const { return B > 0.0 ? B : 0.5 / (delta1 * delta1); }
    double sigma_J() const { return static_cast<double>(degree); }
    double epsilon(double theta) const { return -A * theta; }
    double floor_or_default() const { return arc_floor > 0.0 ? arc_floor : eta1 * 1e-4; }
    double p_star() const { return 1.0 - omega; }  // the ambient fixed point

    // the localized kink and its derivative
    double kink(double x) const {
        if (x <= 0.85 || x >= 0.95) return 0.0;
        if (x < 0.875) return s7((x - 0.85) / 0.025);
        if (x <= 0.925) return 1.0;
        return 1.0 - s7((x - 0.925) / 0.025);
    }
    double kink_deriv(double x) const {
        if (x <= 0.85 || x >= 0.95) return 0.0;
        if (x < 0.875) return s7_deriv((x - 0.85) / 0.025) / 0.025;
        if (x <= 0.925) return 0.0;
        return -s7_deriv((x - 0.925) / 0.025) / 0.025;
    }
};

struct CircleParamsCheck {
    bool ok = true;
    std::string note;
};

inline CircleParamsCheck check_circle_params(const CircleParams& p) {
    CircleParamsCheck out;
    auto fail = [&](const std::string& msg) {
        out.ok = false;
        out.note += (out.note.empty() ? "" : "; ") + msg;
    };
    if (!(p.c_hat < p.c)) fail("need c_hat < c");
    if (!(std::abs(p.c_hat - p.c) < 0.05)) fail("need |c_hat - c| < 0.05");
    if (!(p.c_tilde > p.c)) fail("need c_tilde > c");
    if (!(p.sigma_J() > std::exp(p.c_tilde))) fail("need sigma_J > e^{c_tilde}");
    if (!(p.sigma_J() > std::exp(p.c))) fail("need sigma_J > e^c");
    if (!(p.delta1 > 0.0 && p.eta1 > 0.0 && p.zeta_J > 0.0)) fail("scales must be positive");
    return out;
}

inline CircleParams circle_params_from_config(const Config& cfg) {
    CircleParams p;
    p.degree = static_cast<int>(cfg.get_int("circle", "degree", p.degree));
    p.A = cfg.get_double("circle", "A", p.A);
    p.B = cfg.get_double("circle", "B", p.B);
    p.delta1 = cfg.get_double("circle", "delta1", p.delta1);
    p.eta1 = cfg.get_double("circle", "eta1", p.eta1);
    p.omega = cfg.get_double("circle", "omega", p.omega);
    p.gamma = cfg.get_double("circle", "gamma", p.gamma);
    p.abar = cfg.get_double("circle", "abar", p.abar);
    p.zeta_J = cfg.get_double("circle", "zeta_J", p.zeta_J);
    p.c = cfg.get_double("circle", "c", p.c);
    p.c_tilde = cfg.get_double("circle", "c_tilde", p.c_tilde);
    p.c_hat = cfg.get_double("circle", "c_hat", p.c_hat);
    p.alpha = cfg.get_double("circle", "alpha", p.alpha);
    return p;
}

inline double wrap01(double x) {
    x = std::fmod(x, 1.0);
    if (x < 0.0) x += 1.0;
    return x;
}

// signed circle distance in [-1/2, 1/2)
inline double circ_diff(double x, double y) {
    double d = std::fmod(x - y, 1.0);
    if (d < -0.5) d += 1.0;
    if (d >= 0.5) d -= 1.0;
    return d;
}

class CircleMap {
  public:
    CircleMap(const CircleParams& p, double a, double theta) : p_(p), a_(a), theta_(theta) {
        eps_ = p_.epsilon(theta);
        B_ = p_.cubic_B();
        d1_ = p_.delta1;
        va_ = wrap01(static_cast<double>(p_.degree) * a_ + p_.omega);

        // profile g'(s) = eps + (deg - eps) sig(t) + 3 B s^2 mu(t) + kappa bump(t)
        // with t = |s|/delta1; kappa repays the area so that g(delta1) = deg*delta1.
        const double Isig = 0.5 * d1_;
        const double Imu2 = mu_s2_integral();
        const double Ibump = 0.2 * d1_;
        const double deg = static_cast<double>(p_.degree);
        const double I0 = eps_ * d1_ + (deg - eps_) * Isig + 3.0 * B_ * Imu2;
        kappa_ = (deg * d1_ - I0) / Ibump;
    }

    double a() const { return a_; }
    double theta() const { return theta_; }
    double eps() const { return eps_; }
    double kappa() const { return kappa_; }
    double critical_value() const { return va_; }
    bool in_patch(double x) const { return std::abs(circ_diff(x, a_)) <= d1_; }

    double eval(double x) const {
        const double s = circ_diff(x, a_);
        if (std::abs(s) > d1_)
            return wrap01(static_cast<double>(p_.degree) * x + p_.omega + p_.gamma * p_.kink(x));
        return wrap01(va_ + g(s));
    }

    double deriv(double x) const {
        const double s = circ_diff(x, a_);
        if (std::abs(s) > d1_)
            return static_cast<double>(p_.degree) + p_.gamma * p_.kink_deriv(x);
        return g_deriv(s);
    }

    // patch profile, odd in s
    double g(double s) const {
        const double sgn = (s < 0.0) ? -1.0 : 1.0;
        const double as = std::abs(s);
        const double t = as / d1_;
        const double deg = static_cast<double>(p_.degree);
        double v = eps_ * as + 3.0 * B_ * mu_s2_partial(as);
        v += (deg - eps_) * d1_ * sig_integral(t);
        v += kappa_ * d1_ * bump_integral(t);
        return sgn * v;
    }

    double g_deriv(double s) const {
        const double as = std::abs(s);
        const double t = as / d1_;
        const double deg = static_cast<double>(p_.degree);
        return eps_ + (deg - eps_) * sig(t) + 3.0 * B_ * as * as * mu(t) + kappa_ * bump(t);
    }

    // monotonicity audit of the patch profile
    bool monotone(int n_grid = 2000) const {
        for (int i = 0; i <= n_grid; ++i) {
            const double s = -d1_ + 2.0 * d1_ * i / n_grid;
            if (g_deriv(s) < 0.0) return false;
        }
        return true;
    }

  private:
    // windows in t = |s|/delta1
    static double mu(double t) { return (t <= 0.2) ? 1.0 : (t >= 0.45 ? 0.0 : 1.0 - s7((t - 0.2) / 0.25)); }
    static double sig(double t) { return (t <= 0.35) ? 0.0 : (t >= 0.65 ? 1.0 : s7((t - 0.35) / 0.3)); }
    static double bump(double t) {
        if (t <= 0.68 || t >= 0.98) return 0.0;
        if (t < 0.78) return s7((t - 0.68) / 0.1);
        if (t <= 0.88) return 1.0;
        return 1.0 - s7((t - 0.88) / 0.1);
    }
    double sig_integral(double t) const {  // integral_0^t sig
        if (t <= 0.35) return 0.0;
        if (t <= 0.65) return 0.3 * s7_integral((t - 0.35) / 0.3);
        return 0.15 + (t - 0.65);
    }
    static double bump_integral(double t) {  // integral_0^t bump
        if (t <= 0.68) return 0.0;
        if (t < 0.78) return 0.1 * s7_integral((t - 0.68) / 0.1);
        if (t <= 0.88) return 0.05 + (t - 0.78);
        if (t < 0.98) {
            const double tau = (t - 0.88) / 0.1;
            return 0.15 + 0.1 * (tau - s7_integral(tau));
        }
        return 0.2;
    }
    // integral_0^{|s|} u^2 mu(u/d1) du
    double mu_s2_partial(double as) const {
        const double a0 = 0.2 * d1_, a1 = 0.45 * d1_, w = a1 - a0;
        if (as <= a0) return as * as * as / 3.0;
        const double base = a0 * a0 * a0 / 3.0;
        const double hi = std::min(as, a1);
        const double cube = (hi * hi * hi - a0 * a0 * a0) / 3.0;
        const double tt = (hi - a0) / w;
        const double S = s7_integral(tt);
        const double M1 = 35.0 / 6.0 * std::pow(tt, 6) - 12.0 * std::pow(tt, 7) +
                          8.75 * std::pow(tt, 8) - 20.0 / 9.0 * std::pow(tt, 9);
        const double M2 = 5.0 * std::pow(tt, 7) - 10.5 * std::pow(tt, 8) +
                          70.0 / 9.0 * std::pow(tt, 9) - 2.0 * std::pow(tt, 10);
        const double weighted = w * (a0 * a0 * S + 2.0 * a0 * w * M1 + w * w * M2);
        return base + cube - weighted;
    }
    double mu_s2_integral() const { return mu_s2_partial(0.45 * d1_); }

    CircleParams p_;
    double a_, theta_, eps_, B_, d1_, va_, kappa_;
};

// ---------------------------------------------------------------------------
// derived induction quantities

// smallest m0 >= 1 with eps * sigma_J^m0 > e^{c_tilde m0}
inline int escape_steps_m0(const CircleParams& p, double theta) {
    const double eps = p.epsilon(theta);
    if (!(eps > 0.0)) throw std::domain_error("m0 undefined: eps <= 0 (theta >= theta_*)");
    const double ratio = p.sigma_J() / std::exp(p.c_tilde);
    if (!(ratio > 1.0)) throw std::domain_error("sigma_J must exceed e^{c_tilde}");
    int m0 = 1;
    while (!(eps * std::pow(ratio, m0) > 1.0) && m0 < p.m0_cap) ++m0;
    return m0;
}

// continuity radius: largest zeta with f^j((a-zeta, a+zeta)) inside J for all
// 1 <= j <= m0, found by bisection on interval iteration.
inline double continuity_radius(const CircleParams& p, double a, double theta) {
    const CircleMap f(p, a, theta);
    const int m0 = escape_steps_m0(p, theta);

    auto stays = [&](double z) -> bool {
        double lo = a - z, hi = a + z;
        for (int j = 1; j <= m0; ++j) {
            lo = f.eval(lo);
            hi = f.eval(hi);
            const double dlo = circ_diff(lo, p.p_star());
            const double dhi = circ_diff(hi, p.p_star());
            if (std::abs(dlo) > p.zeta_J || std::abs(dhi) > p.zeta_J) return false;
            if (std::abs(circ_diff(hi, lo)) > 2.0 * p.zeta_J) return false;
        }
        return true;
    };

    double lo = 0.0, hi = p.delta1;
    if (stays(hi)) return hi;
    for (int it = 0; it < 80; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (stays(mid)) lo = mid;
        else hi = mid;
    }
    if (!(lo > 0.0)) throw std::domain_error("continuity radius degenerate");
    return lo;
}

// smallest n >= 1 with e^{-n alpha} < zeta and eps e^{c n} >= e^{c_hat (n+1)}
inline int stabilization_time(const CircleParams& p, double theta, double zeta) {
    const double eps = p.epsilon(theta);
    if (!(eps > 0.0)) throw std::domain_error("stabilization time undefined: eps <= 0");
    auto ok = [&](int n) {
        return std::exp(-n * p.alpha) < zeta &&
               eps * std::exp(p.c * n) >= std::exp(p.c_hat * (n + 1));
    };
    int n = 1;
    const int guess1 = static_cast<int>(std::ceil(std::log(1.0 / zeta) / p.alpha));
    const int guess2 =
        static_cast<int>(std::ceil((p.c_hat - std::log(eps)) / (p.c - p.c_hat)));
    n = std::max({1, guess1, guess2});
    while (n > 1 && ok(n - 1)) --n;
    while (!ok(n)) ++n;
    return n;
}

inline int stabilization_time(const CircleParams& p, double theta) {
    return stabilization_time(p, theta, continuity_radius(p, p.abar, theta));
}

// ---------------------------------------------------------------------------
// the exclusion run

struct ExclusionRun {
    std::vector<IntervalSet> omega;   // Omega_{theta, n} for n = 1..n_max
    int n_tilde = 0;
    double zeta = 0.0;
    int m0 = 0;
    int exclusions_after_stabilization = 0;  // would-be violations, reported
    double initial_length = 0.0;
};

namespace detail {

struct ArcState {
    double lo, hi;
    double x_lo, x_mid, x_hi;  // critical orbits of the endpoints and midpoint
    double fa_sum = 0.0;       // accumulated free-return bound periods
    int open_until = -1;       // end of the currently open bound period
};

// One step of the ambient (undeformed) covering map. The exclusion
// bookkeeping runs on ambient orbits so the legs geometry is monotone in
// theta by construction: the reference orbit of each parameter is shared by
// every theta and only the loss radius and the stabilization window move.
inline double ambient_step(const CircleParams& p, double x) {
    return wrap01(static_cast<double>(p.degree) * x + p.omega + p.gamma * p.kink(x));
}

inline double ambient_orbit_value(const CircleParams& p, double a, int n) {
    double x = a;
    for (int j = 0; j < n; ++j) x = ambient_step(p, x);
    return x;
}

// 1D bound period: ambient shadowing of the critical value orbit at e^{-c j}.
inline int bound_period_1d(const CircleParams& p, double a, double x_ret, int cap) {
    double u = x_ret, v = a;
    int pp = 0;
    for (int j = 1; j <= cap; ++j) {
        u = ambient_step(p, u);
        v = ambient_step(p, v);
        if (!(std::abs(circ_diff(u, v)) <= std::exp(-p.c * j))) break;
        pp = j;
    }
    return pp;
}

}  // namespace detail

// Parameter exclusion for one theta: nested interval sets Omega_{theta,n}.
// Rules: refine an arc when the reference critical orbits of its endpoints
// separate by more than e^{-alpha n}; a return of the representative into the
// expansion loss region with depth below e^{-alpha n}, or a free-return
// budget above alpha*n, excludes the arc. The loss region is where the patch
// derivative eps + 3 B s^2 drops below one; for eps >= 1 it is empty and no
// parameter is ever excluded. Reference orbits are ambient (the critical
// orbit before the deformation is switched on), which makes the excluded
// legs grow monotonically with theta; the stabilized derivative chain of the
// true deformed map is verified separately per retained parameter. After the
// stabilization time no arc is removed; violations that would have been
// excluded are counted and reported instead.
inline ExclusionRun run_exclusion_1d(const CircleParams& p, double theta, int n_max) {
    if (!(theta < 0.0)) throw std::domain_error("exclusion run needs theta < 0");
    ExclusionRun run;
    run.zeta = continuity_radius(p, p.abar, theta);
    run.m0 = escape_steps_m0(p, theta);
    run.n_tilde = stabilization_time(p, theta, run.zeta);
    run.initial_length = 2.0 * p.eta1;
    const double eps_th = p.epsilon(theta);
    const double d_loss =
        (eps_th >= 1.0) ? 0.0
                        : std::min(p.delta1, std::sqrt((1.0 - eps_th) / (3.0 * p.cubic_B())));

    std::vector<detail::ArcState> arcs;
    {
        detail::ArcState a0;
        a0.lo = p.abar - p.eta1;
        a0.hi = p.abar + p.eta1;
        a0.x_lo = a0.lo;
        a0.x_mid = 0.5 * (a0.lo + a0.hi);
        a0.x_hi = a0.hi;
        arcs.push_back(a0);
    }

    for (int n = 1; n <= n_max; ++n) {
        // advance the tracked reference orbits one step
        for (auto& w : arcs) {
            w.x_lo = detail::ambient_step(p, w.x_lo);
            w.x_mid = detail::ambient_step(p, w.x_mid);
            w.x_hi = detail::ambient_step(p, w.x_hi);
        }

        // refinement: split arcs whose endpoint orbits separated too far
        const double sep_tol = std::exp(-p.alpha * n);
        std::vector<detail::ArcState> refined;
        refined.reserve(arcs.size());
        for (const auto& w : arcs) {
            std::vector<detail::ArcState> queue{w};
            while (!queue.empty()) {
                detail::ArcState cur = queue.back();
                queue.pop_back();
                const double sep = std::abs(circ_diff(cur.x_hi, cur.x_lo));
                if (sep > sep_tol && (cur.hi - cur.lo) > p.floor_or_default() &&
                    static_cast<int>(refined.size() + queue.size()) < p.max_arcs) {
                    const double mid = 0.5 * (cur.lo + cur.hi);
                    detail::ArcState left = cur, right = cur;
                    left.hi = mid;
                    right.lo = mid;
                    left.x_hi = detail::ambient_orbit_value(p, mid, n);
                    left.x_mid = detail::ambient_orbit_value(p, 0.5 * (left.lo + left.hi), n);
                    right.x_lo = left.x_hi;
                    right.x_mid = detail::ambient_orbit_value(p, 0.5 * (right.lo + right.hi), n);
                    queue.push_back(left);
                    queue.push_back(right);
                } else {
                    refined.push_back(cur);
                }
            }
        }
        std::sort(refined.begin(), refined.end(),
                  [](const detail::ArcState& a, const detail::ArcState& b) { return a.lo < b.lo; });

        // exclusion test at the representatives
        std::vector<detail::ArcState> kept;
        kept.reserve(refined.size());
        for (auto& w : refined) {
            const double a_mid = 0.5 * (w.lo + w.hi);
            const double d = std::abs(circ_diff(w.x_mid, a_mid));
            bool violated = false;
            if (d <= p.delta1) {
                // bound-period bookkeeping runs on every return so the
                // free/bound classification does not depend on theta
                const bool free_return = n > w.open_until;
                const int bp = detail::bound_period_1d(p, a_mid, w.x_mid, p.p_cap);
                if (free_return) w.open_until = n + bp;
                if (d <= d_loss) {  // a return into the expansion loss region
                    if (!(d > sep_tol)) violated = true;  // depth rule at e^{-alpha n}
                    if (free_return) w.fa_sum += bp;
                    if (w.fa_sum > p.alpha * n) violated = true;
                }
            }
            if (violated && n > run.n_tilde) {
                ++run.exclusions_after_stabilization;
                violated = false;
            }
            if (!violated) kept.push_back(w);
        }
        arcs = std::move(kept);

        IntervalSet snapshot;
        for (const auto& w : arcs) snapshot.add({w.lo, w.hi});
        run.omega.push_back(snapshot);
    }
    return run;
}

// ---------------------------------------------------------------------------
// derivative chain verification

struct ChainReport {
    bool ok = true;
    int first_return_after_stabilization = -1;  // n_k
    double min_margin_overall = std::numeric_limits<double>::max();   // vs e^{c_hat j}
    double min_margin_pre_return = std::numeric_limits<double>::max();  // vs e^{c j}
    double min_margin_escape = std::numeric_limits<double>::max();     // segment of (sgda)
    int span = 0;
};

// Checks the four displayed inequalities of the stabilized derivative chain
// along the critical orbit, and the final bound |(f^j)'(f(a))| >= e^{c_hat j}.
inline ChainReport verify_derivative_chain(const CircleParams& p, double a, double theta,
                                           int n_span) {
    ChainReport rep;
    rep.span = n_span;
    const CircleMap f(p, a, theta);
    const double eps = p.epsilon(theta);
    const int m0 = escape_steps_m0(p, theta);
    const double zeta = continuity_radius(p, a, theta);
    const int n_tilde = stabilization_time(p, theta, zeta);

    // log |(f^j)'(f(a))|
    std::vector<double> logD(static_cast<std::size_t>(n_span) + 1, 0.0);
    double x = f.eval(a);
    for (int j = 1; j <= n_span; ++j) {
        logD[static_cast<std::size_t>(j)] =
            logD[static_cast<std::size_t>(j - 1)] + std::log(f.deriv(x));
        x = f.eval(x);
    }

    // first return after the stabilization time
    double xx = a;
    int n_k = -1;
    for (int j = 1; j <= n_span; ++j) {
        xx = f.eval(xx);
        if (j > n_tilde && std::abs(circ_diff(xx, a)) <= p.delta1) {
            n_k = j;
            break;
        }
    }
    rep.first_return_after_stabilization = n_k;

    for (int j = 1; j <= n_span; ++j) {
        const double lj = logD[static_cast<std::size_t>(j)];
        rep.min_margin_overall = std::min(rep.min_margin_overall, lj - p.c_hat * j);
        if (n_k < 0 || j < n_k) {
            rep.min_margin_pre_return = std::min(rep.min_margin_pre_return, lj - p.c * j);
        } else if (j < n_k + m0 && j >= n_k) {
            const double rhs = std::log(eps) + p.c * (j - 1) + p.c_tilde * (j - n_k);
            rep.min_margin_escape = std::min(rep.min_margin_escape, lj - rhs);
        }
    }
    rep.ok = rep.min_margin_overall >= 0.0;
    return rep;
}

// ---------------------------------------------------------------------------
// legs diagram

struct LegsRow {
    double theta = 0.0;
    IntervalSet retained;
    double excluded_length = 0.0;
    int n_tilde = 0;
};

struct LegsDiagram {
    std::vector<LegsRow> rows;
    bool excluded_monotone = true;   // non-decreasing toward theta = 0
    bool paths_exist = true;         // every retained a at the top row stays retained below
};

inline LegsDiagram legs_diagram(const CircleParams& p, const std::vector<double>& thetas,
                                int n_max = 0) {
    LegsDiagram out;
    for (const double th : thetas) {
        const int horizon = n_max > 0 ? n_max : 2 * stabilization_time(p, th);
        const auto run = run_exclusion_1d(p, th, horizon);
        LegsRow row;
        row.theta = th;
        row.retained = run.omega.back();
        row.excluded_length = run.initial_length - row.retained.total_length();
        row.n_tilde = run.n_tilde;
        out.rows.push_back(row);
    }
    std::vector<std::size_t> order(out.rows.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
        return out.rows[i].theta < out.rows[j].theta;
    });
    for (std::size_t k = 1; k < order.size(); ++k) {
        const auto& lo = out.rows[order[k - 1]];
        const auto& hi = out.rows[order[k]];
        if (hi.excluded_length < lo.excluded_length - 1e-12) out.excluded_monotone = false;
        // retained set nearer the bifurcation must be contained in the lower one
        if (!hi.retained.subset_of(lo.retained)) out.paths_exist = false;
    }
    return out;
}

}  // namespace tlab::circle1d
