#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <stdexcept>
#include <vector>

#include "tangencylab/cocycle.hpp"
#include "tangencylab/core.hpp"
#include "tangencylab/manifold.hpp"
#include "tangencylab/model.hpp"

// Orbitwise induction for the surface family: return detection, binding,
// bound and folding periods, the splitting of iterated tangents into
// contracted and horizontal components, the (BA)/(FA)/(EG) conditions and the
// per-arc parameter exclusion step.

namespace tlab::induction {

using manifold::AlmostFlatCurve;
using manifold::CriticalApprox;
using model::DeskFamily;
using model::DeskModel;
using model::PhasePoint;

struct InductionConstants {
    double c = 0.15;        // expansion exponent (below log sigma0)
    double c_tilde = 1.1;   // bound-period growth factor per step (> 1)
    double c_hat = 0.13;    // relaxed exponent for composed growth
    double alpha = 0.015;   // (BA)/(FA) exponent
    double beta = 0.075;    // bound-period decay exponent
    double h = 4.0;        // binding distance constant (shadowing leash)
    double rho = 0.0;      // critical-arc scale; 0 means sqrt(b)
    double varrho = 0.05;  // tangency angle scale
    double K1 = 0.0;       // beta-variation constant; 0 means 3*C1*(1+sqrt(b))
    double C_fold = 1.0;
    int k_max = 30;
    double slope_frac = 0.1;   // threshold factor in the binding slope test
    double depth_floor = 1e-14;

    double rho_or_default(double b) const { return rho > 0.0 ? rho : std::sqrt(b); }
    double K1_or_default(double C1, double b) const {
        return K1 > 0.0 ? K1 : 3.0 * C1 * (1.0 + std::sqrt(b));
    }
};

struct ConstantsCheck {
    bool ok = true;
    std::string note;
};

inline ConstantsCheck check_induction_constants(const InductionConstants& k, double b) {
    ConstantsCheck out;
    auto fail = [&](const std::string& msg) {
        out.ok = false;
        out.note += (out.note.empty() ? "" : "; ") + msg;
    };
    if (!(k.alpha > 0.0 && k.alpha <= k.beta / 5.0)) fail("need 0 < alpha <= beta/5");
    if (!(k.beta / 5.0 <= k.c / 10.0)) fail("need beta/5 <= c/10");
    if (!(k.beta < k.c)) fail("need beta < c");
    if (!(k.varrho >= 100.0 * b)) fail("need varrho >= 100*b");
    if (!(k.c_tilde > 1.0)) fail("need c_tilde > 1");
    return out;
}

inline InductionConstants induction_constants_from_config(const Config& cfg) {
    InductionConstants k;
    k.c = cfg.get_double("induction", "c", k.c);
    k.c_tilde = cfg.get_double("induction", "c_tilde", k.c_tilde);
    k.c_hat = cfg.get_double("induction", "c_hat", k.c_hat);
    k.alpha = cfg.get_double("induction", "alpha", k.alpha);
    k.beta = cfg.get_double("induction", "beta", k.beta);
    k.h = cfg.get_double("induction", "h", k.h);
    k.rho = cfg.get_double("induction", "rho", k.rho);
    k.varrho = cfg.get_double("induction", "varrho", k.varrho);
    k.K1 = cfg.get_double("induction", "K1", k.K1);
    k.C_fold = cfg.get_double("induction", "C_fold", k.C_fold);
    k.k_max = static_cast<int>(cfg.get_int("induction", "k_max", k.k_max));
    k.slope_frac = cfg.get_double("induction", "slope_frac", k.slope_frac);
    return k;
}

// A critical point offered to the binding rule: location plus the tangent of
// the unstable manifold there.
struct BindingPoint {
    PhasePoint point;
    Vec2 tangent{1.0, 0.0};
};

struct ReturnRecord {
    int time = 0;            // nu
    PhasePoint point;        // z_nu
    double depth = 0.0;      // d_nu
    int binding_index = -1;  // which critical was bound
    int bound_period = 0;    // p
    int folding_period = 0;  // ell
    bool free_return = true;
    double slope_gap = 0.0;
};

class BindingError : public std::runtime_error {
  public:
    explicit BindingError(const std::string& what) : std::runtime_error(what) {}
};

// Bind critical point of a return: among the candidates whose unstable
// tangent slope matches the incoming vector slope to within depth/10, choose
// the nearest one.
inline std::pair<int, double> binding(const DeskModel& m, const PhasePoint& z_nu,
                                      const Vec2& w_prev,
                                      const std::vector<BindingPoint>& criticals,
                                      double slope_frac = 0.1) {
    if (criticals.empty()) throw BindingError("no critical points available");
    int best = -1;
    double best_d = std::numeric_limits<double>::max();
    const double sw = slope_of(w_prev);
    for (std::size_t i = 0; i < criticals.size(); ++i) {
        const double d = m.distance(z_nu, criticals[i].point);
        if (!std::isfinite(d)) continue;
        const double st = slope_of(criticals[i].tangent);
        const double gap = std::abs(sw - st);
        if (d > 0.0 && gap > slope_frac * d) continue;
        if (d < best_d) {
            best_d = d;
            best = static_cast<int>(i);
        }
    }
    if (best < 0) throw BindingError("no critical point satisfies the slope compatibility test");
    return {best, best_d};
}

// Folding period from the return depth.
inline int folding_period(double d, double b, double C_fold = 1.0) {
    if (!(d > 0.0 && d < 1.0)) return 0;
    const double v = C_fold * std::log(1.0 / (d * d)) / std::log(1.0 / b);
    return static_cast<int>(std::ceil(v));
}

// Maximal p with dist(f^j(z_nu), f^j(xi)) <= h e^{-beta j} for 0 <= j <= p.
inline int bound_period(const DeskModel& m, const PhasePoint& z_nu, const PhasePoint& xi,
                        const InductionConstants& K) {
    const double d = m.distance(z_nu, xi);
    if (!(d > 0.0)) return 0;
    const int cap = static_cast<int>(std::ceil(10.0 * std::log(1.0 / d) / K.beta));
    PhasePoint a = z_nu, b = xi;
    int p = 0;
    for (int j = 1; j <= cap; ++j) {
        const auto na = m.eval(a);
        const auto nb = m.eval(b);
        if (!na || !nb) break;
        a = *na;
        b = *nb;
        const double dist = m.distance(a, b);
        if (!(dist <= K.h * std::exp(-K.beta * j))) break;
        p = j;
    }
    return p;
}

// Full return scan of the orbit of z0 for n steps.
inline std::vector<ReturnRecord> detect_returns(const DeskModel& m, const PhasePoint& z0, int n,
                                                const std::vector<BindingPoint>& criticals,
                                                const InductionConstants& K) {
    std::vector<ReturnRecord> out;
    PhasePoint cur = z0;
    Vec2 w{1.0, 0.0};
    std::vector<std::pair<int, int>> open_bounds;  // (nu, nu + p)
    for (int j = 1; j <= n; ++j) {
        const Mat2 D = m.deriv(cur);
        const Vec2 wn = (D * w).normalized();
        const auto next = m.eval(cur);
        if (!next) throw OrbitEscape(j, "return scan orbit left the model domain");
        const Vec2 w_prev = w;
        w = wn;
        cur = *next;
        if (!m.in_R_delta(cur)) continue;

        ReturnRecord r;
        r.time = j;
        r.point = cur;
        const auto bind = binding(m, cur, w_prev, criticals, K.slope_frac);
        r.binding_index = bind.first;
        r.depth = bind.second;
        const double st = slope_of(criticals[static_cast<std::size_t>(bind.first)].tangent);
        r.slope_gap = std::abs(slope_of(w_prev) - st);
        r.bound_period = bound_period(m, cur, criticals[static_cast<std::size_t>(bind.first)].point, K);
        r.folding_period = folding_period(r.depth, m.params().b, K.C_fold);
        r.free_return = true;
        for (const auto& ob : open_bounds) {
            if (j >= ob.first && j <= ob.second) {
                r.free_return = false;
                break;
            }
        }
        open_bounds.emplace_back(j, j + r.bound_period);
        out.push_back(r);
    }
    return out;
}

// Bound periods are nested: a return inside an open bound period closes
// strictly before that period does.
inline bool bound_periods_nested(const std::vector<ReturnRecord>& rs) {
    for (std::size_t i = 0; i < rs.size(); ++i) {
        const int end_i = rs[i].time + rs[i].bound_period;
        for (std::size_t j = i + 1; j < rs.size(); ++j) {
            if (rs[j].time > end_i) continue;
            if (!(rs[j].time + rs[j].bound_period < end_i)) return false;
        }
    }
    return true;
}

struct SplitCoefficients {
    std::vector<double> s;       // arc parameter, relative to the base point
    std::vector<double> alpha;   // contracted component
    std::vector<double> beta;    // horizontal component
    double theta_hat = 0.0;      // beta at the zero of beta'
    double s_hat = 0.0;          // where beta' vanishes
    int order = 0;

    double beta_prime(std::size_t i) const {
        if (i == 0 || i + 1 >= s.size()) throw std::out_of_range("interior index needed");
        return (beta[i + 1] - beta[i - 1]) / (s[i + 1] - s[i - 1]);
    }
    double beta_second(std::size_t i) const {
        if (i == 0 || i + 1 >= s.size()) throw std::out_of_range("interior index needed");
        const double h1 = s[i] - s[i - 1];
        const double h2 = s[i + 1] - s[i];
        return 2.0 * (beta[i + 1] * h1 - beta[i] * (h1 + h2) + beta[i - 1] * h2) /
               (h1 * h2 * (h1 + h2));
    }
};

// Splitting t(s) = alpha(s) e(s) + beta(s) w0 along an almost flat arc, with
// e = (q, 1) the order-k contracted field at the image.
inline SplitCoefficients split(const DeskModel& m, const AlmostFlatCurve& arc, int k,
                               int n_grid = 129) {
    SplitCoefficients out;
    out.order = k;
    const double lo = arc.x_min(), hi = arc.x_max();
    const double base = 0.5 * (lo + hi);
    out.s.reserve(n_grid);
    for (int i = 0; i < n_grid; ++i) {
        const double x = lo + (hi - lo) * i / (n_grid - 1);
        const PhasePoint z = arc.at(x);
        const Vec2 tg = arc.tangent(x);
        const auto img = m.eval(z);
        if (!img) throw OrbitEscape(1, "split arc image left the model domain");
        const Vec2 t = m.deriv(z) * tg;
        const auto e = fields::most_contracted(m, *img, k);
        if (e.direction.y == 0.0)
            throw std::domain_error("contracted field parallel to w0 in split");
        const double q = e.direction.x / e.direction.y;
        const double alpha = t.y;
        const double beta = t.x - alpha * q;
        out.s.push_back(x - base);
        out.alpha.push_back(alpha);
        out.beta.push_back(beta);
    }
    // root of beta' by scanning the centered differences
    double best_abs = std::numeric_limits<double>::max();
    std::size_t best_i = 1;
    for (std::size_t i = 1; i + 1 < out.s.size(); ++i) {
        const double bp = out.beta_prime(i);
        if (std::abs(bp) < best_abs) {
            best_abs = std::abs(bp);
            best_i = i;
        }
    }
    out.s_hat = out.s[best_i];
    out.theta_hat = out.beta[best_i];
    return out;
}

struct ConditionReport {
    double BA_margin = std::numeric_limits<double>::max();  // min log d_nu + alpha nu
    double FA_value = 0.0;                                   // sum of free-return bound periods
    double FA_margin = 0.0;                                  // alpha k - FA
    double EG_margin = std::numeric_limits<double>::max();   // min lognorm_j - c j
    double fold_free_slope_C = 0.0;  // max slope(w_j)/sqrt(b) over fold-free iterates
    std::vector<ReturnRecord> returns;
    bool ok = true;
};

// (BA)/(FA)/(EG) margins along the orbit of z0 up to time k.
inline ConditionReport check_conditions(const DeskModel& m, const PhasePoint& z0, int k,
                                        const std::vector<BindingPoint>& criticals,
                                        const InductionConstants& K) {
    ConditionReport rep;
    rep.returns = detect_returns(m, z0, k, criticals, K);

    // exponential growth margins
    PhasePoint cur = z0;
    auto first = m.eval(cur);
    if (!first) throw OrbitEscape(1, "condition scan base escapes");
    PhasePoint head = *first;
    Vec2 w{1.0, 0.0};
    double lognorm = 0.0;
    const double sqb = std::sqrt(m.params().b);
    std::vector<std::pair<int, int>> folds;
    for (const auto& r : rep.returns)
        folds.emplace_back(r.time, r.time + r.folding_period);
    for (int j = 1; j <= k; ++j) {
        const Mat2 D = m.deriv(head);
        const Vec2 wn = D * w;
        const double nn = wn.norm();
        lognorm += std::log(nn);
        w = wn / nn;
        rep.EG_margin = std::min(rep.EG_margin, lognorm - K.c * j);
        bool in_fold = false;
        for (const auto& f : folds)
            if (j >= f.first && j <= f.second) in_fold = true;
        if (!in_fold) {
            const double sl = slope_of(w);
            if (std::isfinite(sl))
                rep.fold_free_slope_C = std::max(rep.fold_free_slope_C, sl / sqb);
        }
        const auto next = m.eval(head);
        if (!next) throw OrbitEscape(j, "condition scan orbit left the model domain");
        head = *next;
    }

    for (const auto& r : rep.returns) {
        if (r.depth <= K.depth_floor) {
            rep.BA_margin = -std::numeric_limits<double>::infinity();
            continue;
        }
        rep.BA_margin = std::min(rep.BA_margin, std::log(r.depth) + K.alpha * r.time);
        if (r.free_return) rep.FA_value += r.bound_period;
    }
    rep.FA_margin = K.alpha * k - rep.FA_value;
    rep.ok = rep.BA_margin >= 0.0 && rep.FA_margin >= 0.0 && rep.EG_margin >= 0.0;
    return rep;
}

struct BoundLemmaReport {
    double p_over_logd = 0.0;
    double bracket_lo = 0.0, bracket_hi = 0.0;
    bool item_a = false;
    double fitted_growth = 0.0;  // per-step growth factor across the bound period
    bool item_b = false;
    double distortion = 0.0;     // max ratio |w_j(s)| / |w_j(0)| over the period
    bool distortion_ok = false;
    double theta_hat = 0.0;
    bool theta_hat_positive = false;
    bool pass = false;
};

// Quantitative checks on one bound period: the p ~ log(1/d) law, the net
// growth across the period, the distortion between the bound orbit pair, and
// positivity of the recovered horizontal component at the binding point.
inline BoundLemmaReport verify_bound_lemma(const DeskModel& m, const ReturnRecord& rec,
                                           const PhasePoint& z0,
                                           const std::vector<BindingPoint>& criticals,
                                           const AlmostFlatCurve& binding_arc,
                                           const InductionConstants& K) {
    BoundLemmaReport rep;
    const double d = rec.depth;
    const int p = rec.bound_period;
    if (!(d > 0.0) || p <= 0) return rep;

    rep.p_over_logd = p / std::log(1.0 / d);
    rep.bracket_lo = 0.5 / (K.beta + K.c);
    rep.bracket_hi = 3.0 / K.beta;
    rep.item_a = rep.p_over_logd >= rep.bracket_lo && rep.p_over_logd <= rep.bracket_hi;

    // growth across the period: |w_{nu+p}| / |w_{nu-1}| along the z0 orbit
    const auto c_before = cocycle(m, z0, rec.time - 1 > 0 ? rec.time - 1 : 0);
    const auto c_after = cocycle(m, z0, rec.time + p);
    const double ratio_log = c_after.lognorm - c_before.lognorm;
    rep.fitted_growth = std::exp(ratio_log / (p + 1));
    rep.item_b = rep.fitted_growth > 1.0;

    // distortion between the return orbit and the binding orbit; the chains
    // are based at the images, one step past the fold crossing
    const PhasePoint xi = criticals[static_cast<std::size_t>(rec.binding_index)].point;
    double worst = 1.0;
    {
        Vec2 wa{1.0, 0.0}, wb{1.0, 0.0};
        double la = 0.0, lb = 0.0;
        const auto ia = m.eval(rec.point);
        const auto ib = m.eval(xi);
        if (!ia || !ib) return rep;
        PhasePoint a = *ia, b = *ib;
        for (int j = 1; j <= p; ++j) {
            const Vec2 na = m.deriv(a) * wa;
            const Vec2 nb = m.deriv(b) * wb;
            la += std::log(na.norm());
            lb += std::log(nb.norm());
            wa = na.normalized();
            wb = nb.normalized();
            worst = std::max(worst, std::exp(std::abs(la - lb)));
            const auto xa = m.eval(a);
            const auto xb = m.eval(b);
            if (!xa || !xb) break;
            a = *xa;
            b = *xb;
        }
    }
    rep.distortion = worst;
    rep.distortion_ok = worst <= 10.0;

    const auto sc = split(m, binding_arc, std::max(1, std::min(p, K.k_max)));
    rep.theta_hat = sc.theta_hat;
    rep.theta_hat_positive = sc.theta_hat > 0.0;

    rep.pass = rep.item_a && rep.item_b && rep.distortion_ok && rep.theta_hat_positive;
    return rep;
}

// ---------------------------------------------------------------------------
// parameter partitions along a theta-flat curve

struct ParamArc {
    double lo = 0.0;
    double hi = 0.0;
    double mid() const { return 0.5 * (lo + hi); }
    double length() const { return hi - lo; }
};

struct ParamPartition {
    std::function<double(double)> theta_of_a;  // curve the arcs live on
    std::vector<ParamArc> arcs;
    int time = 0;
};

// One induction step on the partition: refine arcs whose endpoint critical
// orbits separate past e^{-alpha k}, then drop arcs whose representative
// violates (BA) or (FA) at time k.
inline ParamPartition exclusion_step(
    const DeskFamily& fam, const ParamPartition& part, int k, const InductionConstants& K,
    const std::function<PhasePoint(const DeskModel&)>& critical_of,
    const std::function<std::vector<BindingPoint>(const DeskModel&)>& criticals_of) {
    ParamPartition out;
    out.theta_of_a = part.theta_of_a;
    out.time = k;

    const double sep_tol = std::exp(-K.alpha * k);

    auto orbit_end = [&](double a) -> std::optional<PhasePoint> {
        const DeskModel m = fam.at(a, part.theta_of_a(a));
        try {
            const auto z0 = critical_of(m);
            auto o = orbit(m, z0, k);
            return o.back();
        } catch (const std::exception&) {
            return std::nullopt;
        }
    };

    // refinement pass
    std::vector<ParamArc> refined;
    for (const auto& arc : part.arcs) {
        std::vector<ParamArc> queue{arc};
        int guard = 0;
        while (!queue.empty() && guard++ < 4096) {
            ParamArc w = queue.back();
            queue.pop_back();
            const auto e_lo = orbit_end(w.lo);
            const auto e_hi = orbit_end(w.hi);
            bool split_arc = false;
            if (e_lo && e_hi) {
                const DeskModel mref = fam.at(w.mid(), part.theta_of_a(w.mid()));
                const double sep = mref.distance(*e_lo, *e_hi);
                split_arc = std::isfinite(sep) ? (sep > sep_tol) : true;
            } else {
                split_arc = true;
            }
            if (split_arc && w.length() > 1e-10) {
                queue.push_back({w.lo, w.mid()});
                queue.push_back({w.mid(), w.hi});
            } else {
                refined.push_back(w);
            }
        }
    }
    std::sort(refined.begin(), refined.end(),
              [](const ParamArc& a, const ParamArc& b) { return a.lo < b.lo; });

    // exclusion pass at the representatives
    for (const auto& w : refined) {
        const DeskModel m = fam.at(w.mid(), part.theta_of_a(w.mid()));
        try {
            const auto z0 = critical_of(m);
            const auto crits = criticals_of(m);
            const auto rep = check_conditions(m, z0, k, crits, K);
            if (rep.BA_margin >= 0.0 && rep.FA_margin >= 0.0) out.arcs.push_back(w);
        } catch (const std::exception&) {
            // binding failure or escape: the arc is excluded
        }
    }
    return out;
}

inline double partition_length(const ParamPartition& p) {
    double s = 0.0;
    for (const auto& a : p.arcs) s += a.length();
    return s;
}

}  // namespace tlab::induction
