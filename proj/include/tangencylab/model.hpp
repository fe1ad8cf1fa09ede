#pragma once

#include <cmath>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "tangencylab/config.hpp"
#include "tangencylab/core.hpp"

// The two-parameter surface family. Phase space is an atlas of four charts:
//
//   P        linearizing chart of the fixed point P, map (x,y) -> (s1*x, l1*y)
//   Fold     strip around the heteroclinic point q_hat on W^u(P); carries the
//            cubic local form in the critical square R_delta and a C^3 blend
//            out to the affine transition at the strip edges
//   Q        linearizing chart of the fixed point Q, map (u,v) -> (s2*u, b*v)
//   Corridor exit bands of the Q chart, re-injected affinely into the P chart
//
// The fold strip maps into the Q chart near q = (0, q_y); the corridor map is
// chosen to commute with the chart expansions so orbits hand off without
// positional seams along the recurrent wafer.

namespace tlab::model {

struct ModelParams {
    double sigma1 = 2.0;     // expanding eigenvalue at P
    double sigma2 = 1.3;     // expanding eigenvalue at Q
    double lambda1 = 4e-4;   // contracting eigenvalue at P
    double b = 4e-4;         // contracting eigenvalue at Q
    int N = 3;               // iterates guaranteed near Q after the fold
    double K = 1.0;          // bound constant for A2, B2, C2

    // Cubic fold coefficients. A1, B1, C1 are stored as multiples of
    // sigma1/delta^2; the absolute values come out of a1()/b1()/c1().
    double A1_factor = 0.25;
    double B1_factor = 5.1;
    double C1_factor = 4.9;
    double A2 = 3.6e-4;
    double B2 = 3.6e-4;
    double C2 = 3.6e-4;

    double sigma0 = 1.2;     // cone expansion constant outside R_delta
    double tau = 0.1;        // shadowing radius base for the contractive-field checks
    double q_y = 0.5;        // height of q inside the Q chart

    // geometry of the fold strip, in units of delta
    double r0_units = 82.0;        // strip half-width
    double core_units = 1.05;      // pure local form zone
    double taper_units = 1.6;      // end of the cubic taper
    double bump_lo_units = 2.6;    // start of the repayment plateau
    double theta_max_scaled = 0.05;  // upper end of the rescaled theta range

    double delta_tilde() const { return std::pow(sigma2, -N); }
    double delta() const { return delta_tilde() / (10.0 * sigma1); }
    double eta() const { return delta() * delta(); }
    double a1() const { return A1_factor * sigma1 / (delta() * delta()); }
    double b1() const { return B1_factor * sigma1 / (delta() * delta()); }
    double c1() const { return C1_factor * sigma1 / (delta() * delta()); }

    // rescaled theta in [-1, theta_max_scaled] <-> raw theta in local-form units
    double theta_raw(double theta_scaled) const { return theta_scaled * eta(); }
};

inline ModelParams default_model_params() { return {}; }

inline ModelParams model_params_from_config(const Config& cfg) {
    ModelParams p;
    p.sigma1 = cfg.get_double("model", "sigma1", p.sigma1);
    p.sigma2 = cfg.get_double("model", "sigma2", p.sigma2);
    p.lambda1 = cfg.get_double("model", "lambda1", p.lambda1);
    p.b = cfg.get_double("model", "b", p.b);
    p.N = static_cast<int>(cfg.get_int("model", "N", p.N));
    p.K = cfg.get_double("model", "K", p.K);
    p.A1_factor = cfg.get_double("model", "A1_factor", p.A1_factor);
    p.B1_factor = cfg.get_double("model", "B1_factor", p.B1_factor);
    p.C1_factor = cfg.get_double("model", "C1_factor", p.C1_factor);
    p.A2 = cfg.get_double("model", "A2", p.A2);
    p.B2 = cfg.get_double("model", "B2", p.B2);
    p.C2 = cfg.get_double("model", "C2", p.C2);
    p.sigma0 = cfg.get_double("model", "sigma0", p.sigma0);
    p.tau = cfg.get_double("model", "tau", p.tau);
    p.q_y = cfg.get_double("model", "q_y", p.q_y);
    return p;
}

struct CheckItem {
    std::string invariant;
    double lhs = 0.0;
    double rhs = 0.0;
    double margin = 0.0;
    bool pass = false;
};

struct ValidationReport {
    std::vector<CheckItem> checks;
    bool pass = true;

    void add(const std::string& name, double lhs, double rhs, bool ok, double margin) {
        checks.push_back({name, lhs, rhs, margin, ok});
        pass = pass && ok;
    }
    const CheckItem* find(const std::string& name) const {
        for (const auto& c : checks)
            if (c.invariant == name) return &c;
        return nullptr;
    }
};

// Checks the inequality chain on the fold coefficients together with the
// scale relations tying delta, delta_tilde, eta and b to each other.
inline ValidationReport validate_constants(const ModelParams& p) {
    ValidationReport r;
    const double s1d2 = p.sigma1 / (p.delta() * p.delta());

    auto ge = [&](const std::string& name, double lhs, double rhs) {
        r.add(name, lhs, rhs, lhs >= rhs, lhs - rhs);
    };
    auto le = [&](const std::string& name, double lhs, double rhs) {
        r.add(name, lhs, rhs, lhs <= rhs, rhs - lhs);
    };
    auto rel = [&](const std::string& name, double lhs, double rhs, double tol) {
        const bool ok = nearly_equal(lhs, rhs, tol);
        const double m = tol - std::abs(lhs - rhs) / std::max(std::abs(lhs), std::abs(rhs));
        r.add(name, lhs, rhs, ok, m);
    };

    ge("B1 >= C1", p.b1(), p.c1());
    ge("C1 >= 4*sigma1/delta^2", p.c1(), 4.0 * s1d2);
    ge("4*sigma1/delta^2 >= 4*A1", 4.0 * s1d2, 4.0 * p.a1());
    ge("A1 > 0", p.a1(), 0.0);
    le("C1 <= 5*sigma1/delta^2", p.c1(), 5.0 * s1d2);
    le("max(A2,B2,C2) <= K*b", std::max({p.A2, p.B2, p.C2}), p.K * p.b);
    rel("sigma2^N * delta_tilde == 1", std::pow(p.sigma2, p.N) * p.delta_tilde(), 1.0, 1e-12);
    rel("delta == delta_tilde/(10*sigma1)", p.delta(), p.delta_tilde() / (10.0 * p.sigma1), 1e-12);
    rel("eta == delta^2", p.eta(), p.delta() * p.delta(), 1e-12);
    le("b <= 1e-3", p.b, 1e-3);
    le("b < delta^2", p.b, p.delta() * p.delta());
    ge("sigma0 > 1", p.sigma0, 1.0 + 1e-12);
    ge("sigma1 > 1", p.sigma1, 1.0 + 1e-12);
    ge("sigma2 > 1", p.sigma2, 1.0 + 1e-12);
    return r;
}

// The local form on the fold rectangle, exactly as a formula. `z` is in fold
// coordinates centered on q_hat; the image is relative to q.
inline Vec2 local_form(const ModelParams& p, double a, double theta, const Vec2& z) {
    if (std::abs(z.x) > p.r0_units * p.delta() || std::abs(z.y) > 1.0)
        throw std::domain_error("local_form: point outside the fold rectangle");
    const double x = z.x, y = z.y;
    return {a + p.sigma1 * y + x * (-p.a1() * theta + p.b1() * x * x + p.c1() * y * y),
            -p.b * x + y * (-p.A2 * theta + p.B2 * x * x + p.C2 * y * y)};
}

inline Mat2 local_form_deriv(const ModelParams& p, double a, double theta, const Vec2& z) {
    (void)a;
    const double x = z.x, y = z.y;
    return {-p.a1() * theta + 3.0 * p.b1() * x * x + p.c1() * y * y,
            p.sigma1 + 2.0 * p.c1() * x * y,
            -p.b + 2.0 * p.B2 * x * y,
            -p.A2 * theta + p.B2 * x * x + 3.0 * p.C2 * y * y};
}

enum class Chart { P, Fold, Q, Corridor };

inline const char* chart_name(Chart c) {
    switch (c) {
        case Chart::P: return "P";
        case Chart::Fold: return "fold";
        case Chart::Q: return "Q";
        case Chart::Corridor: return "corridor";
    }
    return "?";
}

struct PhasePoint {
    Chart chart = Chart::P;
    double x = 0.0;
    double y = 0.0;
};

class ConstructionError : public std::runtime_error {
  public:
    explicit ConstructionError(const std::string& what) : std::runtime_error(what) {}
};

// Odd 1D profile replacing sigma1*x by the cubic B1*x^3 near the origin.
// G == B1 x^3 on [0, core], G == sigma1*x beyond flat_end; in between G' dips
// below sigma1 just enough to repay the cubic overshoot, with all windows C^3.
class FoldProfile {
  public:
    FoldProfile() = default;

    FoldProfile(double sigma1, double B1, double delta, double core_u, double taper_u,
                double bump_lo_u, double r0_u) {
        s1_ = sigma1;
        B1_ = B1;
        xc_ = core_u * delta;
        xm_ = taper_u * delta;
        b0_ = bump_lo_u * delta;
        b2_ = (r0_u - 1.0) * delta;
        b1_ = b2_ - delta;
        r0_ = r0_u * delta;
        w_ = xm_ - xc_;

        // excess area of the tapered cubic over the ambient line
        const double full = (B1_ * xm_ * xm_ * xm_ - s1_ * xm_);
        excess_ = full - taper_integral(1.0);
        const double beta_area = 0.5 * (b0_ - xm_) + (b1_ - b0_) + 0.5 * (b2_ - b1_);
        kappa_ = -excess_ / beta_area;
    }

    double value(double x) const {
        const double s = (x < 0.0) ? -1.0 : 1.0;
        x = std::abs(x);
        double g;
        if (x <= xc_) {
            g = B1_ * x * x * x;
        } else if (x <= xm_) {
            g = B1_ * x * x * x - taper_integral((x - xc_) / w_);
        } else if (x <= b0_) {
            const double wr = b0_ - xm_;
            g = g_xm() + s1_ * (x - xm_) + kappa_ * wr * s7_integral((x - xm_) / wr);
        } else if (x <= b1_) {
            g = g_b0() + (s1_ + kappa_) * (x - b0_);
        } else if (x <= b2_) {
            const double wf = b2_ - b1_;
            const double t = (x - b1_) / wf;
            g = g_b1() + s1_ * (x - b1_) + kappa_ * ((x - b1_) - wf * s7_integral(t));
        } else {
            g = s1_ * x;
        }
        return s * g;
    }

    double deriv(double x) const {
        x = std::abs(x);
        if (x <= xc_) return 3.0 * B1_ * x * x;
        if (x <= xm_) return s1_ + (3.0 * B1_ * x * x - s1_) * (1.0 - s7((x - xc_) / w_));
        if (x <= b0_) return s1_ + kappa_ * s7((x - xm_) / (b0_ - xm_));
        if (x <= b1_) return s1_ + kappa_;
        if (x <= b2_) return s1_ + kappa_ * (1.0 - s7((x - b1_) / (b2_ - b1_)));
        return s1_;
    }

    double kappa() const { return kappa_; }
    double min_slope() const { return s1_ + kappa_; }
    double flat_end() const { return b2_; }
    double r0() const { return r0_; }

  private:
    // integral_{xc}^{xc + t*w} (3 B1 x^2 - s1) s7((x-xc)/w) dx, closed form
    double taper_integral(double t) const {
        const double S = s7_integral(t);
        const double M1 = 35.0 / 6.0 * std::pow(t, 6) - 12.0 * std::pow(t, 7) +
                          8.75 * std::pow(t, 8) - 20.0 / 9.0 * std::pow(t, 9);
        const double M2 = 5.0 * std::pow(t, 7) - 10.5 * std::pow(t, 8) +
                          70.0 / 9.0 * std::pow(t, 9) - 2.0 * std::pow(t, 10);
        return w_ * ((3.0 * B1_ * xc_ * xc_ - s1_) * S + 6.0 * B1_ * xc_ * w_ * M1 +
                     3.0 * B1_ * w_ * w_ * M2);
    }

    double g_xm() const { return B1_ * xm_ * xm_ * xm_ - taper_integral(1.0); }
    double g_b0() const {
        return g_xm() + s1_ * (b0_ - xm_) + kappa_ * (b0_ - xm_) * 0.5;
    }
    double g_b1() const { return g_b0() + (s1_ + kappa_) * (b1_ - b0_); }

    double s1_ = 0, B1_ = 0, xc_ = 0, xm_ = 0, b0_ = 0, b1_ = 0, b2_ = 0, r0_ = 0, w_ = 0;
    double excess_ = 0, kappa_ = 0;
};

// Left-edge-tapered identity: psi(x) == x away from the left strip edge,
// psi(-r0) == 0, with |psi'| <= ~1 throughout (the repayment dip is spread
// over the whole taper).
class EdgedIdentity {
  public:
    EdgedIdentity() = default;
    EdgedIdentity(double r0, double x_keep) : r0_(r0), xk_(x_keep) {
        const double len = r0_ - xk_;
        // plateau bump with 0.1-wide s7 ramps; integral of the bump over [0,1]
        const double bump_area = 0.9;
        c_ = (r0_ / len) / bump_area;
    }

    double value(double x) const {
        if (x >= -xk_) return x;
        if (x <= -r0_) return 0.0;
        const double len = r0_ - xk_;
        const double t = (x + r0_) / len;
        return (x + r0_) - c_ * len * bump_integral(t);
    }

    double deriv(double x) const {
        if (x >= -xk_) return 1.0;
        if (x <= -r0_) return 1.0;
        const double t = (x + r0_) / (r0_ - xk_);
        return 1.0 - c_ * bump(t);
    }

  private:
    static double bump(double t) {
        if (t <= 0.0 || t >= 1.0) return 0.0;
        if (t < 0.1) return s7(t / 0.1);
        if (t > 0.9) return 1.0 - s7((t - 0.9) / 0.1);
        return 1.0;
    }
    static double bump_integral(double t) {
        if (t <= 0.0) return 0.0;
        if (t < 0.1) return 0.1 * s7_integral(t / 0.1);
        if (t <= 0.9) return 0.05 + (t - 0.1);
        if (t < 1.0) {
            const double tau = (t - 0.9) / 0.1;
            return 0.85 + 0.1 * (tau - s7_integral(tau));
        }
        return 0.9;
    }

    double r0_ = 1.0, xk_ = 0.0, c_ = 0.0;
};

struct DeskGeometry {
    double delta = 0.0;
    double r0 = 0.0;        // fold strip half-width
    double x_qhat = 0.0;    // q_hat position on the P axis
    double x_left = 0.0;    // strip left edge = P chart right edge
    double x_right = 0.0;   // strip right edge
    double lambda_q = 0.0;  // Q chart half-width
    double band_hi = 0.0;   // corridor band outer edge = sigma2 * lambda_q
    double p_exp = 0.0;     // corridor exponent log(sigma1)/log(sigma2)
};

class DeskModel {
  public:
    DeskModel(const ModelParams& params, double a, double theta_raw)
        : p_(params), a_(a), theta_(theta_raw) {
        const double d = p_.delta();
        geom_.delta = d;
        geom_.r0 = p_.r0_units * d;
        geom_.x_qhat = 3.0 * geom_.r0;
        geom_.x_left = 2.0 * geom_.r0;
        geom_.x_right = 4.0 * geom_.r0;
        geom_.lambda_q = p_.sigma1 * geom_.r0 + 0.01;
        geom_.band_hi = p_.sigma2 * geom_.lambda_q;
        geom_.p_exp = std::log(p_.sigma1) / std::log(p_.sigma2);

        profile_ = FoldProfile(p_.sigma1, p_.b1(), d, p_.core_units, p_.taper_units,
                               p_.bump_lo_units, p_.r0_units);
        psi_ = EdgedIdentity(geom_.r0, 2.0 * d);
        nu_g_ = FallingWindow{0.05, 0.62};
        omega_c_ = FallingWindow{p_.core_units * d, p_.taper_units * d};
        omega_2x_ = FallingWindow{p_.core_units * d, 30.0 * d};
        lambda_a_ = FallingWindow{0.5 * geom_.r0, geom_.r0};
    }

    const ModelParams& params() const { return p_; }
    const DeskGeometry& geometry() const { return geom_; }
    double a() const { return a_; }
    double theta_raw() const { return theta_; }

    PhasePoint qhat() const { return {Chart::Fold, 0.0, 0.0}; }
    PhasePoint fixed_p() const { return {Chart::P, 0.0, 0.0}; }
    PhasePoint fixed_q() const { return {Chart::Q, 0.0, 0.0}; }

    bool in_domain(const PhasePoint& z) const {
        switch (z.chart) {
            case Chart::P:
                return z.x >= -1.0 && z.x <= geom_.x_left && std::abs(z.y) <= 1.0;
            case Chart::Fold:
                return std::abs(z.x) <= geom_.r0 && std::abs(z.y) <= 1.0;
            case Chart::Q:
                return std::abs(z.x) <= geom_.lambda_q && std::abs(z.y) <= 1.0;
            case Chart::Corridor:
                return std::abs(z.x) > geom_.lambda_q && std::abs(z.x) <= geom_.band_hi &&
                       std::abs(z.y) <= 1.0;
        }
        return false;
    }

    bool in_R_delta(const PhasePoint& z) const {
        return z.chart == Chart::Fold && std::abs(z.x) <= geom_.delta &&
               std::abs(z.y) <= geom_.delta;
    }

    // One step of the dynamics. Returns nullopt if the image leaves the atlas.
    std::optional<PhasePoint> eval(const PhasePoint& z) const {
        if (!in_domain(z)) return std::nullopt;
        switch (z.chart) {
            case Chart::P: {
                const double nx = p_.sigma1 * z.x;
                const double ny = p_.lambda1 * z.y;
                if (nx < -1.0) return std::nullopt;
                if (nx <= geom_.x_left) return PhasePoint{Chart::P, nx, ny};
                return PhasePoint{Chart::Fold, nx - geom_.x_qhat, ny};
            }
            case Chart::Fold: {
                const Vec2 uv = strip_map(z.x, z.y);
                return classify_q_side(uv.x, uv.y);
            }
            case Chart::Q: {
                const double nu = p_.sigma2 * z.x;
                const double nv = p_.b * z.y;
                return classify_q_side(nu, nv);
            }
            case Chart::Corridor: {
                const double px = corridor_x(z.x);
                const double py = p_.b * z.y;
                if (px > geom_.x_left || px < -1.0) return std::nullopt;
                return PhasePoint{Chart::P, px, py};
            }
        }
        return std::nullopt;
    }

    Mat2 deriv(const PhasePoint& z) const {
        switch (z.chart) {
            case Chart::P:
                return Mat2::diag(p_.sigma1, p_.lambda1);
            case Chart::Fold:
                return strip_deriv(z.x, z.y);
            case Chart::Q:
                return Mat2::diag(p_.sigma2, p_.b);
            case Chart::Corridor: {
                const double du = geom_.p_exp * corridor_x(z.x) / std::abs(z.x) *
                                  ((z.x >= 0.0) ? 1.0 : -1.0);
                return Mat2::diag(du, p_.b);
            }
        }
        return Mat2::identity();
    }

    // Common global frame used for distances and plots. P and Fold share the
    // P-side sheet; Q and Corridor live on the Q-side sheet, offset so that
    // the ambient transition is seamless along the recurrent wafer.
    Vec2 to_global(const PhasePoint& z) const {
        switch (z.chart) {
            case Chart::P: return {z.x, z.y};
            case Chart::Fold: return {geom_.x_qhat + z.x, z.y};
            case Chart::Q: return {p_.sigma1 * geom_.x_qhat + z.x, z.y - p_.q_y};
            case Chart::Corridor: return {p_.sigma1 * geom_.x_qhat + z.x, z.y - p_.q_y};
        }
        return {z.x, z.y};
    }

    // Overlap conversions between charts whose rectangles genuinely share
    // points: P <-> Fold on the strip, Q <-> Corridor on the band edge side.
    std::optional<PhasePoint> convert(const PhasePoint& z, Chart target) const {
        if (z.chart == target) return z;
        if ((z.chart == Chart::P && target == Chart::Fold) ||
            (z.chart == Chart::Fold && target == Chart::P)) {
            const double off = geom_.x_qhat;
            PhasePoint out{target, (target == Chart::Fold) ? z.x - off : z.x + off, z.y};
            // P coordinates extend across the strip for conversion purposes
            if (target == Chart::Fold && std::abs(out.x) > geom_.r0) return std::nullopt;
            return out;
        }
        if ((z.chart == Chart::Q && target == Chart::Corridor) ||
            (z.chart == Chart::Corridor && target == Chart::Q)) {
            PhasePoint out{target, z.x, z.y};
            // shared coordinate frame; both charts are slabs of the same sheet
            return out;
        }
        return std::nullopt;
    }

    // Distance in the global frame when both points live on the same sheet.
    double distance(const PhasePoint& u, const PhasePoint& v) const {
        const bool u_pside = (u.chart == Chart::P || u.chart == Chart::Fold);
        const bool v_pside = (v.chart == Chart::P || v.chart == Chart::Fold);
        if (u_pside != v_pside) return std::numeric_limits<double>::infinity();
        return (to_global(u) - to_global(v)).norm();
    }

    // fold-strip map into the Q sheet (u, v) = f(x, y)
    Vec2 strip_map(double x, double y) const {
        const double nu = nu_g_.value(y);
        const double psi = psi_.value(x);
        const double f1 = p_.sigma1 * x +
                          nu * ((profile_.value(x) - p_.sigma1 * x) - p_.a1() * theta_ * psi +
                                p_.sigma1 * y + a_ * lambda_a_.value(-x) +
                                p_.c1() * psi * y * y * omega_c_.value(x));
        const double P2 = -p_.b * x - p_.b * y +
                          y * (-p_.A2 * theta_ + p_.B2 * x * x + p_.C2 * y * y);
        const double f2 = p_.q_y + p_.b * y + omega_2x_.value(x) * nu * P2;
        return {f1, f2};
    }

    Mat2 strip_deriv(double x, double y) const {
        const double nu = nu_g_.value(y);
        const double dnu = nu_g_.deriv(y);
        const double psi = psi_.value(x);
        const double dpsi = psi_.deriv(x);
        const double wc = omega_c_.value(x);
        const double dwc = omega_c_.deriv(x);
        const double la = lambda_a_.value(-x);
        const double dla = -lambda_a_.deriv(-x);

        const double bracket = (profile_.value(x) - p_.sigma1 * x) - p_.a1() * theta_ * psi +
                               p_.sigma1 * y + a_ * la + p_.c1() * psi * y * y * wc;
        const double dbracket_dx = (profile_.deriv(x) - p_.sigma1) - p_.a1() * theta_ * dpsi +
                                   a_ * dla + p_.c1() * y * y * (dpsi * wc + psi * dwc);
        const double dbracket_dy = p_.sigma1 + 2.0 * p_.c1() * psi * y * wc;

        const double df1_dx = p_.sigma1 + nu * dbracket_dx;
        const double df1_dy = dnu * bracket + nu * dbracket_dy;

        const double w2 = omega_2x_.value(x);
        const double dw2 = omega_2x_.deriv(x);
        const double P2 = -p_.b * x - p_.b * y +
                          y * (-p_.A2 * theta_ + p_.B2 * x * x + p_.C2 * y * y);
        const double dP2_dx = -p_.b + 2.0 * p_.B2 * x * y;
        const double dP2_dy = -p_.b - p_.A2 * theta_ + p_.B2 * x * x + 3.0 * p_.C2 * y * y;

        const double df2_dx = dw2 * nu * P2 + w2 * nu * dP2_dx;
        const double df2_dy = p_.b + w2 * dnu * P2 + w2 * nu * dP2_dy;

        return {df1_dx, df1_dy, df2_dx, df2_dy};
    }

  private:
    std::optional<PhasePoint> classify_q_side(double u, double v) const {
        if (std::abs(v) > 1.0) return std::nullopt;
        if (std::abs(u) <= geom_.lambda_q) return PhasePoint{Chart::Q, u, v};
        if (std::abs(u) <= geom_.band_hi) return PhasePoint{Chart::Corridor, u, v};
        return std::nullopt;
    }

    double corridor_x(double u) const {
        return geom_.x_left * std::pow(std::abs(u) / geom_.band_hi, geom_.p_exp);
    }

    ModelParams p_;
    double a_ = 0.0;
    double theta_ = 0.0;
    DeskGeometry geom_;
    FoldProfile profile_;
    EdgedIdentity psi_;
    FallingWindow nu_g_, omega_c_, omega_2x_, lambda_a_;
};

namespace detail {

// Numeric (H4)-style audit of the blend: cone preserved and vectors expanded
// at a grid of off-critical strip points plus the other charts. Used by
// build_desk_model to refuse a family whose windows are mistuned.
inline void audit_blend(const DeskModel& m) {
    const auto& g = m.geometry();
    const double s0 = m.params().sigma0;
    const double d = g.delta;

    auto worst_over_cone = [&](const Mat2& D, double& min_norm, double& max_slope) {
        min_norm = std::numeric_limits<double>::max();
        max_slope = 0.0;
        for (int i = -10; i <= 10; ++i) {
            const double s = 0.1 * static_cast<double>(i) / 10.0;
            const Vec2 v = Vec2{1.0, s}.normalized();
            const Vec2 w = D * v;
            min_norm = std::min(min_norm, w.norm());
            max_slope = std::max(max_slope, slope_of(w));
        }
    };

    const int nx = 161, ny = 81;
    for (int ix = 0; ix < nx; ++ix) {
        for (int iy = 0; iy < ny; ++iy) {
            const double x = -g.r0 + 2.0 * g.r0 * ix / (nx - 1);
            const double y = -1.0 + 2.0 * iy / (ny - 1);
            if (std::abs(x) <= d && std::abs(y) <= d) continue;
            double mn, ms;
            worst_over_cone(m.strip_deriv(x, y), mn, ms);
            if (mn <= s0 || ms >= 0.1) {
                std::ostringstream os;
                os << "fold blend fails the cone/expansion audit at (" << x << ", " << y
                   << "): min norm " << mn << ", max slope " << ms;
                throw ConstructionError(os.str());
            }
        }
    }

    // boundary of the critical square: the sharper constants must hold
    for (int i = 0; i <= 200; ++i) {
        const double t = -d + 2.0 * d * i / 200.0;
        const PhasePoint pts[4] = {{Chart::Fold, t, d},
                                   {Chart::Fold, t, -d},
                                   {Chart::Fold, d, t},
                                   {Chart::Fold, -d, t}};
        for (const auto& z : pts) {
            double mn, ms;
            worst_over_cone(m.deriv(z), mn, ms);
            if (mn <= 2.0 || ms >= 1.0 / 15.0) {
                std::ostringstream os;
                os << "boundary of R_delta fails the sharpened audit at (" << z.x << ", "
                   << z.y << "): min norm " << mn << ", max slope " << ms;
                throw ConstructionError(os.str());
            }
        }
    }
}

}  // namespace detail

// Builds the desk model for one parameter pair, after checking the constants
// chain and auditing the blend numerically.
inline DeskModel build_desk_model(const ModelParams& p, double a = 0.0, double theta_raw = 0.0,
                                  bool audit = true) {
    const auto report = validate_constants(p);
    if (!report.pass) {
        std::string bad;
        for (const auto& c : report.checks)
            if (!c.pass) bad += (bad.empty() ? "" : "; ") + c.invariant;
        throw ConstructionError("constants validation failed: " + bad);
    }
    // parameters outside [-eta, eta] are allowed (the map is still defined)
    // but the hyperbolicity estimates are only audited inside that range
    DeskModel m(p, a, theta_raw);
    if (audit) detail::audit_blend(m);
    return m;
}

// Family handle: audits once at the worst-case corner parameters, then hands
// out cheap per-parameter models.
class DeskFamily {
  public:
    explicit DeskFamily(const ModelParams& p) : p_(p) {
        build_desk_model(p_, 0.0, -p_.eta(), true);
        build_desk_model(p_, p_.eta(), 0.0, true);
    }

    const ModelParams& params() const { return p_; }

    DeskModel at(double a, double theta_raw) const { return DeskModel(p_, a, theta_raw); }
    DeskModel at_scaled(double a, double theta_scaled) const {
        return DeskModel(p_, a, p_.theta_raw(theta_scaled));
    }

  private:
    ModelParams p_;
};

// Signed measure of how far the fold image of the horizontal field is from a
// vertical tangency: the minimum over the critical arc of the first component
// of D f . (1,0), which vanishes exactly when the image turns vertical.
inline double tangency_gap(const DeskModel& m, int n_arc = 401) {
    const double d = m.geometry().delta;
    double worst = std::numeric_limits<double>::max();
    for (int i = 0; i < n_arc; ++i) {
        const double x = -d + 2.0 * d * i / (n_arc - 1);
        const Mat2 D = m.strip_deriv(x, 0.0);
        const Vec2 w = D * Vec2{1.0, 0.0};
        if (w.x < worst) worst = w.x;
    }
    return worst;
}

// theta at which the image of the horizontal direction along the critical arc
// first becomes tangent to the vertical at q + (a, 0), by bisection on the
// signed gap. Throws if the bracket [-eta, eta] does not straddle a sign
// change.
inline double find_theta_star(const ModelParams& p, double a) {
    const double eta = p.eta();
    DeskFamily fam_probe(p);  // audits constants once
    auto gap = [&](double theta) { return tangency_gap(fam_probe.at(a, theta)); };

    double lo = -eta, hi = eta;
    double glo = gap(lo), ghi = gap(hi);
    if (glo <= 0.0 || ghi >= 0.0) {
        if (!(glo > 0.0 && ghi < 0.0))
            throw std::domain_error("find_theta_star: no sign change in [-delta^2, delta^2]");
    }
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double gm = gap(mid);
        if (gm > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
        if (std::abs(gm) < 1e-18 && hi - lo < 1e-30) break;
    }
    return 0.5 * (lo + hi);
}

}  // namespace tlab::model
