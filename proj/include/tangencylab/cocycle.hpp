#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "tangencylab/core.hpp"
#include "tangencylab/model.hpp"

// Derivative cocycle along orbits: w_n(z0) = Df^n(f(z0)) . w0, evaluated with
// per-step renormalization so products over long orbits never overflow. The
// accumulated log-norm is the only magnitude state kept.

namespace tlab {

class OrbitEscape : public std::runtime_error {
  public:
    OrbitEscape(int time, const std::string& what)
        : std::runtime_error(what + " (escape at step " + std::to_string(time) + ")"),
          time_(time) {}
    int time() const { return time_; }

  private:
    int time_;
};

struct CocycleState {
    model::PhasePoint base;   // starting point z0
    int step = 0;             // iterate count n
    Vec2 vector{1.0, 0.0};    // renormalized w_n
    double lognorm = 0.0;     // accumulated log |w_n|
    model::PhasePoint head;   // f^n(z0)
};

// Orbit of z for n steps; throws OrbitEscape if it leaves the atlas.
inline std::vector<model::PhasePoint> orbit(const model::DeskModel& m, model::PhasePoint z,
                                            int n) {
    std::vector<model::PhasePoint> out;
    out.reserve(static_cast<std::size_t>(n) + 1);
    out.push_back(z);
    for (int j = 0; j < n; ++j) {
        const auto next = m.eval(out.back());
        if (!next) throw OrbitEscape(j + 1, "orbit left the model domain");
        out.push_back(*next);
    }
    return out;
}

// w_n with w_0 = (1,0) based at z: the product runs along f(z), ..., f^n(z).
inline CocycleState cocycle(const model::DeskModel& m, const model::PhasePoint& z, int n,
                            Vec2 w0 = Vec2{1.0, 0.0}) {
    CocycleState s;
    s.base = z;
    s.vector = w0.normalized();
    s.lognorm = 0.0;

    auto cur = m.eval(z);
    if (!cur) throw OrbitEscape(1, "cocycle base point escapes immediately");
    s.head = *cur;
    for (int j = 0; j < n; ++j) {
        const Mat2 D = m.deriv(s.head);
        const Vec2 w = D * s.vector;
        const double nn = w.norm();
        if (!(nn > 0.0) || !std::isfinite(nn))
            throw std::domain_error("cocycle vector degenerated");
        s.lognorm += std::log(nn);
        s.vector = w / nn;
        const auto next = m.eval(s.head);
        if (!next) throw OrbitEscape(j + 1, "cocycle orbit left the model domain");
        s.head = *next;
        s.step = j + 1;
    }
    return s;
}

struct ExpandingCheck {
    bool expanding = false;
    double margin = 0.0;  // min_j (lognorm_j - j log lambda)
};

// Is z lambda-expanding up to time n for the horizontal vector?
inline ExpandingCheck expanding_check(const model::DeskModel& m, const model::PhasePoint& z,
                                      int n, double lambda) {
    ExpandingCheck out;
    out.margin = std::numeric_limits<double>::max();
    const double ll = std::log(lambda);

    Vec2 w{1.0, 0.0};
    double lognorm = 0.0;
    model::PhasePoint cur = z;
    for (int j = 1; j <= n; ++j) {
        const Mat2 D = m.deriv(cur);
        const Vec2 wn = D * w;
        const double nn = wn.norm();
        lognorm += std::log(nn);
        w = wn / nn;
        out.margin = std::min(out.margin, lognorm - j * ll);
        const auto next = m.eval(cur);
        if (!next) throw OrbitEscape(j, "expanding_check orbit left the model domain");
        cur = *next;
    }
    out.expanding = out.margin >= 0.0;
    return out;
}

// Finite-horizon Lyapunov estimate for the horizontal direction.
inline double lyapunov_estimate(const model::DeskModel& m, const model::PhasePoint& z, int n) {
    const auto s = cocycle(m, z, n);
    return s.lognorm / static_cast<double>(n);
}

}  // namespace tlab
