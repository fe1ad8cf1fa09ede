#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "tangencylab/cocycle.hpp"
#include "tangencylab/core.hpp"
#include "tangencylab/model.hpp"

// Finite-order most-contracted direction fields e^(k)/E^(k) along orbits,
// extracted from the singular decomposition of the renormalized cocycle
// product, plus the quantitative checks on their coherence across orders and
// their regularity in phase and parameter space.

namespace tlab::fields {

using model::Chart;
using model::DeskFamily;
using model::DeskModel;
using model::PhasePoint;

class ConformalityError : public std::runtime_error {
  public:
    explicit ConformalityError(const std::string& what) : std::runtime_error(what) {}
};

struct DirectionSample {
    PhasePoint point;
    int order = 0;
    Vec2 direction{0.0, 1.0};  // unit, sign-normalized: y component >= 0
    double contraction = 0.0;  // |Df^k e^(k)|
    double gap = 0.0;          // smin/smax of Df^k
    bool valid = false;
};

// Renormalized k-step derivative product at z; log scale returned separately.
inline Mat2 cocycle_product(const DeskModel& m, const PhasePoint& z, int k, double& log_scale) {
    Mat2 M = Mat2::identity();
    log_scale = 0.0;
    PhasePoint cur = z;
    for (int j = 0; j < k; ++j) {
        M = m.deriv(cur) * M;
        const double f = M.frob();
        if (!(f > 0.0) || !std::isfinite(f))
            throw std::domain_error("cocycle product degenerated");
        M = M * (1.0 / f);
        log_scale += std::log(f);
        const auto next = m.eval(cur);
        if (!next) throw OrbitEscape(j + 1, "cocycle product orbit left the model domain");
        cur = *next;
    }
    return M;
}

// Direction minimizing |Df^k(z) v| over unit v. Requires a non-conformality
// gap below 0.9 for the direction to be well-defined.
inline DirectionSample most_contracted(const DeskModel& m, const PhasePoint& z, int k,
                                       double gap_threshold = 0.9) {
    double log_scale = 0.0;
    const Mat2 M = cocycle_product(m, z, k, log_scale);
    const Svd2 svd = svd2x2(M);
    DirectionSample out;
    out.point = z;
    out.order = k;
    out.gap = (svd.smax > 0.0) ? svd.smin / svd.smax : 1.0;
    Vec2 dir = svd.vmin;
    if (dir.y < 0.0 || (dir.y == 0.0 && dir.x < 0.0)) dir = dir * -1.0;
    out.direction = dir;
    out.contraction = svd.smin * std::exp(log_scale);
    out.valid = out.gap < gap_threshold;
    if (!out.valid)
        throw ConformalityError("most contracted direction ill-defined: gap " +
                                std::to_string(out.gap));
    return out;
}

// e^(k) written as (q, 1): the x component of the direction scaled to unit
// second component. Only meaningful for nearly vertical fields.
inline double field_q(const DeskModel& m, const PhasePoint& z, int k) {
    const auto s = most_contracted(m, z, k);
    if (s.direction.y == 0.0) throw std::domain_error("contracted direction is horizontal");
    return s.direction.x / s.direction.y;
}

struct CdItem {
    std::string name;
    double fitted = 0.0;
    double worst_margin = 0.0;
    int samples = 0;
    bool pass = false;
};

struct CdLemmaReport {
    bool precondition_ok = false;
    std::string note;
    std::vector<CdItem> items;
    bool pass = false;

    const CdItem* find(const std::string& name) const {
        for (const auto& it : items)
            if (it.name == name) return &it;
        return nullptr;
    }
};

// The six quantitative items for the contractive fields along one shadowed
// orbit segment: near-verticality, coherence across orders with geometric
// decay, bounded derivatives with respect to z / a / theta, and comparability
// of the horizontal cocycle between the shadowing pair.
inline CdLemmaReport verify_cd_lemma(const DeskFamily& fam, double a, double theta_raw,
                                     const PhasePoint& zhat, const PhasePoint& xi, int n,
                                     double lambda = 1.05, double C_pass = 100.0,
                                     std::uint64_t seed = 1234) {
    CdLemmaReport rep;
    const DeskModel m = fam.at(a, theta_raw);
    const model::ModelParams& p = fam.params();
    const double b = p.b;
    const double sqb = std::sqrt(b);
    const double tau = p.tau;

    // preconditions: zhat lambda-expanding to n; xi shadows zhat at rate tau^j
    try {
        const auto exp_chk = expanding_check(m, zhat, n, lambda);
        if (!exp_chk.expanding) {
            rep.note = "zhat is not lambda-expanding up to n (margin " +
                       std::to_string(exp_chk.margin) + ")";
            return rep;
        }
        auto oz = orbit(m, zhat, n);
        auto ox = orbit(m, xi, n);
        for (int j = 0; j + 1 < n; ++j) {
            const double dist = m.distance(oz[static_cast<std::size_t>(j)],
                                           ox[static_cast<std::size_t>(j)]);
            if (!(dist < std::pow(tau, j))) {
                rep.note = "xi does not shadow zhat at rate tau^j (j=" + std::to_string(j) + ")";
                return rep;
            }
        }
    } catch (const OrbitEscape& e) {
        rep.note = std::string("precondition orbit escaped: ") + e.what();
        return rep;
    }
    rep.precondition_ok = true;

    Rng rng(seed);
    const double nbhd = std::max(std::pow(tau, n), 1e-10);
    std::vector<PhasePoint> samples;
    samples.push_back(xi);
    for (int i = 0; i < 6; ++i) {
        PhasePoint z = xi;
        z.x += rng.uniform(-nbhd, nbhd);
        z.y += rng.uniform(-nbhd, nbhd);
        if (m.in_domain(z)) samples.push_back(z);
    }

    CdItem it1{"slope(E^k) >= c/sqrt(b)", std::numeric_limits<double>::max(), 0.0, 0, false};
    CdItem it2{"order coherence (Cb)^l / (C sqrt(b))^l", 0.0, 0.0, 0, false};
    CdItem it3{"|D_* E^k| <= C sqrt(b)", 0.0, 0.0, 0, false};
    CdItem it4{"|D_*(Df^l E^k)| <= (Cb)^l", 0.0, 0.0, 0, false};
    CdItem it5{"cocycle ratio in [1/10, 10]", 0.0, std::numeric_limits<double>::max(), 0, false};
    CdItem it6{"angle(Df^n w0 pair) <= (C tau)^(n/2)", 0.0, 0.0, 0, false};

    try {
        for (const auto& z : samples) {
            // item 1: near verticality at the top order
            const auto ek = most_contracted(m, z, n);
            const double sl = slope_of(ek.direction);
            if (std::isfinite(sl)) it1.fitted = std::min(it1.fitted, sl * sqb);
            ++it1.samples;

            // item 2: coherence between orders l <= k <= n
            const int ks[3] = {n, std::max(1, n / 2), std::max(1, n / 4)};
            for (int kk : ks) {
                const auto ekk = most_contracted(m, z, kk);
                for (int l = 1; l <= kk; l = (l < 4) ? l + 1 : l * 2) {
                    const auto el = most_contracted(m, z, l);
                    const double ang = line_angle(el.direction, ekk.direction);
                    if (ang > 0.0)
                        it2.fitted = std::max(it2.fitted, std::pow(ang, 1.0 / l) / b);
                    double ls = 0.0;
                    const Mat2 Ml = cocycle_product(m, z, l, ls);
                    const double contr = (Ml * ekk.direction).norm() * std::exp(ls);
                    if (contr > 0.0)
                        it2.fitted = std::max(it2.fitted, std::pow(contr, 1.0 / l) / sqb);
                    ++it2.samples;
                }
            }

            // items 3 and 4: finite differences in z, a and theta
            const double hz = 1e-6;
            const double hp = 1e-6 * p.eta();
            const auto qdir = [&](const DeskModel& mm, const PhasePoint& zz, int k) {
                return field_q(mm, zz, k);
            };
            const double q0 = qdir(m, z, n);
            PhasePoint zxp = z, zxm = z, zyp = z, zym = z;
            zxp.x += hz;
            zxm.x -= hz;
            zyp.y += hz;
            zym.y -= hz;
            const double dq_dx = (qdir(m, zxp, n) - qdir(m, zxm, n)) / (2 * hz);
            const double dq_dy = (qdir(m, zyp, n) - qdir(m, zym, n)) / (2 * hz);
            const DeskModel map_ = fam.at(a + hp, theta_raw);
            const DeskModel mam = fam.at(a - hp, theta_raw);
            const DeskModel mtp = fam.at(a, theta_raw + hp);
            const DeskModel mtm = fam.at(a, theta_raw - hp);
            const double dq_da = (qdir(map_, z, n) - qdir(mam, z, n)) / (2 * hp);
            const double dq_dt = (qdir(mtp, z, n) - qdir(mtm, z, n)) / (2 * hp);
            const double dmax =
                std::max({std::abs(dq_dx), std::abs(dq_dy), std::abs(dq_da), std::abs(dq_dt)});
            it3.fitted = std::max(it3.fitted, dmax / sqb);
            // second differences on a wider stencil to keep the noise down
            const double h2 = 1e-4;
            PhasePoint z2p = z, z2m = z;
            z2p.x += h2;
            z2m.x -= h2;
            const double d2q_dx = (qdir(m, z2p, n) - 2 * q0 + qdir(m, z2m, n)) / (h2 * h2);
            it3.fitted = std::max(it3.fitted, std::abs(d2q_dx) / sqb);
            ++it3.samples;

            const int l4 = std::max(1, n / 2);
            const auto contracted_image = [&](const DeskModel& mm, const PhasePoint& zz) {
                double ls = 0.0;
                const Mat2 Ml = cocycle_product(mm, zz, l4, ls);
                const auto e = most_contracted(mm, zz, n);
                return (Ml * e.direction) * std::exp(ls);
            };
            const Vec2 ci_xp = contracted_image(m, zxp);
            const Vec2 ci_xm = contracted_image(m, zxm);
            const Vec2 ci_ap = contracted_image(map_, z);
            const Vec2 ci_am = contracted_image(mam, z);
            const double d4 = std::max(((ci_xp - ci_xm) / (2 * hz)).norm(),
                                       ((ci_ap - ci_am) / (2 * hp)).norm());
            if (d4 > 0.0) it4.fitted = std::max(it4.fitted, std::pow(d4, 1.0 / l4) / b);
            ++it4.samples;

            // items 5 and 6: horizontal cocycle comparability along the pair
            const auto cz = cocycle(m, z, n);
            const auto cxi = cocycle(m, xi, n);
            const double ratio = std::exp(cxi.lognorm - cz.lognorm);
            it5.fitted = std::max(it5.fitted, ratio);
            it5.worst_margin = std::min(it5.worst_margin, ratio);
            ++it5.samples;
            const double ang6 = line_angle(cxi.vector, cz.vector);
            if (ang6 > 0.0)
                it6.fitted = std::max(it6.fitted, std::pow(ang6, 2.0 / n) / tau);
            ++it6.samples;
        }
    } catch (const std::exception& e) {
        rep.note = std::string("sampling failed: ") + e.what();
        rep.items = {it1, it2, it3, it4, it5, it6};
        return rep;
    }

    it1.pass = it1.fitted > 0.005;  // some positive c: the field is steep
    it1.worst_margin = it1.fitted - 0.005;
    it2.pass = it2.fitted < C_pass;
    it2.worst_margin = C_pass - it2.fitted;
    it3.pass = it3.fitted < C_pass;
    it3.worst_margin = C_pass - it3.fitted;
    it4.pass = it4.fitted < C_pass;
    it4.worst_margin = C_pass - it4.fitted;
    it5.pass = it5.worst_margin >= 0.1 && it5.fitted <= 10.0;
    it6.pass = it6.fitted < C_pass;
    it6.worst_margin = C_pass - it6.fitted;

    rep.items = {it1, it2, it3, it4, it5, it6};
    rep.pass = true;
    for (const auto& it : rep.items) rep.pass = rep.pass && it.pass;
    return rep;
}

}  // namespace tlab::fields
