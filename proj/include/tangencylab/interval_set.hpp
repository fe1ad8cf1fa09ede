#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

// Finite unions of disjoint closed intervals of parameters. This is the
// carrier type for the surviving parameter sets produced by the exclusion
// runs; operations keep the pieces sorted and disjoint at all times.

namespace tlab {

struct Interval {
    double lo = 0.0;
    double hi = 0.0;

    double length() const { return hi - lo; }
    bool contains(double x) const { return x >= lo && x <= hi; }
};

class IntervalSet {
  public:
    IntervalSet() = default;

    explicit IntervalSet(std::vector<Interval> parts) {
        for (const auto& p : parts) add(p);
    }

    static IntervalSet single(double lo, double hi) {
        IntervalSet s;
        s.add({lo, hi});
        return s;
    }

    // Insert an interval, merging with touching or overlapping pieces.
    void add(Interval iv) {
        if (!(iv.lo < iv.hi)) {
            if (iv.lo == iv.hi) return;  // degenerate, measure zero
            throw std::invalid_argument("interval with lo > hi");
        }
        std::vector<Interval> out;
        out.reserve(parts_.size() + 1);
        bool placed = false;
        for (const auto& p : parts_) {
            if (p.hi < iv.lo) {
                out.push_back(p);
            } else if (p.lo > iv.hi) {
                if (!placed) {
                    out.push_back(iv);
                    placed = true;
                }
                out.push_back(p);
            } else {
                iv.lo = std::min(iv.lo, p.lo);
                iv.hi = std::max(iv.hi, p.hi);
            }
        }
        if (!placed) out.push_back(iv);
        parts_ = std::move(out);
    }

    // Remove an open interval from the set.
    void subtract(const Interval& iv) {
        if (!(iv.lo < iv.hi)) return;
        std::vector<Interval> out;
        out.reserve(parts_.size() + 1);
        for (const auto& p : parts_) {
            if (p.hi <= iv.lo || p.lo >= iv.hi) {
                out.push_back(p);
                continue;
            }
            if (p.lo < iv.lo) out.push_back({p.lo, iv.lo});
            if (p.hi > iv.hi) out.push_back({iv.hi, p.hi});
        }
        parts_ = std::move(out);
    }

    bool contains(double x) const {
        for (const auto& p : parts_)
            if (p.contains(x)) return true;
        return false;
    }

    double total_length() const {
        double s = 0.0;
        for (const auto& p : parts_) s += p.length();
        return s;
    }

    std::size_t count() const { return parts_.size(); }
    bool empty() const { return parts_.empty(); }
    const std::vector<Interval>& parts() const { return parts_; }

    bool operator==(const IntervalSet& o) const {
        if (parts_.size() != o.parts_.size()) return false;
        for (std::size_t i = 0; i < parts_.size(); ++i) {
            if (parts_[i].lo != o.parts_[i].lo || parts_[i].hi != o.parts_[i].hi) return false;
        }
        return true;
    }
    bool operator!=(const IntervalSet& o) const { return !(*this == o); }

    // True when every point of this set lies in `o` (piecewise cover check).
    bool subset_of(const IntervalSet& o) const {
        for (const auto& p : parts_) {
            double covered_to = p.lo;
            for (const auto& q : o.parts_) {
                if (q.hi < covered_to) continue;
                if (q.lo > covered_to) break;
                covered_to = std::max(covered_to, q.hi);
                if (covered_to >= p.hi) break;
            }
            if (covered_to < p.hi) return false;
        }
        return true;
    }

    // Internal consistency: sorted, disjoint, lo < hi, length additivity.
    bool valid(double tol = 1e-14) const {
        double sum = 0.0;
        for (std::size_t i = 0; i < parts_.size(); ++i) {
            if (!(parts_[i].lo < parts_[i].hi)) return false;
            if (i > 0 && !(parts_[i - 1].hi < parts_[i].lo)) return false;
            sum += parts_[i].length();
        }
        return std::abs(sum - total_length()) <= tol * std::max(1.0, sum);
    }

  private:
    std::vector<Interval> parts_;
};

}  // namespace tlab
