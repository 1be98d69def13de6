#include "slb/numeric.hpp"

#include <cmath>
#include <limits>
#include <utility>

namespace slb::numeric {

namespace {

struct SimpsonPanel {
    double a, fa, m, fm, b, fb, whole;
};

double simpson(double a, double fa, double fm, double b, double fb) {
    return (b - a) / 6.0 * (fa + 4.0 * fm + fb);
}

double check_finite(double v, double x) {
    if (!std::isfinite(v)) {
        throw DomainError("integrand is not finite at x=" + std::to_string(x));
    }
    return v;
}

double refine(const RealFn& fn, const SimpsonPanel& p, double tol, int depth_left) {
    const double lm = 0.5 * (p.a + p.m);
    const double rm = 0.5 * (p.m + p.b);
    const double flm = check_finite(fn(lm), lm);
    const double frm = check_finite(fn(rm), rm);
    const double left = simpson(p.a, p.fa, flm, p.m, p.fm);
    const double right = simpson(p.m, p.fm, frm, p.b, p.fb);
    const double delta = left + right - p.whole;
    if (std::abs(delta) <= 15.0 * tol) {
        return left + right + delta / 15.0;
    }
    if (depth_left <= 0) {
        throw ConvergenceError("adaptive quadrature did not converge within the subdivision limit");
    }
    const SimpsonPanel lp{p.a, p.fa, lm, flm, p.m, p.fm, left};
    const SimpsonPanel rp{p.m, p.fm, rm, frm, p.b, p.fb, right};
    return refine(fn, lp, 0.5 * tol, depth_left - 1) + refine(fn, rp, 0.5 * tol, depth_left - 1);
}

}  // namespace

double adaptive_simpson(const RealFn& fn, double a, double b, double rel_tol, int max_depth) {
    if (a == b) {
        return 0.0;
    }
    double sign = 1.0;
    if (b < a) {
        std::swap(a, b);
        sign = -1.0;
    }
    const double m = 0.5 * (a + b);
    const double fa = check_finite(fn(a), a);
    const double fm = check_finite(fn(m), m);
    const double fb = check_finite(fn(b), b);
    const double whole = simpson(a, fa, fm, b, fb);

    // A coarse first pass fixes the scale the relative tolerance refers to.
    const double l1 = 0.5 * (a + m);
    const double r1 = 0.5 * (m + b);
    const double coarse = simpson(a, fa, check_finite(fn(l1), l1), m, fm) +
                          simpson(m, fm, check_finite(fn(r1), r1), b, fb);
    const double scale = std::max(std::abs(coarse), std::abs(whole));
    const double tol = std::max(rel_tol * scale, 1e-300);

    const SimpsonPanel p{a, fa, m, fm, b, fb, whole};
    return sign * refine(fn, p, tol, max_depth);
}

double solve_bracketed(const RealFn& fn, const RealFn& slope, double target, double lo, double hi,
                       const RootOptions& opts) {
    double flo = fn(lo) - target;
    double fhi = fn(hi) - target;
    if (flo == 0.0) return lo;
    if (fhi == 0.0) return hi;
    if ((flo > 0.0) == (fhi > 0.0)) {
        throw DomainError("root bracket does not straddle the target");
    }
    // Orient so that g(lo) < 0 < g(hi).
    if (flo > 0.0) {
        std::swap(lo, hi);
        std::swap(flo, fhi);
    }

    double x = 0.5 * (lo + hi);
    double gx = fn(x) - target;
    for (int it = 0; it < opts.max_iterations; ++it) {
        if (std::abs(gx) <= opts.abs_tol) {
            // Polish with one more Newton step when it stays inside the bracket;
            // quadratic convergence makes this nearly free and tightens x.
            const double d = slope(x);
            if (std::isfinite(d) && d != 0.0) {
                const double cand = x - gx / d;
                if ((cand - lo) * (cand - hi) < 0.0) {
                    const double gc = fn(cand) - target;
                    if (std::abs(gc) <= std::abs(gx)) return cand;
                }
            }
            return x;
        }
        if (gx < 0.0) {
            lo = x;
        } else {
            hi = x;
        }
        const double width = std::abs(hi - lo);
        if (width <= 4.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(x))) {
            return x;
        }
        const double d = slope(x);
        double next = 0.5 * (lo + hi);
        if (std::isfinite(d) && d != 0.0) {
            const double cand = x - gx / d;
            if ((cand - lo) * (cand - hi) < 0.0) {
                next = cand;
            }
        }
        x = next;
        gx = fn(x) - target;
    }
    if (std::abs(gx) <= opts.abs_tol) return x;
    throw ConvergenceError("root search exceeded its iteration limit");
}

}  // namespace slb::numeric
