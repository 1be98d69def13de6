#pragma once

#include <functional>
#include <stdexcept>
#include <string>

namespace slb::numeric {

/// Raised when an iterative method fails to meet its tolerance.
class ConvergenceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised when an argument or intermediate state leaves a function's domain.
class DomainError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

using RealFn = std::function<double(double)>;

/// Adaptive Simpson quadrature of `fn` over [a, b] (b < a gives the negated
/// integral). `rel_tol` is relative to the magnitude of the running estimate;
/// a tiny absolute floor keeps integrals of order zero from recursing forever.
/// Throws ConvergenceError if any panel needs more than `max_depth` halvings.
double adaptive_simpson(const RealFn& fn, double a, double b, double rel_tol, int max_depth = 60);

struct RootOptions {
    double abs_tol = 1e-10;
    int max_iterations = 200;
};

/// Root of `fn(x) = target` inside a bracket [lo, hi] whose endpoints straddle
/// the target. Newton steps use `slope` when they stay inside the bracket;
/// otherwise the bracket is bisected. Returns once |fn(x) - target| <= abs_tol
/// or the bracket has collapsed to machine precision.
double solve_bracketed(const RealFn& fn, const RealFn& slope, double target, double lo, double hi,
                       const RootOptions& opts);

}  // namespace slb::numeric
