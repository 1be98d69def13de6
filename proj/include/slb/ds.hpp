#pragma once

// Coupled one-dimensional cause/effect system
//
//   dx/dt = f(x) + d(x)        (d is the drift perturbation)
//   dy/dt = y + h(x)
//
// together with the mappings y2(x) that self-labeling, traditional
// semi-supervised learning and full supervision learn, their error-factor
// variants, and the analysis of the interaction-time model as a sampler.

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "slb/numeric.hpp"

namespace slb::ds {

using numeric::ConvergenceError;
using numeric::DomainError;

/// A real function together with the open interval on which it is valid.
class ScalarField {
public:
    ScalarField(std::string name, std::function<double(double)> eval, double lo, double hi);

    static ScalarField identity(double lo = 1e-6, double hi = 1e6);
    static ScalarField zero(double lo = 1e-6, double hi = 1e6);
    static ScalarField constant(double c, double lo = 1e-6, double hi = 1e6);
    static ScalarField linear(double a, double b, double lo = 1e-6, double hi = 1e6);
    /// "identity", "zero", "constant:c" or "linear:a,b".
    static ScalarField parse(const std::string& spec, double lo = 1e-6, double hi = 1e6);

    /// Throws DomainError outside (lo, hi) or when the value is not finite.
    double operator()(double x) const;

    bool contains(double x) const { return x > lo_ && x < hi_; }
    double lo() const { return lo_; }
    double hi() const { return hi_; }
    const std::string& name() const { return name_; }

private:
    std::string name_;
    std::function<double(double)> eval_;
    double lo_;
    double hi_;
};

enum class Potential { A, B };

struct CoupledSystem {
    ScalarField f;
    ScalarField d;
    ScalarField h;
    double x_ref = 1.0;
    double quad_tol = 1e-9;
    double root_tol = 1e-10;
    double t_max = 50.0;

    /// f = d = h = identity on (1e-6, 1e6), x_ref = 1.
    static CoupledSystem identity();

    double domain_lo() const;
    double domain_hi() const;
    /// Throws std::invalid_argument if x_ref is outside the working domain or
    /// a tolerance is not positive.
    void validate() const;
};

/// Parses {"f": "...", "d": "...", "h": "...", "x_ref", "quad_tol",
/// "root_tol", "t_max", "domain": [lo, hi]}; missing keys keep identity
/// defaults.
CoupledSystem system_from_json(const nlohmann::json& doc);
nlohmann::json system_to_json(const CoupledSystem& sys);

struct ErrorFactors {
    double xi_t = 1.0;
    double xi_e = 1.0;

    bool is_identity() const { return xi_t == 1.0 && xi_e == 1.0; }
};

enum class Method { SLB, TRAD, FS };

const char* method_name(Method m);

/// A(x) = ∫ 1/f or B(x) = ∫ 1/(f+d), both taken from x_ref.
double potential(const CoupledSystem& sys, Potential which, double x);

/// Derivative of the selected potential, 1/f(x) or 1/(f(x)+d(x)).
double potential_slope(const CoupledSystem& sys, Potential which, double x);

double invert_potential(const CoupledSystem& sys, Potential which, double v);

struct FlowSample {
    double t;
    double x;
    double y;
};

/// Raised when the x state leaves the working domain during integration.
class FlowExitError : public DomainError {
public:
    FlowExitError(const std::string& what, double exit_time) : DomainError(what), exit_time_(exit_time) {}
    double exit_time() const { return exit_time_; }

private:
    double exit_time_;
};

/// Classical RK4 on the coupled equations. Samples are taken at multiples of
/// dt; the last step is shortened so the trajectory ends exactly at t_end.
std::vector<FlowSample> simulate_flow(const CoupledSystem& sys, double x1, double y1, double t_end, double dt);

/// Effect reached after interaction time t when the cause flows under the
/// unperturbed dynamics and ends at x2 (the forward map that
/// infer_interaction_time inverts).
double effect_after(const CoupledSystem& sys, double x2, double y1, double t);

/// Interaction time t >= 0 at which effect_after(x2, y1, t) == y2.
double infer_interaction_time(const CoupledSystem& sys, double x2, double y1, double y2);

/// Learned effect for a given cause. For SLB `x_in` is the self-labeled cause
/// x_slb; for TRAD and FS it is the true cause x1 and `errors` must be (1, 1).
double y2_learned(const CoupledSystem& sys, Method method, double x_in, double x2, double y1,
                  ErrorFactors errors = {});

/// Closed form of the SLB mapping when f = d = h = identity.
double closed_form_example(double x_slb, double x2, double y1, ErrorFactors errors = {});

/// d y2_slb / d x_slb under an interaction-time error factor xi_t.
double dy2slb_dxslb(const CoupledSystem& sys, double x_slb, double x2, double y1, double xi_t = 1.0);

struct SamplingBounds {
    double epsilon = 0.0;
    double y2_fs = 0.0;
    double y2_low = 0.0;
    double y2_high = 0.0;
    double t_if_low = 0.0;
    double t_if_high = 0.0;
    double t_if_nominal = 0.0;
    double y2_slb_nominal = 0.0;
    bool within_bounds = false;
};

/// Raised when one of the two margin bounds cannot be mapped back to an
/// interaction time. `bound()` is "low" or "high".
class BoundInversionError : public DomainError {
public:
    BoundInversionError(const std::string& bound, const std::string& detail)
        : DomainError("cannot invert the " + bound + " bound: " + detail), bound_(bound) {}
    const std::string& bound() const { return bound_; }

private:
    std::string bound_;
};

SamplingBounds itm_sampling_bounds(const CoupledSystem& sys, double x1, double x2, double y1, double epsilon);

struct SweepRow {
    double x_slb;
    double xi_t;
    double xi_e;
    double y2;
};

/// SLB mapping over a grid of causes and error factors, x major, errors minor.
std::vector<SweepRow> error_sweep(const CoupledSystem& sys, const std::vector<double>& x_grid, double x2, double y1,
                                  const std::vector<ErrorFactors>& xi_values);

void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows);

}  // namespace slb::ds
