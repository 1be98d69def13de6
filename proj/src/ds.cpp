#include "slb/ds.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "slb/csv.hpp"

namespace slb::ds {

using numeric::adaptive_simpson;
using numeric::RootOptions;
using numeric::solve_bracketed;

ScalarField::ScalarField(std::string name, std::function<double(double)> eval, double lo, double hi)
    : name_(std::move(name)), eval_(std::move(eval)), lo_(lo), hi_(hi) {
    if (!(lo < hi)) throw std::invalid_argument("field domain must satisfy lo < hi");
}

ScalarField ScalarField::identity(double lo, double hi) {
    return ScalarField("identity", [](double x) { return x; }, lo, hi);
}

ScalarField ScalarField::zero(double lo, double hi) {
    return ScalarField("zero", [](double) { return 0.0; }, lo, hi);
}

ScalarField ScalarField::constant(double c, double lo, double hi) {
    return ScalarField("constant:" + csv::format_real(c), [c](double) { return c; }, lo, hi);
}

ScalarField ScalarField::linear(double a, double b, double lo, double hi) {
    return ScalarField("linear:" + csv::format_real(a) + "," + csv::format_real(b),
                       [a, b](double x) { return a * x + b; }, lo, hi);
}

namespace {

double parse_number(const std::string& text, const std::string& spec) {
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(text, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != text.size()) {
        throw std::invalid_argument("bad number '" + text + "' in field spec '" + spec + "'");
    }
    return v;
}

}  // namespace

ScalarField ScalarField::parse(const std::string& spec, double lo, double hi) {
    if (spec == "identity") return identity(lo, hi);
    if (spec == "zero") return zero(lo, hi);
    const auto colon = spec.find(':');
    if (colon != std::string::npos) {
        const std::string kind = spec.substr(0, colon);
        const std::string args = spec.substr(colon + 1);
        if (kind == "constant") return constant(parse_number(args, spec), lo, hi);
        if (kind == "linear") {
            const auto comma = args.find(',');
            if (comma == std::string::npos) throw std::invalid_argument("linear field needs 'linear:a,b'");
            return linear(parse_number(args.substr(0, comma), spec), parse_number(args.substr(comma + 1), spec), lo,
                          hi);
        }
    }
    throw std::invalid_argument("unknown field spec '" + spec + "'");
}

double ScalarField::operator()(double x) const {
    if (!contains(x)) {
        std::ostringstream msg;
        msg << "field " << name_ << " evaluated at " << x << " outside (" << lo_ << ", " << hi_ << ")";
        throw DomainError(msg.str());
    }
    const double v = eval_(x);
    if (!std::isfinite(v)) throw DomainError("field " + name_ + " is not finite");
    return v;
}

CoupledSystem CoupledSystem::identity() {
    return CoupledSystem{ScalarField::identity(), ScalarField::identity(), ScalarField::identity()};
}

double CoupledSystem::domain_lo() const { return std::max({f.lo(), d.lo(), h.lo()}); }
double CoupledSystem::domain_hi() const { return std::min({f.hi(), d.hi(), h.hi()}); }

void CoupledSystem::validate() const {
    if (!(domain_lo() < domain_hi())) throw std::invalid_argument("fields have no common domain");
    if (!(x_ref > domain_lo() && x_ref < domain_hi())) {
        throw std::invalid_argument("x_ref must lie inside the working domain");
    }
    if (!(quad_tol > 0.0) || !(root_tol > 0.0) || !(t_max > 0.0)) {
        throw std::invalid_argument("tolerances and t_max must be positive");
    }
}

CoupledSystem system_from_json(const nlohmann::json& doc) {
    double lo = 1e-6;
    double hi = 1e6;
    if (doc.contains("domain")) {
        const auto& dom = doc.at("domain");
        if (!dom.is_array() || dom.size() != 2) throw std::invalid_argument("'domain' must be [lo, hi]");
        lo = dom[0].get<double>();
        hi = dom[1].get<double>();
    }
    auto field = [&](const char* key) {
        return ScalarField::parse(doc.value(key, std::string("identity")), lo, hi);
    };
    CoupledSystem sys{field("f"), field("d"), field("h")};
    sys.x_ref = doc.value("x_ref", sys.x_ref);
    sys.quad_tol = doc.value("quad_tol", sys.quad_tol);
    sys.root_tol = doc.value("root_tol", sys.root_tol);
    sys.t_max = doc.value("t_max", sys.t_max);
    sys.validate();
    return sys;
}

nlohmann::json system_to_json(const CoupledSystem& sys) {
    return nlohmann::json{{"f", sys.f.name()},
                          {"d", sys.d.name()},
                          {"h", sys.h.name()},
                          {"domain", {sys.domain_lo(), sys.domain_hi()}},
                          {"x_ref", sys.x_ref},
                          {"quad_tol", sys.quad_tol},
                          {"root_tol", sys.root_tol},
                          {"t_max", sys.t_max}};
}

const char* method_name(Method m) {
    switch (m) {
        case Method::SLB: return "slb";
        case Method::TRAD: return "trad";
        case Method::FS: return "fs";
    }
    return "?";
}

namespace {

void require_in_domain(const CoupledSystem& sys, double x, const char* what) {
    if (!(x > sys.domain_lo() && x < sys.domain_hi())) {
        std::ostringstream msg;
        msg << what << "=" << x << " is outside the working domain (" << sys.domain_lo() << ", " << sys.domain_hi()
            << ")";
        throw DomainError(msg.str());
    }
}

double rate(const CoupledSystem& sys, Potential which, double x) {
    const double r = which == Potential::A ? sys.f(x) : sys.f(x) + sys.d(x);
    if (!(r > 0.0)) {
        std::ostringstream msg;
        msg << (which == Potential::A ? "f" : "f+d") << " must be positive, got " << r << " at x=" << x;
        throw DomainError(msg.str());
    }
    return r;
}

void require_positive_errors(ErrorFactors e) {
    if (!(e.xi_t > 0.0) || !(e.xi_e > 0.0) || !std::isfinite(e.xi_t) || !std::isfinite(e.xi_e)) {
        throw std::invalid_argument("error factors must be positive and finite");
    }
}

// e^T * ( ∫_0^T e^{-τ} h(P^{-1}(τ + start)) dτ + y1 )
double coupled_effect(const CoupledSystem& sys, Potential inverse_of, double start, double span, double y1) {
    auto integrand = [&](double tau) {
        return std::exp(span - tau) * sys.h(invert_potential(sys, inverse_of, tau + start));
    };
    const double integral = adaptive_simpson(integrand, 0.0, span, sys.quad_tol);
    return integral + std::exp(span) * y1;
}

}  // namespace

double potential(const CoupledSystem& sys, Potential which, double x) {
    require_in_domain(sys, x, "x");
    return adaptive_simpson([&](double s) { return 1.0 / rate(sys, which, s); }, sys.x_ref, x, sys.quad_tol);
}

double potential_slope(const CoupledSystem& sys, Potential which, double x) {
    require_in_domain(sys, x, "x");
    return 1.0 / rate(sys, which, x);
}

double invert_potential(const CoupledSystem& sys, Potential which, double v) {
    if (!std::isfinite(v)) throw DomainError("potential value must be finite");
    if (v == 0.0) return sys.x_ref;

    const double lo = sys.domain_lo();
    const double hi = sys.domain_hi();
    const bool upward = v > 0.0;
    auto pot = [&](double x) { return potential(sys, which, x); };

    // Geometric expansion from x_ref; near a domain edge the step halves the
    // remaining gap instead so every probe stays inside.
    double inner = sys.x_ref;
    double gap = std::max(1.0, std::abs(sys.x_ref)) * 0.5;
    double outer = inner;
    bool bracketed = false;
    for (int k = 0; k < 200; ++k) {
        double cand = upward ? inner + gap : inner - gap;
        if (upward && cand >= hi) cand = inner + 0.5 * (hi - inner);
        if (!upward && cand <= lo) cand = inner - 0.5 * (inner - lo);
        if (cand == inner) break;
        const double pc = pot(cand);
        if (upward ? pc >= v : pc <= v) {
            outer = cand;
            bracketed = true;
            break;
        }
        inner = cand;
        gap *= 2.0;
    }
    if (!bracketed) {
        std::ostringstream msg;
        msg << "potential value " << v << " is outside the attainable range of the working domain";
        throw DomainError(msg.str());
    }
    return solve_bracketed(pot, [&](double x) { return potential_slope(sys, which, x); }, v, inner, outer,
                           RootOptions{sys.root_tol, 200});
}

std::vector<FlowSample> simulate_flow(const CoupledSystem& sys, double x1, double y1, double t_end, double dt) {
    require_in_domain(sys, x1, "x1");
    if (!(dt > 0.0)) throw std::invalid_argument("dt must be positive");
    if (!(t_end >= 0.0)) throw std::invalid_argument("t_end must be non-negative");

    std::vector<FlowSample> out;
    out.push_back({0.0, x1, y1});
    if (t_end == 0.0) return out;

    double x = x1;
    double y = y1;
    auto fx = [&](double xv, double t) {
        if (!(xv > sys.domain_lo() && xv < sys.domain_hi())) {
            std::ostringstream msg;
            msg << "state x=" << xv << " left the working domain near t=" << t;
            throw FlowExitError(msg.str(), t);
        }
        return sys.f(xv) + sys.d(xv);
    };
    auto fy = [&](double xv, double yv) { return yv + sys.h(xv); };

    const auto steps = static_cast<long long>(std::ceil(t_end / dt - 1e-9));
    for (long long k = 0; k < steps; ++k) {
        const double t0 = static_cast<double>(k) * dt;
        const double t1 = (k + 1 == steps) ? t_end : static_cast<double>(k + 1) * dt;
        const double step = t1 - t0;
        const double kx1 = fx(x, t0);
        const double ky1 = fy(x, y);
        const double xa = x + 0.5 * step * kx1;
        const double kx2 = fx(xa, t0 + 0.5 * step);
        const double ky2 = fy(xa, y + 0.5 * step * ky1);
        const double xb = x + 0.5 * step * kx2;
        const double kx3 = fx(xb, t0 + 0.5 * step);
        const double ky3 = fy(xb, y + 0.5 * step * ky2);
        const double xc = x + step * kx3;
        const double kx4 = fx(xc, t1);
        const double ky4 = fy(xc, y + step * ky3);
        x += step / 6.0 * (kx1 + 2.0 * kx2 + 2.0 * kx3 + kx4);
        y += step / 6.0 * (ky1 + 2.0 * ky2 + 2.0 * ky3 + ky4);
        if (!(x > sys.domain_lo() && x < sys.domain_hi())) {
            std::ostringstream msg;
            msg << "state x=" << x << " left the working domain at t=" << t1;
            throw FlowExitError(msg.str(), t1);
        }
        out.push_back({t1, x, y});
    }
    return out;
}

double effect_after(const CoupledSystem& sys, double x2, double y1, double t) {
    require_in_domain(sys, x2, "x2");
    const double a2 = potential(sys, Potential::A, x2);
    return coupled_effect(sys, Potential::A, a2 - t, t, y1);
}

double infer_interaction_time(const CoupledSystem& sys, double x2, double y1, double y2) {
    require_in_domain(sys, x2, "x2");
    if (!std::isfinite(y1) || !std::isfinite(y2)) throw std::invalid_argument("effects must be finite");
    if (y2 == y1) return 0.0;

    const double a2 = potential(sys, Potential::A, x2);
    auto effect = [&](double t) { return coupled_effect(sys, Potential::A, a2 - t, t, y1); };
    auto slope = [&](double t) {
        return std::exp(t) * (y1 + sys.h(invert_potential(sys, Potential::A, a2 - t)));
    };

    const bool below = y1 < y2;
    double t_prev = 0.0;
    double t = std::min(1e-3, sys.t_max);
    for (;;) {
        double g = 0.0;
        try {
            g = effect(t) - y2;
        } catch (const DomainError& e) {
            throw DomainError(std::string("no interaction time reaches the effect before leaving the domain: ") +
                              e.what());
        }
        if ((g >= 0.0) == below) break;
        if (t >= sys.t_max) {
            std::ostringstream msg;
            msg << "no interaction time in [0, " << sys.t_max << "] reaches y2=" << y2;
            throw DomainError(msg.str());
        }
        t_prev = t;
        t = std::min(2.0 * t, sys.t_max);
    }
    return solve_bracketed(effect, slope, y2, t_prev, t, RootOptions{sys.root_tol, 200});
}

double y2_learned(const CoupledSystem& sys, Method method, double x_in, double x2, double y1, ErrorFactors errors) {
    require_positive_errors(errors);
    require_in_domain(sys, x_in, method == Method::SLB ? "x_slb" : "x1");
    require_in_domain(sys, x2, "x2");
    if (method != Method::SLB && !errors.is_identity()) {
        throw std::invalid_argument("error factors only apply to the self-labeling mapping");
    }
    switch (method) {
        case Method::SLB: {
            const double span =
                (potential(sys, Potential::B, x2) - potential(sys, Potential::B, x_in)) / errors.xi_t;
            const double a2 = potential(sys, Potential::A, x2);
            return coupled_effect(sys, Potential::A, a2 - span, span, y1) / errors.xi_e;
        }
        case Method::TRAD: {
            const double a1 = potential(sys, Potential::A, x_in);
            return coupled_effect(sys, Potential::A, a1, potential(sys, Potential::A, x2) - a1, y1);
        }
        case Method::FS: {
            const double b1 = potential(sys, Potential::B, x_in);
            return coupled_effect(sys, Potential::B, b1, potential(sys, Potential::B, x2) - b1, y1);
        }
    }
    throw std::invalid_argument("unknown method");
}

double closed_form_example(double x_slb, double x2, double y1, ErrorFactors errors) {
    if (!(x_slb > 0.0) || !(x2 > 0.0)) throw std::invalid_argument("x_slb and x2 must be positive");
    require_positive_errors(errors);
    const double expo = 1.0 / (2.0 * errors.xi_t);
    const double ratio = x2 / x_slb;
    return (x2 * expo * std::log(ratio) + y1 * std::pow(ratio, expo)) / errors.xi_e;
}

double dy2slb_dxslb(const CoupledSystem& sys, double x_slb, double x2, double y1, double xi_t) {
    require_positive_errors({xi_t, 1.0});
    require_in_domain(sys, x_slb, "x_slb");
    require_in_domain(sys, x2, "x2");
    const double span = (potential(sys, Potential::B, x2) - potential(sys, Potential::B, x_slb)) / xi_t;
    const double a2 = potential(sys, Potential::A, x2);
    const double coupled = sys.h(invert_potential(sys, Potential::A, a2 - span));
    return -potential_slope(sys, Potential::B, x_slb) / xi_t * std::exp(span) * (y1 + coupled);
}

SamplingBounds itm_sampling_bounds(const CoupledSystem& sys, double x1, double x2, double y1, double epsilon) {
    if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) throw std::invalid_argument("epsilon must be >= 0");
    SamplingBounds b;
    b.epsilon = epsilon;
    b.y2_fs = y2_learned(sys, Method::FS, x1, x2, y1);
    b.y2_low = (1.0 - epsilon) * b.y2_fs;
    b.y2_high = (1.0 + epsilon) * b.y2_fs;

    auto invert = [&](double y2, const char* which) {
        try {
            return infer_interaction_time(sys, x2, y1, y2);
        } catch (const DomainError& e) {
            throw BoundInversionError(which, e.what());
        } catch (const ConvergenceError& e) {
            throw BoundInversionError(which, e.what());
        }
    };
    b.t_if_low = invert(b.y2_low, "low");
    b.t_if_high = invert(b.y2_high, "high");
    if (b.t_if_low > b.t_if_high) std::swap(b.t_if_low, b.t_if_high);

    b.t_if_nominal = potential(sys, Potential::B, x2) - potential(sys, Potential::B, x1);
    b.y2_slb_nominal = y2_learned(sys, Method::SLB, x1, x2, y1);
    b.within_bounds = b.t_if_low <= b.t_if_nominal && b.t_if_nominal <= b.t_if_high;
    return b;
}

std::vector<SweepRow> error_sweep(const CoupledSystem& sys, const std::vector<double>& x_grid, double x2, double y1,
                                  const std::vector<ErrorFactors>& xi_values) {
    if (x_grid.empty()) throw std::invalid_argument("sweep grid must not be empty");
    std::vector<SweepRow> rows;
    rows.reserve(x_grid.size() * xi_values.size());
    for (double x : x_grid) {
        for (const auto& xi : xi_values) {
            rows.push_back({x, xi.xi_t, xi.xi_e, y2_learned(sys, Method::SLB, x, x2, y1, xi)});
        }
    }
    return rows;
}

void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows) {
    os << "x_slb,xi_t,xi_e,y2\n";
    for (const auto& r : rows) {
        csv::write_row(os, {csv::format_real(r.x_slb), csv::format_real(r.xi_t), csv::format_real(r.xi_e),
                            csv::format_real(r.y2)});
    }
}

}  // namespace slb::ds
