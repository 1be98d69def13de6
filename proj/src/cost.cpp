#include "slb/cost.hpp"

#include <cmath>
#include <limits>
#include <ostream>
#include <stdexcept>

#include "slb/csv.hpp"

namespace slb::cost {

void CostParams::validate() const {
    if (n_slb <= 0 || n_fs <= 0) throw std::invalid_argument("sample counts must be positive");
    if (!(c_m >= 0.0) || !(t_compute >= 0.0)) throw std::invalid_argument("costs must be non-negative");
    if (!(p_kw > 0.0) || !(rate > 0.0)) throw std::invalid_argument("power and rate must be positive");
    if (!(alpha > 0.0 && alpha <= 1.0)) throw std::invalid_argument("alpha must lie in (0, 1]");
    if (!(beta > 0.0)) throw std::invalid_argument("beta must be positive");
    const double ratio = static_cast<double>(n_slb) / static_cast<double>(n_fs);
    if (std::abs(ratio - beta) > 1e-9 * std::max(1.0, beta)) {
        throw std::invalid_argument("beta must equal n_slb / n_fs");
    }
}

double unit_electricity_cost(double t_compute, double p_kw, double rate) {
    if (t_compute < 0.0 || p_kw < 0.0 || rate < 0.0) throw std::invalid_argument("inputs must be non-negative");
    return t_compute * p_kw * rate;
}

double cost_index(double delta_acc, double e_dollars, double m_dollars) {
    const double total = e_dollars + m_dollars;
    if (!(total > 0.0)) throw std::invalid_argument("cost index needs a positive total cost");
    return delta_acc / total;
}

CostBreakdown slb_costs(const CostParams& p) {
    p.validate();
    CostBreakdown c;
    c.electricity = static_cast<double>(p.n_slb) * (1.0 + 2.0 * p.alpha) *
                    unit_electricity_cost(p.t_compute, p.p_kw, p.rate);
    c.manual = 0.0;
    c.index = cost_index(p.delta_acc_slb, c.electricity, c.manual);
    return c;
}

CostBreakdown fs_costs(const CostParams& p) {
    p.validate();
    CostBreakdown c;
    c.electricity = static_cast<double>(p.n_fs) * unit_electricity_cost(p.t_compute, p.p_kw, p.rate);
    c.manual = static_cast<double>(p.n_fs) * p.c_m;
    c.index = cost_index(p.delta_acc_fs, c.electricity, c.manual);
    return c;
}

double slb_condition_rhs(const CostParams& p) {
    const double ce = unit_electricity_cost(p.t_compute, p.p_kw, p.rate);
    const double denom = ce + p.c_m;
    if (!(denom > 0.0)) throw std::invalid_argument("t_compute and c_m cannot both be zero");
    return (1.0 + 2.0 * p.alpha) * ce / denom * p.beta;
}

bool slb_favorable(const CostParams& p) {
    if (p.delta_acc_fs == 0.0) throw std::invalid_argument("delta_acc_fs must be non-zero");
    return p.delta_acc_slb / p.delta_acc_fs >= slb_condition_rhs(p);
}

double solve_t_compute_threshold(double alpha, double beta, double acc_ratio, double c_m, double p_kw, double rate) {
    if (!(alpha > 0.0) || !(beta > 0.0) || !(p_kw > 0.0) || !(rate > 0.0) || !(c_m >= 0.0)) {
        throw std::invalid_argument("threshold solve needs positive alpha, beta, power, rate and c_m >= 0");
    }
    if (!(acc_ratio >= 0.0)) throw std::invalid_argument("accuracy ratio must be non-negative");
    const double ceiling = (1.0 + 2.0 * alpha) * beta;
    if (acc_ratio >= ceiling) return std::numeric_limits<double>::infinity();
    return acc_ratio * c_m / (p_kw * rate * (ceiling - acc_ratio));
}

std::vector<SweepRow> cost_sweep(const std::vector<double>& alphas, const std::vector<double>& betas,
                                 const std::vector<double>& acc_ratios, double c_m, double p_kw, double rate) {
    if (alphas.empty() || betas.empty() || acc_ratios.empty()) throw std::invalid_argument("sweep grid is empty");
    std::vector<SweepRow> rows;
    rows.reserve(alphas.size() * betas.size() * acc_ratios.size());
    for (double a : alphas) {
        for (double b : betas) {
            for (double r : acc_ratios) {
                rows.push_back({a, b, r, solve_t_compute_threshold(a, b, r, c_m, p_kw, rate)});
            }
        }
    }
    // Thresholds fall with beta and rise with the accuracy ratio.
    const std::size_t nb = betas.size(), nr = acc_ratios.size();
    for (std::size_t ia = 0; ia < alphas.size(); ++ia) {
        for (std::size_t ib = 0; ib < nb; ++ib) {
            for (std::size_t ir = 0; ir < nr; ++ir) {
                const auto& cur = rows[(ia * nb + ib) * nr + ir];
                if (ib + 1 < nb && betas[ib + 1] > betas[ib]) {
                    const auto& next = rows[(ia * nb + ib + 1) * nr + ir];
                    if (next.t_compute_hours > cur.t_compute_hours) {
                        throw std::logic_error("threshold increased with beta");
                    }
                }
                if (ir + 1 < nr && acc_ratios[ir + 1] > acc_ratios[ir]) {
                    const auto& next = rows[(ia * nb + ib) * nr + ir + 1];
                    if (next.t_compute_hours < cur.t_compute_hours) {
                        throw std::logic_error("threshold decreased with accuracy ratio");
                    }
                }
            }
        }
    }
    return rows;
}

void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows) {
    os << "alpha,beta,acc_ratio,t_compute_hours\n";
    for (const auto& r : rows) {
        csv::write_row(os, {csv::format_real(r.alpha), csv::format_real(r.beta), csv::format_real(r.acc_ratio),
                            csv::format_real(r.t_compute_hours)});
    }
}

}  // namespace slb::cost
