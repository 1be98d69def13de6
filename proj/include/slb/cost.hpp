#pragma once

// Cost index: post-deployment accuracy change per dollar of electricity plus
// manual labeling, and the break-even compute time between self-labeling and
// full supervision.

#include <iosfwd>
#include <vector>

namespace slb::cost {

inline constexpr double kDefaultLabelCost = 0.104;  // USD per manual label
inline constexpr double kDefaultPowerKw = 0.4;
inline constexpr double kDefaultRate = 0.09;  // USD per kWh

struct CostParams {
    double delta_acc_slb = 0.0;
    double delta_acc_fs = 0.0;
    long n_slb = 1;
    long n_fs = 1;
    double c_m = kDefaultLabelCost;
    double t_compute = 0.0;  // hours of training compute per sample
    double p_kw = kDefaultPowerKw;
    double rate = kDefaultRate;
    double alpha = 0.5;  // inference time / training time
    double beta = 1.0;   // n_slb / n_fs

    /// Throws std::invalid_argument on out-of-range fields or when beta
    /// disagrees with n_slb / n_fs.
    void validate() const;
};

/// Dollars of electricity per sample: hours x kW x USD/kWh.
double unit_electricity_cost(double t_compute, double p_kw, double rate);

double cost_index(double delta_acc, double e_dollars, double m_dollars);

struct CostBreakdown {
    double electricity = 0.0;
    double manual = 0.0;
    double index = 0.0;
};

/// Self-labeling pays for retraining plus ITM and ESD inference, no labels.
CostBreakdown slb_costs(const CostParams& p);
/// Full supervision pays for retraining plus one manual label per sample.
CostBreakdown fs_costs(const CostParams& p);

/// Minimum delta_acc_slb / delta_acc_fs for self-labeling to have the better
/// cost index.
double slb_condition_rhs(const CostParams& p);
bool slb_favorable(const CostParams& p);

/// Largest t_compute (hours) at which the accuracy ratio still meets the
/// condition. Returns +inf when the ratio reaches (1 + 2 alpha) beta, since
/// the right-hand side never gets there.
double solve_t_compute_threshold(double alpha, double beta, double acc_ratio, double c_m = kDefaultLabelCost,
                                 double p_kw = kDefaultPowerKw, double rate = kDefaultRate);

struct SweepRow {
    double alpha;
    double beta;
    double acc_ratio;
    double t_compute_hours;
};

std::vector<SweepRow> cost_sweep(const std::vector<double>& alphas, const std::vector<double>& betas,
                                 const std::vector<double>& acc_ratios, double c_m = kDefaultLabelCost,
                                 double p_kw = kDefaultPowerKw, double rate = kDefaultRate);

void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows);

}  // namespace slb::cost
