#include "doctest.h"

#include <cmath>
#include <random>
#include <sstream>

#include "slb/cost.hpp"
#include "slb/csv.hpp"

using namespace slb::cost;

TEST_CASE("unit electricity cost") {
    CHECK(unit_electricity_cost(1.0, 0.4, 0.09) == doctest::Approx(0.036));
    CHECK(unit_electricity_cost(0.0, 0.4, 0.09) == 0.0);
    CHECK(unit_electricity_cost(2.0, 0.2, 0.1) == doctest::Approx(0.04));
    CHECK_THROWS_AS(unit_electricity_cost(-1.0, 0.4, 0.09), std::invalid_argument);
}

TEST_CASE("cost index") {
    CHECK(cost_index(0.1, 5.0, 5.0) == doctest::Approx(0.01));
    CHECK(cost_index(0.0, 3.0, 1.0) == 0.0);
    CHECK_THROWS_AS(cost_index(0.1, 0.0, 0.0), std::invalid_argument);

    CostParams p;
    p.n_fs = 1000;
    p.n_slb = 1000;
    p.t_compute = 0.001;
    p.delta_acc_fs = 0.2;
    const auto fs = fs_costs(p);
    CHECK(fs.index == doctest::Approx(0.2 / (1000.0 * (0.104 + 3.6e-5))));
    CHECK(std::abs(fs.index - 1.922e-3) < 1e-6);
}

TEST_CASE("slb condition right-hand side") {
    CostParams p;
    p.alpha = 0.9;
    p.beta = 15.0;
    p.n_slb = 15;
    p.n_fs = 1;
    p.t_compute = 0.0173;
    CHECK(slb_condition_rhs(p) == doctest::Approx(0.25).epsilon(0.01));

    p.t_compute = 0.0;
    CHECK(slb_condition_rhs(p) == 0.0);
    p.c_m = 0.0;
    CHECK_THROWS_AS(slb_condition_rhs(p), std::invalid_argument);

    CostParams tiny;
    tiny.t_compute = 1.0;
    tiny.beta = 1e-9;
    CHECK(slb_condition_rhs(tiny) < 1e-8);
}

TEST_CASE("threshold solve") {
    const double extreme = solve_t_compute_threshold(0.9, 15.0, 0.25);
    CHECK(extreme == doctest::Approx(0.0173).epsilon(0.05));
    CHECK(extreme * 60.0 == doctest::Approx(1.04).epsilon(0.01));
    CHECK(solve_t_compute_threshold(0.5, 1.0, 0.5) == doctest::Approx(0.963).epsilon(1e-3));
    CHECK(solve_t_compute_threshold(0.5, 1.0, 0.0) == 0.0);
    CHECK(solve_t_compute_threshold(0.5, 1.0, 1e-12) < 1e-10);
    CHECK(std::isinf(solve_t_compute_threshold(0.5, 1.0, 2.0)));
    CHECK_THROWS_AS(solve_t_compute_threshold(0.5, 1.0, -0.1), std::invalid_argument);
}

TEST_CASE("threshold round trip and scale invariance") {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> ua(0.1, 1.0), ub(0.5, 20.0), ufrac(0.01, 0.99), uc(0.01, 1.0);
    for (int i = 0; i < 200; ++i) {
        CostParams p;
        p.alpha = ua(rng);
        p.beta = ub(rng);
        p.n_slb = 1;
        p.n_fs = 1;
        p.c_m = uc(rng);
        const double ratio = ufrac(rng) * (1.0 + 2.0 * p.alpha) * p.beta;
        p.t_compute = solve_t_compute_threshold(p.alpha, p.beta, ratio, p.c_m, p.p_kw, p.rate);
        CHECK(std::abs(slb_condition_rhs(p) - ratio) <= 1e-12 * std::max(1.0, ratio));

        // Scaling the label cost and the per-hour electricity cost together,
        // with t fixed, leaves the condition unchanged.
        CostParams q = p;
        q.c_m *= 3.0;
        q.rate *= 3.0;
        CHECK(slb_condition_rhs(q) == doctest::Approx(slb_condition_rhs(p)).epsilon(1e-12));
    }
}

TEST_CASE("cost breakdown is finite and non-negative") {
    CostParams p;
    p.n_slb = 300;
    p.n_fs = 100;
    p.beta = 3.0;
    p.t_compute = 0.01;
    p.delta_acc_slb = 0.05;
    p.delta_acc_fs = 0.1;
    const auto s = slb_costs(p);
    const auto f = fs_costs(p);
    CHECK(s.manual == 0.0);
    CHECK(s.electricity == doctest::Approx(300 * 2.0 * 0.01 * 0.4 * 0.09));
    CHECK(f.electricity >= 0.0);
    CHECK(std::isfinite(f.index));
    CHECK(slb_favorable(p) == (s.index >= f.index));
    p.beta = 2.0;
    CHECK_THROWS_AS(p.validate(), std::invalid_argument);
}

TEST_CASE("cost sweep") {
    const auto one = cost_sweep({0.5}, {1.0}, {0.5});
    REQUIRE(one.size() == 1);
    CHECK(one[0].t_compute_hours == solve_t_compute_threshold(0.5, 1.0, 0.5));

    const auto grid = cost_sweep({0.1, 0.5, 0.9}, {1, 5, 15}, {0.25, 0.5, 1});
    CHECK(grid.size() == 27);

    const double t1 = solve_t_compute_threshold(0.5, 4.0, 0.5);
    const double t2 = solve_t_compute_threshold(0.5, 8.0, 0.5);
    CHECK(t2 < t1);
    CHECK_THROWS_AS(cost_sweep({}, {1.0}, {0.5}), std::invalid_argument);

    std::ostringstream os;
    write_sweep_csv(os, grid);
    std::istringstream is(os.str());
    const auto table = slb::csv::read(is);
    CHECK(table.rows.size() == 27);
    CHECK(table.real(0, "t_compute_hours") == grid[0].t_compute_hours);
}
