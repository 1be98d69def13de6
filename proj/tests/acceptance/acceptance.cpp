// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero when any criterion fails. `--only 1,5,9` restricts the run.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "slb/ballsim.hpp"
#include "slb/causal.hpp"
#include "slb/cost.hpp"
#include "slb/ds.hpp"
#include "slb/experiment.hpp"

namespace fs = std::filesystem;
using namespace slb;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

double rel_err(double got, double want) { return std::abs(got - want) / std::max(std::abs(want), 1e-300); }

int jobs() { return std::max(1u, std::thread::hardware_concurrency()); }

std::string fmt(double v, int prec = 4) {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(prec);
    os << v;
    return os.str();
}

std::string sci(double v) {
    std::ostringstream os;
    os.precision(2);
    os << std::scientific << v;
    return os.str();
}

// ---- 1: worked fixture

Outcome worked_fixture() {
    const auto t0 = std::chrono::steady_clock::now();
    const auto sys = ds::CoupledSystem::identity();
    const auto b = ds::itm_sampling_bounds(sys, 80.0, 100.0, 10.0, 0.5);
    const double slb = ds::y2_learned(sys, ds::Method::SLB, 80.0, 100.0, 10.0);
    const std::vector<std::pair<double, double>> checks{
        {b.y2_fs, 21.7376},     {b.y2_high, 32.6064},        {b.y2_low, 10.8688}, {b.t_if_high, 0.2035},
        {b.t_if_low, 0.0079},   {b.t_if_nominal, 0.11157},   {slb, 22.3373},      {b.y2_slb_nominal, 22.3373}};
    double worst = 0.0;
    for (const auto& [got, want] : checks) worst = std::max(worst, std::abs(got - want));
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return {worst <= 1e-3 && b.within_bounds && secs < 1.0,
            "max abs error " + fmt(worst, 6) + ", within_bounds=" + (b.within_bounds ? "true" : "false") + ", " +
                fmt(secs, 3) + " s"};
}

// ---- 2: closed form vs quadrature

Outcome closed_form_grid() {
    const auto t0 = std::chrono::steady_clock::now();
    const auto sys = ds::CoupledSystem::identity();
    double worst = 0.0;
    int n = 0;
    for (double x : {20.0, 40.0, 60.0, 80.0, 95.0}) {
        for (double xt : {0.7, 1.0, 1.3}) {
            for (double xe : {0.7, 1.0, 1.3}) {
                const double a = ds::closed_form_example(x, 100.0, 10.0, {xt, xe});
                const double q = ds::y2_learned(sys, ds::Method::SLB, x, 100.0, 10.0, {xt, xe});
                worst = std::max(worst, rel_err(q, a));
                ++n;
            }
        }
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return {n == 45 && worst <= 1e-6 && secs < 5.0,
            std::to_string(n) + " points, max rel error " + sci(worst) + ", " + fmt(secs, 3) + " s"};
}

// ---- 3: RK4 endpoint vs the full-supervision mapping

Outcome flow_consistency() {
    const auto t0 = std::chrono::steady_clock::now();
    const auto sys = ds::CoupledSystem::identity();
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> ux(5.0, 200.0), uratio(1.05, 3.0), uy(-20.0, 50.0);
    double worst = 0.0;
    for (int i = 0; i < 20; ++i) {
        const double x1 = ux(rng), x2 = x1 * uratio(rng), y1 = uy(rng);
        // Time for the cause to flow from x1 to x2.
        const double t_end =
            ds::potential(sys, ds::Potential::B, x2) - ds::potential(sys, ds::Potential::B, x1);
        const auto traj = ds::simulate_flow(sys, x1, y1, t_end, t_end / 2000.0);
        const double fs = ds::y2_learned(sys, ds::Method::FS, x1, x2, y1);
        worst = std::max(worst, rel_err(traj.back().y, fs));
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return {worst <= 1e-4 && secs < 5.0, "20 instances, max rel error " + sci(worst) + ", " + fmt(secs, 3) + " s"};
}

// ---- 4: gradient of the self-labeled mapping

Outcome gradient_check() {
    const auto sys = ds::CoupledSystem::identity();
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> ux(10.0, 98.0), uxi(0.6, 1.6);
    double worst = 0.0;
    for (int i = 0; i < 20; ++i) {
        const double x = ux(rng), xi = uxi(rng), h = 1e-5 * x;
        const double fd = (ds::closed_form_example(x + h, 100.0, 10.0, {xi, 1.0}) -
                           ds::closed_form_example(x - h, 100.0, 10.0, {xi, 1.0})) /
                          (2.0 * h);
        worst = std::max(worst, rel_err(ds::dy2slb_dxslb(sys, x, 100.0, 10.0, xi), fd));
    }
    return {worst <= 1e-4, "20 points, max rel error " + sci(worst)};
}

// ---- 5: interaction-time calculus

causal::CausalNode node(const std::string& id, causal::StateKind k = causal::StateKind::transient, bool obs = true) {
    return {id, obs, k};
}

Outcome time_calculus() {
    using causal::TimeLaw;
    std::vector<std::string> failures;
    auto expect = [&](bool ok, const std::string& what) {
        if (!ok) failures.push_back(what);
    };
    // Golden compositions.
    expect(causal::chain_time(TimeLaw::make(1.5, 1.0, 2.0), TimeLaw::make(2.5, 2.0, 3.0)) == TimeLaw::make(4.0, 3.0, 5.0),
           "chain sum");
    const std::vector<TimeLaw> branches{TimeLaw::make(1.5, 1.0, 2.0), TimeLaw::make(2.5, 0.5, 2.5)};
    expect(causal::fork_time(branches) == TimeLaw::make(2.5, 1.0, 2.5), "fork max");
    const causal::CausalGraph chain({node("A"), node("B"), node("C", causal::StateKind::steady)},
                                    {{"A", "B", TimeLaw::make(2, 1, 3)}, {"B", "C", TimeLaw::make(3, 2, 5)}});
    const auto cp = causal::build_labeling_plan(chain, "A", "C");
    expect(cp.itm_bindings.size() == 1 && cp.itm_bindings[0].expression.evaluate() == TimeLaw::make(5, 3, 8),
           "chain plan");

    // Confounder: B is required exactly when the two path times differ.
    auto confounder = [](double ac, double ab, double bc) {
        return causal::CausalGraph({node("A"), node("B"), node("C", causal::StateKind::steady)},
                                   {{"A", "B", TimeLaw::exact(ab)}, {"A", "C", TimeLaw::exact(ac)},
                                    {"B", "C", TimeLaw::exact(bc)}});
    };
    for (auto [ac, ab, bc] : std::vector<std::array<double, 3>>{{2, 1, 2}, {3, 1, 2}, {5, 1, 1}, {2, 1, 1}}) {
        const auto p = causal::build_labeling_plan(confounder(ac, ab, bc), "A", "C");
        const bool need_b = std::find(p.required_observers.begin(), p.required_observers.end(), "B") !=
                            p.required_observers.end();
        expect(p.path_notes.size() == 2, "confounder lists both paths");
        expect(need_b == (ac != ab + bc), "confounder observer rule");
    }

    // Random DAGs against a brute-force path-sum oracle (edges go low -> high).
    std::mt19937_64 rng(55);
    int compared = 0;
    for (int trial = 0; trial < 50; ++trial) {
        const int n = 3 + static_cast<int>(rng() % 6);
        std::vector<std::vector<double>> w(n, std::vector<double>(n, -1.0));
        std::vector<causal::CausalNode> nodes;
        for (int i = 0; i < n; ++i) nodes.push_back(node("v" + std::to_string(i)));
        std::vector<causal::CausalEdge> edges;
        std::uniform_real_distribution<double> um(0.1, 5.0);
        for (int i = 0; i < n; ++i) {
            for (int j = i + 1; j < n; ++j) {
                if (rng() % 2) {
                    w[i][j] = um(rng);
                    edges.push_back({nodes[i].id, nodes[j].id, TimeLaw::exact(w[i][j])});
                }
            }
        }
        std::shuffle(edges.begin(), edges.end(), rng);
        const causal::CausalGraph g(nodes, edges);
        std::vector<double> oracle;
        for (int mask = 0; mask < (1 << (n - 2)); ++mask) {
            std::vector<int> seq{0};
            for (int k = 0; k < n - 2; ++k) {
                if (mask & (1 << k)) seq.push_back(k + 1);
            }
            seq.push_back(n - 1);
            double total = 0.0;
            bool ok = true;
            for (std::size_t s = 0; s + 1 < seq.size(); ++s) {
                if (w[seq[s]][seq[s + 1]] < 0.0) {
                    ok = false;
                    break;
                }
                total += w[seq[s]][seq[s + 1]];
            }
            if (ok) oracle.push_back(total);
        }
        std::vector<double> got;
        try {
            for (const auto& note : causal::build_labeling_plan(g, nodes[0].id, nodes[n - 1].id).path_notes) {
                got.push_back(note.composed.mean);
            }
        } catch (const causal::PlanError&) {
            expect(oracle.empty(), "unexpected plan error on a connected DAG");
            continue;
        }
        std::sort(oracle.begin(), oracle.end());
        std::sort(got.begin(), got.end());
        bool same = got.size() == oracle.size();
        for (std::size_t i = 0; same && i < got.size(); ++i) same = rel_err(got[i], oracle[i]) <= 1e-12;
        expect(same, "random DAG " + std::to_string(trial));
        ++compared;
    }
    std::string detail = "golden chain/fork, 4 confounders, " + std::to_string(compared) + " connected random DAGs";
    if (!failures.empty()) detail += "; failed: " + failures.front();
    return {failures.empty(), detail};
}

// ---- 6 and 7: desk-scale experiment

struct Desk {
    ballsim::DatasetSplit data;
    causal::SelfLabelingPlan plan;
    experiment::RunSpec spec;
    experiment::RunResult base;  // all methods, noise-free
    double seconds = 0.0;
};

double final_mean(const std::vector<experiment::ResultRow>& rows, const std::string& method, int increment) {
    double sum = 0.0;
    int n = 0;
    for (const auto& r : rows) {
        if (r.method == method && r.increment == increment) {
            sum += r.accuracy;
            ++n;
        }
    }
    return n ? sum / n : std::nan("");
}

const Desk& desk() {
    static const Desk d = [] {
        const auto t0 = std::chrono::steady_clock::now();
        Desk out;
        ballsim::SimConfig cfg;
        cfg.wind_magnitude = 0.5;
        ballsim::GenerateOptions g;
        g.jobs = jobs();
        out.data = ballsim::generate_dataset(cfg, {320, 320, 1200, 120, 10}, g);
        out.plan = experiment::load_plan(out.spec);
        experiment::RunOptions o;
        o.jobs = jobs();
        out.base = experiment::nested_kfold(out.spec, out.data, out.plan, o);
        out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        return out;
    }();
    return d;
}

Outcome desk_experiment() {
    const auto& d = desk();
    const int last = d.spec.increments;
    const double start = final_mean(d.base.rows, "slb", 0);
    const double slb = final_mean(d.base.rows, "slb", last);
    const double fs = final_mean(d.base.rows, "fs", last);
    const double pseudo = final_mean(d.base.rows, "pseudo", last);
    const bool a = slb - start >= 0.03;
    const bool b = slb >= pseudo;
    return {a && b && d.seconds <= 900.0,
            "baseline " + fmt(start) + " -> slb " + fmt(slb) + " (+" + fmt(100.0 * (slb - start), 2) + " pts), pseudo " +
                fmt(pseudo) + ", fs " + fmt(fs) + "; " + fmt(d.seconds, 1) + " s"};
}

Outcome noise_robustness() {
    const auto& d = desk();
    const int last = d.spec.increments;
    const double clean = final_mean(d.base.rows, "slb", last);
    auto slb_at = [&](double esd) {
        auto spec = d.spec;
        spec.methods = {"slb"};
        spec.noise.esd_fraction = esd;
        experiment::RunOptions o;
        o.jobs = jobs();
        return final_mean(experiment::nested_kfold(spec, d.data, d.plan, o).rows, "slb", last);
    };
    const double low = slb_at(0.1), high = slb_at(0.4);
    const double drop_low = clean - low, drop_high = clean - high;
    return {drop_low <= 0.05 && drop_high > drop_low,
            "slb final " + fmt(clean) + " clean, " + fmt(low) + " at 0.1 (-" + fmt(100.0 * drop_low, 2) + " pts), " +
                fmt(high) + " at 0.4 (-" + fmt(100.0 * drop_high, 2) + " pts)"};
}

// ---- 8: oracle interaction times recover the release states

Outcome oracle_recovery() {
    const ballsim::SimConfig cfg;
    const double threshold = 20.0;
    const auto plan = experiment::load_plan({});
    ballsim::EpisodeOptions opts;
    opts.magnitude_threshold = threshold;
    int episodes = 0, bad = 0;
    double worst = 0.0;
    const double tol = cfg.penalty_velocity * cfg.timestep;
    for (std::uint64_t seed = 0; episodes < 100 && seed < 1000; ++seed) {
        const auto e = ballsim::simulate_episode(cfg, ballsim::derive_seed(8, 0, seed), opts);
        if (!e.settled) continue;
        ++episodes;
        pipeline::ItmMap oracle{
            {"ball1_initial", [&](std::span<const double>) { return e.true_interaction_times[0]; }},
            {"ball2_initial", [&](std::span<const double>) { return e.true_interaction_times[1]; }}};
        const auto events = pipeline::detect_effect_events(experiment::effect_stream(e), experiment::rule_esd(threshold),
                                                           experiment::itm_features());
        const auto s1 = experiment::cause_stream(e, 0), s2 = experiment::cause_stream(e, 1);
        pipeline::NoiseSource noise({}, ballsim::kNumClasses);
        const auto ex = pipeline::self_label(events.at(0), plan, oracle, {{"ball1_initial", &s1}, {"ball2_initial", &s2}},
                                             noise, [](const std::map<std::string, pipeline::WindowPick>& p) {
                                                 std::vector<double> v;
                                                 for (const char* id : {"ball1_initial", "ball2_initial"}) {
                                                     const auto& f = p.at(id).sample.features;
                                                     v.insert(v.end(), f.begin(), f.begin() + 3);
                                                 }
                                                 return v;
                                             });
        bool ok = true;
        for (int b = 0; b < 2; ++b) {
            for (int k = 0; k < 3; ++k) {
                const double err = std::abs(ex.input[3 * b + k] - e.initial_states[b].position[k]);
                worst = std::max(worst, err);
                ok = ok && err <= tol;
            }
        }
        bad += !ok;
    }
    return {episodes == 100 && bad == 0,
            std::to_string(episodes) + " episodes, max component error " + sci(worst) + " (tolerance " +
                sci(tol) + ")"};
}

// ---- 9: cost model

Outcome cost_model() {
    const double extreme = cost::solve_t_compute_threshold(0.9, 15.0, 0.25);
    cost::CostParams p;
    p.alpha = 0.9;
    p.beta = 15.0;
    p.n_slb = 15;
    p.n_fs = 1;
    p.t_compute = extreme;
    const double round_trip = std::abs(cost::slb_condition_rhs(p) - 0.25);
    const double reference = cost::solve_t_compute_threshold(0.5, 1.0, 0.5);
    const bool ok = rel_err(extreme, 0.0173) <= 0.05 && round_trip <= 1e-12 && std::abs(reference - 0.963) <= 1e-3;
    return {ok, "extreme " + fmt(extreme, 5) + " h, round trip error " + sci(round_trip) + ", reference " +
                    fmt(reference, 4) + " h (published figure 1.3 h does not follow from the stated constants)"};
}

// ---- 10: CLI determinism from manifests

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

Outcome cli_determinism() {
    const fs::path tool = SLB_CLI_PATH;
    const fs::path root = fs::temp_directory_path() / "slb_acceptance_cli";
    fs::remove_all(root);
    fs::create_directories(root);
    const std::string fixture = std::string(SLB_FIXTURE_DIR) + "/two_ball.json";
    const std::vector<std::pair<std::string, std::string>> commands{
        {"ds", "ds --preset identity --x2 100 --y1 10"},
        {"plan", "plan " + fixture + " --cause ball1_initial --effect joint_effect"},
        {"simulate", "--seed 3 simulate --wind 0.5 --counts 24,24,64,16,2 --calibration 100"},
        {"run", "run --dataset " + (root / "simulate_a").string() +
                    " --seeds 0,1 --increments 2 --increment-size 16 --epochs 30 --noise-esd 0.1"},
        {"cost", "cost"}};
    int compared = 0;
    for (const auto& [name, args] : commands) {
        const auto a = root / (name + "_a"), b = root / (name + "_b");
        const std::string first = tool.string() + " --jobs 2 --out " + a.string() + " " + args + " > /dev/null";
        const std::string again = tool.string() + " --jobs 1 --out " + b.string() + " " + name + " --config " +
                                  (a / "manifest.json").string() + " > /dev/null";
        if (std::system(first.c_str()) != 0) return {false, name + ": first run failed"};
        if (std::system(again.c_str()) != 0) return {false, name + ": rerun from manifest failed"};
        const auto ma = nlohmann::json::parse(slurp(a / "manifest.json"));
        const auto mb = nlohmann::json::parse(slurp(b / "manifest.json"));
        if (ma["outputs"] != mb["outputs"]) return {false, name + ": output digests differ"};
        for (const auto& [file, _] : ma["outputs"].items()) {
            if (slurp(a / file) != slurp(b / file)) return {false, name + ": " + file + " differs"};
            ++compared;
        }
    }
    fs::remove_all(root);
    return {true, std::to_string(compared) + " output files byte-identical across 5 subcommands"};
}

}  // namespace

int main(int argc, char** argv) {
    std::set<int> only;
    for (int i = 1; i + 1 < argc; ++i) {
        if (std::string(argv[i]) == "--only") {
            std::stringstream ss(argv[i + 1]);
            for (std::string tok; std::getline(ss, tok, ',');) only.insert(std::stoi(tok));
        }
    }
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"worked fixture reproduction", worked_fixture},
        {"closed form agrees with quadrature", closed_form_grid},
        {"flow endpoint matches full supervision", flow_consistency},
        {"gradient matches finite differences", gradient_check},
        {"interaction-time calculus", time_calculus},
        {"desk-scale experiment", desk_experiment},
        {"noise robustness", noise_robustness},
        {"oracle interaction times recover release states", oracle_recovery},
        {"cost model", cost_model},
        {"CLI determinism from manifests", cli_determinism}};
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int id = static_cast<int>(i) + 1;
        if (!only.empty() && !only.count(id)) continue;
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("threw: ") + e.what()};
        }
        failed += !o.pass;
        std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << id << ": " << criteria[i].first << " -- " << o.detail
                  << std::endl;
    }
    return failed == 0 ? 0 : 1;
}
