#include "doctest.h"

#include <cmath>
#include <numbers>
#include <set>
#include <sstream>

#include "slb/experiment.hpp"

using namespace slb;
using namespace slb::pipeline;

namespace {

Stream ramp(int n, double dt = 0.1) {
    Stream s;
    for (int i = 0; i < n; ++i) s.push_back({i * dt, {static_cast<double>(i)}});
    return s;
}

causal::SelfLabelingPlan two_ball_plan() {
    return causal::build_labeling_plan(experiment::two_ball_graph(), "ball1_initial", "joint_effect");
}

// Small wind-shifted dataset shared by the retraining tests.
const ballsim::DatasetSplit& small_dataset() {
    static const ballsim::DatasetSplit d = [] {
        ballsim::SimConfig c;
        c.wind_magnitude = 0.5;
        ballsim::GenerateOptions g;
        g.calibration_episodes = 200;
        return ballsim::generate_dataset(c, {80, 80, 240, 80, 3}, g);
    }();
    return d;
}

LabeledSet to_set(const std::vector<ballsim::Sample>& v) {
    LabeledSet s;
    s.x.resize(static_cast<Eigen::Index>(v.size()), ballsim::kTaskFeatures);
    for (std::size_t i = 0; i < v.size(); ++i) {
        for (int k = 0; k < ballsim::kTaskFeatures; ++k) s.x(static_cast<Eigen::Index>(i), k) = v[i].features.task[k];
        s.y.push_back(v[i].label);
    }
    return s;
}

learn::MlpConfig quick_model(std::uint64_t seed) {
    learn::MlpConfig m;
    m.epochs = 60;
    m.seed = seed;
    return m;
}

EffectEvent event_at(double t, std::vector<double> features = {}) {
    EffectEvent e;
    e.t_detect = t;
    e.effect_features = std::move(features);
    return e;
}

}  // namespace

TEST_CASE("effect detection on plain streams") {
    const auto by_value = [](const StreamSample& s) { return s.features[0] >= 3.0 ? 1 : 0; };
    CHECK(detect_effect_events({}, by_value).empty());
    const auto events = detect_effect_events(ramp(6), by_value);
    REQUIRE(events.size() == 2);
    CHECK(events[0].label == 0);
    CHECK(events[0].t_detect == 0.0);
    CHECK(events[1].label == 1);
    CHECK(events[1].t_detect == doctest::Approx(0.3));
    CHECK(events[1].id == 1);

    auto shuffled = ramp(3);
    std::swap(shuffled[0], shuffled[2]);
    CHECK_THROWS_AS(detect_effect_events(shuffled, by_value), std::invalid_argument);
}

TEST_CASE("rule detector reproduces the simulator's labels") {
    const ballsim::SimConfig c;
    const double threshold = 20.0;
    ballsim::EpisodeOptions opts;
    opts.magnitude_threshold = threshold;
    int checked = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const auto e = ballsim::simulate_episode(c, seed, opts);
        if (!e.settled) continue;
        ++checked;
        const auto events =
            detect_effect_events(experiment::effect_stream(e), experiment::rule_esd(threshold), experiment::itm_features());
        REQUIRE(events.size() == 1);
        CHECK(events[0].label == e.class_label);
        CHECK(events[0].t_detect == e.settle_time);
        const auto f = ballsim::make_features(e);
        REQUIRE(events[0].effect_features.size() == f.itm.size());
        for (std::size_t k = 0; k < f.itm.size(); ++k) CHECK(events[0].effect_features[k] == f.itm[k]);
    }
    CHECK(checked > 90);
}

TEST_CASE("interaction time inference") {
    const auto plan = two_ball_plan();
    REQUIRE(plan.itm_bindings.size() == 2);
    ItmMap itms{{"ball1_initial", [](std::span<const double>) { return 2.5; }},
                {"ball2_initial", [](std::span<const double>) { return -1.0; }}};
    const auto t = infer_times(event_at(10.0), plan, itms);
    CHECK(t.at("ball1_initial").value == 2.5);
    CHECK_FALSE(t.at("ball1_initial").clamped);
    CHECK(t.at("ball2_initial").value == 0.0);
    CHECK(t.at("ball2_initial").clamped);

    itms.erase("ball2_initial");
    CHECK_THROWS_AS(infer_times(event_at(10.0), plan, itms), std::invalid_argument);
    itms["ball2_initial"] = [](std::span<const double>) { return NAN; };
    CHECK_THROWS_AS(infer_times(event_at(10.0), plan, itms), std::runtime_error);
}

TEST_CASE("cause window sampling") {
    const auto s = ramp(11);  // t = 0, 0.1, ..., 1.0
    CHECK(sample_cause_window(s, 1.0, 0.0).index == 10);
    CHECK(sample_cause_window(s, 1.0, 1.0).index == 0);
    CHECK(sample_cause_window(s, 1.0, 0.32).index == 7);
    // Halfway between two samples: the earlier one wins.
    CHECK(sample_cause_window(s, 0.25, 0.0).index == 2);
    const auto before = sample_cause_window(s, 1.0, 5.0);
    CHECK(before.index == 0);
    CHECK(before.clamped);
    const auto after = sample_cause_window(s, 3.0, 0.0);
    CHECK(after.index == 10);
    CHECK(after.clamped);
    CHECK_FALSE(sample_cause_window(s, 1.0, 0.5).clamped);
    CHECK_THROWS_AS(sample_cause_window({}, 1.0, 0.0), std::invalid_argument);
}

TEST_CASE("zero-lag models sample at the detection time") {
    const auto plan = two_ball_plan();
    ItmMap zero{{"ball1_initial", [](std::span<const double>) { return 0.0; }},
                {"ball2_initial", [](std::span<const double>) { return 0.0; }}};
    const auto s1 = ramp(11), s2 = ramp(11);
    NoiseSource noise({}, ballsim::kNumClasses);
    const auto ex = self_label(event_at(0.7), plan, zero, {{"ball1_initial", &s1}, {"ball2_initial", &s2}}, noise,
                               [](const std::map<std::string, WindowPick>& p) {
                                   return std::vector<double>{p.at("ball1_initial").sample.t};
                               });
    CHECK(ex.sampled_times.at("ball1_initial") == doctest::Approx(0.7));
    CHECK(ex.sampled_times.at("ball2_initial") == doctest::Approx(0.7));
    CHECK(ex.input.size() == 1);
    CHECK_FALSE(ex.clamped);
}

TEST_CASE("oracle interaction times recover the release states") {
    const ballsim::SimConfig c;
    const double threshold = 20.0;
    const auto plan = two_ball_plan();
    ballsim::EpisodeOptions opts;
    opts.magnitude_threshold = threshold;
    int checked = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const auto e = ballsim::simulate_episode(c, seed, opts);
        if (!e.settled) continue;
        ++checked;
        ItmMap oracle{{"ball1_initial", [&](std::span<const double>) { return e.true_interaction_times[0]; }},
                      {"ball2_initial", [&](std::span<const double>) { return e.true_interaction_times[1]; }}};
        const auto events =
            detect_effect_events(experiment::effect_stream(e), experiment::rule_esd(threshold), experiment::itm_features());
        const auto s1 = experiment::cause_stream(e, 0), s2 = experiment::cause_stream(e, 1);
        NoiseSource noise({}, ballsim::kNumClasses);
        const auto ex = self_label(events.at(0), plan, oracle, {{"ball1_initial", &s1}, {"ball2_initial", &s2}}, noise,
                                   experiment::task_input_builder("ball1_initial", "ball2_initial"));
        CHECK(ex.label == e.class_label);
        const auto truth = ballsim::make_features(e).task;
        REQUIRE(ex.input.size() == truth.size());
        // Within one step of drift of the release position.
        for (std::size_t k = 0; k < truth.size(); ++k) {
            CHECK(std::abs(ex.input[k] - truth[k]) <= 2.0 * c.penalty_velocity * c.timestep + 1e-9);
        }
    }
    CHECK(checked > 90);
}

TEST_CASE("label noise at full strength is uniform") {
    NoiseSource noise({1.0, 0.0, 0.0, 17}, 8);
    std::array<int, 8> counts{};
    const int n = 4000;
    for (int i = 0; i < n; ++i) ++counts[noise.esd(3).first];
    double chi2 = 0.0;
    for (int c : counts) chi2 += (c - n / 8.0) * (c - n / 8.0) / (n / 8.0);
    // 99th percentile of chi-square with 7 degrees of freedom.
    CHECK(chi2 < 18.475);
}

TEST_CASE("label noise alters the expected share") {
    for (double p : {0.1, 0.4}) {
        NoiseSource noise({p, 0.0, 0.0, 5}, 8);
        const int n = 4000;
        int altered = 0;
        for (int i = 0; i < n; ++i) {
            const auto [label, changed] = noise.esd(i % 8);
            CHECK(changed == (label != i % 8));
            altered += changed;
        }
        CHECK(std::abs(static_cast<double>(altered) / n - p * 7.0 / 8.0) < 0.03);
    }
    NoiseSource none({}, 8);
    for (int i = 0; i < 100; ++i) CHECK(none.esd(i % 8) == std::pair<int, bool>{i % 8, false});
}

TEST_CASE("time noise magnitude follows a folded normal") {
    const double mu = 50.0, var = 25.0, sd = std::sqrt(var);
    // E|X| for X ~ N(mu, var) by direct integration.
    double expected = 0.0;
    const double lo = mu - 12.0 * sd, hi = mu + 12.0 * sd;
    const int steps = 20000;
    const double h = (hi - lo) / steps;
    for (int i = 0; i <= steps; ++i) {
        const double x = lo + i * h;
        const double w = (i == 0 || i == steps) ? 0.5 : 1.0;
        expected += w * std::abs(x) * std::exp(-0.5 * (x - mu) * (x - mu) / var) / (sd * std::sqrt(2.0 * std::numbers::pi));
    }
    expected *= h;
    NoiseSource noise({0.0, mu, var, 9}, 8);
    double sum = 0.0;
    int negative = 0;
    const int n = 4000;
    for (int i = 0; i < n; ++i) {
        const double e = noise.itm_error();
        sum += std::abs(e);
        negative += e < 0.0;
    }
    CHECK(std::abs(sum / n - expected) < 0.1 * expected);
    CHECK(std::abs(negative / static_cast<double>(n) - 0.5) < 0.05);

    CHECK_THROWS_AS(NoiseSource({1.5, 0.0, 0.0, 0}, 8), std::invalid_argument);
    CHECK_THROWS_AS(NoiseSource({0.0, -1.0, 0.0, 0}, 8), std::invalid_argument);
}

TEST_CASE("noise streams are shared across noise levels") {
    NoiseSource a({0.1, 0.0, 1.0, 3}, 8), b({0.4, 0.0, 4.0, 3}, 8);
    for (int i = 0; i < 50; ++i) {
        const auto la = a.esd(0), lb = b.esd(0);
        // Whatever flips at the lower rate also flips at the higher one.
        if (la.first != 0) CHECK(lb.first == la.first);
        CHECK(b.itm_error() == doctest::Approx(2.0 * a.itm_error()));
    }
}

TEST_CASE("negative times are clamped and flagged") {
    const auto plan = two_ball_plan();
    ItmMap itms{{"ball1_initial", [](std::span<const double>) { return 0.1; }},
                {"ball2_initial", [](std::span<const double>) { return 0.1; }}};
    const auto s = ramp(11);
    NoiseSource noise({0.0, 5.0, 0.0, 1}, 8);
    int clamped = 0;
    for (int i = 0; i < 40; ++i) {
        const auto ex = self_label(event_at(1.0), plan, itms, {{"ball1_initial", &s}, {"ball2_initial", &s}}, noise,
                                   [](const std::map<std::string, WindowPick>&) { return std::vector<double>{}; });
        for (const auto& [id, t] : ex.inferred_times) CHECK(t >= 0.0);
        clamped += ex.clamped;
    }
    CHECK(clamped == 40);  // +5 overshoots the stream start, -5 goes negative
}

TEST_CASE("incremental retraining curves") {
    const auto& d = small_dataset();
    const auto pre = to_set(d.pretrain), test = to_set(d.test);
    std::vector<LabeledSet> inc;
    for (const auto& v : d.increments) inc.push_back(to_set(v));

    const auto alone = incremental_retrain(pre, {}, test, quick_model(0), ballsim::kNumClasses);
    CHECK(alone.size() == 1);
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        const auto curve = incremental_retrain(pre, inc, test, quick_model(seed), ballsim::kNumClasses);
        REQUIRE(curve.size() == inc.size() + 1);
        for (double a : curve) {
            CHECK(a >= 0.0);
            CHECK(a <= 1.0);
        }
        CHECK(curve.back() >= curve.front());
    }
    CHECK_THROWS_AS(incremental_retrain({}, inc, test, quick_model(0), 8), std::invalid_argument);
}

TEST_CASE("pseudo-label thresholds at the extremes") {
    const auto& d = small_dataset();
    const auto pre = to_set(d.pretrain), test = to_set(d.test);
    std::vector<learn::Matrix> unlabeled;
    for (const auto& v : d.increments) unlabeled.push_back(to_set(v).x);

    std::vector<std::size_t> none;
    const auto flat = pseudo_label_baseline(pre, unlabeled, 1.0, test, quick_model(0), 8, &none);
    REQUIRE(flat.size() == unlabeled.size() + 1);
    for (double a : flat) CHECK(a == flat.front());
    for (auto n : none) CHECK(n == 0);

    std::vector<std::size_t> all;
    pseudo_label_baseline(pre, unlabeled, 0.0, test, quick_model(0), 8, &all);
    REQUIRE(all.size() == unlabeled.size());
    for (std::size_t i = 0; i < all.size(); ++i) CHECK(all[i] == static_cast<std::size_t>(unlabeled[i].rows()));

    CHECK_THROWS_AS(pseudo_label_baseline(pre, unlabeled, 1.5, test, quick_model(0), 8), std::invalid_argument);
}

TEST_CASE("stratified folds") {
    std::vector<int> labels;
    for (int c = 0; c < 8; ++c) labels.insert(labels.end(), {c, c});
    const auto folds = stratified_folds(labels, 2, 8, 4);
    std::array<std::set<int>, 2> classes;
    std::array<int, 2> sizes{};
    for (std::size_t i = 0; i < labels.size(); ++i) {
        ++sizes[folds[i]];
        classes[folds[i]].insert(labels[i]);
    }
    CHECK(sizes[0] == 8);
    CHECK(sizes[1] == 8);
    CHECK(classes[0].size() == 8);
    CHECK(classes[1].size() == 8);
    CHECK(stratified_folds(labels, 2, 8, 4) == folds);
    CHECK_THROWS_AS(stratified_folds(labels, 3, 8, 4), std::invalid_argument);
    CHECK_THROWS_AS(stratified_folds(labels, 1, 8, 4), std::invalid_argument);
}

TEST_CASE("concatenating labelled sets") {
    LabeledSet a, b;
    a.x = learn::Matrix::Ones(2, 3);
    a.y = {0, 1};
    b.x = learn::Matrix::Zero(1, 3);
    b.y = {2};
    const auto all = concat({&a, &b});
    CHECK(all.size() == 3);
    CHECK(all.x.rows() == 3);
    CHECK(all.x(2, 0) == 0.0);
    LabeledSet wide;
    wide.x = learn::Matrix::Zero(1, 4);
    wide.y = {0};
    CHECK_THROWS_AS(concat({&a, &wide}), std::invalid_argument);
}

TEST_CASE("aggregation and result files") {
    std::vector<experiment::ResultRow> rows{{0, 0, 0, "slb", 0.5}, {1, 0, 0, "slb", 0.7}, {0, 1, 0, "slb", 0.9},
                                            {0, 0, 0, "fs", 0.4}};
    const auto agg = experiment::aggregate(rows);
    REQUIRE(agg.size() == 2);
    for (const auto& a : agg) {
        if (a.method == "slb") {
            CHECK(a.mean == doctest::Approx(0.7));
            CHECK(a.std == doctest::Approx(0.2));
            CHECK(a.cells == 3);
        } else {
            CHECK(a.mean == doctest::Approx(0.4));
            CHECK(a.cells == 1);
        }
    }
    std::ostringstream os;
    experiment::write_results_csv(os, rows);
    CHECK(os.str().rfind("fold,seed,increment,method,accuracy\n", 0) == 0);
    std::ostringstream as;
    experiment::write_aggregate_csv(as, agg);
    CHECK(as.str().rfind("method,increment,mean,std,cells\n", 0) == 0);
}

TEST_CASE("nested k-fold produces one row per cell") {
    experiment::RunSpec spec;
    spec.seeds = {0};
    spec.increments = 2;
    spec.increment_size = 16;
    spec.task_model = quick_model(0);
    spec.task_model.epochs = 20;
    spec.itm.n_trees = 30;
    const auto& d = small_dataset();
    const auto plan = experiment::load_plan(spec);
    const auto r = experiment::nested_kfold(spec, d, plan);
    CHECK(r.rows.size() == static_cast<std::size_t>(spec.k_outer) * 3 * (spec.increments + 1));
    // Increment 0 is the shared pretrain-only model.
    std::map<int, std::set<double>> start;
    for (const auto& row : r.rows) {
        if (row.increment == 0) start[row.fold].insert(row.accuracy);
    }
    for (const auto& [fold, acc] : start) CHECK(acc.size() == 1);
    CHECK(r.self_labels.examples == static_cast<std::size_t>(spec.k_outer * spec.increments * spec.increment_size));
    CHECK(r.self_labels.label_matches == r.self_labels.examples);
    CHECK(r.pseudo_threshold.count(0) == 1);

    spec.increment_size = 10000;
    CHECK_THROWS(experiment::nested_kfold(spec, d, plan));
}

TEST_CASE("interaction-time models explain most of the variance" * doctest::may_fail()) {
    ballsim::SimConfig c;
    c.wind_magnitude = 0.5;
    ballsim::GenerateOptions g;
    g.jobs = 2;
    const auto d = ballsim::generate_dataset(c, {320, 320, 400, 8, 1}, g);
    experiment::RunSpec spec;
    const auto plan = experiment::load_plan(spec);
    std::map<std::string, learn::Regressor> fitted;
    experiment::train_itms(spec, d, plan, &fitted);
    REQUIRE(fitted.size() == 2);
    for (const auto& [id, model] : fitted) {
        const int ball = spec.cause_streams.at(id);
        std::vector<double> pred, truth;
        for (const auto& s : d.test) {
            pred.push_back(model.predict(std::span<const double>(s.features.itm)));
            truth.push_back(s.true_times[ball]);
        }
        const auto m = learn::metrics(pred, truth);
        REQUIRE(m.r2);
        MESSAGE(id << " R2 = " << *m.r2);
        CHECK(*m.r2 >= 0.8);
    }
}
