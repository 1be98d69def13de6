// Python bindings. Structured values cross the boundary as JSON text; the
// slbkit package turns them into dicts.

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "slb/ballsim.hpp"
#include "slb/causal.hpp"
#include "slb/cost.hpp"
#include "slb/ds.hpp"
#include "slb/experiment.hpp"

namespace py = pybind11;
using nlohmann::json;
using namespace slb;

namespace {

ds::Method parse_method(const std::string& m) {
    if (m == "slb") return ds::Method::SLB;
    if (m == "trad") return ds::Method::TRAD;
    if (m == "fs") return ds::Method::FS;
    throw std::invalid_argument("method must be 'slb', 'trad' or 'fs'");
}

ds::CoupledSystem system_of(const std::string& text) {
    return text.empty() ? ds::CoupledSystem::identity() : ds::system_from_json(json::parse(text));
}

std::string plan_json(const std::string& graph, const std::string& cause, const std::string& effect) {
    const auto g = causal::graph_from_json(json::parse(graph));
    return causal::plan_to_json(causal::build_labeling_plan(g, cause, effect)).dump();
}

json state_json(const ballsim::BallState& s) { return {{"position", s.position}, {"velocity", s.velocity}}; }

std::string episode_json(const std::string& config, std::uint64_t seed, std::optional<double> threshold) {
    const auto cfg = config.empty() ? ballsim::SimConfig{} : ballsim::sim_config_from_json(json::parse(config));
    ballsim::EpisodeOptions opts;
    opts.record_streams = false;
    opts.magnitude_threshold = threshold;
    const auto e = ballsim::simulate_episode(cfg, seed, opts);
    return json{{"seed", e.seed},
                {"settled", e.settled},
                {"left_surface", e.left_surface},
                {"collided", e.collided},
                {"settle_time", e.settle_time},
                {"drop_times", e.drop_times},
                {"true_interaction_times", e.true_interaction_times},
                {"initial_states", {state_json(e.initial_states[0]), state_json(e.initial_states[1])}},
                {"final_states", {state_json(e.final_states[0]), state_json(e.final_states[1])}},
                {"distance_vector", e.distance_vector},
                {"class_label", e.class_label},
                {"rebound_counts", e.rebound_counts},
                {"steps", e.steps}}
        .dump();
}

std::string generate(const std::string& config, std::vector<int> counts, const std::string& csv_path,
                     const std::string& manifest_path, std::optional<double> threshold, int jobs) {
    const auto cfg = config.empty() ? ballsim::SimConfig{} : ballsim::sim_config_from_json(json::parse(config));
    if (counts.size() != 5) throw std::invalid_argument("counts must be (pretrain, validation, test, increment_size, increments)");
    ballsim::GenerateOptions g;
    g.magnitude_threshold = threshold;
    g.jobs = jobs;
    const auto d = ballsim::generate_dataset(cfg, {counts[0], counts[1], counts[2], counts[3], counts[4]}, g);
    std::ofstream csv(csv_path, std::ios::binary);
    ballsim::write_dataset_csv(csv, d);
    const auto manifest = ballsim::dataset_manifest(d);
    std::ofstream(manifest_path, std::ios::binary) << manifest.dump(2) << "\n";
    if (!csv) throw std::runtime_error("failed to write '" + csv_path + "'");
    return manifest.dump();
}

std::string run_experiment(const std::string& spec_text, const std::string& base_dir, int jobs) {
    const auto spec = experiment::run_spec_from_json(json::parse(spec_text), base_dir);
    const auto data = ballsim::read_dataset(spec.dataset_csv, spec.dataset_manifest);
    experiment::RunOptions opts;
    opts.jobs = jobs;
    const auto r = experiment::nested_kfold(spec, data, experiment::load_plan(spec), opts);
    json rows = json::array();
    for (const auto& row : r.rows) {
        rows.push_back({{"fold", row.fold},
                        {"seed", row.seed},
                        {"increment", row.increment},
                        {"method", row.method},
                        {"accuracy", row.accuracy}});
    }
    json agg = json::array();
    for (const auto& a : experiment::aggregate(r.rows)) {
        agg.push_back({{"method", a.method}, {"increment", a.increment}, {"mean", a.mean}, {"std", a.std}, {"cells", a.cells}});
    }
    return json{{"rows", rows},
                {"aggregate", agg},
                {"itm_r2", r.itm_r2},
                {"self_labels",
                 {{"examples", r.self_labels.examples},
                  {"label_matches", r.self_labels.label_matches},
                  {"clamped", r.self_labels.clamped}}}}
        .dump();
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Self-labeling toolkit core";

    py::register_exception<numeric::DomainError>(m, "DomainError", PyExc_ValueError);
    py::register_exception<causal::GraphError>(m, "GraphError", PyExc_ValueError);
    py::register_exception<causal::PlanError>(m, "PlanError", PyExc_ValueError);
    py::register_exception<ballsim::QuotaError>(m, "QuotaError", PyExc_RuntimeError);

    m.def(
        "y2_learned",
        [](const std::string& method, double x, double x2, double y1, double xi_t, double xi_e, const std::string& system) {
            return ds::y2_learned(system_of(system), parse_method(method), x, x2, y1, {xi_t, xi_e});
        },
        py::arg("method"), py::arg("x"), py::arg("x2"), py::arg("y1"), py::arg("xi_t") = 1.0, py::arg("xi_e") = 1.0,
        py::arg("system") = "");
    m.def("closed_form_example", [](double x, double x2, double y1, double xi_t, double xi_e) {
        return ds::closed_form_example(x, x2, y1, {xi_t, xi_e});
    }, py::arg("x_slb"), py::arg("x2"), py::arg("y1"), py::arg("xi_t") = 1.0, py::arg("xi_e") = 1.0);
    m.def(
        "infer_interaction_time",
        [](double x2, double y1, double y2, const std::string& system) {
            return ds::infer_interaction_time(system_of(system), x2, y1, y2);
        },
        py::arg("x2"), py::arg("y1"), py::arg("y2"), py::arg("system") = "");
    m.def(
        "sampling_bounds",
        [](double x1, double x2, double y1, double epsilon, const std::string& system) {
            const auto b = ds::itm_sampling_bounds(system_of(system), x1, x2, y1, epsilon);
            py::dict d;
            d["y2_fs"] = b.y2_fs;
            d["y2_low"] = b.y2_low;
            d["y2_high"] = b.y2_high;
            d["t_if_low"] = b.t_if_low;
            d["t_if_high"] = b.t_if_high;
            d["t_if"] = b.t_if_nominal;
            d["y2_slb"] = b.y2_slb_nominal;
            d["within_bounds"] = b.within_bounds;
            return d;
        },
        py::arg("x1"), py::arg("x2"), py::arg("y1"), py::arg("epsilon"), py::arg("system") = "");

    m.def("plan_json", &plan_json, py::arg("graph"), py::arg("cause"), py::arg("effect"));

    m.def("episode_json", &episode_json, py::arg("config"), py::arg("seed"), py::arg("threshold") = py::none(),
          py::call_guard<py::gil_scoped_release>());
    m.def(
        "categorize_effect",
        [](double dx, double dy, double dz, double threshold) {
            const auto c = ballsim::categorize_effect({dx, dy, dz}, threshold);
            return py::make_tuple(c.label, c.degenerate);
        },
        py::arg("dx"), py::arg("dy"), py::arg("dz"), py::arg("threshold"));
    m.def("generate_dataset", &generate, py::arg("config"), py::arg("counts"), py::arg("csv_path"),
          py::arg("manifest_path"), py::arg("threshold") = py::none(), py::arg("jobs") = 1,
          py::call_guard<py::gil_scoped_release>());
    m.def("run_experiment", &run_experiment, py::arg("spec"), py::arg("base_dir") = "", py::arg("jobs") = 1,
          py::call_guard<py::gil_scoped_release>());

    m.def("solve_t_compute_threshold", &cost::solve_t_compute_threshold, py::arg("alpha"), py::arg("beta"),
          py::arg("acc_ratio"), py::arg("c_m") = cost::kDefaultLabelCost, py::arg("p_kw") = cost::kDefaultPowerKw,
          py::arg("rate") = cost::kDefaultRate);
    m.def(
        "cost_sweep",
        [](const std::vector<double>& a, const std::vector<double>& b, const std::vector<double>& r) {
            std::vector<std::tuple<double, double, double, double>> out;
            for (const auto& row : cost::cost_sweep(a, b, r)) out.emplace_back(row.alpha, row.beta, row.acc_ratio, row.t_compute_hours);
            return out;
        },
        py::arg("alphas"), py::arg("betas"), py::arg("acc_ratios"));
}
