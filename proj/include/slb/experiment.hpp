#pragma once

// Wires the two-ball simulation into the self-labeling pipeline and runs the
// nested k-fold comparison of self-labeling, full supervision and
// pseudo-labelling.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "slb/ballsim.hpp"
#include "slb/causal.hpp"
#include "slb/learn.hpp"
#include "slb/pipeline.hpp"

namespace slb::experiment {

/// Position (3) and velocity (3) of one ball over time.
pipeline::Stream cause_stream(const ballsim::EpisodeRecord& e, int ball);
/// Joint state once both balls rest: positions (6), velocities (6), relative
/// vector (3), rebound counts (2).
pipeline::Stream effect_stream(const ballsim::EpisodeRecord& e);
/// Rule detector: the categorized relative vector.
pipeline::EffectStateDetector rule_esd(double magnitude_threshold);
/// Effect sample + label -> the 18 ITM features, laid out as make_features.
pipeline::EventFeatureFn itm_features();
/// Task input from the two sampled cause states.
pipeline::InputBuilder task_input_builder(const std::string& first_cause, const std::string& second_cause);

/// The lumped two-ball graph: both initial states feed an unobserved
/// collision and the joint effect.
causal::CausalGraph two_ball_graph();

struct RunSpec {
    std::string dataset_csv;
    std::string dataset_manifest;
    std::string plan_path;  // empty: plan built from the built-in graph
    std::string cause_id = "ball1_initial";
    std::string effect_id = "joint_effect";
    std::map<std::string, int> cause_streams{{"ball1_initial", 0}, {"ball2_initial", 1}};

    std::vector<std::string> methods{"slb", "fs", "pseudo"};
    pipeline::NoiseSpec noise;
    learn::MlpConfig task_model;
    learn::RegressorParams itm;
    int k_outer = 2;
    int k_inner = 2;
    std::vector<std::uint64_t> seeds{0, 1, 2};
    int increments = 10;
    int increment_size = 120;
    std::vector<double> pseudo_thresholds{0.8, 0.9, 0.95};

    void validate() const;
};

nlohmann::json to_json(const RunSpec& s);
/// Relative dataset and plan paths resolve against `base_dir`.
RunSpec run_spec_from_json(const nlohmann::json& j, const std::string& base_dir = "", RunSpec defaults = {});

struct ResultRow {
    int fold = 0;
    std::uint64_t seed = 0;
    int increment = 0;
    std::string method;
    double accuracy = 0.0;
};

struct Aggregate {
    std::string method;
    int increment = 0;
    double mean = 0.0;
    double std = 0.0;  // sample standard deviation over cells
    int cells = 0;
};

struct SelfLabelStats {
    std::size_t examples = 0;
    std::size_t label_matches = 0;  // self label equals ground truth
    std::size_t clamped = 0;
    double mean_abs_time_error = 0.0;  // over causes and examples, after noise
    double max_abs_input_error = 0.0;  // vs the true task input
};

struct RunResult {
    std::vector<ResultRow> rows;
    std::map<std::uint64_t, double> pseudo_threshold;  // chosen per seed
    std::map<std::string, double> itm_r2;              // on the deployment pool
    SelfLabelStats self_labels;
};

struct RunOptions {
    int jobs = 1;
    std::function<void(const nlohmann::json&)> log;
};

/// Fits one ITM per plan binding on the wind-free splits.
pipeline::ItmMap train_itms(const RunSpec& spec, const ballsim::DatasetSplit& data, const causal::SelfLabelingPlan& plan,
                            std::map<std::string, learn::Regressor>* fitted = nullptr);

/// Self-labels one recorded sample by re-simulating its episode.
pipeline::SelfLabeledExample self_label_sample(const RunSpec& spec, const ballsim::DatasetSplit& data,
                                               const causal::SelfLabelingPlan& plan, const pipeline::ItmMap& itms,
                                               const ballsim::Sample& sample, pipeline::NoiseSource& noise);

causal::SelfLabelingPlan load_plan(const RunSpec& spec);

/// Outer folds partition the deployment pool (test plus increment samples);
/// each fold is the test set once while increments are drawn, in a seeded
/// order, from the other folds. Inner folds over the validation split pick
/// the pseudo-label threshold.
RunResult nested_kfold(const RunSpec& spec, const ballsim::DatasetSplit& data, const causal::SelfLabelingPlan& plan,
                       const RunOptions& options = {});

std::vector<Aggregate> aggregate(const std::vector<ResultRow>& rows);

void write_results_csv(std::ostream& os, const std::vector<ResultRow>& rows);
void write_aggregate_csv(std::ostream& os, const std::vector<Aggregate>& rows);

}  // namespace slb::experiment
