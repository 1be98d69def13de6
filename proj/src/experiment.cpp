#include "slb/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "slb/csv.hpp"

namespace slb::experiment {

using nlohmann::json;
using ballsim::BallState;

namespace {

std::vector<double> state_features(const BallState& s) {
    return {s.position[0], s.position[1], s.position[2], s.velocity[0], s.velocity[1], s.velocity[2]};
}

BallState state_from_features(const std::vector<double>& f) {
    if (f.size() < 6) throw std::invalid_argument("cause sample needs position and velocity");
    return {{f[0], f[1], f[2]}, {f[3], f[4], f[5]}};
}

constexpr std::uint64_t kModelStream = 11;
constexpr std::uint64_t kOrderStream = 12;
constexpr std::uint64_t kNoiseStream = 13;
constexpr std::uint64_t kFoldStream = 14;
constexpr std::uint64_t kInnerStream = 15;

}  // namespace

pipeline::Stream cause_stream(const ballsim::EpisodeRecord& e, int ball) {
    if (ball < 0 || ball > 1) throw std::invalid_argument("ball index must be 0 or 1");
    pipeline::Stream out;
    out.reserve(e.cause_streams[ball].size());
    for (const auto& p : e.cause_streams[ball]) out.push_back({p.t, state_features(p.state)});
    return out;
}

pipeline::Stream effect_stream(const ballsim::EpisodeRecord& e) {
    pipeline::Stream out;
    for (const auto& s : e.effect_stream) {
        std::vector<double> f;
        f.reserve(17);
        for (const auto& b : s.balls) f.insert(f.end(), b.position.begin(), b.position.end());
        for (const auto& b : s.balls) f.insert(f.end(), b.velocity.begin(), b.velocity.end());
        f.insert(f.end(), s.distance.begin(), s.distance.end());
        f.push_back(e.rebound_counts[0]);
        f.push_back(e.rebound_counts[1]);
        out.push_back({s.t, std::move(f)});
    }
    return out;
}

pipeline::EffectStateDetector rule_esd(double threshold) {
    return [threshold](const pipeline::StreamSample& s) {
        if (s.features.size() < 15) throw std::invalid_argument("effect sample is too short");
        return ballsim::categorize_effect({s.features[12], s.features[13], s.features[14]}, threshold).label;
    };
}

pipeline::EventFeatureFn itm_features() {
    return [](const pipeline::StreamSample& s, int label) {
        if (s.features.size() != 17) throw std::invalid_argument("effect sample must have 17 features");
        std::vector<double> f(s.features.begin(), s.features.begin() + 15);
        f.push_back(label);
        f.push_back(s.features[15]);
        f.push_back(s.features[16]);
        return f;
    };
}

pipeline::InputBuilder task_input_builder(const std::string& first, const std::string& second) {
    return [first, second](const std::map<std::string, pipeline::WindowPick>& picks) {
        const auto& a = picks.at(first);
        const auto& b = picks.at(second);
        const auto in = ballsim::task_input(state_from_features(a.sample.features), state_from_features(b.sample.features),
                                            b.sample.t - a.sample.t);
        return std::vector<double>(in.begin(), in.end());
    };
}

causal::CausalGraph two_ball_graph() {
    using causal::StateKind;
    using causal::TimeLaw;
    return causal::CausalGraph(
        {{"ball1_initial", true, StateKind::transient},
         {"ball2_initial", true, StateKind::transient},
         {"collision", false, StateKind::transient},
         {"joint_effect", true, StateKind::steady}},
        {{"ball1_initial", "collision", TimeLaw::make(1.5, 1.2, 2.5)},
         {"ball2_initial", "collision", TimeLaw::make(2.0, 1.7, 2.5)},
         {"collision", "joint_effect", TimeLaw::make(5.0, 2.0, 9.0)},
         {"ball1_initial", "joint_effect", TimeLaw::make(6.5, 4.0, 9.0)},
         {"ball2_initial", "joint_effect", TimeLaw::make(7.0, 4.5, 9.5)}});
}

void RunSpec::validate() const {
    if (methods.empty()) throw std::invalid_argument("run spec needs at least one method");
    for (const auto& m : methods) {
        if (m != "slb" && m != "fs" && m != "pseudo") throw std::invalid_argument("unknown method '" + m + "'");
    }
    if (k_outer < 2) throw std::invalid_argument("k_outer must be at least 2");
    if (k_inner < 2) throw std::invalid_argument("k_inner must be at least 2");
    if (seeds.empty()) throw std::invalid_argument("run spec needs at least one seed");
    if (increments < 0 || increment_size <= 0) throw std::invalid_argument("increment counts must be positive");
    if (pseudo_thresholds.empty()) throw std::invalid_argument("need at least one pseudo-label threshold");
    for (double t : pseudo_thresholds) {
        if (!(t >= 0.0 && t <= 1.0)) throw std::invalid_argument("pseudo-label thresholds must lie in [0, 1]");
    }
    for (const auto& [id, idx] : cause_streams) {
        if (idx != 0 && idx != 1) throw std::invalid_argument("cause stream index for '" + id + "' must be 0 or 1");
    }
    noise.validate();
    task_model.validate();
}

json to_json(const RunSpec& s) {
    return {{"dataset_csv", s.dataset_csv},
            {"dataset_manifest", s.dataset_manifest},
            {"plan", s.plan_path},
            {"cause", s.cause_id},
            {"effect", s.effect_id},
            {"cause_streams", s.cause_streams},
            {"methods", s.methods},
            {"noise",
             {{"esd_fraction", s.noise.esd_fraction},
              {"itm_error_mean", s.noise.itm_error_mean},
              {"itm_error_variance", s.noise.itm_error_variance},
              {"seed", s.noise.seed}}},
            {"task_model", learn::to_json(s.task_model)},
            {"itm", learn::to_json(s.itm)},
            {"k_outer", s.k_outer},
            {"k_inner", s.k_inner},
            {"seeds", s.seeds},
            {"increments", s.increments},
            {"increment_size", s.increment_size},
            {"pseudo_thresholds", s.pseudo_thresholds}};
}

RunSpec run_spec_from_json(const json& j, const std::string& base_dir, RunSpec s) {
    if (!j.is_object()) throw std::invalid_argument("run spec must be a JSON object");
    static const std::vector<std::string> known{"dataset_csv", "dataset_manifest", "plan",      "cause",
                                                "effect",      "cause_streams",    "methods",   "noise",
                                                "task_model",  "itm",              "k_outer",   "k_inner",
                                                "seeds",       "increments",       "increment_size",
                                                "pseudo_thresholds"};
    for (const auto& [key, _] : j.items()) {
        if (std::find(known.begin(), known.end(), key) == known.end()) {
            throw std::invalid_argument("unknown run spec key '" + key + "'");
        }
    }
    auto resolve = [&](const std::string& p) {
        if (p.empty() || base_dir.empty() || std::filesystem::path(p).is_absolute()) return p;
        return (std::filesystem::path(base_dir) / p).string();
    };
    if (j.contains("dataset_csv")) s.dataset_csv = resolve(j["dataset_csv"].get<std::string>());
    if (j.contains("dataset_manifest")) s.dataset_manifest = resolve(j["dataset_manifest"].get<std::string>());
    if (j.contains("plan")) s.plan_path = resolve(j["plan"].get<std::string>());
    s.cause_id = j.value("cause", s.cause_id);
    s.effect_id = j.value("effect", s.effect_id);
    if (j.contains("cause_streams")) s.cause_streams = j["cause_streams"].get<std::map<std::string, int>>();
    s.methods = j.value("methods", s.methods);
    if (j.contains("noise")) {
        const auto& n = j["noise"];
        s.noise.esd_fraction = n.value("esd_fraction", s.noise.esd_fraction);
        s.noise.itm_error_mean = n.value("itm_error_mean", s.noise.itm_error_mean);
        s.noise.itm_error_variance = n.value("itm_error_variance", s.noise.itm_error_variance);
        s.noise.seed = n.value("seed", s.noise.seed);
    }
    if (j.contains("task_model")) s.task_model = learn::mlp_config_from_json(j["task_model"], s.task_model);
    if (j.contains("itm")) s.itm = learn::regressor_params_from_json(j["itm"], s.itm);
    s.k_outer = j.value("k_outer", s.k_outer);
    s.k_inner = j.value("k_inner", s.k_inner);
    s.seeds = j.value("seeds", s.seeds);
    s.increments = j.value("increments", s.increments);
    s.increment_size = j.value("increment_size", s.increment_size);
    s.pseudo_thresholds = j.value("pseudo_thresholds", s.pseudo_thresholds);
    if (s.dataset_csv.empty() || s.dataset_manifest.empty()) throw std::invalid_argument("run spec needs dataset paths");
    s.validate();
    return s;
}

causal::SelfLabelingPlan load_plan(const RunSpec& spec) {
    if (spec.plan_path.empty()) return causal::build_labeling_plan(two_ball_graph(), spec.cause_id, spec.effect_id);
    std::ifstream in(spec.plan_path);
    if (!in) throw std::runtime_error("cannot open plan '" + spec.plan_path + "'");
    const json doc = json::parse(in);
    // Accept either a causal graph or a plan written by the plan command.
    if (doc.contains("nodes")) {
        return causal::build_labeling_plan(causal::graph_from_json(doc), spec.cause_id, spec.effect_id);
    }
    return causal::plan_from_json(doc);
}

namespace {

learn::Matrix itm_matrix(const std::vector<const ballsim::Sample*>& samples) {
    learn::Matrix x(static_cast<Eigen::Index>(samples.size()), ballsim::kItmFeatures);
    for (std::size_t i = 0; i < samples.size(); ++i) {
        for (int k = 0; k < ballsim::kItmFeatures; ++k) x(static_cast<Eigen::Index>(i), k) = samples[i]->features.itm[k];
    }
    return x;
}

pipeline::LabeledSet true_set(const std::vector<const ballsim::Sample*>& samples) {
    pipeline::LabeledSet s;
    s.x.resize(static_cast<Eigen::Index>(samples.size()), ballsim::kTaskFeatures);
    for (std::size_t i = 0; i < samples.size(); ++i) {
        for (int k = 0; k < ballsim::kTaskFeatures; ++k) s.x(static_cast<Eigen::Index>(i), k) = samples[i]->features.task[k];
        s.y.push_back(samples[i]->label);
    }
    return s;
}

std::vector<const ballsim::Sample*> pointers(const std::vector<ballsim::Sample>& v) {
    std::vector<const ballsim::Sample*> out;
    for (const auto& s : v) out.push_back(&s);
    return out;
}

int stream_index(const RunSpec& spec, const std::string& cause) {
    const auto it = spec.cause_streams.find(cause);
    if (it == spec.cause_streams.end()) throw std::invalid_argument("no cause stream mapped for '" + cause + "'");
    return it->second;
}

}  // namespace

pipeline::ItmMap train_itms(const RunSpec& spec, const ballsim::DatasetSplit& data, const causal::SelfLabelingPlan& plan,
                            std::map<std::string, learn::Regressor>* fitted) {
    auto samples = pointers(data.pretrain);
    for (const auto& s : data.validation) samples.push_back(&s);
    const auto x = itm_matrix(samples);
    pipeline::ItmMap out;
    for (const auto& b : plan.itm_bindings) {
        const int idx = stream_index(spec, b.cause_id);
        std::vector<double> y;
        for (const auto* s : samples) y.push_back(s->true_times[idx]);
        auto model = learn::train_regressor(spec.itm, x, y);
        if (fitted) fitted->insert_or_assign(b.cause_id, model);
        out[b.cause_id] = pipeline::itm_from_regressor(std::move(model));
    }
    return out;
}

pipeline::SelfLabeledExample self_label_sample(const RunSpec& spec, const ballsim::DatasetSplit& data,
                                               const causal::SelfLabelingPlan& plan, const pipeline::ItmMap& itms,
                                               const ballsim::Sample& sample, pipeline::NoiseSource& noise) {
    ballsim::SimConfig cfg = data.config;
    cfg.wind_magnitude = sample.wind;
    ballsim::EpisodeOptions opts;
    opts.magnitude_threshold = data.magnitude_threshold;
    const auto episode = ballsim::simulate_episode(cfg, sample.episode_seed, opts);
    if (!episode.settled || episode.class_label != sample.label) {
        throw std::runtime_error("episode " + std::to_string(sample.episode_seed) +
                                 " does not reproduce its recorded outcome; dataset and manifest disagree");
    }
    const auto events = pipeline::detect_effect_events(effect_stream(episode), rule_esd(data.magnitude_threshold),
                                                       itm_features());
    if (events.empty()) throw std::runtime_error("no effect event detected in a settled episode");

    std::array<pipeline::Stream, 2> streams{cause_stream(episode, 0), cause_stream(episode, 1)};
    std::map<std::string, const pipeline::Stream*> by_cause;
    std::string first, second;
    for (const auto& [id, idx] : spec.cause_streams) {
        by_cause[id] = &streams[static_cast<std::size_t>(idx)];
        (idx == 0 ? first : second) = id;
    }
    if (first.empty() || second.empty()) throw std::invalid_argument("both balls need a cause stream mapping");
    return pipeline::self_label(events.front(), plan, itms, by_cause, noise, task_input_builder(first, second));
}

namespace {

struct Job {
    int fold;
    std::uint64_t seed;
};

struct JobOutput {
    std::vector<ResultRow> rows;
    SelfLabelStats stats;
    double abs_time_error_sum = 0.0;
    std::size_t time_errors = 0;
};

double choose_pseudo_threshold(const RunSpec& spec, const ballsim::DatasetSplit& data, std::uint64_t seed) {
    if (spec.pseudo_thresholds.size() == 1) return spec.pseudo_thresholds.front();
    const auto pre = true_set(pointers(data.pretrain));
    std::vector<int> labels;
    for (const auto& s : data.validation) labels.push_back(s.label);
    const auto folds = pipeline::stratified_folds(labels, spec.k_inner, ballsim::kNumClasses,
                                                  ballsim::derive_seed(seed, kInnerStream, 0));
    learn::MlpConfig cfg = spec.task_model;
    cfg.seed = ballsim::derive_seed(seed, kModelStream, 1000);
    double best = spec.pseudo_thresholds.front(), best_score = -1.0;
    for (double threshold : spec.pseudo_thresholds) {
        double score = 0.0;
        for (int f = 0; f < spec.k_inner; ++f) {
            std::vector<const ballsim::Sample*> held, rest;
            for (std::size_t i = 0; i < data.validation.size(); ++i) {
                (folds[i] == f ? held : rest).push_back(&data.validation[i]);
            }
            const auto eval = true_set(held);
            const auto pool = true_set(rest);
            score += pipeline::pseudo_label_baseline(pre, {pool.x}, threshold, eval, cfg, ballsim::kNumClasses).back();
        }
        if (score > best_score) {
            best_score = score;
            best = threshold;
        }
    }
    return best;
}

}  // namespace

RunResult nested_kfold(const RunSpec& spec, const ballsim::DatasetSplit& data, const causal::SelfLabelingPlan& plan,
                       const RunOptions& options) {
    spec.validate();
    auto log = [&](json j) {
        if (options.log) options.log(j);
    };
    RunResult result;

    std::map<std::string, learn::Regressor> fitted;
    const auto itms = train_itms(spec, data, plan, &fitted);

    std::vector<const ballsim::Sample*> pool = pointers(data.test);
    for (const auto& inc : data.increments) {
        for (const auto& s : inc) pool.push_back(&s);
    }
    {
        const auto x = itm_matrix(pool);
        for (const auto& [id, model] : fitted) {
            const int idx = stream_index(spec, id);
            std::vector<double> y;
            for (const auto* s : pool) y.push_back(s->true_times[idx]);
            const auto m = learn::metrics(model.predict(x), y);
            result.itm_r2[id] = m.r2.value_or(std::nan(""));
            log({{"event", "itm_fitted"}, {"cause", id}, {"r2_deployment", result.itm_r2[id]}, {"mae", m.mae}});
        }
    }

    std::vector<int> pool_labels;
    for (const auto* s : pool) pool_labels.push_back(s->label);
    const auto fold_of = pipeline::stratified_folds(pool_labels, spec.k_outer, ballsim::kNumClasses,
                                                    ballsim::derive_seed(spec.k_outer, kFoldStream, 0));
    const bool want_pseudo = std::find(spec.methods.begin(), spec.methods.end(), "pseudo") != spec.methods.end();
    for (auto seed : spec.seeds) {
        if (want_pseudo) {
            result.pseudo_threshold[seed] = choose_pseudo_threshold(spec, data, seed);
            log({{"event", "pseudo_threshold"}, {"seed", seed}, {"threshold", result.pseudo_threshold[seed]}});
        }
    }

    std::vector<Job> jobs;
    for (int f = 0; f < spec.k_outer; ++f) {
        for (auto seed : spec.seeds) jobs.push_back({f, seed});
    }
    const auto pretrain = true_set(pointers(data.pretrain));
    std::vector<JobOutput> outputs(jobs.size());

    ballsim::parallel_for(jobs.size(), options.jobs, [&](std::size_t j) {
        const auto [fold, seed] = jobs[j];
        JobOutput& out = outputs[j];
        std::vector<const ballsim::Sample*> test, rest;
        for (std::size_t i = 0; i < pool.size(); ++i) (fold_of[i] == fold ? test : rest).push_back(pool[i]);
        const std::size_t needed = static_cast<std::size_t>(spec.increments) * spec.increment_size;
        if (rest.size() < needed) {
            throw std::invalid_argument("fold " + std::to_string(fold) + " leaves " + std::to_string(rest.size()) +
                                        " samples for increments but " + std::to_string(needed) + " are needed");
        }
        std::mt19937_64 order_rng(ballsim::derive_seed(seed, kOrderStream, static_cast<std::uint64_t>(fold)));
        std::shuffle(rest.begin(), rest.end(), order_rng);
        std::vector<std::vector<const ballsim::Sample*>> batches(static_cast<std::size_t>(spec.increments));
        for (std::size_t i = 0; i < needed; ++i) batches[i / spec.increment_size].push_back(rest[i]);

        const auto eval = true_set(test);
        learn::MlpConfig cfg = spec.task_model;
        cfg.seed = ballsim::derive_seed(seed, kModelStream, static_cast<std::uint64_t>(fold));

        auto emit = [&](const std::string& method, const std::vector<double>& curve) {
            for (std::size_t k = 0; k < curve.size(); ++k) {
                out.rows.push_back({fold, seed, static_cast<int>(k), method, curve[k]});
            }
        };
        for (const auto& method : spec.methods) {
            std::vector<double> curve;
            if (method == "fs") {
                std::vector<pipeline::LabeledSet> incs;
                for (const auto& b : batches) incs.push_back(true_set(b));
                curve = pipeline::incremental_retrain(pretrain, incs, eval, cfg, ballsim::kNumClasses);
            } else if (method == "slb") {
                pipeline::NoiseSpec noise = spec.noise;
                noise.seed = ballsim::derive_seed(spec.noise.seed ^ seed, kNoiseStream, static_cast<std::uint64_t>(fold));
                pipeline::NoiseSource source(noise, ballsim::kNumClasses);
                std::vector<pipeline::LabeledSet> incs;
                for (const auto& b : batches) {
                    pipeline::LabeledSet set;
                    set.x.resize(static_cast<Eigen::Index>(b.size()), ballsim::kTaskFeatures);
                    for (std::size_t i = 0; i < b.size(); ++i) {
                        const auto ex = self_label_sample(spec, data, plan, itms, *b[i], source);
                        for (int k = 0; k < ballsim::kTaskFeatures; ++k) {
                            set.x(static_cast<Eigen::Index>(i), k) = ex.input[static_cast<std::size_t>(k)];
                            out.stats.max_abs_input_error =
                                std::max(out.stats.max_abs_input_error, std::abs(ex.input[k] - b[i]->features.task[k]));
                        }
                        set.y.push_back(ex.label);
                        ++out.stats.examples;
                        out.stats.label_matches += ex.label == b[i]->label;
                        out.stats.clamped += ex.clamped;
                        for (const auto& [id, t] : ex.inferred_times) {
                            out.abs_time_error_sum += std::abs(t - b[i]->true_times[stream_index(spec, id)]);
                            ++out.time_errors;
                        }
                    }
                    incs.push_back(std::move(set));
                }
                curve = pipeline::incremental_retrain(pretrain, incs, eval, cfg, ballsim::kNumClasses);
            } else {
                std::vector<learn::Matrix> unlabeled;
                for (const auto& b : batches) unlabeled.push_back(true_set(b).x);
                curve = pipeline::pseudo_label_baseline(pretrain, unlabeled, result.pseudo_threshold.at(seed), eval, cfg,
                                                        ballsim::kNumClasses);
            }
            emit(method, curve);
        }
    });

    double err_sum = 0.0;
    std::size_t err_n = 0;
    for (std::size_t j = 0; j < jobs.size(); ++j) {
        auto& o = outputs[j];
        result.rows.insert(result.rows.end(), o.rows.begin(), o.rows.end());
        result.self_labels.examples += o.stats.examples;
        result.self_labels.label_matches += o.stats.label_matches;
        result.self_labels.clamped += o.stats.clamped;
        result.self_labels.max_abs_input_error =
            std::max(result.self_labels.max_abs_input_error, o.stats.max_abs_input_error);
        err_sum += o.abs_time_error_sum;
        err_n += o.time_errors;
        for (const auto& method : spec.methods) {
            double last = 0.0;
            for (const auto& r : o.rows) {
                if (r.method == method) last = r.accuracy;
            }
            log({{"event", "job_done"}, {"fold", jobs[j].fold}, {"seed", jobs[j].seed}, {"method", method},
                 {"final_accuracy", last}});
        }
    }
    result.self_labels.mean_abs_time_error = err_n ? err_sum / static_cast<double>(err_n) : 0.0;
    return result;
}

std::vector<Aggregate> aggregate(const std::vector<ResultRow>& rows) {
    std::map<std::pair<std::string, int>, std::vector<double>> cells;
    std::vector<std::string> order;
    for (const auto& r : rows) {
        if (std::find(order.begin(), order.end(), r.method) == order.end()) order.push_back(r.method);
        cells[{r.method, r.increment}].push_back(r.accuracy);
    }
    std::vector<Aggregate> out;
    for (const auto& method : order) {
        for (const auto& [key, values] : cells) {
            if (key.first != method) continue;
            Aggregate a;
            a.method = method;
            a.increment = key.second;
            a.cells = static_cast<int>(values.size());
            a.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
            double ss = 0.0;
            for (double v : values) ss += (v - a.mean) * (v - a.mean);
            a.std = values.size() > 1 ? std::sqrt(ss / static_cast<double>(values.size() - 1)) : 0.0;
            out.push_back(a);
        }
    }
    return out;
}

void write_results_csv(std::ostream& os, const std::vector<ResultRow>& rows) {
    os << "fold,seed,increment,method,accuracy\n";
    for (const auto& r : rows) {
        csv::write_row(os, {std::to_string(r.fold), std::to_string(r.seed), std::to_string(r.increment), r.method,
                            csv::format_real(r.accuracy)});
    }
}

void write_aggregate_csv(std::ostream& os, const std::vector<Aggregate>& rows) {
    os << "method,increment,mean,std,cells\n";
    for (const auto& a : rows) {
        csv::write_row(os, {a.method, std::to_string(a.increment), csv::format_real(a.mean), csv::format_real(a.std),
                            std::to_string(a.cells)});
    }
}

}  // namespace slb::experiment
