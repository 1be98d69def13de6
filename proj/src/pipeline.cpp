#include "slb/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace slb::pipeline {

void require_ordered(const Stream& s, const char* what) {
    for (std::size_t i = 1; i < s.size(); ++i) {
        if (!(s[i].t > s[i - 1].t)) {
            throw std::invalid_argument(std::string(what) + " is not strictly time-ordered at sample " +
                                        std::to_string(i));
        }
    }
}

std::vector<EffectEvent> detect_effect_events(const Stream& effect_stream, const EffectStateDetector& esd,
                                              const EventFeatureFn& features, std::size_t first_id) {
    require_ordered(effect_stream, "effect stream");
    std::vector<EffectEvent> events;
    bool have_state = false;
    int state = 0;
    for (const auto& sample : effect_stream) {
        const int s = esd(sample);
        if (have_state && s == state) continue;
        have_state = true;
        state = s;
        EffectEvent e;
        e.id = first_id + events.size();
        e.t_detect = sample.t;
        e.label = s;
        e.effect_features = features ? features(sample, s) : sample.features;
        events.push_back(std::move(e));
    }
    return events;
}

Itm itm_from_regressor(learn::Regressor r) {
    return [model = std::move(r)](std::span<const double> x) { return model.predict(x); };
}

std::map<std::string, InferredTime> infer_times(const EffectEvent& event, const causal::SelfLabelingPlan& plan,
                                                const ItmMap& itms) {
    std::map<std::string, InferredTime> out;
    for (const auto& binding : plan.itm_bindings) {
        const auto it = itms.find(binding.cause_id);
        if (it == itms.end()) throw std::invalid_argument("no interaction-time model for cause '" + binding.cause_id + "'");
        const double raw = it->second(event.effect_features);
        if (!std::isfinite(raw)) throw std::runtime_error("interaction-time model for '" + binding.cause_id + "' returned a non-finite value");
        out[binding.cause_id] = raw < 0.0 ? InferredTime{0.0, true} : InferredTime{raw, false};
    }
    return out;
}

WindowPick sample_cause_window(const Stream& stream, double t_detect, double t_if) {
    if (stream.empty()) throw std::invalid_argument("cause stream is empty");
    WindowPick pick;
    pick.target = t_detect - t_if;
    const auto later = std::lower_bound(stream.begin(), stream.end(), pick.target,
                                        [](const StreamSample& s, double t) { return s.t < t; });
    std::size_t idx;
    if (later == stream.begin()) {
        idx = 0;
        pick.clamped = pick.target < stream.front().t;
    } else if (later == stream.end()) {
        idx = stream.size() - 1;
        pick.clamped = pick.target > stream.back().t;
    } else {
        const auto hi = static_cast<std::size_t>(later - stream.begin());
        const std::size_t lo = hi - 1;
        idx = pick.target - stream[lo].t <= stream[hi].t - pick.target ? lo : hi;
    }
    pick.index = idx;
    pick.sample = stream[idx];
    return pick;
}

void NoiseSpec::validate() const {
    if (!(esd_fraction >= 0.0 && esd_fraction <= 1.0)) throw std::invalid_argument("esd_fraction must lie in [0, 1]");
    if (!(itm_error_mean >= 0.0) || !(itm_error_variance >= 0.0)) {
        throw std::invalid_argument("ITM error mean and variance must be non-negative");
    }
}

NoiseSource::NoiseSource(const NoiseSpec& spec, int n_classes) : spec_(spec), n_classes_(n_classes), rng_(spec.seed) {
    spec.validate();
    if (n_classes <= 0) throw std::invalid_argument("need at least one class");
}

std::pair<int, bool> NoiseSource::esd(int label) {
    const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng_);
    const int redraw = std::uniform_int_distribution<int>(0, n_classes_ - 1)(rng_);
    if (u < spec_.esd_fraction) return {redraw, redraw != label};
    return {label, false};
}

double NoiseSource::itm_error() {
    const double z = std::normal_distribution<double>(0.0, 1.0)(rng_);
    const bool negative = std::uniform_int_distribution<int>(0, 1)(rng_) == 1;
    const double magnitude = spec_.itm_error_mean + std::sqrt(spec_.itm_error_variance) * z;
    return negative ? -magnitude : magnitude;
}

SelfLabeledExample self_label(const EffectEvent& event, const causal::SelfLabelingPlan& plan, const ItmMap& itms,
                              const std::map<std::string, const Stream*>& cause_streams, NoiseSource& noise,
                              const InputBuilder& build_input) {
    SelfLabeledExample ex;
    ex.event_id = event.id;
    ex.detected_label = event.label;
    std::tie(ex.label, ex.label_altered) = noise.esd(event.label);

    const auto times = infer_times(event, plan, itms);
    std::map<std::string, WindowPick> picks;
    for (const auto& binding : plan.itm_bindings) {
        const auto& id = binding.cause_id;
        const auto stream = cause_streams.find(id);
        if (stream == cause_streams.end() || stream->second == nullptr) {
            throw std::invalid_argument("no cause stream for '" + id + "'");
        }
        const double err = noise.itm_error();
        double t = times.at(id).value + err;
        if (times.at(id).clamped || t < 0.0) ex.clamped = true;
        t = std::max(t, 0.0);
        ex.itm_errors[id] = err;
        ex.inferred_times[id] = t;
        auto pick = sample_cause_window(*stream->second, event.t_detect, t);
        ex.clamped = ex.clamped || pick.clamped;
        ex.sampled_times[id] = pick.sample.t;
        picks.emplace(id, std::move(pick));
    }
    ex.input = build_input(picks);
    return ex;
}

std::vector<SelfLabeledExample> build_selflabeled_dataset(const std::vector<Observation>& observations,
                                                          const causal::SelfLabelingPlan& plan, const ItmMap& itms,
                                                          const NoiseSpec& noise, int n_classes,
                                                          const InputBuilder& build_input) {
    NoiseSource source(noise, n_classes);
    std::vector<SelfLabeledExample> out;
    out.reserve(observations.size());
    for (const auto& obs : observations) {
        std::map<std::string, const Stream*> streams;
        for (const auto& [id, s] : obs.cause_streams) {
            require_ordered(s, "cause stream");
            streams[id] = &s;
        }
        out.push_back(self_label(obs.event, plan, itms, streams, source, build_input));
    }
    return out;
}

LabeledSet concat(const std::vector<const LabeledSet*>& parts) {
    LabeledSet out;
    Eigen::Index rows = 0, cols = -1;
    for (const auto* p : parts) {
        if (p->x.rows() == 0) continue;
        if (cols >= 0 && p->x.cols() != cols) throw std::invalid_argument("cannot concatenate sets of different widths");
        cols = p->x.cols();
        rows += p->x.rows();
    }
    out.x.resize(rows, std::max<Eigen::Index>(cols, 0));
    Eigen::Index at = 0;
    for (const auto* p : parts) {
        if (p->x.rows() == 0) continue;
        out.x.middleRows(at, p->x.rows()) = p->x;
        at += p->x.rows();
        out.y.insert(out.y.end(), p->y.begin(), p->y.end());
    }
    return out;
}

std::vector<double> incremental_retrain(const LabeledSet& pretrain, const std::vector<LabeledSet>& increments,
                                        const LabeledSet& eval, const learn::MlpConfig& config, int n_classes) {
    if (pretrain.size() == 0) throw std::invalid_argument("pretrain set is empty");
    std::vector<double> curve;
    curve.push_back(learn::train_classifier(config, pretrain.x, pretrain.y, n_classes).accuracy(eval.x, eval.y));
    std::vector<const LabeledSet*> parts{&pretrain};
    for (const auto& inc : increments) {
        parts.push_back(&inc);
        const auto all = concat(parts);
        curve.push_back(learn::train_classifier(config, all.x, all.y, n_classes).accuracy(eval.x, eval.y));
    }
    return curve;
}

std::vector<double> pseudo_label_baseline(const LabeledSet& pretrain, const std::vector<learn::Matrix>& unlabeled,
                                          double threshold, const LabeledSet& eval, const learn::MlpConfig& config,
                                          int n_classes, std::vector<std::size_t>* admitted_per_round) {
    if (pretrain.size() == 0) throw std::invalid_argument("pretrain set is empty");
    if (!(threshold >= 0.0 && threshold <= 1.0)) throw std::invalid_argument("confidence threshold must lie in [0, 1]");
    auto model = learn::train_classifier(config, pretrain.x, pretrain.y, n_classes);
    std::vector<double> curve{model.accuracy(eval.x, eval.y)};
    std::vector<LabeledSet> admitted;
    for (const auto& batch : unlabeled) {
        const learn::Matrix p = model.predict_probabilities(batch);
        LabeledSet take;
        std::vector<Eigen::Index> rows;
        for (Eigen::Index r = 0; r < p.rows(); ++r) {
            Eigen::Index best = 0;
            const double top = p.row(r).maxCoeff(&best);
            if (top > threshold) {
                rows.push_back(r);
                take.y.push_back(static_cast<int>(best));
            }
        }
        take.x.resize(static_cast<Eigen::Index>(rows.size()), batch.cols());
        for (std::size_t i = 0; i < rows.size(); ++i) take.x.row(static_cast<Eigen::Index>(i)) = batch.row(rows[i]);
        if (admitted_per_round) admitted_per_round->push_back(take.y.size());
        admitted.push_back(std::move(take));
        if (!admitted.back().y.empty()) {
            std::vector<const LabeledSet*> parts{&pretrain};
            for (const auto& a : admitted) parts.push_back(&a);
            const auto all = concat(parts);
            model = learn::train_classifier(config, all.x, all.y, n_classes);
        }
        curve.push_back(model.accuracy(eval.x, eval.y));
    }
    return curve;
}

std::vector<int> stratified_folds(std::span<const int> labels, int k, int n_classes, std::uint64_t seed) {
    if (k < 2) throw std::invalid_argument("need at least two folds");
    if (labels.size() / static_cast<std::size_t>(k) < static_cast<std::size_t>(n_classes)) {
        throw std::invalid_argument("fold size " + std::to_string(labels.size() / k) + " is smaller than the " +
                                    std::to_string(n_classes) + " classes");
    }
    std::vector<std::size_t> order(labels.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return labels[a] < labels[b]; });
    std::vector<int> fold(labels.size());
    // Dealing continues across class boundaries so fold sizes differ by at most one.
    for (std::size_t i = 0; i < order.size(); ++i) fold[order[i]] = static_cast<int>(i % static_cast<std::size_t>(k));
    return fold;
}

}  // namespace slb::pipeline
