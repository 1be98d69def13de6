#pragma once

// Self-labeling engine: detect effect events, infer per-cause interaction
// times, pick the matching cause samples and assemble labelled examples, then
// retrain incrementally.

#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "slb/causal.hpp"
#include "slb/learn.hpp"

namespace slb::pipeline {

struct StreamSample {
    double t = 0.0;
    std::vector<double> features;
};

using Stream = std::vector<StreamSample>;

/// Throws std::invalid_argument unless timestamps strictly increase.
void require_ordered(const Stream& s, const char* what);

struct EffectEvent {
    std::size_t id = 0;
    double t_detect = 0.0;
    int label = 0;
    std::vector<double> effect_features;
};

/// Maps an effect sample to a state id; an event fires whenever the id
/// changes, including at the first sample.
using EffectStateDetector = std::function<int(const StreamSample&)>;
/// Builds the ITM input for an event from its sample and label. The default
/// passes the sample features through.
using EventFeatureFn = std::function<std::vector<double>(const StreamSample&, int label)>;

std::vector<EffectEvent> detect_effect_events(const Stream& effect_stream, const EffectStateDetector& esd,
                                              const EventFeatureFn& features = {}, std::size_t first_id = 0);

/// An interaction-time model: effect features -> time lag.
using Itm = std::function<double(std::span<const double>)>;
using ItmMap = std::map<std::string, Itm>;

Itm itm_from_regressor(learn::Regressor r);

struct InferredTime {
    double value = 0.0;
    bool clamped = false;  // the raw value was negative
};

/// One time per plan binding. Throws std::invalid_argument when a binding has
/// no ITM.
std::map<std::string, InferredTime> infer_times(const EffectEvent& event, const causal::SelfLabelingPlan& plan,
                                                const ItmMap& itms);

struct WindowPick {
    StreamSample sample;
    std::size_t index = 0;
    double target = 0.0;
    bool clamped = false;  // the target fell outside the stream
};

/// The sample nearest t_detect - t_if; ties go to the earlier sample.
WindowPick sample_cause_window(const Stream& cause_stream, double t_detect, double t_if);

struct NoiseSpec {
    double esd_fraction = 0.0;
    double itm_error_mean = 0.0;
    double itm_error_variance = 0.0;
    std::uint64_t seed = 0;

    void validate() const;
};

struct SelfLabeledExample {
    std::vector<double> input;
    int label = 0;
    std::size_t event_id = 0;
    int detected_label = 0;  // before ESD noise
    bool label_altered = false;
    std::map<std::string, double> inferred_times;  // after ITM noise
    std::map<std::string, double> itm_errors;      // signed noise added per cause
    std::map<std::string, double> sampled_times;
    bool clamped = false;
};

/// Builds the task input from the sampled cause states, keyed by cause id.
using InputBuilder = std::function<std::vector<double>(const std::map<std::string, WindowPick>&)>;

/// Draws the noise for one event in a fixed order (ESD coin, ESD class, then
/// per binding a magnitude and a sign), so runs that differ only in noise
/// levels share their random numbers.
class NoiseSource {
public:
    NoiseSource(const NoiseSpec& spec, int n_classes);

    /// Returns the possibly replaced label and whether it changed.
    std::pair<int, bool> esd(int label);
    /// Signed additive error for one inferred time.
    double itm_error();

private:
    NoiseSpec spec_;
    int n_classes_;
    std::mt19937_64 rng_;
};

SelfLabeledExample self_label(const EffectEvent& event, const causal::SelfLabelingPlan& plan, const ItmMap& itms,
                              const std::map<std::string, const Stream*>& cause_streams, NoiseSource& noise,
                              const InputBuilder& build_input);

struct Observation {
    EffectEvent event;
    std::map<std::string, Stream> cause_streams;
};

std::vector<SelfLabeledExample> build_selflabeled_dataset(const std::vector<Observation>& observations,
                                                          const causal::SelfLabelingPlan& plan, const ItmMap& itms,
                                                          const NoiseSpec& noise, int n_classes,
                                                          const InputBuilder& build_input);

struct LabeledSet {
    learn::Matrix x;
    std::vector<int> y;

    std::size_t size() const { return y.size(); }
};

LabeledSet concat(const std::vector<const LabeledSet*>& parts);

/// Curve[0] is the pretrain-only accuracy; curve[k] follows a fresh retrain on
/// pretrain plus the first k increments.
std::vector<double> incremental_retrain(const LabeledSet& pretrain, const std::vector<LabeledSet>& increments,
                                        const LabeledSet& eval, const learn::MlpConfig& config, int n_classes);

/// Confidence-threshold pseudo-labelling: each round labels the increment's
/// inputs whose top probability exceeds the threshold, then retrains.
std::vector<double> pseudo_label_baseline(const LabeledSet& pretrain, const std::vector<learn::Matrix>& unlabeled,
                                          double threshold, const LabeledSet& eval, const learn::MlpConfig& config,
                                          int n_classes, std::vector<std::size_t>* admitted_per_round = nullptr);

/// Stratified fold assignment: fold id per item, classes dealt round-robin
/// after a seeded shuffle. Throws when a fold would hold fewer items than
/// there are classes.
std::vector<int> stratified_folds(std::span<const int> labels, int k, int n_classes, std::uint64_t seed);

}  // namespace slb::pipeline
