#pragma once

// Two-ball drop simulation: rigid spheres under gravity, ground bounces with
// restitution, elastic ball-ball impacts, and an optional gust of wind on one
// ball. Produces cause streams (each ball from instantiation), an effect stream
// (joint state once both balls settle) and ground-truth interaction times.

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace slb::ballsim {

using Vec3 = std::array<double, 3>;

inline constexpr int kNumClasses = 8;
inline constexpr int kTaskFeatures = 6;
inline constexpr int kItmFeatures = 18;

struct SimConfig {
    double surface_half_extent = 75.0;
    double spawn_region_half_extent = 10.0;
    double ball_radius = 1.0;
    double restitution = 0.6;
    double gravity = 9.8;
    double timestep = 1.0 / 240.0;

    double wind_magnitude = 0.0;     // horizontal acceleration
    double wind_direction = 0.0;     // radians from +x
    double wind_window_lo = 0.1;     // window start, as a fraction of the expected fall time
    double wind_window_hi = 0.5;
    double wind_duration = 0.3;

    double penalty_velocity = 0.0025;
    double settle_speed = 0.01;
    int settle_steps = 24;
    double max_duration = 40.0;

    // Drop protocol.
    double ball1_height_lo = 8.0, ball1_height_hi = 14.0;
    double ball2_height_lo = 15.0, ball2_height_hi = 25.0;
    double hold_lo = 0.25, hold_hi = 0.75;  // time from instantiation to the first release
    double drop_interval_max = 0.5;
    double spawn_offset_radius = 2.83;      // ball 2 spawns within this planar distance of ball 1

    // Contact model.
    double bounce_friction = 0.01;  // Coulomb coefficient for the tangential impulse at a bounce
    double ground_friction = 0.3;   // sliding deceleration / gravity while resting
    double rest_speed = 0.5;        // rebounds slower than this end the bouncing

    std::uint64_t seed = 0;

    /// Throws std::invalid_argument when a field is out of range.
    void validate() const;
};

nlohmann::json to_json(const SimConfig& c);
/// Missing keys keep the values from `defaults`; unknown keys are rejected.
SimConfig sim_config_from_json(const nlohmann::json& j, SimConfig defaults = {});

struct BallState {
    Vec3 position{};
    Vec3 velocity{};
};

struct StreamPoint {
    double t = 0.0;
    BallState state;
};

struct EffectSample {
    double t = 0.0;
    std::array<BallState, 2> balls;
    Vec3 distance{};  // ball 1 -> ball 2
};

struct EpisodeRecord {
    std::uint64_t seed = 0;
    std::array<std::vector<StreamPoint>, 2> cause_streams;  // empty unless recorded
    std::vector<EffectSample> effect_stream;
    std::array<double, 2> drop_times{};
    std::array<BallState, 2> initial_states;  // state at release
    double settle_time = 0.0;
    bool settled = false;
    bool left_surface = false;
    bool collided = false;
    std::array<int, 2> rebound_counts{};
    std::array<BallState, 2> final_states;
    Vec3 distance_vector{};
    int class_label = -1;  // -1 until labelled
    bool degenerate_label = false;
    int wind_ball = -1;    // -1 when no wind blew
    double wind_start = 0.0;
    std::array<double, 2> true_interaction_times{};
    std::uint64_t steps = 0;
};

struct EpisodeOptions {
    bool record_streams = true;
    std::optional<double> magnitude_threshold;  // labels the episode when set
    /// Fixed spawn centres for both balls. The random draws still happen, so
    /// everything else matches the plain episode with the same seed.
    std::optional<std::array<Vec3, 2>> spawn;
    /// Called after every step with the time and both states (tests use it).
    std::function<void(double, const std::array<BallState, 2>&)> observer;
};

/// Deterministic given (config, seed). Unsettled episodes are flagged, not
/// thrown.
EpisodeRecord simulate_episode(const SimConfig& config, std::uint64_t seed, const EpisodeOptions& options = {});

/// Equal-mass elastic impulse when the spheres overlap and approach. Returns
/// whether an impulse was applied.
bool resolve_collision(BallState& a, BallState& b, double radius);

struct Category {
    int label = 0;
    bool degenerate = false;
};

/// Quadrant of the planar vector (lower boundary inclusive, from +x) times two
/// magnitude bins: label = quadrant * 2 + (|v| >= threshold).
Category categorize_effect(const Vec3& distance, double magnitude_threshold);

struct Features {
    std::array<double, kTaskFeatures> task{};
    std::array<double, kItmFeatures> itm{};
};

/// Task input from the release states; ITM features from the settled state.
/// Throws std::invalid_argument for unsettled or unlabelled episodes.
Features make_features(const EpisodeRecord& e);
std::array<double, kTaskFeatures> task_input(const BallState& first, const BallState& second, double interval);

/// Independent per-episode seeds from a master seed, a stream tag and an index.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream, std::uint64_t index);

struct Sample {
    std::string split;
    int increment = -1;
    std::uint64_t episode_seed = 0;
    double wind = 0.0;
    Features features;
    int label = 0;
    std::array<double, 2> true_times{};
    std::array<double, 2> drop_times{};
    double settle_time = 0.0;
    bool collided = false;
};

struct SplitCounts {
    int pretrain = 320;
    int validation = 320;
    int test = 1200;
    int increment_size = 120;
    int increments = 10;
};

struct DatasetSplit {
    std::vector<Sample> pretrain;
    std::vector<Sample> validation;
    std::vector<std::vector<Sample>> increments;
    std::vector<Sample> test;

    SimConfig config;
    double magnitude_threshold = 0.0;
    bool threshold_auto = false;
    double collision_rate = 0.0;  // over every simulated episode at wind 0
    std::uint64_t episodes_simulated = 0;
    std::uint64_t episodes_rejected_unsettled = 0;
};

struct QuotaError : std::runtime_error {
    QuotaError(const std::string& split, std::array<int, kNumClasses> shortfall);
    std::string split;
    std::array<int, kNumClasses> shortfall;
};

struct GenerateOptions {
    std::optional<double> magnitude_threshold;  // empty means auto
    int calibration_episodes = 500;
    int max_episodes_per_sample = 200;
    int jobs = 1;
};

/// Pretrain and validation splits come from the undisturbed domain (wind 0);
/// increments and test use the configured wind. Each split is class balanced.
DatasetSplit generate_dataset(const SimConfig& config, const SplitCounts& counts, const GenerateOptions& options = {});

/// Median planar distance over `episodes` wind-free episodes.
double calibrate_threshold(const SimConfig& config, int episodes, int jobs = 1);

void write_dataset_csv(std::ostream& os, const DatasetSplit& d);
nlohmann::json dataset_manifest(const DatasetSplit& d);
/// Reads a CSV + manifest pair written by the functions above.
DatasetSplit read_dataset(const std::string& csv_path, const std::string& manifest_path);

/// Runs fn(i) for i in [0, n) on up to `jobs` threads.
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn);

}  // namespace slb::ballsim
