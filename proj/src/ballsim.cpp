#include "slb/ballsim.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <mutex>
#include <numbers>
#include <ostream>
#include <random>
#include <thread>

#include <nlohmann/json.hpp>

#include "slb/csv.hpp"

namespace slb::ballsim {

using nlohmann::json;

namespace {

template <class Config, class F>
void for_each_field(Config& c, F&& f) {
    f("surface_half_extent", c.surface_half_extent);
    f("spawn_region_half_extent", c.spawn_region_half_extent);
    f("ball_radius", c.ball_radius);
    f("restitution", c.restitution);
    f("gravity", c.gravity);
    f("timestep", c.timestep);
    f("wind_magnitude", c.wind_magnitude);
    f("wind_direction", c.wind_direction);
    f("wind_window_lo", c.wind_window_lo);
    f("wind_window_hi", c.wind_window_hi);
    f("wind_duration", c.wind_duration);
    f("penalty_velocity", c.penalty_velocity);
    f("settle_speed", c.settle_speed);
    f("settle_steps", c.settle_steps);
    f("max_duration", c.max_duration);
    f("ball1_height_lo", c.ball1_height_lo);
    f("ball1_height_hi", c.ball1_height_hi);
    f("ball2_height_lo", c.ball2_height_lo);
    f("ball2_height_hi", c.ball2_height_hi);
    f("hold_lo", c.hold_lo);
    f("hold_hi", c.hold_hi);
    f("drop_interval_max", c.drop_interval_max);
    f("spawn_offset_radius", c.spawn_offset_radius);
    f("bounce_friction", c.bounce_friction);
    f("ground_friction", c.ground_friction);
    f("rest_speed", c.rest_speed);
    f("seed", c.seed);
}

void require(bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(std::string("invalid simulation config: ") + what);
}

double planar_norm(const Vec3& v) { return std::hypot(v[0], v[1]); }

double norm(const Vec3& v) { return std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]); }

std::uint64_t splitmix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

struct Ball {
    BallState s;
    long release_step = 0;
    bool dropped = false;
    bool resting = false;
    int rebounds = 0;
    Vec3 penalty{};
};

}  // namespace

void SimConfig::validate() const {
    require(surface_half_extent > 0 && spawn_region_half_extent > 0, "extents must be positive");
    require(spawn_region_half_extent + spawn_offset_radius + ball_radius < surface_half_extent,
            "spawn region must lie inside the surface");
    require(ball_radius > 0, "ball radius must be positive");
    require(restitution > 0 && restitution < 1, "restitution must be in (0, 1)");
    require(gravity > 0, "gravity must be positive");
    require(timestep > 0, "timestep must be positive");
    // The shortest bounce period that still counts as a rebound is 2 * rest_speed / g.
    require(timestep < 0.1 * 2.0 * rest_speed / gravity, "timestep too coarse for the rest threshold");
    require(wind_magnitude >= 0, "wind magnitude must be non-negative");
    require(std::isfinite(wind_direction), "wind direction must be finite");
    require(wind_window_lo >= 0 && wind_window_lo <= wind_window_hi, "wind window must satisfy 0 <= lo <= hi");
    require(wind_duration >= 0, "wind duration must be non-negative");
    require(penalty_velocity >= 0, "penalty velocity must be non-negative");
    require(settle_speed > 0, "settle speed must be positive");
    require(settle_steps > 0, "settle steps must be positive");
    require(max_duration > 0, "max duration must be positive");
    require(ball1_height_lo > ball_radius && ball1_height_lo <= ball1_height_hi, "ball 1 height range");
    require(ball2_height_lo <= ball2_height_hi, "ball 2 height range");
    require(ball2_height_lo > ball1_height_hi, "ball 2 must spawn strictly above ball 1");
    require(hold_lo >= 0 && hold_lo <= hold_hi, "hold range");
    require(drop_interval_max >= 0, "drop interval must be non-negative");
    require(spawn_offset_radius >= 0, "spawn offset radius must be non-negative");
    require(bounce_friction >= 0 && ground_friction >= 0, "friction must be non-negative");
    require(rest_speed > 0, "rest speed must be positive");
}

json to_json(const SimConfig& c) {
    json j = json::object();
    for_each_field(c, [&](const char* name, const auto& v) { j[name] = v; });
    return j;
}

SimConfig sim_config_from_json(const json& j, SimConfig c) {
    if (!j.is_object()) throw std::invalid_argument("simulation config must be a JSON object");
    std::size_t known = 0;
    for_each_field(c, [&](const char* name, auto& v) {
        if (auto it = j.find(name); it != j.end()) {
            v = it->get<std::remove_reference_t<decltype(v)>>();
            ++known;
        }
    });
    if (known != j.size()) {
        for (const auto& [key, _] : j.items()) {
            bool found = false;
            for_each_field(c, [&](const char* name, auto&) { found = found || key == name; });
            if (!found) throw std::invalid_argument("unknown simulation config key '" + key + "'");
        }
    }
    c.validate();
    return c;
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream, std::uint64_t index) {
    return splitmix(splitmix(master ^ splitmix(stream * 0x632be59bd9b4e019ULL)) + index);
}

bool resolve_collision(BallState& a, BallState& b, double radius) {
    Vec3 d{}, rel{};
    double dist2 = 0.0, approach = 0.0;
    for (int k = 0; k < 3; ++k) {
        d[k] = b.position[k] - a.position[k];
        rel[k] = b.velocity[k] - a.velocity[k];
        dist2 += d[k] * d[k];
        approach += rel[k] * d[k];
    }
    if (dist2 >= 4.0 * radius * radius || approach >= 0.0 || dist2 == 0.0) return false;
    const double dist = std::sqrt(dist2);
    const double j = -approach / dist;  // normal closing speed
    for (int k = 0; k < 3; ++k) {
        const double n = d[k] / dist;
        a.velocity[k] -= j * n;
        b.velocity[k] += j * n;
    }
    return true;
}

EpisodeRecord simulate_episode(const SimConfig& cfg, std::uint64_t seed, const EpisodeOptions& opts) {
    cfg.validate();
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };
    constexpr double two_pi = 2.0 * std::numbers::pi;
    const double dt = cfg.timestep;
    const double r = cfg.ball_radius;
    const double g = cfg.gravity;

    // Every draw happens regardless of the configuration, so the same seed
    // gives the same geometry with and without wind.
    const double s = cfg.spawn_region_half_extent;
    const double x1 = uniform(-s, s), y1 = uniform(-s, s);
    double x2 = x1, y2 = y1;
    for (int attempt = 0; attempt < 64; ++attempt) {
        const double rad = cfg.spawn_offset_radius * std::sqrt(unit(rng));
        const double ang = uniform(0.0, two_pi);
        x2 = x1 + rad * std::cos(ang);
        y2 = y1 + rad * std::sin(ang);
        if (std::abs(x2) <= s && std::abs(y2) <= s) break;
    }
    x2 = std::clamp(x2, -s, s);
    y2 = std::clamp(y2, -s, s);
    const double h1 = uniform(cfg.ball1_height_lo, cfg.ball1_height_hi);
    const double h2 = uniform(cfg.ball2_height_lo, cfg.ball2_height_hi);
    const double hold = uniform(cfg.hold_lo, cfg.hold_hi);
    const double interval = uniform(0.0, cfg.drop_interval_max);
    const double pen1 = uniform(0.0, two_pi), pen2 = uniform(0.0, two_pi);
    const int wind_ball = unit(rng) < 0.5 ? 0 : 1;
    const double wind_frac = uniform(cfg.wind_window_lo, cfg.wind_window_hi);

    std::array<Ball, 2> balls;
    balls[0].s.position = {x1, y1, h1};
    balls[1].s.position = {x2, y2, h2};
    if (opts.spawn) {
        for (int i = 0; i < 2; ++i) {
            const auto& p = (*opts.spawn)[i];
            if (!(p[2] > r) || !std::isfinite(p[0]) || !std::isfinite(p[1])) {
                throw std::invalid_argument("spawn override must be finite and above the ground");
            }
            balls[i].s.position = p;
        }
    }
    balls[0].release_step = std::lround(hold / dt);
    balls[1].release_step = balls[0].release_step + std::lround(interval / dt);
    balls[0].penalty = {cfg.penalty_velocity * std::cos(pen1), cfg.penalty_velocity * std::sin(pen1), 0.0};
    balls[1].penalty = {cfg.penalty_velocity * std::cos(pen2), cfg.penalty_velocity * std::sin(pen2), 0.0};
    for (auto& b : balls) b.s.velocity = b.penalty;

    EpisodeRecord rec;
    rec.seed = seed;
    for (int i = 0; i < 2; ++i) rec.drop_times[i] = static_cast<double>(balls[i].release_step) * dt;

    long wind_begin = -1, wind_end = -1;
    Vec3 wind{};
    if (cfg.wind_magnitude > 0.0 && cfg.wind_duration > 0.0) {
        const double fall = std::sqrt(2.0 * (balls[wind_ball].s.position[2] - r) / g);
        wind_begin = balls[wind_ball].release_step + std::lround(wind_frac * fall / dt);
        wind_end = wind_begin + std::max(1L, std::lround(cfg.wind_duration / dt));
        wind = {cfg.wind_magnitude * std::cos(cfg.wind_direction), cfg.wind_magnitude * std::sin(cfg.wind_direction),
                0.0};
        rec.wind_ball = wind_ball;
        rec.wind_start = static_cast<double>(wind_begin) * dt;
    }

    const long max_steps = std::lround(cfg.max_duration / dt);
    if (opts.record_streams) {
        for (auto& cs : rec.cause_streams) cs.reserve(static_cast<std::size_t>(std::min(max_steps, 4000L)) + 1);
    }
    auto record = [&](long step) {
        const double t = static_cast<double>(step) * dt;
        for (int i = 0; i < 2; ++i) {
            if (opts.record_streams) rec.cause_streams[i].push_back({t, balls[i].s});
            if (step == balls[i].release_step) rec.initial_states[i] = balls[i].s;
        }
    };
    record(0);

    const double rest_decel = cfg.ground_friction * g * dt;
    long slow_run = 0;
    long step = 0;
    while (step < max_steps) {
        for (int i = 0; i < 2; ++i) {
            Ball& b = balls[i];
            auto& p = b.s.position;
            auto& v = b.s.velocity;
            if (step < b.release_step) {
                v = b.penalty;
                for (int k = 0; k < 3; ++k) p[k] += v[k] * dt;
                continue;
            }
            b.dropped = true;
            const bool windy = i == rec.wind_ball && step >= wind_begin && step < wind_end;
            if (windy) {
                v[0] += wind[0] * dt;
                v[1] += wind[1] * dt;
            }
            if (b.resting) {
                const double speed = std::hypot(v[0], v[1]);
                if (speed <= rest_decel) {
                    v[0] = v[1] = 0.0;
                } else {
                    v[0] *= 1.0 - rest_decel / speed;
                    v[1] *= 1.0 - rest_decel / speed;
                }
                v[2] = 0.0;
            } else {
                v[2] -= g * dt;
            }
            for (int k = 0; k < 3; ++k) p[k] += v[k] * dt;
        }

        for (Ball& b : balls) {
            auto& p = b.s.position;
            auto& v = b.s.velocity;
            if (!b.dropped || b.resting || p[2] >= r || v[2] >= 0.0) continue;
            const double incoming = -v[2];
            const double rebound = cfg.restitution * incoming;
            const double speed_h = std::hypot(v[0], v[1]);
            if (speed_h > 0.0) {
                const double cut = std::min(speed_h, cfg.bounce_friction * (1.0 + cfg.restitution) * incoming);
                v[0] *= 1.0 - cut / speed_h;
                v[1] *= 1.0 - cut / speed_h;
            }
            p[2] = r;
            if (rebound < cfg.rest_speed) {
                v[2] = 0.0;
                b.resting = true;
            } else {
                v[2] = rebound;
                ++b.rebounds;
            }
        }

        if (balls[0].dropped && balls[1].dropped && resolve_collision(balls[0].s, balls[1].s, r)) {
            rec.collided = true;
            // Either ball may have been knocked off the ground.
            balls[0].resting = balls[1].resting = false;
        }

        ++step;
        record(step);
        if (opts.observer) opts.observer(static_cast<double>(step) * dt, {balls[0].s, balls[1].s});

        const double edge = cfg.surface_half_extent;
        for (const Ball& b : balls) {
            if (std::abs(b.s.position[0]) > edge || std::abs(b.s.position[1]) > edge) rec.left_surface = true;
        }
        if (rec.left_surface) break;

        bool both_slow = true;
        for (const Ball& b : balls) both_slow = both_slow && b.dropped && b.resting && norm(b.s.velocity) < cfg.settle_speed;
        if (!both_slow) {
            slow_run = 0;
            rec.effect_stream.clear();
            continue;
        }
        if (slow_run++ == 0) rec.settle_time = static_cast<double>(step) * dt;
        EffectSample es;
        es.t = static_cast<double>(step) * dt;
        es.balls = {balls[0].s, balls[1].s};
        for (int k = 0; k < 3; ++k) es.distance[k] = balls[1].s.position[k] - balls[0].s.position[k];
        rec.effect_stream.push_back(es);
        if (slow_run >= cfg.settle_steps) {
            rec.settled = true;
            break;
        }
    }

    rec.steps = static_cast<std::uint64_t>(step);
    for (int i = 0; i < 2; ++i) {
        rec.final_states[i] = balls[i].s;
        rec.rebound_counts[i] = balls[i].rebounds;
    }
    for (int k = 0; k < 3; ++k) rec.distance_vector[k] = balls[1].s.position[k] - balls[0].s.position[k];
    if (rec.settled) {
        // The effect is read where the detector fires: the first resting sample.
        rec.final_states = rec.effect_stream.front().balls;
        rec.distance_vector = rec.effect_stream.front().distance;
    } else {
        rec.effect_stream.clear();
        rec.settle_time = static_cast<double>(step) * dt;
    }
    for (int i = 0; i < 2; ++i) rec.true_interaction_times[i] = rec.settle_time - rec.drop_times[i];
    if (opts.magnitude_threshold) {
        const auto cat = categorize_effect(rec.distance_vector, *opts.magnitude_threshold);
        rec.class_label = cat.label;
        rec.degenerate_label = cat.degenerate;
    }
    return rec;
}

Category categorize_effect(const Vec3& d, double threshold) {
    for (double c : d) {
        if (!std::isfinite(c)) throw std::invalid_argument("distance vector must be finite");
    }
    const double x = d[0], y = d[1];
    if (x == 0.0 && y == 0.0) return {0, true};
    int quadrant;
    if (x > 0.0 && y >= 0.0) {
        quadrant = 0;
    } else if (x <= 0.0 && y > 0.0) {
        quadrant = 1;
    } else if (x < 0.0 && y <= 0.0) {
        quadrant = 2;
    } else {
        quadrant = 3;
    }
    const int far = std::hypot(x, y) >= threshold ? 1 : 0;
    return {quadrant * 2 + far, false};
}

std::array<double, kTaskFeatures> task_input(const BallState& first, const BallState& second, double interval) {
    Vec3 d{};
    for (int k = 0; k < 3; ++k) d[k] = second.position[k] - first.position[k];
    return {norm(d), planar_norm(d), d[0], d[1], d[2], interval};
}

Features make_features(const EpisodeRecord& e) {
    if (!e.settled) throw std::invalid_argument("episode did not settle; it has no effect features");
    if (e.class_label < 0) throw std::invalid_argument("episode has no class label");
    Features f;
    f.task = task_input(e.initial_states[0], e.initial_states[1], e.drop_times[1] - e.drop_times[0]);
    std::size_t at = 0;
    for (const auto& b : e.final_states) {
        for (double c : b.position) f.itm[at++] = c;
    }
    for (const auto& b : e.final_states) {
        for (double c : b.velocity) f.itm[at++] = c;
    }
    for (double c : e.distance_vector) f.itm[at++] = c;
    f.itm[at++] = e.class_label;
    f.itm[at++] = e.rebound_counts[0];
    f.itm[at++] = e.rebound_counts[1];
    return f;
}

void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn) {
    const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, jobs)));
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(failure_mutex);
                    if (!failure) failure = std::current_exception();
                    next = n;
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

QuotaError::QuotaError(const std::string& split_name, std::array<int, kNumClasses> missing)
    : std::runtime_error([&] {
          std::string msg = "class quota unreachable for split '" + split_name + "'; shortfall per class:";
          for (int c = 0; c < kNumClasses; ++c) msg += " " + std::to_string(c) + ":" + std::to_string(missing[c]);
          return msg;
      }()),
      split(split_name),
      shortfall(missing) {}

namespace {

constexpr std::uint64_t kCalibrationStream = 1;
constexpr std::uint64_t kPretrainStream = 2;
constexpr std::uint64_t kValidationStream = 3;
constexpr std::uint64_t kTestStream = 4;
constexpr std::uint64_t kIncrementStream = 5;

struct WindFreeTally {
    std::uint64_t settled = 0;
    std::uint64_t collided = 0;
};

std::vector<EpisodeRecord> simulate_batch(const SimConfig& cfg, std::uint64_t stream, std::uint64_t first, std::size_t n,
                                          std::optional<double> threshold, int jobs) {
    std::vector<EpisodeRecord> out(n);
    EpisodeOptions opts;
    opts.record_streams = false;
    opts.magnitude_threshold = threshold;
    parallel_for(n, jobs, [&](std::size_t i) { out[i] = simulate_episode(cfg, derive_seed(cfg.seed, stream, first + i), opts); });
    return out;
}

Sample to_sample(const EpisodeRecord& e, const std::string& split, int increment, double wind) {
    Sample s;
    s.split = split;
    s.increment = increment;
    s.episode_seed = e.seed;
    s.wind = wind;
    s.features = make_features(e);
    s.label = e.class_label;
    s.true_times = e.true_interaction_times;
    s.drop_times = e.drop_times;
    s.settle_time = e.settle_time;
    s.collided = e.collided;
    return s;
}

}  // namespace

double calibrate_threshold(const SimConfig& config, int episodes, int jobs) {
    if (episodes <= 0) throw std::invalid_argument("calibration needs at least one episode");
    SimConfig calm = config;
    calm.wind_magnitude = 0.0;
    const auto batch = simulate_batch(calm, kCalibrationStream, 0, static_cast<std::size_t>(episodes), std::nullopt, jobs);
    std::vector<double> d;
    for (const auto& e : batch) {
        if (e.settled && !e.left_surface) d.push_back(planar_norm(e.distance_vector));
    }
    if (d.empty()) throw std::runtime_error("no calibration episode settled");
    std::sort(d.begin(), d.end());
    const std::size_t m = d.size() / 2;
    return d.size() % 2 ? d[m] : 0.5 * (d[m - 1] + d[m]);
}

DatasetSplit generate_dataset(const SimConfig& config, const SplitCounts& counts, const GenerateOptions& options) {
    config.validate();
    if (counts.pretrain <= 0 || counts.validation <= 0 || counts.test <= 0 || counts.increment_size <= 0 ||
        counts.increments < 0) {
        throw std::invalid_argument("split counts must be positive");
    }
    DatasetSplit out;
    out.config = config;
    out.threshold_auto = !options.magnitude_threshold;
    out.magnitude_threshold = options.magnitude_threshold
                                  ? *options.magnitude_threshold
                                  : calibrate_threshold(config, options.calibration_episodes, options.jobs);
    if (!(out.magnitude_threshold >= 0.0)) throw std::invalid_argument("magnitude threshold must be non-negative");

    SimConfig calm = config;
    calm.wind_magnitude = 0.0;
    WindFreeTally tally;

    // Episodes are simulated in parallel batches but accepted strictly in
    // index order, so the result does not depend on the worker count.
    auto fill = [&](const SimConfig& cfg, std::uint64_t stream, std::uint64_t& next_index, int count,
                    const std::string& name, int increment) {
        std::array<int, kNumClasses> quota{};
        for (int c = 0; c < kNumClasses; ++c) quota[c] = count / kNumClasses + (c < count % kNumClasses ? 1 : 0);
        std::vector<Sample> accepted;
        const std::uint64_t budget = static_cast<std::uint64_t>(count) * options.max_episodes_per_sample;
        std::uint64_t used = 0;
        const std::size_t batch = std::max<std::size_t>(64, static_cast<std::size_t>(count) * 2);
        while (static_cast<int>(accepted.size()) < count) {
            if (used >= budget) throw QuotaError(name, quota);
            const std::size_t n = static_cast<std::size_t>(std::min<std::uint64_t>(batch, budget - used));
            const auto episodes = simulate_batch(cfg, stream, next_index, n, out.magnitude_threshold, options.jobs);
            for (const auto& e : episodes) {
                ++next_index;
                ++used;
                ++out.episodes_simulated;
                if (cfg.wind_magnitude == 0.0 && e.settled && !e.left_surface) {
                    ++tally.settled;
                    tally.collided += e.collided;
                }
                if (!e.settled || e.left_surface) {
                    ++out.episodes_rejected_unsettled;
                    continue;
                }
                if (quota[e.class_label] == 0) continue;
                --quota[e.class_label];
                accepted.push_back(to_sample(e, name, increment, cfg.wind_magnitude));
                if (static_cast<int>(accepted.size()) == count) break;
            }
        }
        return accepted;
    };

    std::uint64_t idx_pre = 0, idx_val = 0, idx_test = 0, idx_inc = 0;
    out.pretrain = fill(calm, kPretrainStream, idx_pre, counts.pretrain, "pretrain", -1);
    out.validation = fill(calm, kValidationStream, idx_val, counts.validation, "validation", -1);
    out.test = fill(config, kTestStream, idx_test, counts.test, "test", -1);
    for (int k = 0; k < counts.increments; ++k) {
        out.increments.push_back(fill(config, kIncrementStream, idx_inc, counts.increment_size, "increment", k));
    }
    out.collision_rate = tally.settled ? static_cast<double>(tally.collided) / static_cast<double>(tally.settled) : 0.0;
    return out;
}

namespace {

const std::vector<std::string>& csv_header() {
    static const std::vector<std::string> h = [] {
        std::vector<std::string> cols{"split",  "increment", "episode_seed", "wind",     "dist3d", "dist_planar",
                                      "dx",     "dy",        "dz",           "interval"};
        for (const char* ball : {"b1", "b2"}) {
            for (const char* a : {"px", "py", "pz"}) cols.push_back(std::string(ball) + "_" + a);
        }
        for (const char* ball : {"b1", "b2"}) {
            for (const char* a : {"vx", "vy", "vz"}) cols.push_back(std::string(ball) + "_" + a);
        }
        for (const char* a : {"rel_x", "rel_y", "rel_z", "effect_class", "rebounds_1", "rebounds_2"}) cols.push_back(a);
        for (const char* a : {"label", "t_if_1", "t_if_2", "drop_1", "drop_2", "settle_time", "collided"}) {
            cols.push_back(a);
        }
        return cols;
    }();
    return h;
}

void write_sample(std::ostream& os, const Sample& s) {
    std::vector<std::string> cells{s.split, std::to_string(s.increment), std::to_string(s.episode_seed),
                                   csv::format_real(s.wind)};
    for (double v : s.features.task) cells.push_back(csv::format_real(v));
    for (double v : s.features.itm) cells.push_back(csv::format_real(v));
    cells.push_back(std::to_string(s.label));
    for (double v : s.true_times) cells.push_back(csv::format_real(v));
    for (double v : s.drop_times) cells.push_back(csv::format_real(v));
    cells.push_back(csv::format_real(s.settle_time));
    cells.push_back(s.collided ? "1" : "0");
    csv::write_row(os, cells);
}

}  // namespace

void write_dataset_csv(std::ostream& os, const DatasetSplit& d) {
    csv::write_row(os, csv_header());
    for (const auto& s : d.pretrain) write_sample(os, s);
    for (const auto& s : d.validation) write_sample(os, s);
    for (const auto& inc : d.increments) {
        for (const auto& s : inc) write_sample(os, s);
    }
    for (const auto& s : d.test) write_sample(os, s);
}

json dataset_manifest(const DatasetSplit& d) {
    std::vector<std::size_t> inc_sizes;
    for (const auto& inc : d.increments) inc_sizes.push_back(inc.size());
    return {{"kind", "ballsim_dataset"},
            {"config", to_json(d.config)},
            {"magnitude_threshold", d.magnitude_threshold},
            {"threshold_auto", d.threshold_auto},
            {"collision_rate", d.collision_rate},
            {"episodes_simulated", d.episodes_simulated},
            {"episodes_rejected_unsettled", d.episodes_rejected_unsettled},
            {"n_classes", kNumClasses},
            {"counts",
             {{"pretrain", d.pretrain.size()},
              {"validation", d.validation.size()},
              {"test", d.test.size()},
              {"increments", inc_sizes}}}};
}

DatasetSplit read_dataset(const std::string& csv_path, const std::string& manifest_path) {
    std::ifstream mf(manifest_path);
    if (!mf) throw std::runtime_error("cannot open dataset manifest '" + manifest_path + "'");
    const json m = json::parse(mf);
    if (m.value("kind", std::string()) != "ballsim_dataset") {
        throw std::runtime_error("'" + manifest_path + "' is not a dataset manifest");
    }
    DatasetSplit d;
    d.config = sim_config_from_json(m.at("config"));
    d.magnitude_threshold = m.at("magnitude_threshold").get<double>();
    d.threshold_auto = m.value("threshold_auto", false);
    d.collision_rate = m.value("collision_rate", 0.0);
    d.episodes_simulated = m.value("episodes_simulated", std::uint64_t{0});
    d.episodes_rejected_unsettled = m.value("episodes_rejected_unsettled", std::uint64_t{0});

    const auto table = csv::read_file(csv_path);
    if (table.header != csv_header()) throw std::runtime_error("'" + csv_path + "' has an unexpected header");
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        Sample s;
        std::size_t at = 0;
        s.split = row[at++];
        s.increment = std::stoi(row[at++]);
        s.episode_seed = std::stoull(row[at++]);
        s.wind = std::stod(row[at++]);
        for (double& v : s.features.task) v = std::stod(row[at++]);
        for (double& v : s.features.itm) v = std::stod(row[at++]);
        s.label = std::stoi(row[at++]);
        for (double& v : s.true_times) v = std::stod(row[at++]);
        for (double& v : s.drop_times) v = std::stod(row[at++]);
        s.settle_time = std::stod(row[at++]);
        s.collided = row[at++] == "1";
        if (s.label < 0 || s.label >= kNumClasses) {
            throw std::runtime_error(csv_path + ": row " + std::to_string(r + 2) + " has an invalid label");
        }
        if (s.split == "pretrain") {
            d.pretrain.push_back(std::move(s));
        } else if (s.split == "validation") {
            d.validation.push_back(std::move(s));
        } else if (s.split == "test") {
            d.test.push_back(std::move(s));
        } else if (s.split == "increment") {
            if (s.increment < 0) throw std::runtime_error(csv_path + ": increment row without an index");
            if (d.increments.size() <= static_cast<std::size_t>(s.increment)) d.increments.resize(s.increment + 1);
            d.increments[static_cast<std::size_t>(s.increment)].push_back(std::move(s));
        } else {
            throw std::runtime_error(csv_path + ": unknown split '" + s.split + "'");
        }
    }
    return d;
}

}  // namespace slb::ballsim
