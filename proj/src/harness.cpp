#include "gustdock/harness.hpp"

#include "gustdock/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace gustdock {

// ---------------------------------------------------------------------------
// Scenarios
// ---------------------------------------------------------------------------

const char* to_string(CethMode m) { return m == CethMode::active ? "active" : "inactive"; }
const char* to_string(VelocityModel m) { return m == VelocityModel::tcn ? "tcn" : "constant"; }
const char* to_string(GustPolicy p) {
    switch (p) {
        case GustPolicy::no_abort: return "no_abort";
        case GustPolicy::abort: return "abort";
        case GustPolicy::safety_position: return "safety_position";
    }
    return "unknown";
}

std::string Scenario::name() const {
    return std::string(to_string(ceth)) + "-" + to_string(velocity) + "-" + to_string(policy);
}

void Scenario::validate() const {
    if (policy == GustPolicy::abort && ceth == CethMode::inactive)
        throw std::invalid_argument("scenario: abort requires an active avoidance field");
}

Scenario scenario_from_string(const std::string& name) {
    for (CethMode c : {CethMode::inactive, CethMode::active})
        for (VelocityModel v : {VelocityModel::constant, VelocityModel::tcn})
            for (GustPolicy p : {GustPolicy::no_abort, GustPolicy::abort, GustPolicy::safety_position}) {
                const Scenario s{c, v, p};
                if (s.name() == name) {
                    s.validate();
                    return s;
                }
            }
    throw std::invalid_argument("unknown scenario '" + name + "'");
}

std::vector<Scenario> all_scenarios() {
    using enum GustPolicy;
    return {
        {CethMode::inactive, VelocityModel::constant, no_abort},
        {CethMode::inactive, VelocityModel::constant, safety_position},
        {CethMode::active, VelocityModel::constant, no_abort},
        {CethMode::active, VelocityModel::constant, abort},
        {CethMode::active, VelocityModel::constant, safety_position},
        {CethMode::active, VelocityModel::tcn, no_abort},
        {CethMode::active, VelocityModel::tcn, abort},
        {CethMode::active, VelocityModel::tcn, safety_position},
    };
}

const char* to_string(EndReason r) {
    switch (r) {
        case EndReason::docked: return "docked";
        case EndReason::collision: return "collision";
        case EndReason::trace_end: return "trace_end";
        case EndReason::timeout: return "timeout";
    }
    return "unknown";
}

// ---------------------------------------------------------------------------
// Forecast cache
// ---------------------------------------------------------------------------

ForecastCache::ForecastCache(const TcnModel& model, int horizon, int n_fade, std::size_t batch)
    : model_(&model), horizon_(horizon), n_fade_(n_fade), batch_(std::max<std::size_t>(batch, 1)) {
    if (horizon < 1) throw std::invalid_argument("forecast cache: horizon must be >= 1");
}

ForecastCache::Key ForecastCache::key_of(const FeatureSequence& seed) {
    // Two independent FNV-1a style streams over the raw bytes.
    std::uint64_t a = 0xcbf29ce484222325ULL;
    std::uint64_t b = 0x84222325cbf29ce4ULL;
    for (Eigen::Index i = 0; i < seed.size(); ++i) {
        std::uint64_t bits;
        const double v = seed.data()[i];
        std::memcpy(&bits, &v, sizeof bits);
        a = (a ^ bits) * 0x100000001b3ULL;
        b = mix_seed(b, bits);
    }
    return {a, b};
}

const std::vector<FeatureFrame>& ForecastCache::at(const FeatureSequence& features, Eigen::Index end) {
    const int T = model_->architecture().seq_len;
    const FeatureSequence seed = seed_window(features, end, T);
    const Key key = key_of(seed);
    if (auto it = map_.find(key); it != map_.end()) return it->second;

    // Fill this tick and the following ones in one batch.
    std::vector<FeatureSequence> seeds;
    std::vector<Key> keys;
    for (Eigen::Index k = end; k < features.rows() && seeds.size() < batch_; ++k) {
        FeatureSequence s = k == end ? seed : seed_window(features, k, T);
        const Key kk = key_of(s);
        if (map_.count(kk) || std::find(keys.begin(), keys.end(), kk) != keys.end()) continue;
        keys.push_back(kk);
        seeds.push_back(std::move(s));
    }
    auto out = predict_recursive_batch(*model_, seeds, horizon_, n_fade_);
    misses_ += seeds.size();
    for (std::size_t i = 0; i < keys.size(); ++i) map_.emplace(keys[i], std::move(out[i]));
    return map_.at(key);
}

// ---------------------------------------------------------------------------
// Episode runner
// ---------------------------------------------------------------------------

namespace {

std::vector<Vec3> velocities(const std::vector<FeatureFrame>& frames, std::size_t count) {
    std::vector<Vec3> v;
    v.reserve(std::min(count, frames.size()));
    for (std::size_t i = 0; i < frames.size() && i < count; ++i) v.emplace_back(frames[i](0), frames[i](1), frames[i](2));
    return v;
}

// Trapezoid integration of a predicted velocity series from p0; v0 is the
// current velocity and forecast[j] the velocity one step after forecast[j-1].
std::vector<Vec3> integrate_path(const Vec3& p0, const Vec3& v0, const std::vector<Vec3>& forecast, double dt) {
    std::vector<Vec3> p{p0};
    Vec3 prev = v0;
    for (const Vec3& v : forecast) {
        p.push_back(p.back() + 0.5 * dt * (prev + v));
        prev = v;
    }
    return p;
}

// Reference along a stored path starting at `index` (saturating at `limit`),
// velocities by finite differences.
ReferenceTrajectory path_reference(const std::vector<Vec3>& path, std::size_t index, std::size_t limit,
                                   const Vec3& offset, int N, double dt) {
    ReferenceTrajectory ref;
    auto at = [&](std::size_t i) { return path[std::min(i, limit)] + offset; };
    for (int k = 0; k <= N; ++k) {
        const std::size_t i = index + static_cast<std::size_t>(k);
        const Vec3 p = at(i);
        const Vec3 v = (at(i + 1) - p) / dt;
        ref.z.push_back((Vec6() << p, v).finished());
    }
    return ref;
}

}  // namespace

DetectionResult detect_gust(ForecastCache& forecasts, const FeatureSequence& features, Eigen::Index end,
                            const HarnessConfig& config) {
    const auto n = static_cast<std::size_t>(std::min(forecasts.horizon(), config.episode.forecast_steps));
    return detect(velocities(forecasts.at(features, end), n), config.detection);
}

EpisodeResult run_episode(const Scenario& scenario, const Episode& episode, const EpisodeContext& ctx,
                          std::vector<TraceRow>* trace) {
    scenario.validate();
    if (!ctx.config) throw std::invalid_argument("run_episode: missing config");
    const HarnessConfig& cfg = *ctx.config;
    if (scenario.needs_forecast() && (!ctx.model || !ctx.forecasts))
        throw std::invalid_argument("run_episode: scenario " + scenario.name() + " needs a trained TCN model");
    if (scenario.ceth == CethMode::active && (!ctx.lut || ctx.lut->empty()))
        throw std::invalid_argument("run_episode: active avoidance needs a hull LUT");
    if (episode.blimp_trace.empty()) throw std::invalid_argument("run_episode: empty blimp trace");

    const double dt = cfg.plant.dt;
    const int N = cfg.mpc.N;
    const EpisodeSettings& es = cfg.episode;
    const FeatureSequence features = scenario.needs_forecast() ? episode_features(episode) : FeatureSequence();
    const auto n_frames = static_cast<std::ptrdiff_t>(episode.blimp_trace.size());
    const auto k0 = static_cast<std::ptrdiff_t>(std::llround(es.start_offset / dt));
    if (k0 >= n_frames) throw std::invalid_argument("run_episode: start offset beyond the trace");

    // Marker noise depends on the episode and the config seed only, so every
    // scenario sees the same observation stream.
    Rng marker_rng(mix_seed(cfg.seed, mix_seed(episode.spec.seed, 0x3a7e)));

    UavState uav{es.uav_start, Vec3::Zero(), static_cast<double>(k0) * dt};
    BiasState bias = cfg.ekf.initial_state();
    LowPass lowpass;
    MpcPlanner planner(cfg.mpc, cfg.qp);
    std::optional<Vec3> tang_fallback;
    double grad_norm = 0.0;
    double closed_until = -std::numeric_limits<double>::infinity();
    SafetySlider slider;
    std::vector<Vec3> frozen_path;
    std::size_t frozen_limit = 0;
    const double lag = es.lag_compensation ? dt * (1.0 - cfg.ekf.alpha) / cfg.ekf.alpha : 0.0;
    const Vec3 hold_offset = safety_offset(cfg.corridor);

    EpisodeResult res;
    res.min_clearance = std::numeric_limits<double>::infinity();
    bool corridor_open = true;
    for (std::ptrdiff_t k = k0;; ++k) {
        const double elapsed = static_cast<double>(k - k0) * dt;
        if (elapsed > es.timeout + 1e-9) {
            res.end = EndReason::timeout;
            break;
        }
        if (k >= n_frames) {
            res.end = EndReason::trace_end;
            break;
        }
        const BlimpState& blimp = episode.blimp_trace[static_cast<std::size_t>(k)];
        const double t = blimp.time;
        const Vec3 true_port = port_world(blimp, cfg.zone);

        // Bookkeeping on the current state, against the true geometry.
        const HullSample truth = distance_and_normal(world_to_body(uav.position, blimp), cfg.zone);
        const bool in_open_corridor = corridor_open && in_corridor(uav.position, cfg.corridor, blimp, cfg.zone);
        res.min_clearance = std::min(res.min_clearance, truth.distance);
        ++res.ticks;
        if (truth.inside_zone && !in_open_corridor) {
            res.collision = true;
            res.end = EndReason::collision;
        } else if (is_docked(uav, true_port, cfg.docking)) {
            res.success = true;
            res.duration = elapsed;
            res.end = EndReason::docked;
        }
        TraceRow row;
        row.t = t;
        row.uav = uav;
        row.blimp = blimp;
        row.clearance = truth.distance;
        row.corridor_open = corridor_open;
        if (res.collision || res.success) {
            if (trace) trace->push_back(row);
            break;
        }

        // (1) Port estimate: shared (offset) estimate corrected by the marker bias.
        const Vec3 shared = true_port + es.gps_offset;
        bias = predict(bias, dt, cfg.ekf.q_proc);
        bias = update(bias, synthesize_marker(true_port, t, cfg.ekf, marker_rng), shared, cfg.ekf.r_meas);
        Vec3 port_est;
        std::tie(port_est, lowpass) = corrected_port(shared, bias, lowpass, cfg.ekf.alpha);
        port_est += lag * blimp.velocity;
        BlimpState blimp_est = blimp;
        blimp_est.position += port_est - true_port;

        // (2) Velocity prediction.
        const std::vector<FeatureFrame>* forecast =
            scenario.needs_forecast() ? &ctx.forecasts->at(features, static_cast<Eigen::Index>(k)) : nullptr;
        const std::vector<Vec3> v_fc =
            forecast ? velocities(*forecast, static_cast<std::size_t>(ctx.forecasts->horizon())) : std::vector<Vec3>{};

        // (3) Detection and (4) gust policy.
        if (scenario.needs_detection()) {
            const DetectionResult det = detect_gust(*ctx.forecasts, features, static_cast<Eigen::Index>(k), cfg);
            if (det.gust_detected) {
                row.gust_flag = true;
                ++res.gust_flag_ticks;
                if (t >= closed_until || slider.index >= frozen_limit) {
                    // New closure, or a re-flag after the slider ran out of
                    // path: freeze the current predicted port path.
                    // The hold path follows the scenario's velocity model.
                    const std::vector<Vec3> v_path = scenario.velocity == VelocityModel::tcn
                                                         ? v_fc
                                                         : std::vector<Vec3>(v_fc.size(), blimp.velocity);
                    frozen_path = integrate_path(port_est, blimp.velocity, v_path, dt);
                    frozen_limit = std::min(frozen_path.size() - 1,
                                            static_cast<std::size_t>(std::llround(*det.subsided_after / dt)));
                    slider = SafetySlider{};
                }
                closed_until = std::max(closed_until, t + *det.subsided_after);
            }
        }
        const bool gust_active = t < closed_until;
        corridor_open = scenario.policy == GustPolicy::no_abort || !gust_active;

        ReferenceTrajectory ref;
        if (scenario.policy == GustPolicy::safety_position && gust_active) {
            DetectionResult frozen;
            frozen.gust_detected = true;
            frozen.subsided_after = static_cast<double>(frozen_limit) * dt;
            Vec3 hold;
            std::tie(hold, slider) = safety_position(frozen_path, frozen, slider, cfg.corridor, true, 1.0 / dt);
            ref = path_reference(frozen_path, slider.index, frozen_limit, hold_offset, N, dt);
            row.target = hold;
        } else {
            slider = SafetySlider{};
            const Vec3 anchor = docking_target(port_est, cfg.docking);
            if (scenario.velocity == VelocityModel::tcn) {
                std::vector<Vec3> v{blimp.velocity};
                v.insert(v.end(), v_fc.begin(), v_fc.begin() + N);
                ref = reference_from_velocity(v, anchor, dt, N);
            } else {
                ref = constant_velocity_reference(blimp.velocity, anchor, N, dt);
            }
        }

        // (5) Avoidance field on the estimated blimp pose.
        Vec3 f = Vec3::Zero();
        Region region = Region::free;
        if (scenario.ceth == CethMode::active) {
            const CethResult c = ceth_force(uav, blimp_est, port_est, *ctx.lut, corridor_open, grad_norm, cfg.ceth,
                                            cfg.corridor, tang_fallback);
            f = c.f;
            region = c.region;
            tang_fallback = c.fallback;
        }

        // (6) Plan.
        const Vec6 x0 = (Vec6() << uav.position, uav.velocity).finished();
        const PlannedTrajectory plan = planner.plan(x0, ref, std::vector<Vec3>(static_cast<std::size_t>(N), f),
                                                    region == Region::hull ? WeightMode::reduced : WeightMode::full);
        if (plan.reused || plan.status != QpStatus::solved) ++res.qp_failures;
        grad_norm = cost_gradient_norm(plan, ref, cfg.mpc);

        // (7) Target and (8) command.
        const Vec3 waypoint = extract_target(plan, uav, region, cfg.target);
        if (!(scenario.policy == GustPolicy::safety_position && gust_active)) row.target = waypoint;
        Vec3 accel;
        if (es.command == CommandMode::plan_acceleration) {
            accel = plan.u_star.front().a + f;
        } else {
            const Vec3 v_ref = ref.z.front().tail<3>();
            accel = es.waypoint_kp * (waypoint - uav.position) + es.waypoint_kd * (v_ref - uav.velocity);
            accel = accel.cwiseMax(cfg.uav_limits.a_min).cwiseMin(cfg.uav_limits.a_max);
        }
        row.force = f;
        row.region = region;
        if (trace) trace->push_back(row);
        uav = step_uav(uav, accel, dt, cfg.uav_limits);
    }
    return res;
}

// ---------------------------------------------------------------------------
// Traces and reports
// ---------------------------------------------------------------------------

void write_trace(const std::filesystem::path& file, const std::vector<TraceRow>& rows) {
    std::ofstream out(file, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + file.string());
    out << "t,uav_px,uav_py,uav_pz,uav_vx,uav_vy,uav_vz,blimp_px,blimp_py,blimp_pz,blimp_vx,blimp_vy,blimp_vz,"
           "roll,pitch,yaw,f_x,f_y,f_z,region,gust_flag,corridor_open,target_x,target_y,target_z,clearance\n";
    for (const TraceRow& r : rows) {
        out << fmt_double(r.t) << ',' << fmt_vec(r.uav.position) << ',' << fmt_vec(r.uav.velocity) << ','
            << fmt_vec(r.blimp.position) << ',' << fmt_vec(r.blimp.velocity) << ',' << fmt_double(r.blimp.euler.roll)
            << ',' << fmt_double(r.blimp.euler.pitch) << ',' << fmt_double(r.blimp.euler.yaw) << ','
            << fmt_vec(r.force) << ',' << to_string(r.region) << ',' << (r.gust_flag ? 1 : 0) << ','
            << (r.corridor_open ? 1 : 0) << ',' << fmt_vec(r.target) << ',' << fmt_double(r.clearance) << '\n';
    }
}

ScenarioSummary summarize(const Scenario& scenario, const std::vector<EpisodeResult>& results) {
    ScenarioSummary s;
    s.scenario = scenario;
    s.episodes = results.size();
    std::vector<double> d;
    for (const auto& r : results) {
        if (r.success) {
            ++s.successes;
            d.push_back(*r.duration);
        }
        if (r.collision) ++s.collisions;
    }
    s.success_pct = s.episodes ? 100.0 * static_cast<double>(s.successes) / static_cast<double>(s.episodes) : 0.0;
    if (!d.empty()) {
        const double n = static_cast<double>(d.size());
        const double mean = std::accumulate(d.begin(), d.end(), 0.0) / n;
        double var = 0.0;
        for (double x : d) var += (x - mean) * (x - mean);
        s.duration_mean = mean;
        s.duration_std = std::sqrt(var / n);
        s.duration_min = *std::min_element(d.begin(), d.end());
        s.duration_max = *std::max_element(d.begin(), d.end());
    }
    return s;
}

MatrixReport run_matrix(const std::vector<Scenario>& scenarios, const std::vector<Episode>& episodes,
                        const EpisodeContext& ctx, const std::optional<std::filesystem::path>& trace_dir) {
    if (episodes.empty()) throw std::invalid_argument("run_matrix: no episodes");
    if (trace_dir) std::filesystem::create_directories(*trace_dir);
    MatrixReport report;
    for (const Scenario& s : scenarios) {
        std::vector<EpisodeResult> results;
        for (std::size_t e = 0; e < episodes.size(); ++e) {
            std::vector<TraceRow> rows;
            EpisodeResult r = run_episode(s, episodes[e], ctx, trace_dir ? &rows : nullptr);
            if (trace_dir) {
                char name[96];
                std::snprintf(name, sizeof name, "trace_%s_%04zu.csv", s.name().c_str(), e);
                r.trace_file = *trace_dir / name;
                write_trace(r.trace_file, rows);
            }
            results.push_back(std::move(r));
        }
        report.rows.push_back(summarize(s, results));
        report.results.push_back(std::move(results));
    }
    return report;
}

namespace {
std::string opt(const std::optional<double>& v) { return v ? fmt_double(*v) : "NA"; }
}  // namespace

void write_report(std::ostream& out, const MatrixReport& report) {
    out << "# gustdock matrix report v1\n";
    out << "scenarios = " << report.rows.size() << '\n';
    for (const ScenarioSummary& s : report.rows) {
        const std::string p = "scenario." + s.scenario.name() + ".";
        out << p << "episodes = " << s.episodes << '\n';
        out << p << "successes = " << s.successes << '\n';
        out << p << "collisions = " << s.collisions << '\n';
        out << p << "success_pct = " << fmt_double(s.success_pct) << '\n';
        out << p << "duration_mean = " << opt(s.duration_mean) << '\n';
        out << p << "duration_std = " << opt(s.duration_std) << '\n';
        out << p << "duration_min = " << opt(s.duration_min) << '\n';
        out << p << "duration_max = " << opt(s.duration_max) << '\n';
    }
}

void write_report(const std::filesystem::path& file, const MatrixReport& report) {
    std::ofstream out(file, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + file.string());
    write_report(out, report);
}

void write_episode_table(const std::filesystem::path& file, const MatrixReport& report,
                         const std::vector<Episode>& episodes) {
    std::ofstream out(file, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + file.string());
    out << "scenario,episode,seed,success,collision,duration,min_clearance,end,ticks,gust_flag_ticks,qp_failures,trace\n";
    for (std::size_t s = 0; s < report.rows.size(); ++s)
        for (std::size_t e = 0; e < report.results[s].size(); ++e) {
            const EpisodeResult& r = report.results[s][e];
            out << report.rows[s].scenario.name() << ',' << e << ',' << (e < episodes.size() ? episodes[e].spec.seed : 0)
                << ',' << r.success << ',' << r.collision << ',' << opt(r.duration) << ','
                << fmt_double(r.min_clearance) << ',' << to_string(r.end) << ',' << r.ticks << ','
                << r.gust_flag_ticks << ',' << r.qp_failures << ',' << r.trace_file.filename().string() << '\n';
        }
}

// ---------------------------------------------------------------------------
// Rolling MSE
// ---------------------------------------------------------------------------

std::array<double, 3> rolling_mse_of(const std::vector<Vec3>& truth, const std::vector<std::vector<Vec3>>& forecasts,
                                     int N, int K) {
    const auto T = static_cast<long>(truth.size());
    const long W = T - N - K;
    if (N < 1 || K < 0 || W < 1) throw std::invalid_argument("rolling_mse: trace too short for K + N");
    if (static_cast<long>(forecasts.size()) < T - N) throw std::invalid_argument("rolling_mse: missing forecasts");
    std::array<double, 3> acc{0.0, 0.0, 0.0};
    for (long i = K; i < T - N; ++i) {
        const auto& f = forecasts[static_cast<std::size_t>(i)];
        if (static_cast<long>(f.size()) < N) throw std::invalid_argument("rolling_mse: forecast shorter than N");
        for (int j = 0; j < N; ++j) {
            const Vec3 e = f[static_cast<std::size_t>(j)] - truth[static_cast<std::size_t>(i + j)];
            for (int d = 0; d < 3; ++d) acc[static_cast<std::size_t>(d)] += e[d] * e[d];
        }
    }
    for (double& a : acc) a /= static_cast<double>(W) * N;
    return acc;
}

RollingMse rolling_mse(VelocityModel predictor, const std::vector<Episode>& episodes, const TcnModel* model, int N,
                       int K, int n_fade) {
    if (episodes.empty()) throw std::invalid_argument("rolling_mse: no episodes");
    if (predictor == VelocityModel::tcn && !model) throw std::invalid_argument("rolling_mse: TCN predictor needs a model");
    RollingMse out;
    std::map<double, std::pair<std::array<double, 3>, int>> groups;
    for (const Episode& ep : episodes) {
        std::vector<Vec3> truth;
        for (const auto& b : ep.blimp_trace) truth.push_back(b.velocity);
        const auto T = static_cast<long>(truth.size());
        if (T - N - K < 1) throw std::invalid_argument("rolling_mse: trace too short for K + N");
        std::vector<std::vector<Vec3>> fc(static_cast<std::size_t>(T - N));
        if (predictor == VelocityModel::constant) {
            for (long i = K; i < T - N; ++i) fc[static_cast<std::size_t>(i)].assign(static_cast<std::size_t>(N), truth[static_cast<std::size_t>(i)]);
        } else {
            const FeatureSequence features = episode_features(ep);
            const int L = model->architecture().seq_len;
            constexpr long kChunk = 256;
            for (long start = K; start < T - N; start += kChunk) {
                std::vector<FeatureSequence> seeds;
                for (long i = start; i < std::min(T - N, start + kChunk); ++i) seeds.push_back(seed_window(features, i, L));
                const auto roll = N > 1 ? predict_recursive_batch(*model, seeds, N - 1, n_fade)
                                        : std::vector<std::vector<FeatureFrame>>(seeds.size());
                for (std::size_t s = 0; s < seeds.size(); ++s) {
                    const long i = start + static_cast<long>(s);
                    auto& f = fc[static_cast<std::size_t>(i)];
                    f.push_back(truth[static_cast<std::size_t>(i)]);
                    for (const auto& fr : roll[s]) f.emplace_back(fr(0), fr(1), fr(2));
                }
            }
        }
        const auto r = rolling_mse_of(truth, fc, N, K);
        out.per_episode.push_back(r);
        out.windows += static_cast<std::size_t>(T - N - K);
        auto& g = groups[ep.spec.v_max];
        for (std::size_t d = 0; d < 3; ++d) g.first[d] += r[d];
        ++g.second;
    }
    for (const auto& r : out.per_episode)
        for (std::size_t d = 0; d < 3; ++d) out.axis[d] += r[d] / static_cast<double>(out.per_episode.size());
    for (auto& [v, g] : groups) {
        std::array<double, 3> m{};
        for (std::size_t d = 0; d < 3; ++d) m[d] = g.first[d] / g.second;
        out.by_v_max[v] = m;
    }
    return out;
}

}  // namespace gustdock
