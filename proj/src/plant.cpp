#include "gustdock/plant.hpp"

#include "gustdock/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace gustdock {

void BlimpPlantParams::validate() const {
    if (!(omega_n > 0.0)) throw std::invalid_argument("blimp plant: omega_n must be > 0");
    if (!(zeta > 0.0 && zeta < 1.0)) throw std::invalid_argument("blimp plant: zeta must lie in (0, 1)");
    if (!(dt > 0.0)) throw std::invalid_argument("blimp plant: dt must be > 0");
    if (!(euler_limit > 0.0)) throw std::invalid_argument("blimp plant: euler_limit must be > 0");
}

namespace {

// exp(A dt) for A = [[0, 1], [-w^2, -2 zeta w]] (underdamped closed form).
struct Transition {
    double m00, m01, m10, m11;
};

Transition oscillator_transition(double omega_n, double zeta, double dt) {
    const double sigma = zeta * omega_n;
    const double wd = omega_n * std::sqrt(1.0 - zeta * zeta);
    const double c = std::cos(wd * dt);
    const double s = std::sin(wd * dt);
    const double decay = std::exp(-sigma * dt);
    return {decay * (c + sigma / wd * s), decay * (s / wd), decay * (-omega_n * omega_n / wd * s),
            decay * (c - sigma / wd * s)};
}

}  // namespace

Euler attitude_from_deviation(const Vec3& deviation, const BlimpPlantParams& params) {
    const double lim = params.euler_limit;
    Euler e;
    e.roll = std::clamp(params.euler_gain[0] * deviation.y(), -lim, lim);
    e.pitch = std::clamp(params.euler_gain[1] * deviation.x(), -lim, lim);
    e.yaw = std::clamp(params.euler_gain[2] * deviation.y(), -lim, lim);
    return e;
}

std::pair<BlimpState, OscillatorState> step_blimp(const BlimpState& state, const OscillatorState& internal,
                                                  const Vec3& gust, const BlimpPlantParams& params) {
    const Transition m = oscillator_transition(params.omega_n, params.zeta, params.dt);
    const Vec3 steady = params.gust_gain * gust;
    const Vec3 offset = internal.deviation - steady;

    OscillatorState next;
    next.deviation = steady + m.m00 * offset + m.m01 * internal.rate;
    next.rate = m.m10 * offset + m.m11 * internal.rate;

    BlimpState out;
    out.velocity = params.nominal_velocity + next.deviation;
    out.position = state.position + 0.5 * params.dt * (state.velocity + out.velocity);
    out.euler = attitude_from_deviation(next.deviation, params);
    out.time = state.time + params.dt;
    return {out, next};
}

void EpisodeSpec::validate() const {
    if (!(t0 > 0.0 && T_g > 0.0 && t0 + T_g < t2)) {
        throw std::invalid_argument("episode spec: require 0 < t0 < t0 + T_g < t2");
    }
    if (!(v_max >= 0.0)) throw std::invalid_argument("episode spec: v_max must be >= 0");
    if (std::abs(direction.norm() - 1.0) > 1e-9) throw std::invalid_argument("episode spec: direction must be unit");
}

std::size_t episode_length(const EpisodeSpec& spec, double dt) {
    return static_cast<std::size_t>(std::llround(spec.t2 / dt)) + 1;
}

Episode simulate_episode(const EpisodeSpec& spec, const BlimpPlantParams& params) {
    spec.validate();
    params.validate();
    const std::size_t n = episode_length(spec, params.dt);
    const GustEvent gust = spec.gust();

    Episode ep;
    ep.spec = spec;
    ep.blimp_trace.reserve(n);
    ep.gust_trace.reserve(n);

    BlimpState s;
    s.position = params.initial_position;
    s.velocity = params.nominal_velocity;
    s.euler = attitude_from_deviation(Vec3::Zero(), params);
    s.time = 0.0;
    OscillatorState osc;

    ep.blimp_trace.push_back(s);
    ep.gust_trace.push_back(gust_velocity(gust, 0.0));
    for (std::size_t k = 1; k < n; ++k) {
        // Gust sampled mid-step and held over the step.
        const double t_mid = (static_cast<double>(k) - 0.5) * params.dt;
        auto [next, next_osc] = step_blimp(s, osc, gust_velocity(gust, t_mid), params);
        next.time = static_cast<double>(k) * params.dt;
        s = next;
        osc = next_osc;
        ep.blimp_trace.push_back(s);
        ep.gust_trace.push_back(gust_velocity(gust, s.time));
    }
    return ep;
}

const char* to_string(DatasetKind kind) {
    switch (kind) {
        case DatasetKind::training: return "training";
        case DatasetKind::evaluation: return "evaluation";
        case DatasetKind::calm: return "calm";
    }
    return "unknown";
}

DatasetKind dataset_kind_from_string(const std::string& s) {
    if (s == "training") return DatasetKind::training;
    if (s == "evaluation") return DatasetKind::evaluation;
    if (s == "calm") return DatasetKind::calm;
    throw std::invalid_argument("unknown dataset kind '" + s + "'");
}

std::vector<EpisodeSpec> dataset_specs(DatasetKind kind, const DatasetCounts& counts, std::uint64_t seed) {
    std::vector<EpisodeSpec> specs;
    auto base = [&](double t2, double v_max, std::uint64_t episode_seed) {
        EpisodeSpec s;
        s.t0 = counts.t0;
        s.T_g = counts.T_g;
        s.t2 = t2;
        s.v_max = v_max;
        s.seed = episode_seed;
        return s;
    };
    std::uint64_t index = 0;
    switch (kind) {
        case DatasetKind::training:
            for (int level = 0; level < 4; ++level) {
                for (int i = 0; i < counts.training[static_cast<std::size_t>(level)]; ++i) {
                    const std::uint64_t es = mix_seed(seed, index++);
                    Rng rng(es);
                    EpisodeSpec s = base(counts.training_t2, static_cast<double>(level + 1), es);
                    s.direction = sample_direction_uniform(rng);
                    specs.push_back(s);
                }
            }
            break;
        case DatasetKind::evaluation: {
            const auto dirs = sample_directions_equidistant(static_cast<std::size_t>(counts.evaluation));
            for (const Vec3& d : dirs) {
                EpisodeSpec s = base(counts.evaluation_t2, 4.0, mix_seed(seed, index++));
                s.direction = d;
                specs.push_back(s);
            }
            break;
        }
        case DatasetKind::calm:
            for (int i = 0; i < counts.calm; ++i) {
                EpisodeSpec s = base(counts.calm_t2, 0.0, mix_seed(seed, index++));
                specs.push_back(s);
            }
            break;
    }
    return specs;
}

std::vector<Episode> generate_dataset(DatasetKind kind, const DatasetCounts& counts,
                                      const BlimpPlantParams& params, std::uint64_t seed) {
    std::vector<Episode> out;
    for (const EpisodeSpec& s : dataset_specs(kind, counts, seed)) {
        out.push_back(simulate_episode(s, params));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Episode files
// ---------------------------------------------------------------------------

void write_episode(const std::filesystem::path& file, const Episode& episode, const BlimpPlantParams& params,
                   DatasetKind kind) {
    std::ofstream out(file, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + file.string() + " for writing");
    const EpisodeSpec& s = episode.spec;
    const Vec3 p0 = episode.blimp_trace.empty() ? params.initial_position : episode.blimp_trace.front().position;
    out << "# gustdock episode v1\n";
    out << "kind=" << to_string(kind) << '\n';
    out << "t0=" << fmt_double(s.t0) << '\n';
    out << "T_g=" << fmt_double(s.T_g) << '\n';
    out << "t2=" << fmt_double(s.t2) << '\n';
    out << "v_max=" << fmt_double(s.v_max) << '\n';
    out << "direction=" << fmt_vec(s.direction) << '\n';
    out << "seed=" << s.seed << '\n';
    out << "dt=" << fmt_double(params.dt) << '\n';
    out << "p0=" << fmt_vec(p0) << '\n';
    out << "t,vx,vy,vz,roll,pitch,yaw,gx,gy,gz\n";
    for (std::size_t k = 0; k < episode.blimp_trace.size(); ++k) {
        const BlimpState& b = episode.blimp_trace[k];
        const Vec3& g = episode.gust_trace[k];
        out << fmt_double(b.time) << ',' << fmt_vec(b.velocity) << ',' << fmt_double(b.euler.roll) << ','
            << fmt_double(b.euler.pitch) << ',' << fmt_double(b.euler.yaw) << ',' << fmt_vec(g) << '\n';
    }
    if (!out) throw std::runtime_error("write failed: " + file.string());
}

Episode read_episode(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw std::runtime_error("cannot open episode file " + file.string());
    Episode ep;
    double dt = 0.1;
    Vec3 p0(0.0, 0.0, 30.0);
    std::string line;
    bool in_rows = false;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        if (!in_rows) {
            if (line.rfind("t,", 0) == 0) {
                in_rows = true;
                continue;
            }
            const auto eq = line.find('=');
            if (eq == std::string::npos) throw std::runtime_error("malformed header line in " + file.string());
            const std::string key = line.substr(0, eq);
            const std::string value = line.substr(eq + 1);
            if (key == "t0") ep.spec.t0 = parse_double(value);
            else if (key == "T_g") ep.spec.T_g = parse_double(value);
            else if (key == "t2") ep.spec.t2 = parse_double(value);
            else if (key == "v_max") ep.spec.v_max = parse_double(value);
            else if (key == "direction") ep.spec.direction = parse_vec(value);
            else if (key == "seed") ep.spec.seed = std::stoull(value);
            else if (key == "dt") dt = parse_double(value);
            else if (key == "p0") p0 = parse_vec(value);
            continue;
        }
        const std::vector<double> f = split_doubles(line);
        if (f.size() != 10) throw std::runtime_error("malformed row in " + file.string());
        BlimpState b;
        b.time = f[0];
        b.velocity = Vec3(f[1], f[2], f[3]);
        b.euler = {f[4], f[5], f[6]};
        if (ep.blimp_trace.empty()) {
            b.position = p0;
        } else {
            const BlimpState& prev = ep.blimp_trace.back();
            b.position = prev.position + 0.5 * dt * (prev.velocity + b.velocity);
        }
        ep.blimp_trace.push_back(b);
        ep.gust_trace.emplace_back(f[7], f[8], f[9]);
    }
    if (ep.blimp_trace.empty()) throw std::runtime_error("episode file has no rows: " + file.string());
    return ep;
}

void write_dataset(const std::filesystem::path& dir, DatasetKind kind, const std::vector<Episode>& episodes,
                   const BlimpPlantParams& params) {
    std::filesystem::create_directories(dir);
    std::ofstream manifest(dir / "manifest.csv", std::ios::binary);
    if (!manifest) throw std::runtime_error("cannot write manifest in " + dir.string());
    manifest << "index,file,kind,v_max,seed,dx,dy,dz\n";
    for (std::size_t i = 0; i < episodes.size(); ++i) {
        char name[64];
        std::snprintf(name, sizeof name, "%s_%04zu.csv", to_string(kind), i);
        write_episode(dir / name, episodes[i], params, kind);
        const EpisodeSpec& s = episodes[i].spec;
        manifest << i << ',' << name << ',' << to_string(kind) << ',' << fmt_double(s.v_max) << ',' << s.seed << ','
                 << fmt_vec(s.direction) << '\n';
    }
    if (!manifest) throw std::runtime_error("manifest write failed in " + dir.string());
}

std::vector<Episode> read_dataset(const std::filesystem::path& dir) {
    std::ifstream manifest(dir / "manifest.csv");
    if (!manifest) throw std::runtime_error("no manifest.csv in " + dir.string());
    std::string line;
    std::getline(manifest, line);  // header
    std::vector<Episode> out;
    while (std::getline(manifest, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string index, file;
        std::getline(ss, index, ',');
        std::getline(ss, file, ',');
        out.push_back(read_episode(dir / file));
    }
    return out;
}

// ---------------------------------------------------------------------------
// UAV
// ---------------------------------------------------------------------------

UavState step_uav(const UavState& state, const Vec3& accel_command, double dt, const UavLimits& limits) {
    UavState out;
    out.position = state.position + dt * state.velocity + 0.5 * dt * dt * accel_command;
    out.velocity = (state.velocity + dt * accel_command).cwiseMax(limits.v_min).cwiseMin(limits.v_max);
    out.time = state.time + dt;
    return out;
}

}  // namespace gustdock
