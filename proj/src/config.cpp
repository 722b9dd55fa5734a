#include "gustdock/harness.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace gustdock {

using nlohmann::ordered_json;

namespace {

template <class E>
struct EnumTable;

template <>
struct EnumTable<LossWeighting> {
    static constexpr std::array<std::pair<LossWeighting, const char*>, 2> values{
        {{LossWeighting::uniform, "uniform"}, {LossWeighting::ramp, "ramp"}}};
};
template <>
struct EnumTable<CommandMode> {
    static constexpr std::array<std::pair<CommandMode, const char*>, 2> values{
        {{CommandMode::plan_acceleration, "plan_acceleration"}, {CommandMode::waypoint, "waypoint"}}};
};

// Config fields are listed once; the writer and reader both walk this list.
template <class V>
void visit_config(V& v, HarnessConfig& c) {
    v("seed", c.seed);
    v.section("plant", [&] {
        v("nominal_velocity", c.plant.nominal_velocity);
        v("omega_n", c.plant.omega_n);
        v("zeta", c.plant.zeta);
        v("gust_gain", c.plant.gust_gain);
        v("euler_gain", c.plant.euler_gain);
        v("euler_limit", c.plant.euler_limit);
        v("dt", c.plant.dt);
        v("initial_position", c.plant.initial_position);
    });
    v.section("dataset", [&] {
        v("training_per_v_max", c.counts.training);
        v("evaluation", c.counts.evaluation);
        v("calm", c.counts.calm);
        v("training_t2", c.counts.training_t2);
        v("evaluation_t2", c.counts.evaluation_t2);
        v("calm_t2", c.counts.calm_t2);
        v("t0", c.counts.t0);
        v("T_g", c.counts.T_g);
    });
    v.section("train", [&] {
        v("lr", c.train.lr);
        v("lr_milestones", c.train.lr_milestones);
        v("lr_decay", c.train.lr_decay);
        v("batch", c.train.batch);
        v("grad_clip_norm", c.train.grad_clip_norm);
        v("epochs", c.train.epochs);
        v("beta1", c.train.beta1);
        v("beta2", c.train.beta2);
        v("adam_eps", c.train.adam_eps);
        v("seed", c.train.seed);
        v("window_stride", c.train.window_stride);
        v("val_fraction", c.train.val_fraction);
        v("weighting", c.train.weighting);
    });
    v.section("detection", [&] {
        v("W_g", c.detection.W_g);
        v("threshold", c.detection.threshold);
        v("t_max_g", c.detection.t_max_g);
        v("sample_rate", c.detection.sample_rate);
    });
    v.section("mpc", [&] {
        v("dt", c.mpc.dt);
        v("N", c.mpc.N);
        v("a_min", c.mpc.a_min);
        v("a_max", c.mpc.a_max);
        v("v_min", c.mpc.v_min);
        v("v_max", c.mpc.v_max);
        v("Q", c.mpc.Q);
        v("Q_N", c.mpc.Q_N);
        v("R", c.mpc.R);
        v("alpha_QN", c.mpc.alpha_QN);
    });
    v.section("qp", [&] {
        v("rho", c.qp.rho);
        v("sigma", c.qp.sigma);
        v("alpha", c.qp.alpha);
        v("eps_abs", c.qp.eps_abs);
        v("eps_rel", c.qp.eps_rel);
        v("eps_prim_inf", c.qp.eps_prim_inf);
        v("max_iter", c.qp.max_iter);
        v("adaptive_rho", c.qp.adaptive_rho);
        v("adaptive_rho_interval", c.qp.adaptive_rho_interval);
        v("adaptive_rho_tolerance", c.qp.adaptive_rho_tolerance);
        v("eq_rho_scale", c.qp.eq_rho_scale);
        v("polish", c.qp.polish);
        v("polish_delta", c.qp.polish_delta);
        v("polish_refine_iter", c.qp.polish_refine_iter);
        v("polish_passes", c.qp.polish_passes);
    });
    v.section("target", [&] {
        v("corridor_weight_6", c.target.corridor_weight_6);
        v("hull_gain", c.target.hull_gain);
        v("hull_step_cap", c.target.hull_step_cap);
    });
    v.section("zone", [&] {
        v("hull_half_length", c.zone.hull_half_length);
        v("hull_radius", c.zone.hull_radius);
        v("gondola_size", c.zone.gondola_size);
        v("gondola_center", c.zone.gondola_center);
    });
    v.section("corridor", [&] {
        v("r_cone", c.corridor.r_cone);
        v("h_cone", c.corridor.h_cone);
        v("o_tip", c.corridor.o_tip);
        v("h_cap", c.corridor.h_cap);
    });
    v.section("ceth", [&] {
        v("k_rep", c.ceth.k_rep);
        v("k_tang", c.ceth.k_tang);
        v("d_band_tang", c.ceth.d_band_tang);
        v("d_band_rep", c.ceth.d_band_rep);
        v("d_min", c.ceth.d_min);
        v("F_max_rep", c.ceth.F_max_rep);
        v("F_max_tang", c.ceth.F_max_tang);
        v("epsilon", c.ceth.epsilon);
        v("lut_h", c.lut_h);
        v("lut_margin", c.lut_margin);
    });
    v.section("ekf", [&] {
        v("sigma_marker", c.ekf.sigma_marker);
        v("p_drop", c.ekf.p_drop);
        v("q_proc", c.ekf.q_proc);
        v("r_meas", c.ekf.r_meas);
        v("alpha", c.ekf.alpha);
        v("initial_variance", c.ekf.initial_variance);
    });
    v.section("docking", [&] {
        v("below_offset", c.docking.below_offset);
        v("lateral_tol", c.docking.lateral_tol);
        v("vertical_tol", c.docking.vertical_tol);
    });
    v.section("uav", [&] {
        v("a_min", c.uav_limits.a_min);
        v("a_max", c.uav_limits.a_max);
        v("v_min", c.uav_limits.v_min);
        v("v_max", c.uav_limits.v_max);
    });
    v.section("episode", [&] {
        v("uav_start", c.episode.uav_start);
        v("timeout", c.episode.timeout);
        v("start_offset", c.episode.start_offset);
        v("gps_offset", c.episode.gps_offset);
        v("forecast_steps", c.episode.forecast_steps);
        v("n_fade", c.episode.n_fade);
        v("command", c.episode.command);
        v("waypoint_kp", c.episode.waypoint_kp);
        v("waypoint_kd", c.episode.waypoint_kd);
        v("lag_compensation", c.episode.lag_compensation);
    });
}

template <class T>
ordered_json encode(const T& v) {
    if constexpr (std::is_enum_v<T>) {
        for (const auto& [e, s] : EnumTable<T>::values)
            if (e == v) return s;
        throw std::logic_error("unnamed enum value");
    } else if constexpr (std::is_base_of_v<Eigen::MatrixBase<T>, T>) {
        return std::vector<double>(v.data(), v.data() + v.size());
    } else {
        return v;
    }
}

template <class T>
void decode(const ordered_json& j, T& out, const std::string& path) {
    try {
        if constexpr (std::is_enum_v<T>) {
            const auto s = j.get<std::string>();
            for (const auto& [e, name] : EnumTable<T>::values)
                if (s == name) {
                    out = e;
                    return;
                }
            throw std::invalid_argument("unknown value '" + s + "'");
        } else if constexpr (std::is_base_of_v<Eigen::MatrixBase<T>, T>) {
            const auto v = j.get<std::vector<double>>();
            if (static_cast<Eigen::Index>(v.size()) != out.size())
                throw std::invalid_argument("expected " + std::to_string(out.size()) + " numbers");
            for (Eigen::Index i = 0; i < out.size(); ++i) out[i] = v[static_cast<std::size_t>(i)];
        } else if constexpr (std::is_same_v<T, bool>) {
            if (!j.is_boolean()) throw std::invalid_argument("expected a boolean");
            out = j.get<bool>();
        } else if constexpr (std::is_integral_v<T>) {
            if (!j.is_number_integer()) throw std::invalid_argument("expected an integer");
            if constexpr (std::is_unsigned_v<T>)
                if (j.is_number_integer() && !j.is_number_unsigned()) throw std::invalid_argument("expected >= 0");
            out = j.get<T>();
        } else if constexpr (std::is_floating_point_v<T>) {
            if (!j.is_number()) throw std::invalid_argument("expected a number");
            out = j.get<T>();
        } else {
            out = j.get<T>();
        }
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument("config key '" + path + "': " + e.what());
    } catch (const std::invalid_argument& e) {
        throw std::invalid_argument("config key '" + path + "': " + e.what());
    }
}

struct Writer {
    ordered_json* cur;
    template <class T>
    void operator()(const char* key, T& value) {
        (*cur)[key] = encode(value);
    }
    template <class F>
    void section(const char* key, F&& body) {
        ordered_json* parent = cur;
        (*parent)[key] = ordered_json::object();
        cur = &(*parent)[key];
        body();
        cur = parent;
    }
};

struct Reader {
    const ordered_json* cur;
    std::string prefix;
    template <class T>
    void operator()(const char* key, T& value) {
        if (cur && cur->contains(key)) decode((*cur)[key], value, prefix + key);
    }
    template <class F>
    void section(const char* key, F&& body) {
        const ordered_json* parent = cur;
        const std::string saved = prefix;
        cur = (parent && parent->contains(key)) ? &(*parent)[key] : nullptr;
        if (cur && !cur->is_object()) throw std::invalid_argument("config key '" + prefix + key + "' must be an object");
        prefix += std::string(key) + ".";
        body();
        cur = parent;
        prefix = saved;
    }
};

void reject_unknown(const ordered_json& given, const ordered_json& known, const std::string& prefix) {
    for (auto it = given.begin(); it != given.end(); ++it) {
        const std::string path = prefix + it.key();
        if (!known.contains(it.key())) throw std::invalid_argument("unknown config key '" + path + "'");
        if (known[it.key()].is_object()) reject_unknown(it.value(), known[it.key()], path + ".");
    }
}

ordered_json to_json(const HarnessConfig& config) {
    ordered_json root = ordered_json::object();
    HarnessConfig copy = config;
    Writer w{&root};
    visit_config(w, copy);
    return root;
}

}  // namespace

void EpisodeSettings::validate() const {
    if (!uav_start.allFinite() || !gps_offset.allFinite()) throw std::invalid_argument("episode: non-finite vector");
    if (!(timeout > 0.0) || !(start_offset >= 0.0)) throw std::invalid_argument("episode: timeout > 0, start_offset >= 0");
    if (forecast_steps < 1 || n_fade < 0) throw std::invalid_argument("episode: forecast_steps >= 1, n_fade >= 0");
    if (!(waypoint_kp > 0.0) || !(waypoint_kd >= 0.0)) throw std::invalid_argument("episode: waypoint gains");
}

void HarnessConfig::validate() const {
    plant.validate();
    train.validate();
    detection.validate();
    mpc.validate();
    zone.validate();
    corridor.validate();
    ceth.validate();
    ekf.validate();
    episode.validate();
    for (int n : counts.training)
        if (n < 0) throw std::invalid_argument("dataset: negative episode count");
    if (counts.evaluation < 0 || counts.calm < 0) throw std::invalid_argument("dataset: negative episode count");
    if (!(qp.rho > 0 && qp.sigma > 0 && qp.alpha > 0 && qp.alpha < 2 && qp.eps_abs >= 0 && qp.eps_rel >= 0 &&
          qp.max_iter > 0))
        throw std::invalid_argument("qp: invalid settings");
    if (!(lut_h > 0 && lut_margin > ceth.d_band_rep)) throw std::invalid_argument("ceth: lut_h > 0, lut_margin > d_b");
    if (!(docking.lateral_tol > 0 && docking.vertical_tol > 0)) throw std::invalid_argument("docking: tolerances > 0");
    if (std::abs(mpc.dt - plant.dt) > 1e-12) throw std::invalid_argument("mpc.dt must equal plant.dt");
    if (episode.forecast_steps < mpc.N + 1) throw std::invalid_argument("episode.forecast_steps must be >= mpc.N + 1");
}

HarnessConfig parse_config(const std::string& text) {
    ordered_json given;
    try {
        given = ordered_json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw std::invalid_argument(std::string("config is not valid JSON: ") + e.what());
    }
    if (!given.is_object()) throw std::invalid_argument("config must be a JSON object");
    HarnessConfig config;
    reject_unknown(given, to_json(config), "");
    Reader r{&given, ""};
    visit_config(r, config);
    config.validate();
    return config;
}

HarnessConfig load_config(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw std::invalid_argument("cannot open config " + file.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

std::string dump_config(const HarnessConfig& config) { return to_json(config).dump(2) + "\n"; }

HullLut build_lut(const HarnessConfig& config) {
    return HullLut::build(config.zone, grid_for(config.zone, config.lut_h, config.lut_margin), config.ceth.d_band_rep);
}

}  // namespace gustdock
