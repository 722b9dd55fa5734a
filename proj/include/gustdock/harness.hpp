#pragma once

#include "gustdock/ceth.hpp"
#include "gustdock/detect.hpp"
#include "gustdock/ekf.hpp"
#include "gustdock/mpc.hpp"
#include "gustdock/plant.hpp"
#include "gustdock/tcn.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace gustdock {

// ---------------------------------------------------------------------------
// Scenarios
// ---------------------------------------------------------------------------

enum class CethMode { inactive, active };
enum class VelocityModel { constant, tcn };
enum class GustPolicy { no_abort, abort, safety_position };

const char* to_string(CethMode m);
const char* to_string(VelocityModel m);
const char* to_string(GustPolicy p);

struct Scenario {
    CethMode ceth = CethMode::active;
    VelocityModel velocity = VelocityModel::tcn;
    GustPolicy policy = GustPolicy::safety_position;

    /// e.g. "active-tcn-safety_position".
    std::string name() const;
    /// Abort needs an active avoidance field.
    void validate() const;
    bool needs_detection() const { return policy != GustPolicy::no_abort; }
    bool needs_forecast() const { return needs_detection() || velocity == VelocityModel::tcn; }
    bool operator==(const Scenario&) const = default;
};

Scenario scenario_from_string(const std::string& name);

/// The eight evaluated scenarios, in report order: inactive (no_abort,
/// safety_position), active-constant and active-tcn (no_abort, abort,
/// safety_position). Inactive runs use the constant velocity model.
std::vector<Scenario> all_scenarios();

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// How the UAV plant consumes the plan.
enum class CommandMode {
    plan_acceleration,  ///< apply a*_0 + f_0 (the plan's first step)
    waypoint,           ///< PD tracking of extract_target()
};

struct EpisodeSettings {
    Vec3 uav_start{50.0, 50.0, 70.0};
    double timeout = 200.0;       ///< [s]
    double start_offset = 0.0;    ///< engagement time into the trace [s]
    Vec3 gps_offset{0.8, -0.6, 0.4};  ///< error of the shared port estimate [m]
    int forecast_steps = 60;      ///< TCN horizon used for detection
    int n_fade = 10;
    CommandMode command = CommandMode::plan_acceleration;
    double waypoint_kp = 1.2;
    double waypoint_kd = 1.8;
    /// Shift the low-passed port by its steady-state ramp lag.
    bool lag_compensation = true;

    void validate() const;
};

struct HarnessConfig {
    std::uint64_t seed = 1;
    BlimpPlantParams plant;
    DatasetCounts counts;
    TrainConfig train;
    DetectionConfig detection;
    MpcParams mpc;
    QpSettings qp;
    TargetParams target;
    ZoneGeometry zone;
    ApproachCorridor corridor;
    CethParams ceth;
    double lut_h = 0.25;
    double lut_margin = 7.5;
    EkfParams ekf;
    DockingCriteria docking;
    UavLimits uav_limits;
    EpisodeSettings episode;

    void validate() const;
};

/// Parses a JSON config; absent keys keep their defaults, unknown keys are
/// rejected. Throws std::invalid_argument with the offending key path.
HarnessConfig parse_config(const std::string& text);
HarnessConfig load_config(const std::filesystem::path& file);
/// Full JSON dump (every key), stable key order.
std::string dump_config(const HarnessConfig& config);

/// LUT for the configured zone.
HullLut build_lut(const HarnessConfig& config);

// ---------------------------------------------------------------------------
// Forecasts
// ---------------------------------------------------------------------------

/// Memoised TCN rollouts keyed by the raw seed window contents, so identical
/// histories (calm stretches, repeated scenarios on one episode) share one
/// forecast. Misses are filled in batches along the episode.
class ForecastCache {
public:
    ForecastCache(const TcnModel& model, int horizon, int n_fade, std::size_t batch = 64);

    /// Forecast from the seed ending at frame `end` of `features`.
    const std::vector<FeatureFrame>& at(const FeatureSequence& features, Eigen::Index end);

    int horizon() const { return horizon_; }
    std::size_t size() const { return map_.size(); }
    std::size_t misses() const { return misses_; }

private:
    struct Key {
        std::uint64_t a, b;
        bool operator==(const Key&) const = default;
    };
    struct KeyHash {
        std::size_t operator()(const Key& k) const { return static_cast<std::size_t>(k.a ^ (k.b * 0x9e3779b97f4a7c15ULL)); }
    };
    static Key key_of(const FeatureSequence& seed);

    const TcnModel* model_;
    int horizon_;
    int n_fade_;
    std::size_t batch_;
    std::size_t misses_ = 0;
    std::unordered_map<Key, std::vector<FeatureFrame>, KeyHash> map_;
};

/// Gust detection on the forecast seeded at frame `end`, over its first
/// forecast_steps velocities.
DetectionResult detect_gust(ForecastCache& forecasts, const FeatureSequence& features, Eigen::Index end,
                            const HarnessConfig& config);

// ---------------------------------------------------------------------------
// Episodes
// ---------------------------------------------------------------------------

struct TraceRow {
    double t = 0.0;
    UavState uav;
    BlimpState blimp;
    Vec3 force = Vec3::Zero();
    Region region = Region::free;
    bool gust_flag = false;
    bool corridor_open = true;
    Vec3 target = Vec3::Zero();
    double clearance = 0.0;
};

void write_trace(const std::filesystem::path& file, const std::vector<TraceRow>& rows);

enum class EndReason { docked, collision, trace_end, timeout };
const char* to_string(EndReason r);

struct EpisodeResult {
    bool success = false;
    bool collision = false;
    std::optional<double> duration;   ///< set iff success
    double min_clearance = 0.0;
    EndReason end = EndReason::timeout;
    std::size_t ticks = 0;
    std::size_t gust_flag_ticks = 0;
    std::size_t qp_failures = 0;
    std::filesystem::path trace_file;
};

struct EpisodeContext {
    const HarnessConfig* config = nullptr;
    const HullLut* lut = nullptr;
    const TcnModel* model = nullptr;  ///< required when the scenario forecasts
    ForecastCache* forecasts = nullptr;
};

/// Closed-loop docking run against a replayed blimp trace.
EpisodeResult run_episode(const Scenario& scenario, const Episode& episode, const EpisodeContext& ctx,
                          std::vector<TraceRow>* trace = nullptr);

struct ScenarioSummary {
    Scenario scenario;
    std::size_t episodes = 0;
    std::size_t successes = 0;
    std::size_t collisions = 0;
    double success_pct = 0.0;
    std::optional<double> duration_mean, duration_std, duration_min, duration_max;
};

struct MatrixReport {
    std::vector<ScenarioSummary> rows;
    /// results[s][e]: scenario s on episode e.
    std::vector<std::vector<EpisodeResult>> results;
};

ScenarioSummary summarize(const Scenario& scenario, const std::vector<EpisodeResult>& results);

/// Runs every scenario on every episode. With `trace_dir` set, one trace CSV
/// per run is written there.
MatrixReport run_matrix(const std::vector<Scenario>& scenarios, const std::vector<Episode>& episodes,
                        const EpisodeContext& ctx, const std::optional<std::filesystem::path>& trace_dir);

/// Key-value text report.
void write_report(std::ostream& out, const MatrixReport& report);
void write_report(const std::filesystem::path& file, const MatrixReport& report);
/// One row per run.
void write_episode_table(const std::filesystem::path& file, const MatrixReport& report,
                         const std::vector<Episode>& episodes);

// ---------------------------------------------------------------------------
// Rolling MSE
// ---------------------------------------------------------------------------

/// Per-axis rolling MSE of N-step velocity forecasts. For window i (K <= i <
/// T - N) the predictor sees frames up to i; forecast j = 0..N-1 is compared
/// with frame i + j, where j = 0 is the current frame.
struct RollingMse {
    std::array<double, 3> axis{0.0, 0.0, 0.0};  ///< mean over episodes
    std::vector<std::array<double, 3>> per_episode;
    std::map<double, std::array<double, 3>> by_v_max;
    std::size_t windows = 0;
};

RollingMse rolling_mse(VelocityModel predictor, const std::vector<Episode>& episodes, const TcnModel* model,
                       int N = 15, int K = kSeqLen, int n_fade = 10);

/// Rolling MSE of explicit forecasts: forecasts[i] holds N frames for window
/// start i (entries before K are ignored). Exposed for oracles.
std::array<double, 3> rolling_mse_of(const std::vector<Vec3>& truth,
                                     const std::vector<std::vector<Vec3>>& forecasts, int N, int K);

}  // namespace gustdock
