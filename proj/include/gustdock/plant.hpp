#pragma once

#include "gustdock/gust.hpp"
#include "gustdock/world.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace gustdock {

// ---------------------------------------------------------------------------
// Surrogate blimp
// ---------------------------------------------------------------------------

/**
 * Per-axis underdamped second-order gust response around a straight nominal
 * flight line. The velocity deviation e obeys
 *
 *     e'' + 2 zeta omega_n e' + omega_n^2 e = gust_gain omega_n^2 v_g
 *
 * discretised exactly under a zero-order hold on the gust input. Attitude is
 * a clamped linear map of the deviation: roll <- e_y, pitch <- e_x, yaw <- e_y.
 */
struct BlimpPlantParams {
    Vec3 nominal_velocity{1.0, 0.0, 0.0};
    double omega_n = 0.35;
    double zeta = 0.25;
    double gust_gain = 1.6;
    std::array<double, 3> euler_gain{0.05, 0.05, 0.08};
    double euler_limit = 0.5;
    double dt = 0.1;
    Vec3 initial_position{0.0, 0.0, 30.0};

    void validate() const;
};

/// Internal oscillator state (deviation and its rate, per axis).
struct OscillatorState {
    Vec3 deviation = Vec3::Zero();
    Vec3 rate = Vec3::Zero();

    /// Per-axis sum of rate^2 + omega_n^2 deviation^2.
    double energy(double omega_n) const {
        return rate.squaredNorm() + omega_n * omega_n * deviation.squaredNorm();
    }
};

/// Advances the blimp one `params.dt` step with `gust` held over the step.
std::pair<BlimpState, OscillatorState> step_blimp(const BlimpState& state, const OscillatorState& internal,
                                                  const Vec3& gust, const BlimpPlantParams& params);

/// Attitude implied by a velocity deviation.
Euler attitude_from_deviation(const Vec3& deviation, const BlimpPlantParams& params);

// ---------------------------------------------------------------------------
// Episodes and datasets
// ---------------------------------------------------------------------------

struct EpisodeSpec {
    double t0 = 10.0;    ///< gust onset [s]
    double T_g = 4.0;    ///< gust duration [s]
    double t2 = 46.0;    ///< episode end [s]
    double v_max = 0.0;  ///< peak gust speed [m/s]
    Vec3 direction = Vec3::UnitX();
    std::uint64_t seed = 0;

    void validate() const;
    GustEvent gust() const { return {t0, T_g, v_max, direction}; }
};

struct Episode {
    EpisodeSpec spec;
    std::vector<BlimpState> blimp_trace;  ///< 10 Hz, t = k dt
    std::vector<Vec3> gust_trace;         ///< gust velocity at the sample times
};

std::size_t episode_length(const EpisodeSpec& spec, double dt);

Episode simulate_episode(const EpisodeSpec& spec, const BlimpPlantParams& params);

enum class DatasetKind { training, evaluation, calm };

const char* to_string(DatasetKind kind);
DatasetKind dataset_kind_from_string(const std::string& s);

struct DatasetCounts {
    /// Training episodes per peak gust speed 1, 2, 3, 4 m/s.
    std::array<int, 4> training{60, 20, 10, 60};
    int evaluation = 10;
    int calm = 20;
    double training_t2 = 46.0;
    double evaluation_t2 = 196.0;
    double calm_t2 = 196.0;
    double t0 = 10.0;
    double T_g = 4.0;
};

/// Builds the episode specs for a dataset kind (no simulation).
std::vector<EpisodeSpec> dataset_specs(DatasetKind kind, const DatasetCounts& counts, std::uint64_t seed);

std::vector<Episode> generate_dataset(DatasetKind kind, const DatasetCounts& counts,
                                      const BlimpPlantParams& params, std::uint64_t seed);

/// Writes one file per episode plus `manifest.csv` into `dir`.
void write_dataset(const std::filesystem::path& dir, DatasetKind kind, const std::vector<Episode>& episodes,
                   const BlimpPlantParams& params);

void write_episode(const std::filesystem::path& file, const Episode& episode, const BlimpPlantParams& params,
                   DatasetKind kind);
Episode read_episode(const std::filesystem::path& file);

/// Reads every episode listed in `<dir>/manifest.csv`, in manifest order.
std::vector<Episode> read_dataset(const std::filesystem::path& dir);

// ---------------------------------------------------------------------------
// UAV
// ---------------------------------------------------------------------------

struct UavLimits {
    Vec3 a_min{-5.0, -5.0, -5.0};
    Vec3 a_max{5.0, 5.0, 5.0};
    Vec3 v_min{-8.0, -8.0, -4.0};
    Vec3 v_max{8.0, 8.0, 4.0};
};

/// Double integrator: p+ = p + dt v + dt^2/2 a, v+ = clamp(v + dt a).
UavState step_uav(const UavState& state, const Vec3& accel_command, double dt, const UavLimits& limits = {});

}  // namespace gustdock
