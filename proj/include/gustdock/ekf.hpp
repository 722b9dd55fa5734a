#pragma once

#include "gustdock/gust.hpp"
#include "gustdock/world.hpp"

#include <Eigen/Core>

#include <optional>
#include <utility>

namespace gustdock {

/// Random-walk bias between the shared port estimate and the marker-observed
/// port. The measurement model is the identity, so the filter is linear.
struct BiasState {
    Vec3 bias = Vec3::Zero();
    Eigen::Matrix3d covariance = 25.0 * Eigen::Matrix3d::Identity();
};

struct MarkerObservation {
    Vec3 measured_port_position = Vec3::Zero();
    double time = 0.0;
    bool valid = false;
};

struct EkfParams {
    double sigma_marker = 0.03;  ///< marker noise std [m]
    double p_drop = 0.3;         ///< per-tick dropout probability
    double q_proc = 1e-4;        ///< [m^2/s]
    double r_meas = 9e-4;        ///< [m^2]
    double alpha = 0.3;          ///< output low-pass factor
    double initial_variance = 25.0;  ///< prior on the GPS offset, (5 m)^2

    BiasState initial_state() const;

    void validate() const;
};

BiasState predict(const BiasState& state, double dt, double q_proc);

/// Joseph-form update; invalid observations are a no-op.
BiasState update(const BiasState& state, const MarkerObservation& obs, const Vec3& shared_port_estimate,
                 double r_meas);

/// First-order low-pass on the corrected port; empty state means first call.
struct LowPass {
    std::optional<Vec3> output;
};

std::pair<Vec3, LowPass> corrected_port(const Vec3& shared_port_estimate, const BiasState& state, LowPass lowpass,
                                        double alpha);

/// Synthetic marker detections: true port plus Gaussian noise, dropped with
/// probability p_drop.
MarkerObservation synthesize_marker(const Vec3& true_port, double time, const EkfParams& params, Rng& rng);

}  // namespace gustdock
