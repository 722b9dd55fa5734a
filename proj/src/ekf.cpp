#include "gustdock/ekf.hpp"

#include <Eigen/LU>

#include <stdexcept>

namespace gustdock {

void EkfParams::validate() const {
    if (!(sigma_marker >= 0.0 && p_drop >= 0.0 && p_drop <= 1.0 && q_proc >= 0.0 && r_meas > 0.0))
        throw std::invalid_argument("ekf: noise parameters out of range");
    if (!(alpha > 0.0 && alpha <= 1.0)) throw std::invalid_argument("ekf: alpha must lie in (0, 1]");
    if (!(initial_variance > 0.0)) throw std::invalid_argument("ekf: initial variance must be > 0");
}

BiasState EkfParams::initial_state() const {
    BiasState s;
    s.covariance = initial_variance * Eigen::Matrix3d::Identity();
    return s;
}

BiasState predict(const BiasState& state, double dt, double q_proc) {
    if (dt < 0.0) throw std::invalid_argument("ekf predict: dt must be >= 0");
    BiasState out = state;
    out.covariance += q_proc * dt * Eigen::Matrix3d::Identity();
    return out;
}

BiasState update(const BiasState& state, const MarkerObservation& obs, const Vec3& shared_port_estimate,
                 double r_meas) {
    if (!obs.valid) return state;
    const Eigen::Matrix3d I = Eigen::Matrix3d::Identity();
    const Eigen::Matrix3d R = r_meas * I;
    const Eigen::Matrix3d& P = state.covariance;
    const Eigen::Matrix3d K = P * (P + R).inverse();
    const Vec3 innovation = (obs.measured_port_position - shared_port_estimate) - state.bias;
    BiasState out;
    out.bias = state.bias + K * innovation;
    const Eigen::Matrix3d IK = I - K;
    out.covariance = IK * P * IK.transpose() + K * R * K.transpose();
    out.covariance = 0.5 * (out.covariance + out.covariance.transpose()).eval();
    return out;
}

std::pair<Vec3, LowPass> corrected_port(const Vec3& shared_port_estimate, const BiasState& state, LowPass lowpass,
                                        double alpha) {
    if (!(alpha > 0.0 && alpha <= 1.0)) throw std::invalid_argument("corrected_port: alpha must lie in (0, 1]");
    const Vec3 raw = shared_port_estimate + state.bias;
    const Vec3 out = lowpass.output ? Vec3(alpha * raw + (1.0 - alpha) * *lowpass.output) : raw;
    lowpass.output = out;
    return {out, lowpass};
}

MarkerObservation synthesize_marker(const Vec3& true_port, double time, const EkfParams& params, Rng& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::normal_distribution<double> n(0.0, params.sigma_marker);
    MarkerObservation obs;
    obs.time = time;
    // Draw everything every tick so the stream does not depend on dropouts.
    const double drop = u(rng);
    const Vec3 noise(n(rng), n(rng), n(rng));
    obs.valid = drop >= params.p_drop;
    obs.measured_port_position = true_port + noise;
    return obs;
}

}  // namespace gustdock
