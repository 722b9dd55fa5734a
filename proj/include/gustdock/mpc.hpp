#pragma once

#include "gustdock/qp.hpp"
#include "gustdock/world.hpp"

#include <optional>
#include <utility>
#include <vector>

namespace gustdock {

using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat6 = Eigen::Matrix<double, 6, 6>;

struct MpcParams {
    double dt = 0.1;
    int N = 15;
    Vec3 a_min{-5.0, -5.0, -5.0};
    Vec3 a_max{5.0, 5.0, 5.0};
    Vec3 v_min{-8.0, -8.0, -4.0};
    Vec3 v_max{8.0, 8.0, 4.0};
    Vec6 Q = Vec6::Zero();                                          ///< stage state weight (diagonal)
    Vec6 Q_N = (Vec6() << 100, 100, 100, 10, 10, 10).finished();  ///< terminal weight (diagonal)
    Vec6 R = (Vec6() << 1, 1, 1, 0, 0, 0).finished();             ///< input weight on (a, f)
    double alpha_QN = 0.002;

    void validate() const;
};

enum class WeightMode { full, reduced };

const char* to_string(WeightMode m);

struct MpcInput {
    Vec3 a = Vec3::Zero();  ///< free acceleration
    Vec3 f = Vec3::Zero();  ///< fixed external force, pinned in the QP
    Vec6 stacked() const { return (Vec6() << a, f).finished(); }
};

/// z_k = (p_blimp,k, v_blimp,k), k = 0..N.
struct ReferenceTrajectory {
    std::vector<Vec6> z;
};

struct PlannedTrajectory {
    std::vector<Vec6> x_star;     ///< N + 1 states (p, v)
    std::vector<MpcInput> u_star; ///< N inputs
    WeightMode mode = WeightMode::full;
    QpStatus status = QpStatus::solved;
    int iterations = 0;
    bool reused = false;  ///< solve failed and the previous plan was returned

    Vec3 position(int k) const { return x_star[static_cast<std::size_t>(k)].head<3>(); }
    bool empty() const { return x_star.empty(); }
};

/// A_d, B_d for the double integrator with input (a, f).
std::pair<Mat6, Mat6> system_matrices(double dt);

/// Integrates a velocity series into reference positions. Even k use
/// composite Simpson from k - 2; odd k use the three-point rule that is exact
/// for quadratic velocity, so every sample is exact for quadratic profiles.
ReferenceTrajectory reference_from_velocity(const std::vector<Vec3>& v_pred, const Vec3& p0, double dt, int N);

/// Velocity held at its current value; anchored at `anchor`.
ReferenceTrajectory constant_velocity_reference(const Vec3& velocity, const Vec3& anchor, int N, double dt);
ReferenceTrajectory constant_velocity_reference(const BlimpState& blimp, int N, double dt);

/// Assembles the condensed-free (sparse, states + inputs) QP.
QProblem build_qp(const Vec6& x0, const ReferenceTrajectory& ref, const std::vector<Vec3>& f_sequence,
                  const MpcParams& params, WeightMode mode);

/// Effective (Q, Q_N) for a weight mode.
std::pair<Vec6, Vec6> active_weights(const MpcParams& params, WeightMode mode);

/// Objective of a fixed plan under a weight mode (without the constant term
/// dropped by the QP, i.e. the true quadratic cost).
double plan_cost(const PlannedTrajectory& plan, const ReferenceTrajectory& ref, const MpcParams& params,
                 WeightMode mode);

/// State-error part of plan_cost.
double plan_state_cost(const PlannedTrajectory& plan, const ReferenceTrajectory& ref, const MpcParams& params,
                       WeightMode mode);

/// ||2 Q_N (x_N - z_N) + 2 R u_{N-1}||_2 with the weights of plan.mode.
double cost_gradient_norm(const PlannedTrajectory& plan, const ReferenceTrajectory& ref, const MpcParams& params);

struct TargetParams {
    double corridor_weight_6 = 0.5;  ///< weight of p*_6; p*_7 gets the rest
    double hull_gain = 6.5;          ///< step length per metre of plan displacement
    double hull_step_cap = 12.0;     ///< v_max_xy * dt * N
};

/// Waypoint handed to a position controller for the given region.
Vec3 extract_target(const PlannedTrajectory& plan, const UavState& uav, Region region,
                    const TargetParams& params = {});

/// One MPC instance: warm-starts across ticks and falls back to the previous
/// plan when the solver fails.
class MpcPlanner {
public:
    explicit MpcPlanner(MpcParams params = {}, QpSettings qp = {});

    PlannedTrajectory plan(const Vec6& x0, const ReferenceTrajectory& ref, const std::vector<Vec3>& f_sequence,
                           WeightMode mode);

    const MpcParams& params() const { return params_; }
    void reset();

private:
    MpcParams params_;
    QpSettings qp_;
    std::optional<WarmStart> warm_;
    PlannedTrajectory last_;
};

/// Stateless one-shot solve.
PlannedTrajectory build_and_solve(const Vec6& x0, const ReferenceTrajectory& ref, const std::vector<Vec3>& f_sequence,
                                  const MpcParams& params, WeightMode mode, const QpSettings& qp = {});

}  // namespace gustdock
