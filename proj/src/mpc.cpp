#include "gustdock/mpc.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace gustdock {

namespace {

using Triplets = std::vector<Eigen::Triplet<double>>;

void check_horizon(const ReferenceTrajectory& ref, const std::vector<Vec3>& f, int N) {
    if (static_cast<int>(ref.z.size()) != N + 1) throw std::invalid_argument("mpc: reference must have N + 1 samples");
    if (static_cast<int>(f.size()) != N) throw std::invalid_argument("mpc: force sequence must have N samples");
}

Eigen::Index x_index(int k) { return 6 * k; }
Eigen::Index u_index(int N, int k) { return 6 * (N + 1) + 6 * k; }

}  // namespace

void MpcParams::validate() const {
    if (!(dt > 0.0)) throw std::invalid_argument("mpc: dt must be > 0");
    if (N < 2) throw std::invalid_argument("mpc: N must be >= 2");
    if ((Q.array() < 0).any() || (Q_N.array() < 0).any() || (R.array() < 0).any())
        throw std::invalid_argument("mpc: weights must be non-negative");
    if ((a_min.array() > a_max.array()).any() || (v_min.array() > v_max.array()).any())
        throw std::invalid_argument("mpc: inconsistent bounds");
    if (!(alpha_QN > 0.0)) throw std::invalid_argument("mpc: alpha_QN must be > 0");
}

const char* to_string(WeightMode m) { return m == WeightMode::full ? "full" : "reduced"; }

std::pair<Mat6, Mat6> system_matrices(double dt) {
    if (!(dt > 0.0)) throw std::invalid_argument("system_matrices: dt must be > 0");
    const Eigen::Matrix3d I = Eigen::Matrix3d::Identity();
    Mat6 A = Mat6::Identity();
    A.topRightCorner<3, 3>() = dt * I;
    Mat6 B;
    B << 0.5 * dt * dt * I, 0.5 * dt * dt * I, dt * I, dt * I;
    return {A, B};
}

ReferenceTrajectory reference_from_velocity(const std::vector<Vec3>& v, const Vec3& p0, double dt, int N) {
    if (N < 2) throw std::invalid_argument("reference_from_velocity: N must be >= 2");
    if (static_cast<int>(v.size()) < N + 1) throw std::invalid_argument("reference_from_velocity: series shorter than N + 1");
    std::vector<Vec3> p(static_cast<std::size_t>(N + 1));
    p[0] = p0;
    for (int k = 2; k <= N; k += 2) {
        const auto i = static_cast<std::size_t>(k);
        p[i] = p[i - 2] + dt / 3.0 * (v[i - 2] + 4.0 * v[i - 1] + v[i]);
    }
    for (int k = 1; k <= N; k += 2) {
        const auto i = static_cast<std::size_t>(k);
        if (k == 1) p[1] = p[0] + dt / 12.0 * (5.0 * v[0] + 8.0 * v[1] - v[2]);
        else p[i] = p[i - 1] + dt / 12.0 * (-v[i - 2] + 8.0 * v[i - 1] + 5.0 * v[i]);
    }
    ReferenceTrajectory ref;
    ref.z.reserve(p.size());
    for (int k = 0; k <= N; ++k) {
        const auto i = static_cast<std::size_t>(k);
        ref.z.push_back((Vec6() << p[i], v[i]).finished());
    }
    return ref;
}

ReferenceTrajectory constant_velocity_reference(const Vec3& velocity, const Vec3& anchor, int N, double dt) {
    return reference_from_velocity(std::vector<Vec3>(static_cast<std::size_t>(N + 1), velocity), anchor, dt, N);
}

ReferenceTrajectory constant_velocity_reference(const BlimpState& blimp, int N, double dt) {
    return constant_velocity_reference(blimp.velocity, blimp.position, N, dt);
}

std::pair<Vec6, Vec6> active_weights(const MpcParams& params, WeightMode mode) {
    if (mode == WeightMode::reduced) return {params.alpha_QN * params.Q, params.alpha_QN * params.Q_N};
    return {params.Q, params.Q_N};
}

QProblem build_qp(const Vec6& x0, const ReferenceTrajectory& ref, const std::vector<Vec3>& f_sequence,
                  const MpcParams& params, WeightMode mode) {
    params.validate();
    const int N = params.N;
    check_horizon(ref, f_sequence, N);
    const auto [Ad, Bd] = system_matrices(params.dt);
    const auto [Q, QN] = active_weights(params, mode);

    const Eigen::Index n = 6 * (N + 1) + 6 * N;
    const Eigen::Index m = 6 + 6 * N + 3 * N + 3 * N + 3 * N;

    QProblem qp;
    qp.q = VecX::Zero(n);
    Triplets tp;
    for (int k = 0; k <= N; ++k) {
        const Vec6& w = k == N ? QN : Q;
        const Vec6& z = ref.z[static_cast<std::size_t>(k)];
        for (int i = 0; i < 6; ++i) {
            if (w[i] != 0.0) tp.emplace_back(x_index(k) + i, x_index(k) + i, 2.0 * w[i]);
            qp.q[x_index(k) + i] = -2.0 * w[i] * z[i];
        }
    }
    for (int k = 0; k < N; ++k)
        for (int i = 0; i < 6; ++i)
            if (params.R[i] != 0.0) tp.emplace_back(u_index(N, k) + i, u_index(N, k) + i, 2.0 * params.R[i]);
    qp.P.resize(n, n);
    qp.P.setFromTriplets(tp.begin(), tp.end());

    Triplets ta;
    qp.l.resize(m);
    qp.u.resize(m);
    Eigen::Index row = 0;
    for (int i = 0; i < 6; ++i, ++row) {
        ta.emplace_back(row, x_index(0) + i, 1.0);
        qp.l[row] = qp.u[row] = x0[i];
    }
    // x_{k+1} - A x_k - B u_k = 0
    for (int k = 0; k < N; ++k) {
        for (int i = 0; i < 6; ++i, ++row) {
            ta.emplace_back(row, x_index(k + 1) + i, 1.0);
            for (int j = 0; j < 6; ++j) {
                if (Ad(i, j) != 0.0) ta.emplace_back(row, x_index(k) + j, -Ad(i, j));
                if (Bd(i, j) != 0.0) ta.emplace_back(row, u_index(N, k) + j, -Bd(i, j));
            }
            qp.l[row] = qp.u[row] = 0.0;
        }
    }
    for (int k = 1; k <= N; ++k)
        for (int i = 0; i < 3; ++i, ++row) {
            ta.emplace_back(row, x_index(k) + 3 + i, 1.0);
            qp.l[row] = params.v_min[i];
            qp.u[row] = params.v_max[i];
        }
    for (int k = 0; k < N; ++k)
        for (int i = 0; i < 3; ++i, ++row) {
            ta.emplace_back(row, u_index(N, k) + i, 1.0);
            qp.l[row] = params.a_min[i];
            qp.u[row] = params.a_max[i];
        }
    for (int k = 0; k < N; ++k)
        for (int i = 0; i < 3; ++i, ++row) {
            ta.emplace_back(row, u_index(N, k) + 3 + i, 1.0);
            qp.l[row] = qp.u[row] = f_sequence[static_cast<std::size_t>(k)][i];
        }
    qp.A.resize(m, n);
    qp.A.setFromTriplets(ta.begin(), ta.end());
    return qp;
}

namespace {

PlannedTrajectory unpack(const VecX& x, const std::vector<Vec3>& f_sequence, int N, WeightMode mode) {
    PlannedTrajectory plan;
    plan.mode = mode;
    for (int k = 0; k <= N; ++k) plan.x_star.push_back(x.segment<6>(x_index(k)));
    for (int k = 0; k < N; ++k) {
        MpcInput u;
        u.a = x.segment<3>(u_index(N, k));
        u.f = f_sequence[static_cast<std::size_t>(k)];  // pinned, echoed exactly
        plan.u_star.push_back(u);
    }
    return plan;
}

}  // namespace

double plan_state_cost(const PlannedTrajectory& plan, const ReferenceTrajectory& ref, const MpcParams& params,
                       WeightMode mode) {
    const auto [Q, QN] = active_weights(params, mode);
    double J = 0.0;
    for (int k = 0; k <= params.N; ++k) {
        const auto i = static_cast<std::size_t>(k);
        const Vec6 e = plan.x_star[i] - ref.z[i];
        J += e.dot((k == params.N ? QN : Q).cwiseProduct(e));
    }
    return J;
}

double plan_cost(const PlannedTrajectory& plan, const ReferenceTrajectory& ref, const MpcParams& params,
                 WeightMode mode) {
    double J = plan_state_cost(plan, ref, params, mode);
    for (const MpcInput& u : plan.u_star) {
        const Vec6 s = u.stacked();
        J += s.dot(params.R.cwiseProduct(s));
    }
    return J;
}

double cost_gradient_norm(const PlannedTrajectory& plan, const ReferenceTrajectory& ref, const MpcParams& params) {
    const auto QN = active_weights(params, plan.mode).second;
    const auto N = static_cast<std::size_t>(params.N);
    const Vec6 g = 2.0 * QN.cwiseProduct(plan.x_star[N] - ref.z[N]) +
                   2.0 * params.R.cwiseProduct(plan.u_star[N - 1].stacked());
    return g.norm();
}

Vec3 extract_target(const PlannedTrajectory& plan, const UavState& uav, Region region, const TargetParams& params) {
    const int N = static_cast<int>(plan.x_star.size()) - 1;
    if (N < 7) throw std::invalid_argument("extract_target: plan horizon must be >= 7");
    const Vec3 delta = plan.position(N) - plan.position(0);
    const double len = delta.norm();
    if (len < 1e-6) return uav.position;
    switch (region) {
        case Region::corridor:
            return params.corridor_weight_6 * plan.position(6) + (1.0 - params.corridor_weight_6) * plan.position(7);
        case Region::hull: {
            const double step = std::min(params.hull_gain * len, params.hull_step_cap);
            return uav.position + step * delta / len;
        }
        case Region::free: return plan.position(N);
    }
    return uav.position;
}

MpcPlanner::MpcPlanner(MpcParams params, QpSettings qp) : params_(std::move(params)), qp_(qp) { params_.validate(); }

void MpcPlanner::reset() {
    warm_.reset();
    last_ = {};
}

PlannedTrajectory MpcPlanner::plan(const Vec6& x0, const ReferenceTrajectory& ref, const std::vector<Vec3>& f_sequence,
                                   WeightMode mode) {
    const QProblem qp = build_qp(x0, ref, f_sequence, params_, mode);
    const QSolution sol = solve(qp, qp_, warm_);
    if (sol.status != QpStatus::solved) {
        warm_.reset();
        if (!last_.empty()) {
            PlannedTrajectory prev = last_;
            prev.reused = true;
            prev.status = sol.status;
            prev.iterations = sol.iterations;
            return prev;
        }
        PlannedTrajectory best = unpack(sol.x, f_sequence, params_.N, mode);
        best.status = sol.status;
        best.iterations = sol.iterations;
        best.reused = true;
        return best;
    }
    warm_ = warm_start(sol);
    last_ = unpack(sol.x, f_sequence, params_.N, mode);
    last_.iterations = sol.iterations;
    last_.status = sol.status;
    return last_;
}

PlannedTrajectory build_and_solve(const Vec6& x0, const ReferenceTrajectory& ref, const std::vector<Vec3>& f_sequence,
                                  const MpcParams& params, WeightMode mode, const QpSettings& qp) {
    MpcPlanner planner(params, qp);
    return planner.plan(x0, ref, f_sequence, mode);
}

}  // namespace gustdock
