#include <doctest.h>

#include "gustdock/mpc.hpp"
#include "gustdock/plant.hpp"

#include <cmath>

using namespace gustdock;

namespace {

ReferenceTrajectory static_reference(const Vec3& p, int N) {
    ReferenceTrajectory r;
    r.z.assign(static_cast<std::size_t>(N + 1), (Vec6() << p, Vec3::Zero()).finished());
    return r;
}

std::vector<Vec3> zeros(int N) { return std::vector<Vec3>(static_cast<std::size_t>(N), Vec3::Zero()); }

double max_bound_violation(const PlannedTrajectory& plan, const MpcParams& p) {
    double worst = 0.0;
    for (std::size_t k = 1; k < plan.x_star.size(); ++k) {
        const Vec3 v = plan.x_star[k].tail<3>();
        worst = std::max({worst, (v - p.v_max).maxCoeff(), (p.v_min - v).maxCoeff()});
    }
    for (const auto& u : plan.u_star)
        worst = std::max({worst, (u.a - p.a_max).maxCoeff(), (p.a_min - u.a).maxCoeff()});
    return worst;
}

double dynamics_residual(const PlannedTrajectory& plan, double dt) {
    const auto [A, B] = system_matrices(dt);
    double worst = 0.0;
    for (std::size_t k = 0; k + 1 < plan.x_star.size(); ++k)
        worst = std::max(worst, (plan.x_star[k + 1] - A * plan.x_star[k] - B * plan.u_star[k].stacked())
                                    .lpNorm<Eigen::Infinity>());
    return worst;
}

}  // namespace

TEST_CASE("system matrices") {
    const auto [A, B] = system_matrices(0.1);
    Vec6 x;
    x << 1, 2, 3, 4, 5, 6;
    const Vec6 next = A * x;
    CHECK((next.head<3>() - (x.head<3>() + 0.1 * x.tail<3>())).norm() < 1e-15);
    CHECK((next.tail<3>() - x.tail<3>()).norm() == 0.0);

    Vec6 ua = Vec6::Zero(), uf = Vec6::Zero();
    ua[0] = 1.0;
    uf[3] = 1.0;
    const Vec6 da = B * ua;
    CHECK(da[0] == doctest::Approx(0.005));
    CHECK(da[3] == doctest::Approx(0.1));
    CHECK((B * uf - da).norm() == 0.0);
    CHECK_THROWS(system_matrices(0.0));
}

TEST_CASE("reference integration: constant and zero velocity") {
    const auto r = reference_from_velocity(std::vector<Vec3>(16, Vec3(1, 0, 0)), Vec3(0, 0, 0), 0.1, 15);
    REQUIRE(r.z.size() == 16);
    for (int k = 0; k <= 15; ++k)
        CHECK((r.z[static_cast<std::size_t>(k)].head<3>() - Vec3(0.1 * k, 0, 0)).norm() < 1e-12);
    const auto z = reference_from_velocity(std::vector<Vec3>(16, Vec3::Zero()), Vec3(1, 2, 3), 0.1, 15);
    for (const auto& s : z.z) CHECK(s.head<3>() == Vec3(1, 2, 3));
    CHECK_THROWS(reference_from_velocity(std::vector<Vec3>(10, Vec3::Zero()), Vec3::Zero(), 0.1, 15));
}

TEST_CASE("reference integration is exact for quadratic velocity") {
    const double dt = 0.1;
    const int N = 200;
    std::vector<Vec3> v;
    for (int k = 0; k <= N; ++k) {
        const double t = k * dt;
        v.emplace_back(t * t, 1.0 - 0.5 * t, 0.3 * t * t - t + 2.0);
    }
    const auto r = reference_from_velocity(v, Vec3(1, -1, 0.5), dt, N);
    double worst = 0.0;
    for (int k = 0; k <= N; ++k) {
        const double t = k * dt;
        const Vec3 exact = Vec3(1, -1, 0.5) + Vec3(t * t * t / 3.0, t - 0.25 * t * t, 0.1 * t * t * t - 0.5 * t * t + 2.0 * t);
        worst = std::max(worst, (r.z[static_cast<std::size_t>(k)].head<3>() - exact).lpNorm<Eigen::Infinity>());
    }
    CHECK(worst <= 1e-9);
}

TEST_CASE("constant velocity reference") {
    BlimpState b;
    b.position = Vec3(0, 0, 30);
    b.velocity = Vec3(1, 0, 0);
    const auto r = constant_velocity_reference(b, 15, 0.1);
    CHECK((r.z[15].head<3>() - Vec3(1.5, 0, 30)).norm() < 1e-12);
    const auto direct = reference_from_velocity(std::vector<Vec3>(16, b.velocity), b.position, 0.1, 15);
    for (std::size_t k = 0; k < 16; ++k) CHECK(r.z[k] == direct.z[k]);
    b.velocity.setZero();
    const auto still = constant_velocity_reference(b, 15, 0.1);
    for (const auto& s : still.z) CHECK(s == still.z[0]);
}

TEST_CASE("origin is optimal for a zero reference") {
    MpcParams p;
    const auto plan = build_and_solve(Vec6::Zero(), static_reference(Vec3::Zero(), p.N), zeros(p.N), p, WeightMode::full);
    REQUIRE(plan.status == QpStatus::solved);
    for (const auto& x : plan.x_star) CHECK(x.norm() < 1e-6);
    for (const auto& u : plan.u_star) CHECK(u.a.norm() < 1e-6);
}

TEST_CASE("pinned force is echoed and respected by the solver") {
    MpcParams p;
    const std::vector<Vec3> f(static_cast<std::size_t>(p.N), Vec3(1, 0, 0));
    const Vec6 x0 = (Vec6() << 2, -1, 0, 0.5, 0, 0).finished();
    const auto ref = static_reference(Vec3(5, 5, 5), p.N);
    const auto plan = build_and_solve(x0, ref, f, p, WeightMode::full);
    for (const auto& u : plan.u_star) CHECK(u.f == Vec3(1, 0, 0));

    const QProblem qp = build_qp(x0, ref, f, p, WeightMode::full);
    const QSolution s = solve(qp);
    REQUIRE(s.status == QpStatus::solved);
    for (int k = 0; k < p.N; ++k)
        CHECK((s.x.segment<3>(6 * (p.N + 1) + 6 * k + 3) - Vec3(1, 0, 0)).lpNorm<Eigen::Infinity>() <= 1e-9);
    CHECK(dynamics_residual(plan, p.dt) < 1e-6);
}

TEST_CASE("plans respect bounds and dynamics") {
    MpcParams p;
    const Vec6 x0 = (Vec6() << 50, 50, 70, 0, 0, 0).finished();
    const auto ref = constant_velocity_reference(Vec3(1, 0, 0), Vec3(0, 0, 29.7), p.N, p.dt);
    for (WeightMode mode : {WeightMode::full, WeightMode::reduced}) {
        const auto plan = build_and_solve(x0, ref, zeros(p.N), p, mode);
        REQUIRE(plan.status == QpStatus::solved);
        CHECK(max_bound_violation(plan, p) <= 1e-4);
        CHECK(dynamics_residual(plan, p.dt) <= 1e-4);
        CHECK((plan.x_star[0] - x0).norm() < 1e-6);
    }
}

TEST_CASE("closed loop converges to a static target") {
    MpcParams p;
    MpcPlanner planner(p);
    const Vec3 target(6, -4, 3);
    const auto ref = static_reference(target, p.N);
    UavState uav;
    UavLimits lim;
    std::vector<double> err;
    double worst = 0.0;
    for (int tick = 0; tick < 300; ++tick) {
        const Vec6 x0 = (Vec6() << uav.position, uav.velocity).finished();
        const auto plan = planner.plan(x0, ref, zeros(p.N), WeightMode::full);
        REQUIRE(plan.status == QpStatus::solved);
        worst = std::max(worst, max_bound_violation(plan, p));
        uav = step_uav(uav, plan.u_star[0].a, p.dt, lim);
        err.push_back((uav.position - target).norm());
        if (err.back() < 0.05 && tick > 20) break;
    }
    CHECK(err.back() < 0.05);
    CHECK(worst <= 1e-4);
    for (std::size_t k = 6; k < err.size(); ++k) CHECK(err[k] <= err[k - 1] + 1e-9);
}

TEST_CASE("shift property on a reachable static target") {
    MpcParams p;
    const auto ref = static_reference(Vec3(1, 1, 1), p.N);
    const Vec6 x0 = (Vec6() << 0, 0, 0, 0, 0, 0).finished();
    const auto first = build_and_solve(x0, ref, zeros(p.N), p, WeightMode::full);
    const auto second = build_and_solve(first.x_star[1], ref, zeros(p.N), p, WeightMode::full);
    const auto [Q, QN] = active_weights(p, WeightMode::full);
    auto terminal = [&](const PlannedTrajectory& pl) {
        const Vec6 e = pl.x_star.back() - ref.z.back();
        return e.dot(QN.cwiseProduct(e));
    };
    CHECK(terminal(second) <= terminal(first) + 1e-6);
}

TEST_CASE("reduced mode scales the state cost of a fixed plan by alpha") {
    MpcParams p;
    const auto ref = static_reference(Vec3(4, 0, -2), p.N);
    const auto plan = build_and_solve(Vec6::Zero(), ref, zeros(p.N), p, WeightMode::full);
    const double full = plan_state_cost(plan, ref, p, WeightMode::full);
    const double reduced = plan_state_cost(plan, ref, p, WeightMode::reduced);
    CHECK(full > 0.0);
    CHECK(reduced == doctest::Approx(p.alpha_QN * full).epsilon(1e-12));
}

TEST_CASE("cost gradient norm") {
    MpcParams p;
    PlannedTrajectory plan;
    plan.x_star.assign(16, Vec6::Zero());
    plan.u_star.assign(15, MpcInput{});
    ReferenceTrajectory ref;
    ref.z.assign(16, Vec6::Zero());
    CHECK(cost_gradient_norm(plan, ref, p) == 0.0);
    plan.x_star[15][0] = 1.0;
    CHECK(cost_gradient_norm(plan, ref, p) == doctest::Approx(200.0));
    plan.x_star[15][0] = 2.0;
    CHECK(cost_gradient_norm(plan, ref, p) == doctest::Approx(400.0));
    plan.mode = WeightMode::reduced;
    CHECK(cost_gradient_norm(plan, ref, p) == doctest::Approx(0.8));
    plan.x_star[15][0] = 0.0;
    plan.u_star[14].a = Vec3(0, 3, 4);
    CHECK(cost_gradient_norm(plan, ref, p) == doctest::Approx(10.0));
}

TEST_CASE("target extraction") {
    PlannedTrajectory plan;
    for (int k = 0; k <= 15; ++k) plan.x_star.push_back((Vec6() << 0, 0, k / 6.0, 0, 0, 0).finished());
    plan.x_star[6].head<3>() = Vec3(0, 0, 1);
    plan.x_star[7].head<3>() = Vec3(0, 0, 2);
    UavState uav;
    uav.position = Vec3(1, 1, 1);
    CHECK((extract_target(plan, uav, Region::corridor) - Vec3(0, 0, 1.5)).norm() < 1e-12);
    CHECK(extract_target(plan, uav, Region::free) == plan.position(15));

    PlannedTrajectory small;
    for (int k = 0; k <= 15; ++k) small.x_star.push_back((Vec6() << 0.1 * k / 15.0, 0, 0, 0, 0, 0).finished());
    const Vec3 t = extract_target(small, uav, Region::hull);
    CHECK((t - (uav.position + Vec3(0.65, 0, 0))).norm() < 1e-12);

    PlannedTrajectory big;
    for (int k = 0; k <= 15; ++k) big.x_star.push_back((Vec6() << 0, 3.0 * k / 15.0, 0, 0, 0, 0).finished());
    CHECK((extract_target(big, uav, Region::hull) - (uav.position + Vec3(0, 12, 0))).norm() < 1e-12);

    PlannedTrajectory still;
    still.x_star.assign(16, Vec6::Zero());
    CHECK(extract_target(still, uav, Region::free) == uav.position);
}

TEST_CASE("solver failure reuses the previous plan") {
    MpcParams p;
    QpSettings tight;
    MpcPlanner planner(p, tight);
    const auto ref = static_reference(Vec3(3, 0, 0), p.N);
    const auto good = planner.plan(Vec6::Zero(), ref, zeros(p.N), WeightMode::full);
    REQUIRE_FALSE(good.reused);

    QpSettings starve;
    starve.max_iter = 1;
    MpcPlanner starving(p, starve);
    const auto first = starving.plan(Vec6::Zero(), ref, zeros(p.N), WeightMode::full);
    CHECK(first.reused);
    CHECK(first.status == QpStatus::max_iter);
}
