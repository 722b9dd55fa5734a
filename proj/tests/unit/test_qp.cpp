#include <doctest.h>

#include "gustdock/qp.hpp"
#include "oracles.hpp"
#include "qp_helpers.hpp"

#include <sstream>

using namespace gustdock;
using testing_qp::sparse;

namespace {

QProblem scalar_box() {
    QProblem p;  // (x - 1)^2 = x^2 - 2x + 1
    p.P = sparse(Eigen::MatrixXd::Constant(1, 1, 2.0));
    p.q = VecX::Constant(1, -2.0);
    p.A = sparse(Eigen::MatrixXd::Identity(1, 1));
    p.l = VecX::Constant(1, 0.0);
    p.u = VecX::Constant(1, 0.5);
    return p;
}

double kkt_stationarity(const QProblem& p, const QSolution& s) {
    return (p.P * s.x + p.q + p.A.transpose() * s.y).lpNorm<Eigen::Infinity>();
}

}  // namespace

TEST_CASE("clipped scalar optimum") {
    const auto s = solve(scalar_box());
    CHECK(s.status == QpStatus::solved);
    CHECK(s.x[0] == doctest::Approx(0.5).epsilon(1e-7));
}

TEST_CASE("equality via l == u") {
    QProblem p;
    p.P = sparse(Eigen::MatrixXd::Identity(2, 2));
    p.q = VecX::Zero(2);
    p.A = sparse(Eigen::MatrixXd::Identity(2, 2));
    p.l = Eigen::Vector2d(1, -1);
    p.u = p.l;
    const auto s = solve(p);
    CHECK(s.status == QpStatus::solved);
    CHECK((s.x - Eigen::Vector2d(1, -1)).lpNorm<Eigen::Infinity>() < 1e-7);
}

TEST_CASE("unconstrained problem with no rows") {
    QProblem p;
    p.P = sparse(Eigen::Matrix2d{{2.0, 0.5}, {0.5, 1.0}});
    p.q = Eigen::Vector2d(1.0, -1.0);
    p.A = SpMat(0, 2);
    p.l = VecX(0);
    p.u = VecX(0);
    const auto s = solve(p);
    CHECK(s.status == QpStatus::solved);
    const Eigen::Vector2d expect = Eigen::Matrix2d{{2.0, 0.5}, {0.5, 1.0}}.ldlt().solve(-p.q);
    CHECK((s.x - expect).norm() < 1e-4);
}

TEST_CASE("matches active-set enumeration on small box QPs") {
    std::mt19937_64 rng(2024);
    for (int trial = 0; trial < 120; ++trial) {
        const int n = 1 + trial % 3;
        const auto box = oracle::random_box_qp(rng, n);
        const QProblem p = testing_qp::from_box(box);
        const auto s = solve(p);
        REQUIRE(s.status == QpStatus::solved);
        const VecX ref = oracle::box_qp_active_set(box);
        CHECK((s.x - ref).lpNorm<Eigen::Infinity>() <= 1e-5);
        CHECK(p.objective(s.x) <= p.objective(ref) + 1e-6);
    }
}

TEST_CASE("general sparse QPs satisfy KKT conditions") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 30; ++trial) {
        const int n = 4 + trial % 17;
        const int m = 2 * n;
        const QProblem p = testing_qp::random_general_qp(rng, n, m);
        const auto s = solve(p);
        REQUIRE(s.status == QpStatus::solved);
        const VecX Ax = p.A * s.x;
        for (Eigen::Index i = 0; i < p.m(); ++i) {
            CHECK(Ax[i] >= p.l[i] - 1e-4);
            CHECK(Ax[i] <= p.u[i] + 1e-4);
        }
        CHECK(kkt_stationarity(p, s) <= 1e-4 * (1.0 + p.q.lpNorm<Eigen::Infinity>()));
    }
}

TEST_CASE("primal infeasibility is certified") {
    QProblem p;
    p.P = sparse(Eigen::MatrixXd::Identity(1, 1));
    p.q = VecX::Zero(1);
    p.A = sparse(Eigen::MatrixXd::Constant(2, 1, 1.0));
    p.l = Eigen::Vector2d(0.0, 2.0);
    p.u = Eigen::Vector2d(1.0, 3.0);
    const auto s = solve(p);
    CHECK(s.status == QpStatus::primal_infeasible);
}

TEST_CASE("max_iter returns the best iterate") {
    QpSettings st;
    st.max_iter = 2;
    st.adaptive_rho = false;
    std::mt19937_64 rng(5);
    const auto s = solve(testing_qp::random_general_qp(rng, 10, 20), st);
    CHECK(s.status == QpStatus::max_iter);
    CHECK(s.iterations == 2);
    CHECK(s.x.allFinite());
}

TEST_CASE("warm start") {
    std::mt19937_64 rng(8);
    const QProblem p = testing_qp::random_general_qp(rng, 12, 24);
    const auto cold = solve(p);
    REQUIRE(cold.status == QpStatus::solved);

    SUBCASE("identical problem converges almost immediately") {
        const auto warm = solve(p, {}, warm_start(cold));
        CHECK(warm.warm_started);
        CHECK(warm.status == QpStatus::solved);
        CHECK(warm.iterations <= 5);
        CHECK((warm.x - cold.x).lpNorm<Eigen::Infinity>() < 1e-6);
    }
    SUBCASE("perturbed problem gives the cold-start answer") {
        QProblem q = p;
        q.q *= 1.01;
        const auto c2 = solve(q);
        const auto w2 = solve(q, {}, warm_start(cold));
        CHECK((c2.x - w2.x).lpNorm<Eigen::Infinity>() < 1e-4);
    }
    SUBCASE("dimension mismatch falls back to a cold start") {
        WarmStart bad{VecX::Zero(3), VecX::Zero(3), VecX::Zero(3)};
        const auto s = solve(p, {}, bad);
        CHECK_FALSE(s.warm_started);
        CHECK(s.iterations == cold.iterations);
        CHECK(s.x == cold.x);
    }
}

TEST_CASE("solves are deterministic") {
    std::mt19937_64 rng(21);
    const QProblem p = testing_qp::random_general_qp(rng, 15, 30);
    const auto a = solve(p);
    const auto b = solve(p);
    CHECK(a.iterations == b.iterations);
    CHECK(a.x == b.x);
    CHECK(a.y == b.y);
}

TEST_CASE("problem validation") {
    QProblem p = scalar_box();
    p.l[0] = 1.0;
    CHECK_THROWS_AS(solve(p), std::invalid_argument);
    p = scalar_box();
    p.P = sparse(Eigen::Matrix2d{{1.0, 0.5}, {0.0, 1.0}});
    p.q = VecX::Zero(2);
    p.A = sparse(Eigen::MatrixXd::Identity(1, 2));
    CHECK_THROWS_AS(solve(p), std::invalid_argument);
}

TEST_CASE("problem dump lists every matrix") {
    std::ostringstream os;
    write_problem(os, scalar_box());
    const std::string s = os.str();
    CHECK(s.find("% P") != std::string::npos);
    CHECK(s.find("% A") != std::string::npos);
    CHECK(s.find("% u 1") != std::string::npos);
}
