#include <doctest.h>

#include "gustdock/ekf.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>

using namespace gustdock;

namespace {

MarkerObservation obs_at(const Vec3& p) {
    MarkerObservation o;
    o.measured_port_position = p;
    o.valid = true;
    return o;
}

double min_eig(const Eigen::Matrix3d& M) {
    return Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d>(M).eigenvalues().minCoeff();
}

}  // namespace

TEST_CASE("predict grows covariance only") {
    BiasState s;
    s.bias = Vec3(0.1, 0.2, 0.3);
    const BiasState same = predict(s, 1.0, 0.0);
    CHECK(same.bias == s.bias);
    CHECK(same.covariance == s.covariance);
    const BiasState grown = predict(s, 1.0, 0.01);
    CHECK((grown.covariance - s.covariance - 0.01 * Eigen::Matrix3d::Identity()).norm() < 1e-12);
    CHECK(grown.bias == s.bias);
    CHECK_THROWS(predict(s, -0.1, 0.01));
}

TEST_CASE("noise-free updates converge to the true offset") {
    const Vec3 shared(10, -3, 25);
    const Vec3 offset(0.8, -0.4, 0.25);
    BiasState s;
    double prev_err = (s.bias - offset).norm();
    double prev_trace = s.covariance.trace();
    for (int k = 0; k < 50; ++k) {
        s = update(s, obs_at(shared + offset), shared, 9e-4);
        const double err = (s.bias - offset).norm();
        CHECK(err <= prev_err + 1e-15);
        CHECK(s.covariance.trace() <= prev_trace + 1e-15);
        CHECK((s.covariance - s.covariance.transpose()).norm() < 1e-15);
        CHECK(min_eig(s.covariance) >= -1e-12);
        prev_err = err;
        prev_trace = s.covariance.trace();
    }
    CHECK((s.bias - offset).norm() < 1e-6);
    // Isotropic prior P0: the residual shrinks to r / (r + n P0) of the offset.
    const double P0 = EkfParams{}.initial_variance;
    CHECK((s.bias - offset).norm() == doctest::Approx(offset.norm() * 9e-4 / (9e-4 + 50 * P0)).epsilon(1e-6));
}

TEST_CASE("update edge cases") {
    BiasState s;
    s.bias = Vec3(0.5, 0.0, -0.1);
    const Vec3 shared(1, 2, 3);
    const BiasState huge_r = update(s, obs_at(shared + Vec3(5, 5, 5)), shared, 1e12);
    CHECK((huge_r.bias - s.bias).norm() < 1e-9);
    const BiasState exact = update(s, obs_at(shared + s.bias), shared, 9e-4);
    CHECK((exact.bias - s.bias).norm() < 1e-15);
    MarkerObservation dropped = obs_at(Vec3(100, 100, 100));
    dropped.valid = false;
    const BiasState noop = update(s, dropped, shared, 9e-4);
    CHECK(noop.bias == s.bias);
    CHECK(noop.covariance == s.covariance);
}

TEST_CASE("bias estimate is translation covariant") {
    const Vec3 offset(0.3, 0.1, -0.2);
    const Vec3 d(100, -50, 7);
    BiasState a, b;
    for (int k = 0; k < 10; ++k) {
        const Vec3 shared(k * 0.1, 0, 30);
        a = update(predict(a, 0.1, 1e-4), obs_at(shared + offset + Vec3(0.01 * k, 0, 0)), shared, 9e-4);
        b = update(predict(b, 0.1, 1e-4), obs_at(shared + d + offset + Vec3(0.01 * k, 0, 0)), shared + d, 9e-4);
    }
    CHECK((a.bias - b.bias).norm() < 1e-9);
    LowPass la, lb;
    Vec3 oa, ob;
    std::tie(oa, la) = corrected_port(Vec3(1, 2, 3), a, la, 0.3);
    std::tie(ob, lb) = corrected_port(Vec3(1, 2, 3) + d, b, lb, 0.3);
    CHECK((ob - oa - d).norm() < 1e-9);
}

TEST_CASE("low-pass output") {
    BiasState s;
    s.bias.setZero();
    LowPass lp;
    Vec3 out;
    std::tie(out, lp) = corrected_port(Vec3(1, 1, 1), s, lp, 1.0);
    CHECK(out == Vec3(1, 1, 1));

    lp = {};
    std::tie(out, lp) = corrected_port(Vec3::Zero(), s, lp, 0.2);
    CHECK(out == Vec3::Zero());
    for (int k = 0; k < 10; ++k) std::tie(out, lp) = corrected_port(Vec3(1, 0, 0), s, lp, 0.2);
    CHECK(out.x() == doctest::Approx(1.0 - std::pow(0.8, 10)));
    CHECK(out.x() == doctest::Approx(0.892625).epsilon(1e-6));
    CHECK_THROWS(corrected_port(Vec3::Zero(), s, lp, 0.0));
}

TEST_CASE("synthetic markers drop at the configured rate") {
    EkfParams p;
    Rng rng(9);
    int valid = 0;
    Vec3 mean = Vec3::Zero();
    const int n = 20000;
    for (int k = 0; k < n; ++k) {
        const auto o = synthesize_marker(Vec3(1, 2, 3), 0.1 * k, p, rng);
        if (o.valid) {
            ++valid;
            mean += o.measured_port_position - Vec3(1, 2, 3);
        }
    }
    CHECK(static_cast<double>(valid) / n == doctest::Approx(0.7).epsilon(0.02));
    CHECK((mean / valid).norm() < 0.003);
}
