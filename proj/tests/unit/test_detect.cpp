#include <doctest.h>

#include "gustdock/detect.hpp"

#include <random>

using namespace gustdock;

TEST_CASE("window partitions") {
    auto w = windows(60, 10);
    REQUIRE(w.size() == 10);
    for (std::size_t i = 0; i < 10; ++i) CHECK(w[i].second - w[i].first == 6);

    w = windows(98, 10);
    for (std::size_t i = 0; i < 9; ++i) CHECK(w[i].second - w[i].first == 9);
    CHECK(w[9].first == 81);
    CHECK(w[9].second == 98);

    w = windows(10, 10);
    for (const auto& r : w) CHECK(r.second - r.first == 1);
    CHECK_THROWS_AS(windows(9, 10), std::invalid_argument);
}

TEST_CASE("constant series never flags") {
    DetectionConfig c;
    const std::vector<Vec3> v(98, Vec3(3.2, -1.0, 7.5));
    const auto r = detect(v, c);
    CHECK_FALSE(r.gust_detected);
    CHECK_FALSE(r.subsided_after.has_value());
    CHECK(r.max_deviation < 1e-12);
}

TEST_CASE("single spike over the full series") {
    DetectionConfig c;
    c.t_max_g = 9.8;  // use all 98 samples
    std::vector<Vec3> v(98, Vec3::Zero());
    v[40].x() = 2.0;
    const auto r = detect(v, c);
    CHECK(r.gust_detected);
    REQUIRE(r.flagged_windows.size() == 1);
    CHECK(r.flagged_windows[0].axis == 0);
    CHECK(r.flagged_windows[0].window == 4);
    CHECK(r.flagged_windows[0].deviation == doctest::Approx(2.0 - 2.0 / 98.0));
    CHECK(*r.subsided_after == doctest::Approx(4.5));
}

TEST_CASE("threshold is strict") {
    DetectionConfig c;
    c.threshold = 0.9;
    // Mean 0; deviation 0.9 on one sample and its mirror.
    std::vector<Vec3> v(60, Vec3::Zero());
    v[10].y() = 0.9;
    v[11].y() = -0.9;
    CHECK_FALSE(detect(v, c).gust_detected);
    v[10].y() = 0.9000001;
    CHECK(detect(v, c).gust_detected);
}

TEST_CASE("only the first t_max_g seconds are considered") {
    DetectionConfig c;
    std::vector<Vec3> v(98, Vec3::Zero());
    v[70].z() = 5.0;
    CHECK_FALSE(detect(v, c).gust_detected);
    v[59].z() = 5.0;
    const auto r = detect(v, c);
    CHECK(r.gust_detected);
    CHECK(*r.subsided_after == doctest::Approx(6.0));
}

TEST_CASE("detection invariants: offset and scale") {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> g(0.0, 0.6);
    DetectionConfig c;
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<Vec3> v(60);
        for (auto& s : v) s = Vec3(g(rng), g(rng), g(rng));
        const auto base = detect(v, c);

        std::vector<Vec3> shifted = v;
        for (auto& s : shifted) s += Vec3(5.0, -3.0, 1.0);
        const auto rs = detect(shifted, c);
        CHECK(rs.max_deviation == doctest::Approx(base.max_deviation).epsilon(1e-12));
        CHECK(rs.gust_detected == base.gust_detected);

        const double k = 2.5;
        std::vector<Vec3> scaled = v;
        for (auto& s : scaled) s *= k;
        DetectionConfig ck = c;
        const auto rk = detect(scaled, ck);
        CHECK(rk.max_deviation == doctest::Approx(k * base.max_deviation).epsilon(1e-12));
        DetectionConfig c_div = c;
        c_div.threshold = c.threshold / k;
        CHECK(detect(v, c_div).gust_detected == rk.gust_detected);
    }
}

TEST_CASE("detect rejects bad input") {
    DetectionConfig c;
    CHECK_THROWS_AS(detect({}, c), std::invalid_argument);
    CHECK_THROWS_AS(detect(std::vector<Vec3>(5), c), std::invalid_argument);
    c.W_g = 0;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}
