#include <doctest.h>

#include "gustdock/plant.hpp"
#include "plant_oracle.hpp"

#include <filesystem>
#include <fstream>
#include <iterator>

using namespace gustdock;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

fs::path scratch_dir(const std::string& name) {
    const fs::path d = fs::temp_directory_path() / ("gustdock_test_" + name);
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

BlimpState start(const BlimpPlantParams& p) {
    BlimpState s;
    s.position = p.initial_position;
    s.velocity = p.nominal_velocity;
    return s;
}

}  // namespace

TEST_CASE("zero gust keeps nominal velocity exactly") {
    BlimpPlantParams p;
    BlimpState s = start(p);
    OscillatorState o;
    for (int k = 0; k < 500; ++k) std::tie(s, o) = step_blimp(s, o, Vec3::Zero(), p);
    CHECK(s.velocity == p.nominal_velocity);
    CHECK(s.euler.roll == 0.0);
}

TEST_CASE("constant gust converges to gain times gust") {
    BlimpPlantParams p;
    const Vec3 g(1.0, -0.5, 0.25);
    BlimpState s = start(p);
    OscillatorState o;
    for (int k = 0; k < 4000; ++k) std::tie(s, o) = step_blimp(s, o, g, p);
    CHECK((o.deviation - p.gust_gain * g).norm() < 1e-9);
}

TEST_CASE("step response overshoots when underdamped") {
    BlimpPlantParams p;
    p.zeta = 0.3;
    BlimpState s = start(p);
    OscillatorState o;
    double peak = 0.0;
    for (int k = 0; k < 400; ++k) {
        std::tie(s, o) = step_blimp(s, o, Vec3(1, 0, 0), p);
        peak = std::max(peak, o.deviation.x());
    }
    CHECK(peak > p.gust_gain * 1.0);
}

TEST_CASE("discrete step matches a fine RK4 integration") {
    BlimpPlantParams p;
    BlimpState s = start(p);
    OscillatorState o;
    oracle::Osc r;
    for (int k = 0; k < 80; ++k) {
        const Vec3 g(std::sin(0.3 * k), 0.5, -0.2 * (k % 7));
        std::tie(s, o) = step_blimp(s, o, g, p);
        r = oracle::rk4_oscillator(r, g, p.omega_n, p.zeta, p.gust_gain, p.dt, 200);
    }
    CHECK((o.deviation - r.e).norm() < 1e-9);
    CHECK((o.rate - r.de).norm() < 1e-9);
}

TEST_CASE("attitude mapping and clamp") {
    BlimpPlantParams p;
    const Euler e = attitude_from_deviation(Vec3(2.0, 1.0, 0.0), p);
    CHECK(e.roll == doctest::Approx(0.05));
    CHECK(e.pitch == doctest::Approx(0.10));
    CHECK(e.yaw == doctest::Approx(0.08));
    const Euler big = attitude_from_deviation(Vec3(100.0, -100.0, 0.0), p);
    CHECK(big.pitch == 0.5);
    CHECK(big.roll == -0.5);
    CHECK(big.yaw == -0.5);
}

TEST_CASE("calm episode is a straight line") {
    BlimpPlantParams p;
    EpisodeSpec spec;
    const Episode ep = simulate_episode(spec, p);
    REQUIRE(ep.blimp_trace.size() == 461);
    for (std::size_t k = 0; k < ep.blimp_trace.size(); ++k) {
        const BlimpState& b = ep.blimp_trace[k];
        CHECK(b.velocity == p.nominal_velocity);
        CHECK(b.position.y() == 0.0);
        CHECK(b.position.z() == 30.0);
        CHECK(b.position.x() == doctest::Approx(0.1 * static_cast<double>(k)).epsilon(1e-12));
        CHECK(b.time == doctest::Approx(0.1 * static_cast<double>(k)));
    }
}

TEST_CASE("episode lengths") {
    BlimpPlantParams p;
    EpisodeSpec train;
    train.v_max = 3.0;
    CHECK(simulate_episode(train, p).blimp_trace.size() == 461);
    EpisodeSpec eval = train;
    eval.t2 = 196.0;
    const Episode e = simulate_episode(eval, p);
    CHECK(e.blimp_trace.size() == 1961);
    CHECK(e.gust_trace.size() == 1961);
}

TEST_CASE("invalid episode specs are rejected") {
    BlimpPlantParams p;
    EpisodeSpec s;
    s.t2 = 12.0;
    CHECK_THROWS_AS(simulate_episode(s, p), std::invalid_argument);
    s = {};
    s.t0 = 0.0;
    CHECK_THROWS_AS(simulate_episode(s, p), std::invalid_argument);
    s = {};
    s.direction = Vec3(1, 1, 0);
    CHECK_THROWS_AS(simulate_episode(s, p), std::invalid_argument);
    BlimpPlantParams bad;
    bad.zeta = 1.2;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("gust-free before onset, settles after the gust") {
    BlimpPlantParams p;
    EpisodeSpec s;
    s.v_max = 4.0;
    s.t2 = 196.0;
    s.direction = Vec3(0.3, -0.8, 0.52).normalized();
    const Episode ep = simulate_episode(s, p);
    double emax = 0.0;
    for (const auto& b : ep.blimp_trace) {
        const double e = (b.velocity - p.nominal_velocity).norm();
        if (b.time < s.t0) CHECK(e == 0.0);
        emax = std::max(emax, e);
    }
    const double e_end = (ep.blimp_trace.back().velocity - p.nominal_velocity).norm();
    CHECK(emax > 1.0);
    CHECK(e_end <= 0.05 * emax);
}

TEST_CASE("oscillator energy is non-increasing once the gust has passed") {
    BlimpPlantParams p;
    BlimpState s = start(p);
    OscillatorState o;
    const GustEvent g{1.0, 4.0, 4.0, Vec3(0.6, 0.0, 0.8)};
    double prev = 0.0;
    for (int k = 1; k < 1500; ++k) {
        const double t_mid = (k - 0.5) * p.dt;
        std::tie(s, o) = step_blimp(s, o, gust_velocity(g, t_mid), p);
        const double E = o.energy(p.omega_n);
        if (t_mid > 5.0 + p.dt) CHECK(E <= prev + 1e-9);
        prev = E;
    }
}

TEST_CASE("dataset composition") {
    DatasetCounts c;
    const auto train = dataset_specs(DatasetKind::training, c, 7);
    CHECK(train.size() == 150);
    int by_level[4] = {0, 0, 0, 0};
    for (const auto& s : train) {
        ++by_level[static_cast<int>(s.v_max) - 1];
        CHECK(std::abs(s.direction.norm() - 1.0) < 1e-12);
        CHECK(s.t2 == 46.0);
    }
    CHECK(by_level[0] == 60);
    CHECK(by_level[1] == 20);
    CHECK(by_level[2] == 10);
    CHECK(by_level[3] == 60);

    const auto eval = dataset_specs(DatasetKind::evaluation, c, 7);
    REQUIRE(eval.size() == 10);
    for (const auto& s : eval) {
        CHECK(s.v_max == 4.0);
        CHECK(s.t2 == 196.0);
    }
    const auto calm = dataset_specs(DatasetKind::calm, c, 7);
    CHECK(calm.size() == 20);
    for (const auto& s : calm) CHECK(s.v_max == 0.0);

    CHECK(dataset_kind_from_string("evaluation") == DatasetKind::evaluation);
    CHECK_THROWS(dataset_kind_from_string("bogus"));
}

TEST_CASE("different seeds give different training directions") {
    DatasetCounts c;
    const auto a = dataset_specs(DatasetKind::training, c, 1);
    const auto b = dataset_specs(DatasetKind::training, c, 2);
    CHECK((a[0].direction - b[0].direction).norm() > 1e-6);
}

TEST_CASE("dataset files are deterministic and round-trip exactly") {
    BlimpPlantParams p;
    DatasetCounts c;
    c.training = {2, 1, 1, 2};
    const auto eps = generate_dataset(DatasetKind::training, c, p, 99);
    const fs::path d1 = scratch_dir("ds1");
    const fs::path d2 = scratch_dir("ds2");
    write_dataset(d1, DatasetKind::training, eps, p);
    write_dataset(d2, DatasetKind::training, generate_dataset(DatasetKind::training, c, p, 99), p);
    for (const auto& entry : fs::directory_iterator(d1)) {
        CHECK(slurp(entry.path()) == slurp(d2 / entry.path().filename()));
    }
    const auto back = read_dataset(d1);
    REQUIRE(back.size() == eps.size());
    for (std::size_t i = 0; i < eps.size(); ++i) {
        CHECK(back[i].spec.seed == eps[i].spec.seed);
        CHECK(back[i].spec.direction == eps[i].spec.direction);
        REQUIRE(back[i].blimp_trace.size() == eps[i].blimp_trace.size());
        for (std::size_t k = 0; k < eps[i].blimp_trace.size(); ++k) {
            CHECK(back[i].blimp_trace[k].position == eps[i].blimp_trace[k].position);
            CHECK(back[i].blimp_trace[k].velocity == eps[i].blimp_trace[k].velocity);
            CHECK(back[i].gust_trace[k] == eps[i].gust_trace[k]);
        }
    }
    fs::remove_all(d1);
    fs::remove_all(d2);
}

TEST_CASE("uav double integrator") {
    UavState s;
    s.velocity = Vec3(1, 0, 0);
    UavState n = step_uav(s, Vec3::Zero(), 0.1);
    CHECK((n.position - Vec3(0.1, 0, 0)).norm() < 1e-15);

    s = {};
    n = step_uav(s, Vec3(5, 0, 0), 0.1);
    CHECK((n.velocity - Vec3(0.5, 0, 0)).norm() < 1e-15);
    CHECK((n.position - Vec3(0.025, 0, 0)).norm() < 1e-15);

    s.velocity = Vec3(8, 0, 0);
    n = step_uav(s, Vec3(5, 0, 0), 0.1);
    CHECK(n.velocity.x() == 8.0);
    s.velocity = Vec3(0, 0, -4);
    n = step_uav(s, Vec3(0, 0, -5), 0.1);
    CHECK(n.velocity.z() == -4.0);
}

TEST_CASE("uav step is exact for constant acceleration") {
    UavState s;
    s.position = Vec3(1, 2, 3);
    s.velocity = Vec3(0.5, -0.2, 0.1);
    const Vec3 a(0.3, 0.4, -0.2);
    const double dt = 0.1;
    for (int k = 0; k < 20; ++k) s = step_uav(s, a, dt);
    const double T = 20 * dt;
    const Vec3 p = Vec3(1, 2, 3) + T * Vec3(0.5, -0.2, 0.1) + 0.5 * T * T * a;
    CHECK((s.position - p).norm() < 1e-12);
}
