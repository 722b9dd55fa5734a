#include <doctest.h>

#include "gustdock/world.hpp"

using namespace gustdock;

TEST_CASE("docking target sits below the port") {
    CHECK(docking_target({0, 0, 30}).isApprox(Vec3(0, 0, 29.7)));
    CHECK(docking_target({0, 0, 0}).isApprox(Vec3(0, 0, -0.3)));
    CHECK(docking_target({5, -2, 10}).isApprox(Vec3(5, -2, 9.7)));
}

TEST_CASE("docking target is a pure translation") {
    const Vec3 p(1.5, -3.0, 22.0);
    for (const Vec3& d : {Vec3(1, 0, 0), Vec3(-7, 3, 2), Vec3(0.1, 0.2, -40)}) {
        CHECK((docking_target(p + d) - (docking_target(p) + d)).norm() < 1e-12);
    }
}

TEST_CASE("is_docked tolerances") {
    const Vec3 port(0, 0, 30);
    const Vec3 target = docking_target(port);
    UavState u;
    u.position = target;
    CHECK(is_docked(u, port));
    u.position = target + Vec3(0.31, 0, 0);
    CHECK_FALSE(is_docked(u, port));
    u.position = target + Vec3(0, 0, 0.11);
    CHECK_FALSE(is_docked(u, port));
    u.position = target + Vec3(0.2, 0.2, 0.05);  // lateral 0.283
    CHECK(is_docked(u, port));
}

TEST_CASE("is_docked is invariant under horizontal translation") {
    const Vec3 port(3, 4, 30);
    UavState u;
    u.position = docking_target(port) + Vec3(0.25, -0.1, 0.08);
    const bool base = is_docked(u, port);
    for (const Vec3& d : {Vec3(10, 0, 0), Vec3(-3, 7, 0), Vec3(1e3, -1e3, 0)}) {
        UavState moved = u;
        moved.position += d;
        CHECK(is_docked(moved, port + d) == base);
    }
}

TEST_CASE("wrap_angle lands in (-pi, pi]") {
    CHECK(wrap_angle(M_PI) == doctest::Approx(M_PI));
    CHECK(wrap_angle(-M_PI) == doctest::Approx(M_PI));
    CHECK(wrap_angle(3 * M_PI / 2) == doctest::Approx(-M_PI / 2));
    CHECK(wrap_angle(0.25) == doctest::Approx(0.25));
}
