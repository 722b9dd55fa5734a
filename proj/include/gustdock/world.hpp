#pragma once

#include <Eigen/Core>

#include <cmath>

namespace gustdock {

// World frame is right-handed ENU (z up). All positions in metres.
using Vec3 = Eigen::Vector3d;

/// ZYX Euler angles [rad].
struct Euler {
    double roll = 0.0;
    double pitch = 0.0;
    double yaw = 0.0;
};

struct BlimpState {
    Vec3 position = Vec3::Zero();  ///< hull centre [m]
    Vec3 velocity = Vec3::Zero();  ///< [m/s]
    Euler euler;
    double time = 0.0;             ///< [s]
};

struct UavState {
    Vec3 position = Vec3::Zero();
    Vec3 velocity = Vec3::Zero();
    double time = 0.0;
};

/// Where the UAV sits relative to the avoidance field.
enum class Region { corridor, hull, free };

inline const char* to_string(Region r) {
    switch (r) {
        case Region::corridor: return "corridor";
        case Region::hull: return "hull";
        case Region::free: return "free";
    }
    return "unknown";
}

struct DockingCriteria {
    double below_offset = 0.3;  ///< docking point distance below the port [m]
    double lateral_tol = 0.3;   ///< horizontal radius [m]
    double vertical_tol = 0.1;  ///< [m]
};

/// Point the UAV has to reach: straight below the port by `below_offset`.
Vec3 docking_target(const Vec3& port_position, const DockingCriteria& crit = {});

/// Per-tick docking predicate: horizontal disk of radius lateral_tol and a
/// vertical slab of half-height vertical_tol around the docking target.
bool is_docked(const UavState& uav, const Vec3& port_position, const DockingCriteria& crit = {});

inline bool all_finite(const Vec3& v) { return v.allFinite(); }

/// Wraps an angle into (-pi, pi].
inline double wrap_angle(double a) {
    a = std::remainder(a, 2.0 * M_PI);
    return a <= -M_PI ? a + 2.0 * M_PI : a;
}

/// Rotation about world z by `yaw`.
inline Vec3 rotate_yaw(const Vec3& v, double yaw) {
    const double c = std::cos(yaw);
    const double s = std::sin(yaw);
    return {c * v.x() - s * v.y(), s * v.x() + c * v.y(), v.z()};
}

}  // namespace gustdock
