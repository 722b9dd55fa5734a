#include "gustdock/world.hpp"

namespace gustdock {

Vec3 docking_target(const Vec3& port_position, const DockingCriteria& crit) {
    return port_position + Vec3(0.0, 0.0, -crit.below_offset);
}

bool is_docked(const UavState& uav, const Vec3& port_position, const DockingCriteria& crit) {
    const Vec3 err = uav.position - docking_target(port_position, crit);
    return err.head<2>().norm() <= crit.lateral_tol && std::abs(err.z()) <= crit.vertical_tol;
}

}  // namespace gustdock
