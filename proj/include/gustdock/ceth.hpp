#pragma once

#include "gustdock/detect.hpp"
#include "gustdock/world.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <utility>
#include <vector>

namespace gustdock {

// ---------------------------------------------------------------------------
// Geometry
// ---------------------------------------------------------------------------

/// No-fly zone in the blimp body frame (x forward, z up, origin at the hull
/// centre): a capsule along x unioned with a gondola box under the hull.
struct ZoneGeometry {
    double hull_half_length = 8.0;  ///< tip to centre [m]
    double hull_radius = 4.0;
    Vec3 gondola_size{2.0, 1.0, 1.5};
    Vec3 gondola_center{0.0, 0.0, -4.5};

    void validate() const;
    double segment_half_length() const { return hull_half_length - hull_radius; }
    /// Port on the underside of the gondola, below the hull centre.
    Vec3 port_body() const { return {0.0, 0.0, gondola_center.z() - 0.5 * gondola_size.z()}; }
    Vec3 bbox_min() const;
    Vec3 bbox_max() const;
};

struct HullSample {
    double distance = 0.0;                ///< to the zone surface; 0 inside
    Vec3 closest_point = Vec3::Zero();    ///< on the surface
    Vec3 normal = Vec3::UnitZ();          ///< unit, outward
    bool inside_zone = false;
    bool in_grid = true;                  ///< false for synthetic far samples
};

/// Exact union geometry. Outside points take the nearest primitive; inside
/// points take the exit of the most deeply penetrated primitive.
HullSample distance_and_normal(const Vec3& point_body, const ZoneGeometry& zone);

/// World <-> body using position and yaw only.
Vec3 world_to_body(const Vec3& p_world, const BlimpState& blimp);
Vec3 body_to_world(const Vec3& p_body, const BlimpState& blimp);

/// World-frame docking port of a blimp pose.
Vec3 port_world(const BlimpState& blimp, const ZoneGeometry& zone);

struct ApproachCorridor {
    double r_cone = 8.0;
    double h_cone = 7.0;
    double o_tip = 0.12;
    double h_cap = 0.15;

    void validate() const;
};

/// Truncated downward cone with apex o_tip above the port.
bool in_corridor(const Vec3& point_world, const ApproachCorridor& corridor, const BlimpState& blimp,
                 const ZoneGeometry& zone);

// ---------------------------------------------------------------------------
// Lookup table
// ---------------------------------------------------------------------------

struct GridSpec {
    Vec3 origin = Vec3::Zero();  ///< corner of cell (0, 0, 0)
    double h = 0.25;
    std::array<int, 3> dims{0, 0, 0};

    std::size_t cells() const {
        return static_cast<std::size_t>(dims[0]) * static_cast<std::size_t>(dims[1]) * static_cast<std::size_t>(dims[2]);
    }
    Vec3 cell_center(int i, int j, int k) const;
    Vec3 upper() const;
};

/// Grid covering the zone bounding box inflated by `margin` on every side.
GridSpec grid_for(const ZoneGeometry& zone, double h, double margin);

class HullLut {
public:
    HullLut() = default;

    /// Throws when the grid does not contain the zone inflated by `band`.
    static HullLut build(const ZoneGeometry& zone, const GridSpec& grid, double band);

    /// Nearest-cell sample in the body frame. Outside the grid: a synthetic
    /// force-free sample at distance band + 1.
    HullSample sample_body(const Vec3& p_body) const;

    void save(const std::filesystem::path& file) const;
    static HullLut load(const std::filesystem::path& file);

    const GridSpec& grid() const { return grid_; }
    const ZoneGeometry& zone() const { return zone_; }
    double band() const { return band_; }
    bool empty() const { return cells_.empty(); }

    bool operator==(const HullLut& o) const;

private:
    struct Cell {
        float distance;
        float closest[3];
        float normal[3];
        std::uint32_t flags;
    };
    static_assert(sizeof(Cell) == 32);

    GridSpec grid_;
    ZoneGeometry zone_;
    double band_ = 0.0;
    std::vector<Cell> cells_;
};

/// World-frame sample: transforms into the body frame, looks up, and rotates
/// the normal and closest point back.
HullSample lookup(const HullLut& lut, const Vec3& point_world, const BlimpState& blimp);

// ---------------------------------------------------------------------------
// Forces
// ---------------------------------------------------------------------------

struct CethParams {
    double k_rep = 1.0;
    double k_tang = 10.0;
    double d_band_tang = 5.0;
    double d_band_rep = 5.5;  ///< d_b
    double d_min = 1.0;
    double F_max_rep = 6.0;
    double F_max_tang = 2.0;
    double epsilon = 1e-6;

    void validate() const;
};

/// Cotangent shaping argument; saturates below d_min.
double repulsive_z(double d, const CethParams& params);

/// Repulsive potential U(d); zero for d >= d_b.
double repulsive_potential(double d, const CethParams& params);

Vec3 repulsive_force(const HullSample& sample, const CethParams& params);

struct TangentialForce {
    Vec3 force = Vec3::Zero();
    std::optional<Vec3> direction;  ///< direction used; feed back as the next fallback
    bool used_fallback = false;
};

TangentialForce tangential_force(const Vec3& uav_pos, const Vec3& port_pos, const HullSample& sample,
                                 double grad_norm, const CethParams& params,
                                 const std::optional<Vec3>& fallback = std::nullopt);

struct CethResult {
    Vec3 f = Vec3::Zero();
    Vec3 f_rep = Vec3::Zero();
    Vec3 f_tang = Vec3::Zero();
    Region region = Region::free;
    HullSample sample;
    std::optional<Vec3> fallback;
};

CethResult ceth_force(const UavState& uav, const BlimpState& blimp, const Vec3& port_pos, const HullLut& lut,
                      bool corridor_open, double grad_norm, const CethParams& params,
                      const ApproachCorridor& corridor, const std::optional<Vec3>& fallback);

// ---------------------------------------------------------------------------
// Safety position
// ---------------------------------------------------------------------------

struct SafetySlider {
    std::size_t index = 0;
};

/// Saturating slider along a predicted docking-port trajectory (frozen when
/// the gust was flagged). Returns the hold point below the future corridor
/// mouth; inactive gusts reset the slider and return the current port's hold
/// point.
std::pair<Vec3, SafetySlider> safety_position(const std::vector<Vec3>& predicted_port,
                                              const DetectionResult& detection, SafetySlider slider,
                                              const ApproachCorridor& corridor, bool gust_active,
                                              double sample_rate = 10.0);

/// Offset from a port position to the safety hold point.
Vec3 safety_offset(const ApproachCorridor& corridor);

}  // namespace gustdock
