#include "gustdock/ceth.hpp"

#include "gustdock/io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <string>

namespace gustdock {

// ---------------------------------------------------------------------------
// Geometry
// ---------------------------------------------------------------------------

void ZoneGeometry::validate() const {
    if (!(hull_radius > 0.0 && hull_half_length >= hull_radius))
        throw std::invalid_argument("zone: need hull_half_length >= hull_radius > 0");
    if ((gondola_size.array() <= 0.0).any()) throw std::invalid_argument("zone: gondola size must be positive");
}

Vec3 ZoneGeometry::bbox_min() const {
    const Vec3 hull(-hull_half_length, -hull_radius, -hull_radius);
    return hull.cwiseMin(gondola_center - 0.5 * gondola_size);
}

Vec3 ZoneGeometry::bbox_max() const {
    const Vec3 hull(hull_half_length, hull_radius, hull_radius);
    return hull.cwiseMax(gondola_center + 0.5 * gondola_size);
}

namespace {

// Signed distance sample of one primitive: distance < 0 inside.
struct Primitive {
    double signed_distance;
    Vec3 closest;
    Vec3 normal;
};

Primitive capsule(const Vec3& p, double half_segment, double radius) {
    const Vec3 c(std::clamp(p.x(), -half_segment, half_segment), 0.0, 0.0);
    const Vec3 r = p - c;
    const double len = r.norm();
    Vec3 n = len > 1e-12 ? Vec3(r / len) : Vec3::UnitZ();
    return {len - radius, c + radius * n, n};
}

Primitive box(const Vec3& p, const Vec3& center, const Vec3& size) {
    const Vec3 half = 0.5 * size;
    const Vec3 lo = center - half;
    const Vec3 hi = center + half;
    const Vec3 q = (p - center).cwiseAbs() - half;
    if (q.maxCoeff() > 0.0) {
        const Vec3 closest = p.cwiseMax(lo).cwiseMin(hi);
        const Vec3 r = p - closest;
        const double len = r.norm();
        return {len, closest, r / len};
    }
    int axis = 0;
    q.maxCoeff(&axis);
    const double sign = p[axis] >= center[axis] ? 1.0 : -1.0;
    Vec3 n = Vec3::Zero();
    n[axis] = sign;
    Vec3 closest = p;
    closest[axis] = center[axis] + sign * half[axis];
    return {q[axis], closest, n};
}

}  // namespace

HullSample distance_and_normal(const Vec3& point_body, const ZoneGeometry& zone) {
    const Primitive a = capsule(point_body, zone.segment_half_length(), zone.hull_radius);
    const Primitive b = box(point_body, zone.gondola_center, zone.gondola_size);
    HullSample s;
    if (a.signed_distance <= 0.0 || b.signed_distance <= 0.0) {
        // Deepest penetration decides the exit direction.
        const Primitive& deep = a.signed_distance <= b.signed_distance ? a : b;
        s.distance = 0.0;
        s.closest_point = deep.closest;
        s.normal = deep.normal;
        s.inside_zone = true;
        return s;
    }
    const Primitive& near = a.signed_distance <= b.signed_distance ? a : b;
    s.distance = near.signed_distance;
    s.closest_point = near.closest;
    s.normal = near.normal;
    return s;
}

Vec3 world_to_body(const Vec3& p_world, const BlimpState& blimp) {
    return rotate_yaw(p_world - blimp.position, -blimp.euler.yaw);
}

Vec3 body_to_world(const Vec3& p_body, const BlimpState& blimp) {
    return rotate_yaw(p_body, blimp.euler.yaw) + blimp.position;
}

Vec3 port_world(const BlimpState& blimp, const ZoneGeometry& zone) { return body_to_world(zone.port_body(), blimp); }

void ApproachCorridor::validate() const {
    if (!(r_cone > 0.0 && h_cone > 0.0 && h_cap >= 0.0 && h_cap < h_cone && o_tip >= 0.0))
        throw std::invalid_argument("corridor: need r_cone > 0 and 0 <= h_cap < h_cone");
}

bool in_corridor(const Vec3& point_world, const ApproachCorridor& corridor, const BlimpState& blimp,
                 const ZoneGeometry& zone) {
    const Vec3 apex = zone.port_body() + Vec3(0.0, 0.0, corridor.o_tip);
    const Vec3 p = world_to_body(point_world, blimp);
    const double depth = apex.z() - p.z();
    if (depth < corridor.h_cap || depth > corridor.h_cone) return false;
    const double radial = (p - apex).head<2>().norm();
    return radial <= corridor.r_cone * depth / corridor.h_cone;
}

// ---------------------------------------------------------------------------
// Lookup table
// ---------------------------------------------------------------------------

Vec3 GridSpec::cell_center(int i, int j, int k) const {
    return origin + h * Vec3(i + 0.5, j + 0.5, k + 0.5);
}

Vec3 GridSpec::upper() const { return origin + h * Vec3(dims[0], dims[1], dims[2]); }

GridSpec grid_for(const ZoneGeometry& zone, double h, double margin) {
    if (!(h > 0.0)) throw std::invalid_argument("grid: cell size must be > 0");
    GridSpec g;
    g.h = h;
    g.origin = zone.bbox_min() - Vec3::Constant(margin);
    const Vec3 extent = zone.bbox_max() + Vec3::Constant(margin) - g.origin;
    for (int a = 0; a < 3; ++a) g.dims[static_cast<std::size_t>(a)] = static_cast<int>(std::ceil(extent[a] / h - 1e-9));
    return g;
}

namespace {
constexpr std::uint32_t kInside = 1u;
constexpr char kLutMagic[8] = {'G', 'D', 'L', 'U', 'T', '0', '0', '1'};
}  // namespace

HullLut HullLut::build(const ZoneGeometry& zone, const GridSpec& grid, double band) {
    zone.validate();
    const Vec3 need_lo = zone.bbox_min() - Vec3::Constant(band);
    const Vec3 need_hi = zone.bbox_max() + Vec3::Constant(band);
    if ((grid.origin.array() > need_lo.array()).any() || (grid.upper().array() < need_hi.array()).any()) {
        throw std::invalid_argument("lut: grid too small; required extent [" + fmt_vec(need_lo) + "] to [" +
                                    fmt_vec(need_hi) + "]");
    }
    HullLut lut;
    lut.grid_ = grid;
    lut.zone_ = zone;
    lut.band_ = band;
    lut.cells_.resize(grid.cells());
    std::size_t idx = 0;
    for (int k = 0; k < grid.dims[2]; ++k)
        for (int j = 0; j < grid.dims[1]; ++j)
            for (int i = 0; i < grid.dims[0]; ++i, ++idx) {
                const HullSample s = distance_and_normal(grid.cell_center(i, j, k), zone);
                Cell& c = lut.cells_[idx];
                c.distance = static_cast<float>(s.distance);
                for (int a = 0; a < 3; ++a) {
                    c.closest[a] = static_cast<float>(s.closest_point[a]);
                    c.normal[a] = static_cast<float>(s.normal[a]);
                }
                c.flags = s.inside_zone ? kInside : 0u;
            }
    return lut;
}

HullSample HullLut::sample_body(const Vec3& p_body) const {
    if (cells_.empty()) throw std::logic_error("lut: not built");
    const Vec3 rel = (p_body - grid_.origin) / grid_.h;
    std::array<long, 3> ijk{};
    bool inside_grid = true;
    for (int a = 0; a < 3; ++a) {
        ijk[static_cast<std::size_t>(a)] = static_cast<long>(std::floor(rel[a]));
        if (!(ijk[static_cast<std::size_t>(a)] >= 0 && ijk[static_cast<std::size_t>(a)] < grid_.dims[static_cast<std::size_t>(a)]))
            inside_grid = false;
    }
    HullSample s;
    if (!inside_grid) {
        s.distance = band_ + 1.0;
        s.closest_point = p_body;
        s.normal = Vec3::UnitZ();
        s.in_grid = false;
        return s;
    }
    const std::size_t idx = static_cast<std::size_t>(ijk[0]) +
                            static_cast<std::size_t>(grid_.dims[0]) *
                                (static_cast<std::size_t>(ijk[1]) + static_cast<std::size_t>(grid_.dims[1]) * static_cast<std::size_t>(ijk[2]));
    const Cell& c = cells_[idx];
    s.distance = c.distance;
    s.closest_point = Vec3(c.closest[0], c.closest[1], c.closest[2]);
    s.normal = Vec3(c.normal[0], c.normal[1], c.normal[2]).normalized();  // undo float rounding
    s.inside_zone = (c.flags & kInside) != 0u;
    return s;
}

void HullLut::save(const std::filesystem::path& file) const {
    std::ofstream out(file, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + file.string());
    out.write(kLutMagic, sizeof kLutMagic);
    for (int a = 0; a < 3; ++a) write_f64(out, grid_.origin[a]);
    write_f64(out, grid_.h);
    for (int d : grid_.dims) write_u64(out, static_cast<std::uint64_t>(d));
    write_f64(out, band_);
    write_f64(out, zone_.hull_half_length);
    write_f64(out, zone_.hull_radius);
    for (int a = 0; a < 3; ++a) write_f64(out, zone_.gondola_size[a]);
    for (int a = 0; a < 3; ++a) write_f64(out, zone_.gondola_center[a]);
    out.write(reinterpret_cast<const char*>(cells_.data()), static_cast<std::streamsize>(cells_.size() * sizeof(Cell)));
    if (!out) throw std::runtime_error("write failed: " + file.string());
}

HullLut HullLut::load(const std::filesystem::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open LUT file " + file.string());
    char magic[8];
    in.read(magic, sizeof magic);
    if (!in || !std::equal(magic, magic + 8, kLutMagic)) throw std::runtime_error("not a LUT file: " + file.string());
    HullLut lut;
    for (int a = 0; a < 3; ++a) lut.grid_.origin[a] = read_f64(in);
    lut.grid_.h = read_f64(in);
    for (int& d : lut.grid_.dims) d = static_cast<int>(read_u64(in));
    lut.band_ = read_f64(in);
    lut.zone_.hull_half_length = read_f64(in);
    lut.zone_.hull_radius = read_f64(in);
    for (int a = 0; a < 3; ++a) lut.zone_.gondola_size[a] = read_f64(in);
    for (int a = 0; a < 3; ++a) lut.zone_.gondola_center[a] = read_f64(in);
    lut.cells_.resize(lut.grid_.cells());
    in.read(reinterpret_cast<char*>(lut.cells_.data()), static_cast<std::streamsize>(lut.cells_.size() * sizeof(Cell)));
    if (!in) throw std::runtime_error("truncated LUT file: " + file.string());
    return lut;
}

bool HullLut::operator==(const HullLut& o) const {
    if (grid_.origin != o.grid_.origin || grid_.h != o.grid_.h || grid_.dims != o.grid_.dims || band_ != o.band_)
        return false;
    if (cells_.size() != o.cells_.size()) return false;
    return std::equal(cells_.begin(), cells_.end(), o.cells_.begin(), [](const Cell& a, const Cell& b) {
        return a.distance == b.distance && a.flags == b.flags && std::equal(a.closest, a.closest + 3, b.closest) &&
               std::equal(a.normal, a.normal + 3, b.normal);
    });
}

HullSample lookup(const HullLut& lut, const Vec3& point_world, const BlimpState& blimp) {
    HullSample s = lut.sample_body(world_to_body(point_world, blimp));
    if (!s.in_grid) {
        s.closest_point = point_world;
        return s;
    }
    s.closest_point = body_to_world(s.closest_point, blimp);
    s.normal = rotate_yaw(s.normal, blimp.euler.yaw);
    return s;
}

// ---------------------------------------------------------------------------
// Forces
// ---------------------------------------------------------------------------

void CethParams::validate() const {
    if (!(d_min > 0.0 && d_min < d_band_tang && d_band_tang < d_band_rep))
        throw std::invalid_argument("ceth: need 0 < d_min < d_band_tang < d_band_rep");
    if (!(k_rep > 0 && k_tang > 0 && F_max_rep > 0 && F_max_tang > 0 && epsilon > 0))
        throw std::invalid_argument("ceth: gains, clamps and epsilon must be positive");
}

double repulsive_z(double d, const CethParams& p) {
    const double span = p.d_band_rep - p.d_min;
    if (d < p.d_min) return 0.5 * M_PI * 0.1 / span;
    return 0.5 * M_PI * (d - p.d_min) / span;
}

double repulsive_potential(double d, const CethParams& p) {
    if (d >= p.d_band_rep) return 0.0;
    const double z = repulsive_z(d, p);
    const double span = p.d_band_rep - p.d_min;
    return M_PI / (2.0 * span) * (1.0 / std::tan(z) + z - 0.5 * M_PI);
}

Vec3 repulsive_force(const HullSample& sample, const CethParams& p) {
    const double d = sample.inside_zone ? 0.0 : sample.distance;
    if (d >= p.d_band_rep) return Vec3::Zero();
    const double mag = std::min(p.k_rep * repulsive_potential(d, p), p.F_max_rep);
    return std::max(mag, 0.0) * sample.normal;
}

TangentialForce tangential_force(const Vec3& uav_pos, const Vec3& port_pos, const HullSample& sample,
                                 double grad_norm, const CethParams& p, const std::optional<Vec3>& fallback) {
    TangentialForce out;
    out.direction = fallback;
    if (sample.distance > p.d_band_tang) return out;
    const Vec3 v = port_pos - uav_pos;
    const Vec3& n = sample.normal;
    const Vec3 v_perp = v - v.dot(n) * n;
    Vec3 t;
    if (v_perp.norm() > p.epsilon) {
        t = v_perp.normalized();
    } else if (fallback && fallback->norm() > p.epsilon) {
        t = fallback->normalized();
        out.used_fallback = true;
    } else if (v.norm() > p.epsilon) {
        t = v.normalized();
        out.used_fallback = true;
    } else {
        return out;
    }
    const double mag = std::min(p.k_tang * grad_norm, p.F_max_tang);
    out.force = mag * t;
    out.direction = t;
    return out;
}

CethResult ceth_force(const UavState& uav, const BlimpState& blimp, const Vec3& port_pos, const HullLut& lut,
                      bool corridor_open, double grad_norm, const CethParams& params,
                      const ApproachCorridor& corridor, const std::optional<Vec3>& fallback) {
    CethResult r;
    r.fallback = fallback;
    if (corridor_open && in_corridor(uav.position, corridor, blimp, lut.zone())) {
        r.region = Region::corridor;
        r.sample = lookup(lut, uav.position, blimp);
        return r;
    }
    r.sample = lookup(lut, uav.position, blimp);
    if (r.sample.distance > params.d_band_rep) {
        r.region = Region::free;
        return r;
    }
    r.region = Region::hull;
    r.f_rep = repulsive_force(r.sample, params);
    const TangentialForce t = tangential_force(uav.position, port_pos, r.sample, grad_norm, params, fallback);
    r.f_tang = t.force;
    r.fallback = t.direction;
    r.f = r.f_rep + r.f_tang;
    return r;
}

// ---------------------------------------------------------------------------
// Safety position
// ---------------------------------------------------------------------------

Vec3 safety_offset(const ApproachCorridor& corridor) { return {0.0, 0.0, -(corridor.h_cone + 1.0)}; }

std::pair<Vec3, SafetySlider> safety_position(const std::vector<Vec3>& predicted_port,
                                              const DetectionResult& detection, SafetySlider slider,
                                              const ApproachCorridor& corridor, bool gust_active,
                                              double sample_rate) {
    if (predicted_port.empty()) throw std::invalid_argument("safety_position: empty prediction");
    if (!gust_active) return {docking_target(predicted_port.front()), SafetySlider{0}};
    std::size_t limit = predicted_port.size() - 1;
    if (detection.subsided_after) {
        const auto subsided = static_cast<std::size_t>(std::llround(*detection.subsided_after * sample_rate));
        limit = std::min(limit, subsided);
    }
    slider.index = std::min(slider.index + 1, limit);
    return {predicted_port[slider.index] + safety_offset(corridor), slider};
}

}  // namespace gustdock
