#pragma once

#include "gustdock/world.hpp"

#include <cstddef>
#include <random>
#include <vector>

namespace gustdock {

using Rng = std::mt19937_64;

/// One isolated 1-cos gust.
struct GustEvent {
    double onset = 0.0;       ///< t1 [s]
    double duration = 4.0;    ///< T_g [s], > 0
    double peak_speed = 0.0;  ///< v_g,max [m/s], >= 0
    Vec3 direction = Vec3::UnitX();
};

/// Scalar gust speed; zero outside [onset, onset + duration].
double gust_speed(const GustEvent& event, double t);

Vec3 gust_velocity(const GustEvent& event, double t);

/// Component-wise U[-1, 1] draw, normalised. Near-zero draws are rejected.
Vec3 sample_direction_uniform(Rng& rng);

/// Fibonacci-sphere lattice of n unit vectors.
std::vector<Vec3> sample_directions_equidistant(std::size_t n);

}  // namespace gustdock
