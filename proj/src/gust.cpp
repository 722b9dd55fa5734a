#include "gustdock/gust.hpp"

#include <cmath>
#include <stdexcept>

namespace gustdock {

double gust_speed(const GustEvent& event, double t) {
    if (t < event.onset || t > event.onset + event.duration) {
        return 0.0;
    }
    const double phase = 2.0 * M_PI * (t - event.onset) / event.duration;
    return 0.5 * event.peak_speed * (1.0 - std::cos(phase));
}

Vec3 gust_velocity(const GustEvent& event, double t) {
    return gust_speed(event, t) * event.direction;
}

Vec3 sample_direction_uniform(Rng& rng) {
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    for (;;) {
        Vec3 d(unit(rng), unit(rng), unit(rng));
        const double n = d.norm();
        if (n >= 1e-6) {
            return d / n;
        }
    }
}

std::vector<Vec3> sample_directions_equidistant(std::size_t n) {
    if (n == 0) {
        throw std::invalid_argument("sample_directions_equidistant: n must be >= 1");
    }
    const double golden_angle = M_PI * (3.0 - std::sqrt(5.0));
    std::vector<Vec3> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double z = 1.0 - 2.0 * (static_cast<double>(i) + 0.5) / static_cast<double>(n);
        const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
        const double theta = golden_angle * static_cast<double>(i);
        Vec3 d(r * std::cos(theta), r * std::sin(theta), z);
        out.push_back(d.normalized());
    }
    return out;
}

}  // namespace gustdock
