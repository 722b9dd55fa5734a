#pragma once

#include "gustdock/world.hpp"

#include <cstddef>
#include <optional>
#include <utility>
#include <vector>

namespace gustdock {

struct DetectionConfig {
    int W_g = 10;             ///< number of windows
    double threshold = 0.9;   ///< [m/s], strict
    double t_max_g = 6.0;     ///< eligible prediction span [s]
    double sample_rate = 10;  ///< [Hz]

    void validate() const;
    std::size_t max_samples() const;
};

struct FlaggedWindow {
    std::size_t window = 0;
    int axis = 0;
    double deviation = 0.0;
};

struct DetectionResult {
    bool gust_detected = false;
    std::vector<FlaggedWindow> flagged_windows;
    /// Seconds after the first predicted sample; set iff gust_detected.
    std::optional<double> subsided_after;
    /// Largest per-window deviation seen (diagnostic).
    double max_deviation = 0.0;
};

/// W_g contiguous half-open [start, end) ranges covering [0, len); the
/// remainder of len / W_g goes to the last range.
std::vector<std::pair<std::size_t, std::size_t>> windows(std::size_t len, std::size_t W_g);

DetectionResult detect(const std::vector<Vec3>& pred_velocities, const DetectionConfig& config = {});

}  // namespace gustdock
