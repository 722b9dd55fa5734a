#include "gustdock/detect.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace gustdock {

void DetectionConfig::validate() const {
    if (W_g < 1) throw std::invalid_argument("detection: W_g must be >= 1");
    if (!(threshold > 0.0)) throw std::invalid_argument("detection: threshold must be > 0");
    if (!(t_max_g > 0.0)) throw std::invalid_argument("detection: t_max_g must be > 0");
    if (!(sample_rate > 0.0)) throw std::invalid_argument("detection: sample_rate must be > 0");
}

std::size_t DetectionConfig::max_samples() const {
    return static_cast<std::size_t>(std::llround(t_max_g * sample_rate));
}

std::vector<std::pair<std::size_t, std::size_t>> windows(std::size_t len, std::size_t W_g) {
    if (W_g == 0) throw std::invalid_argument("windows: W_g must be >= 1");
    if (len < W_g) throw std::invalid_argument("windows: series shorter than W_g");
    const std::size_t n_w = len / W_g;
    std::vector<std::pair<std::size_t, std::size_t>> out;
    out.reserve(W_g);
    for (std::size_t i = 0; i < W_g; ++i) {
        const std::size_t start = i * n_w;
        out.emplace_back(start, i + 1 == W_g ? len : start + n_w);
    }
    return out;
}

DetectionResult detect(const std::vector<Vec3>& pred_velocities, const DetectionConfig& config) {
    config.validate();
    if (pred_velocities.empty()) throw std::invalid_argument("detect: empty series");
    const std::size_t span = std::min(pred_velocities.size(), config.max_samples());
    const auto W = static_cast<std::size_t>(config.W_g);
    if (span < W) throw std::invalid_argument("detect: series shorter than W_g");

    Vec3 mean = Vec3::Zero();
    for (std::size_t k = 0; k < span; ++k) mean += pred_velocities[k];
    mean /= static_cast<double>(span);

    DetectionResult r;
    std::size_t last_end = 0;
    const auto ranges = windows(span, W);
    for (std::size_t w = 0; w < ranges.size(); ++w) {
        Vec3 dev = Vec3::Zero();
        for (std::size_t k = ranges[w].first; k < ranges[w].second; ++k) {
            dev = dev.cwiseMax((pred_velocities[k] - mean).cwiseAbs());
        }
        for (int a = 0; a < 3; ++a) {
            r.max_deviation = std::max(r.max_deviation, dev[a]);
            if (dev[a] > config.threshold) {
                r.flagged_windows.push_back({w, a, dev[a]});
                last_end = ranges[w].second;
            }
        }
    }
    r.gust_detected = !r.flagged_windows.empty();
    if (r.gust_detected) r.subsided_after = static_cast<double>(last_end) / config.sample_rate;
    return r;
}

}  // namespace gustdock
