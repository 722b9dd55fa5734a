#pragma once

#include "gustdock/plant.hpp"

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace gustdock {

inline constexpr int kFeatures = 6;     ///< vx, vy, vz, roll, pitch, yaw
inline constexpr int kSeqLen = 98;      ///< model input/output length

using FeatureFrame = Eigen::Matrix<double, 1, kFeatures>;
/// Rows are time steps, columns are features.
using FeatureSequence = Eigen::Matrix<double, Eigen::Dynamic, kFeatures>;
using MatX = Eigen::MatrixXd;

/// Raw feature frames of an episode (T x 6).
FeatureSequence episode_features(const Episode& episode);

/// Per-feature min-max scaling to [0, 1]; constant features map to 0.5.
struct Normalizer {
    std::array<double, kFeatures> min{};
    std::array<double, kFeatures> max{1.0, 1.0, 1.0, 1.0, 1.0, 1.0};  ///< identity map until fit
    std::array<bool, kFeatures> degenerate{};
    /// Largest one-step change per feature in normalised units (1 if none).
    std::array<double, kFeatures> step{1.0, 1.0, 1.0, 1.0, 1.0, 1.0};

    static Normalizer fit(const std::vector<FeatureSequence>& data);
    FeatureSequence normalize(const FeatureSequence& x) const;
    FeatureSequence denormalize(const FeatureSequence& x) const;
    bool operator==(const Normalizer&) const = default;
};

struct BlockSpec {
    int dilation = 1;
    int kernel = 1;
    int in = 0;
    int out = 0;
    bool projection = false;  ///< 1x1 skip convolution; identity otherwise

    bool operator==(const BlockSpec&) const = default;
};

struct TcnArchitecture {
    std::vector<BlockSpec> blocks;
    int seq_len = kSeqLen;

    /// (1,1,6->32), (2,9,32->32), (4,9,32->32), (8,9,32->6).
    static TcnArchitecture standard();
    void validate() const;
    /// 1 + sum (kernel - 1) * dilation.
    int receptive_field() const;
    bool operator==(const TcnArchitecture&) const = default;
};

enum class LossWeighting { uniform, ramp };

struct TrainConfig {
    double lr = 5e-4;
    std::vector<int> lr_milestones{12, 24, 30};
    double lr_decay = 0.1;
    int batch = 64;
    double grad_clip_norm = 0.8;
    int epochs = 32;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    std::uint64_t seed = 1;
    int window_stride = 4;        ///< spacing of training window starts
    double val_fraction = 0.1;    ///< by episode
    LossWeighting weighting = LossWeighting::uniform;  ///< ramp weights later frames more

    void validate() const;
    double lr_at(int epoch) const;
};

class TcnModel {
public:
    TcnModel() = default;
    explicit TcnModel(TcnArchitecture arch);

    const TcnArchitecture& architecture() const { return arch_; }
    Eigen::VectorXd& parameters() { return params_; }
    const Eigen::VectorXd& parameters() const { return params_; }
    Normalizer& normalizer() { return norm_; }
    const Normalizer& normalizer() const { return norm_; }

    /// Named parameter groups (offset, size) in the flat parameter vector.
    struct Group {
        std::string name;
        Eigen::Index offset;
        Eigen::Index size;
        Eigen::Index fan_in;  ///< 0 for non-weight groups
    };
    const std::vector<Group>& groups() const { return groups_; }

    /// Normalised (seq_len x 6) -> normalised (seq_len x 6). Row t predicts
    /// frame t + 1 as x_t + step * net(x)_t, where net is the block stack.
    FeatureSequence forward(const FeatureSequence& x_norm) const;

    /// Final output frame only, evaluating just the rows it depends on.
    FeatureFrame forward_last(const FeatureSequence& x_norm) const;
    /// forward_last over many sequences in one pass; row s belongs to x_norm[s].
    MatX forward_last_batch(const std::vector<FeatureSequence>& x_norm) const;

    /// Weighted MSE over a batch of stacked sequences ((B * T) x 6 each),
    /// measured in units of the normaliser step, and its gradient with
    /// respect to the parameters.
    double loss_and_gradient(const MatX& inputs, const MatX& targets, Eigen::VectorXd& grad,
                             LossWeighting weighting = LossWeighting::uniform) const;

    double loss(const MatX& inputs, const MatX& targets, LossWeighting weighting = LossWeighting::uniform) const;

    bool operator==(const TcnModel& o) const {
        return arch_ == o.arch_ && params_ == o.params_ && norm_ == o.norm_;
    }

private:
    struct Cache;
    Eigen::Map<const Eigen::RowVectorXd> step_row() const { return {norm_.step.data(), kFeatures}; }
    MatX forward_batch(const MatX& x, Cache* cache) const;

    TcnArchitecture arch_;
    Eigen::VectorXd params_;
    Normalizer norm_;
    std::vector<Group> groups_;
    struct Offsets {
        Eigen::Index w, b, gamma, beta, skip_w, skip_b;
    };
    std::vector<Offsets> offsets_;
};

/// Weights ~ N(0, 2 / fan_in); biases 0; layer-norm gain 1, bias 0.
void init_he_normal(TcnModel& model, std::uint64_t seed);

struct LossRecord {
    int epoch = 0;
    double lr = 0.0;
    double train = 0.0;
    double val = 0.0;
};

struct TrainResult {
    TcnModel model;  ///< best validation epoch
    std::vector<LossRecord> curve;
    int best_epoch = -1;
    std::size_t train_windows = 0;
    std::size_t val_windows = 0;
};

/// Fits the normaliser on the training episodes, then runs Adam.
TrainResult train(TcnModel model, const std::vector<Episode>& dataset, const TrainConfig& config);

/// Window-level training on pre-normalised stacked pairs (used by the
/// episode-level train and by tests).
TrainResult train_on_windows(TcnModel model, const std::vector<FeatureSequence>& inputs,
                             const std::vector<FeatureSequence>& targets, const std::vector<FeatureSequence>& val_inputs,
                             const std::vector<FeatureSequence>& val_targets, const TrainConfig& config);

/// Autoregressive rollout from the latest seq_len raw frames. One new frame
/// per forward pass; the first n_fade frames blend in from the last observed
/// frame with a raised-cosine weight. Normalised outputs are clamped to
/// [-0.5, 1.5] before reuse. Returns raw frames.
std::vector<FeatureFrame> predict_recursive(const TcnModel& model, const FeatureSequence& seed_raw,
                                            int horizon_steps, int n_fade = 10);

/// Seed window ending at index `end` (inclusive) of a raw feature series;
/// frames before the start are padded with frame 0.
/// predict_recursive for many seeds at once (same result per seed up to
/// floating-point summation order).
std::vector<std::vector<FeatureFrame>> predict_recursive_batch(const TcnModel& model,
                                                               const std::vector<FeatureSequence>& seeds_raw,
                                                               int horizon_steps, int n_fade = 10);

FeatureSequence seed_window(const FeatureSequence& series, Eigen::Index end, int seq_len = kSeqLen);

void save_checkpoint(const std::filesystem::path& file, const TcnModel& model, const TrainConfig& config);
TcnModel load_checkpoint(const std::filesystem::path& file, TrainConfig* config = nullptr);

void write_loss_curve(const std::filesystem::path& file, const std::vector<LossRecord>& curve);

}  // namespace gustdock
