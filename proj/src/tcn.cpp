#include "gustdock/tcn.hpp"

#include "gustdock/io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>

namespace gustdock {

namespace {

constexpr double kLnEps = 1e-5;
constexpr double kFeedbackMargin = 0.5;
using ConstMap = Eigen::Map<const MatX>;
using MutMap = Eigen::Map<MatX>;
using RowVec = Eigen::RowVectorXd;

// Causal im2col for B stacked sequences of length T. Column block j holds the
// input lagged by (K - 1 - j) * d.
MatX im2col(const MatX& x, Eigen::Index B, Eigen::Index T, int K, int d) {
    const Eigen::Index C = x.cols();
    if (K == 1) return x;
    MatX col = MatX::Zero(x.rows(), K * C);
    for (int j = 0; j < K; ++j) {
        const Eigen::Index lag = static_cast<Eigen::Index>(K - 1 - j) * d;
        if (lag >= T) continue;
        for (Eigen::Index b = 0; b < B; ++b)
            col.block(b * T + lag, j * C, T - lag, C) = x.block(b * T, 0, T - lag, C);
    }
    return col;
}

MatX col2im(const MatX& dcol, Eigen::Index B, Eigen::Index T, int K, int d, Eigen::Index C) {
    if (K == 1) return dcol;
    MatX dx = MatX::Zero(dcol.rows(), C);
    for (int j = 0; j < K; ++j) {
        const Eigen::Index lag = static_cast<Eigen::Index>(K - 1 - j) * d;
        if (lag >= T) continue;
        for (Eigen::Index b = 0; b < B; ++b)
            dx.block(b * T, 0, T - lag, C) += dcol.block(b * T + lag, j * C, T - lag, C);
    }
    return dx;
}

Eigen::VectorXd time_weights(Eigen::Index T, LossWeighting w) {
    Eigen::VectorXd out = Eigen::VectorXd::Ones(T);
    if (w == LossWeighting::ramp)
        for (Eigen::Index t = 0; t < T; ++t) out[t] = 2.0 * static_cast<double>(t + 1) / static_cast<double>(T + 1);
    return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Features and normalisation
// ---------------------------------------------------------------------------

FeatureSequence episode_features(const Episode& episode) {
    FeatureSequence f(static_cast<Eigen::Index>(episode.blimp_trace.size()), kFeatures);
    for (std::size_t k = 0; k < episode.blimp_trace.size(); ++k) {
        const BlimpState& b = episode.blimp_trace[k];
        f.row(static_cast<Eigen::Index>(k)) << b.velocity.x(), b.velocity.y(), b.velocity.z(), b.euler.roll,
            b.euler.pitch, b.euler.yaw;
    }
    return f;
}

Normalizer Normalizer::fit(const std::vector<FeatureSequence>& data) {
    Normalizer n;
    n.min.fill(std::numeric_limits<double>::infinity());
    n.max.fill(-std::numeric_limits<double>::infinity());
    bool any = false;
    for (const auto& s : data) {
        if (s.rows() == 0) continue;
        any = true;
        for (int c = 0; c < kFeatures; ++c) {
            n.min[static_cast<std::size_t>(c)] = std::min(n.min[static_cast<std::size_t>(c)], s.col(c).minCoeff());
            n.max[static_cast<std::size_t>(c)] = std::max(n.max[static_cast<std::size_t>(c)], s.col(c).maxCoeff());
        }
    }
    if (!any) throw std::invalid_argument("normalizer: no data");
    for (std::size_t c = 0; c < kFeatures; ++c) n.degenerate[c] = !(n.max[c] > n.min[c]);
    // Largest one-step change in normalised units sets the output scale.
    n.step.fill(0.0);
    for (const auto& s : data) {
        if (s.rows() < 2) continue;
        const FeatureSequence z = n.normalize(s);
        const FeatureSequence d = z.bottomRows(z.rows() - 1) - z.topRows(z.rows() - 1);
        for (int c = 0; c < kFeatures; ++c) {
            const auto i = static_cast<std::size_t>(c);
            n.step[i] = std::max(n.step[i], d.col(c).cwiseAbs().maxCoeff());
        }
    }
    for (double& v : n.step)
        if (!(v > 0.0)) v = 1.0;
    return n;
}

FeatureSequence Normalizer::normalize(const FeatureSequence& x) const {
    FeatureSequence y(x.rows(), kFeatures);
    for (int c = 0; c < kFeatures; ++c) {
        const auto i = static_cast<std::size_t>(c);
        if (degenerate[i]) y.col(c).setConstant(0.5);
        else y.col(c) = (x.col(c).array() - min[i]) / (max[i] - min[i]);
    }
    return y;
}

FeatureSequence Normalizer::denormalize(const FeatureSequence& x) const {
    FeatureSequence y(x.rows(), kFeatures);
    for (int c = 0; c < kFeatures; ++c) {
        const auto i = static_cast<std::size_t>(c);
        if (degenerate[i]) y.col(c).setConstant(min[i]);
        else y.col(c) = x.col(c).array() * (max[i] - min[i]) + min[i];
    }
    return y;
}

// ---------------------------------------------------------------------------
// Architecture
// ---------------------------------------------------------------------------

TcnArchitecture TcnArchitecture::standard() {
    TcnArchitecture a;
    a.blocks = {{1, 1, kFeatures, 32, true}, {2, 9, 32, 32, false}, {4, 9, 32, 32, false}, {8, 9, 32, kFeatures, true}};
    return a;
}

void TcnArchitecture::validate() const {
    if (blocks.empty()) throw std::invalid_argument("tcn: no blocks");
    if (blocks.front().in != kFeatures || blocks.back().out != kFeatures)
        throw std::invalid_argument("tcn: first input and last output must have 6 channels");
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        const BlockSpec& b = blocks[i];
        if (b.kernel < 1 || b.dilation < 1 || b.in < 1 || b.out < 1) throw std::invalid_argument("tcn: bad block");
        if (!b.projection && b.in != b.out) throw std::invalid_argument("tcn: identity skip needs in == out");
        if (i > 0 && blocks[i - 1].out != b.in) throw std::invalid_argument("tcn: channel mismatch between blocks");
    }
    if (seq_len < 1) throw std::invalid_argument("tcn: seq_len must be >= 1");
}

int TcnArchitecture::receptive_field() const {
    int r = 1;
    for (const auto& b : blocks) r += (b.kernel - 1) * b.dilation;
    return r;
}

void TrainConfig::validate() const {
    if (!(lr > 0 && lr_decay > 0 && batch > 0 && grad_clip_norm > 0 && epochs > 0 && window_stride > 0))
        throw std::invalid_argument("train config: hyperparameters must be positive");
    if (!(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1 && adam_eps > 0))
        throw std::invalid_argument("train config: invalid Adam constants");
    if (!(val_fraction >= 0 && val_fraction < 1)) throw std::invalid_argument("train config: val_fraction in [0, 1)");
}

double TrainConfig::lr_at(int epoch) const {
    double r = lr;
    for (int m : lr_milestones)
        if (epoch >= m) r *= lr_decay;
    return r;
}

TcnModel::TcnModel(TcnArchitecture arch) : arch_(std::move(arch)) {
    arch_.validate();
    Eigen::Index off = 0;
    auto add = [&](const std::string& name, Eigen::Index size, Eigen::Index fan_in) {
        groups_.push_back({name, off, size, fan_in});
        const Eigen::Index at = off;
        off += size;
        return at;
    };
    for (std::size_t i = 0; i < arch_.blocks.size(); ++i) {
        const BlockSpec& b = arch_.blocks[i];
        const std::string p = "block" + std::to_string(i + 1) + ".";
        Offsets o{};
        o.w = add(p + "conv.weight", b.out * b.kernel * b.in, b.kernel * b.in);
        o.b = add(p + "conv.bias", b.out, 0);
        o.gamma = add(p + "norm.gain", b.out, 0);
        o.beta = add(p + "norm.bias", b.out, 0);
        if (b.projection) {
            o.skip_w = add(p + "skip.weight", b.out * b.in, b.in);
            o.skip_b = add(p + "skip.bias", b.out, 0);
        } else {
            o.skip_w = o.skip_b = -1;
        }
        offsets_.push_back(o);
    }
    params_ = Eigen::VectorXd::Zero(off);
    for (std::size_t i = 0; i < arch_.blocks.size(); ++i)
        params_.segment(offsets_[i].gamma, arch_.blocks[i].out).setOnes();
}

// ---------------------------------------------------------------------------
// Forward / backward
// ---------------------------------------------------------------------------

struct TcnModel::Cache {
    Eigen::Index B = 0;
    Eigen::Index T = 0;
    struct Block {
        MatX x;      // block input
        MatX col;    // im2col of x
        MatX xhat;   // normalised conv output
        Eigen::VectorXd inv_std;
        MatX y;      // layer-norm output (pre-ReLU)
    };
    std::vector<Block> blocks;
};

MatX TcnModel::forward_batch(const MatX& x, Cache* cache) const {
    const Eigen::Index T = arch_.seq_len;
    if (x.cols() != kFeatures || x.rows() % T != 0 || x.rows() == 0)
        throw std::invalid_argument("tcn forward: expected (B * " + std::to_string(T) + ") x 6 input");
    const Eigen::Index B = x.rows() / T;
    if (cache) {
        cache->B = B;
        cache->T = T;
        cache->blocks.assign(arch_.blocks.size(), {});
    }
    MatX cur = x;
    for (std::size_t i = 0; i < arch_.blocks.size(); ++i) {
        const BlockSpec& b = arch_.blocks[i];
        const Offsets& o = offsets_[i];
        const ConstMap W(params_.data() + o.w, b.out, b.kernel * b.in);
        const Eigen::Map<const RowVec> bias(params_.data() + o.b, b.out);
        const Eigen::Map<const RowVec> gamma(params_.data() + o.gamma, b.out);
        const Eigen::Map<const RowVec> beta(params_.data() + o.beta, b.out);

        MatX col = im2col(cur, B, T, b.kernel, b.dilation);
        MatX h = col * W.transpose();
        h.rowwise() += bias;
        const Eigen::VectorXd mu = h.rowwise().mean();
        h.colwise() -= mu;
        const Eigen::VectorXd inv_std =
            ((h.array().square().rowwise().sum() / static_cast<double>(b.out)) + kLnEps).rsqrt().matrix();
        MatX xhat = h.array().colwise() * inv_std.array();
        MatX y = (xhat.array().rowwise() * gamma.array()).rowwise() + beta.array();
        MatX out = y.cwiseMax(0.0);
        if (b.projection) {
            const ConstMap Ws(params_.data() + o.skip_w, b.out, b.in);
            const Eigen::Map<const RowVec> bs(params_.data() + o.skip_b, b.out);
            out.noalias() += cur * Ws.transpose();
            out.rowwise() += bs;
        } else {
            out += cur;
        }
        if (cache) {
            auto& c = cache->blocks[i];
            c.x = std::move(cur);
            c.col = std::move(col);
            c.xhat = std::move(xhat);
            c.inv_std = inv_std;
            c.y = std::move(y);
        }
        cur = std::move(out);
    }
    return x + (cur.array().rowwise() * step_row().array()).matrix();
}

FeatureSequence TcnModel::forward(const FeatureSequence& x_norm) const {
    if (x_norm.rows() != arch_.seq_len)
        throw std::invalid_argument("tcn forward: input must have " + std::to_string(arch_.seq_len) + " frames");
    return forward_batch(MatX(x_norm), nullptr);
}

FeatureFrame TcnModel::forward_last(const FeatureSequence& x_norm) const {
    return forward_last_batch({x_norm}).row(0);
}

MatX TcnModel::forward_last_batch(const std::vector<FeatureSequence>& x_norm) const {
    const Eigen::Index T = arch_.seq_len;
    if (x_norm.empty()) throw std::invalid_argument("tcn forward: empty batch");
    for (const auto& x : x_norm)
        if (x.rows() != T)
            throw std::invalid_argument("tcn forward: input must have " + std::to_string(T) + " frames");
    const auto B = static_cast<Eigen::Index>(x_norm.size());
    const std::size_t L = arch_.blocks.size();
    // Rows each block must produce, walking back from the final frame. The
    // set is the same for every sequence of the batch.
    std::vector<std::vector<Eigen::Index>> need(L);
    need[L - 1] = {T - 1};
    for (std::size_t i = L - 1; i > 0; --i) {
        const BlockSpec& b = arch_.blocks[i];
        std::set<Eigen::Index> rows;
        for (Eigen::Index r : need[i])
            for (int j = 0; j < b.kernel; ++j) {
                const Eigen::Index src = r - static_cast<Eigen::Index>(b.kernel - 1 - j) * b.dilation;
                if (src >= 0) rows.insert(src);
            }
        need[i - 1].assign(rows.begin(), rows.end());
    }
    // cur holds block inputs for all sequences, B blocks of T rows; only the
    // rows listed in need[i - 1] are meaningful after block 0.
    MatX cur(B * T, kFeatures);
    for (Eigen::Index s = 0; s < B; ++s) cur.middleRows(s * T, T) = x_norm[static_cast<std::size_t>(s)];
    for (std::size_t i = 0; i < L; ++i) {
        const BlockSpec& b = arch_.blocks[i];
        const Offsets& o = offsets_[i];
        const ConstMap W(params_.data() + o.w, b.out, b.kernel * b.in);
        const Eigen::Map<const RowVec> bias(params_.data() + o.b, b.out);
        const Eigen::Map<const RowVec> gamma(params_.data() + o.gamma, b.out);
        const Eigen::Map<const RowVec> beta(params_.data() + o.beta, b.out);
        const auto R = static_cast<Eigen::Index>(need[i].size());
        MatX col = MatX::Zero(B * R, b.kernel * b.in);
        MatX xin(B * R, b.in);
        for (Eigen::Index s = 0; s < B; ++s)
            for (Eigen::Index k = 0; k < R; ++k) {
                const Eigen::Index r = need[i][static_cast<std::size_t>(k)];
                xin.row(s * R + k) = cur.row(s * T + r);
                for (int j = 0; j < b.kernel; ++j) {
                    const Eigen::Index src = r - static_cast<Eigen::Index>(b.kernel - 1 - j) * b.dilation;
                    if (src >= 0) col.block(s * R + k, j * b.in, 1, b.in) = cur.row(s * T + src);
                }
            }
        MatX h = col * W.transpose();
        h.rowwise() += bias;
        const Eigen::VectorXd mu = h.rowwise().mean();
        h.colwise() -= mu;
        const Eigen::VectorXd inv_std =
            ((h.array().square().rowwise().sum() / static_cast<double>(b.out)) + kLnEps).rsqrt().matrix();
        MatX y = ((h.array().colwise() * inv_std.array()).rowwise() * gamma.array()).rowwise() + beta.array();
        MatX out = y.cwiseMax(0.0);
        if (b.projection) {
            const ConstMap Ws(params_.data() + o.skip_w, b.out, b.in);
            const Eigen::Map<const RowVec> bs(params_.data() + o.skip_b, b.out);
            out.noalias() += xin * Ws.transpose();
            out.rowwise() += bs;
        } else {
            out += xin;
        }
        MatX next = MatX::Zero(B * T, b.out);
        for (Eigen::Index s = 0; s < B; ++s)
            for (Eigen::Index k = 0; k < R; ++k) next.row(s * T + need[i][static_cast<std::size_t>(k)]) = out.row(s * R + k);
        cur = std::move(next);
    }
    MatX last(B, kFeatures);
    for (Eigen::Index s = 0; s < B; ++s)
        last.row(s) = x_norm[static_cast<std::size_t>(s)].row(T - 1) +
                      (cur.row(s * T + T - 1).array() * step_row().array()).matrix();
    return last;
}

double TcnModel::loss(const MatX& inputs, const MatX& targets, LossWeighting weighting) const {
    const MatX y = forward_batch(inputs, nullptr);
    if (targets.rows() != y.rows() || targets.cols() != y.cols()) throw std::invalid_argument("tcn loss: shape mismatch");
    const Eigen::Index T = arch_.seq_len;
    const Eigen::VectorXd w = time_weights(T, weighting);
    const Eigen::RowVectorXd inv_step = step_row().cwiseInverse();
    double s = 0.0;
    for (Eigen::Index r = 0; r < y.rows(); ++r)
        s += w[r % T] * ((y.row(r) - targets.row(r)).cwiseProduct(inv_step)).squaredNorm();
    return s / static_cast<double>(y.size());
}

double TcnModel::loss_and_gradient(const MatX& inputs, const MatX& targets, Eigen::VectorXd& grad,
                                   LossWeighting weighting) const {
    Cache cache;
    const MatX y = forward_batch(inputs, &cache);
    if (targets.rows() != y.rows() || targets.cols() != y.cols()) throw std::invalid_argument("tcn loss: shape mismatch");
    const Eigen::Index T = cache.T;
    const Eigen::Index B = cache.B;
    const Eigen::VectorXd w = time_weights(T, weighting);
    const double scale = 1.0 / static_cast<double>(y.size());

    // Residual in step units; d loss / d net needs no further scaling.
    MatX dout = (y - targets).array().rowwise() / step_row().array();
    double loss = 0.0;
    for (Eigen::Index r = 0; r < y.rows(); ++r) {
        loss += w[r % T] * dout.row(r).squaredNorm();
        dout.row(r) *= 2.0 * scale * w[r % T];
    }
    loss *= scale;

    grad = Eigen::VectorXd::Zero(params_.size());
    for (std::size_t ii = arch_.blocks.size(); ii-- > 0;) {
        const BlockSpec& b = arch_.blocks[ii];
        const Offsets& o = offsets_[ii];
        const auto& c = cache.blocks[ii];
        const ConstMap W(params_.data() + o.w, b.out, b.kernel * b.in);
        const Eigen::Map<const RowVec> gamma(params_.data() + o.gamma, b.out);

        MatX dx;
        if (b.projection) {
            const ConstMap Ws(params_.data() + o.skip_w, b.out, b.in);
            MutMap(grad.data() + o.skip_w, b.out, b.in).noalias() = dout.transpose() * c.x;
            grad.segment(o.skip_b, b.out) = dout.colwise().sum().transpose();
            dx = dout * Ws;
        } else {
            dx = dout;
        }
        const MatX da = (c.y.array() > 0.0).select(dout, 0.0);
        grad.segment(o.gamma, b.out) = (da.array() * c.xhat.array()).colwise().sum().transpose();
        grad.segment(o.beta, b.out) = da.colwise().sum().transpose();
        const MatX dxhat = da.array().rowwise() * gamma.array();
        const Eigen::VectorXd m1 = dxhat.rowwise().mean();
        const Eigen::VectorXd m2 = (dxhat.array() * c.xhat.array()).rowwise().mean();
        MatX dh = dxhat;
        dh.colwise() -= m1;
        dh -= (c.xhat.array().colwise() * m2.array()).matrix();
        dh = dh.array().colwise() * c.inv_std.array();

        MutMap(grad.data() + o.w, b.out, b.kernel * b.in).noalias() = dh.transpose() * c.col;
        grad.segment(o.b, b.out) = dh.colwise().sum().transpose();
        if (ii > 0) {
            const MatX dcol = dh * W;
            dx += col2im(dcol, B, T, b.kernel, b.dilation, b.in);
            dout = std::move(dx);
        }
    }
    return loss;
}

void init_he_normal(TcnModel& model, std::uint64_t seed) {
    Rng rng(seed);
    auto& p = model.parameters();
    p.setZero();
    for (const auto& g : model.groups()) {
        if (g.fan_in > 0) {
            std::normal_distribution<double> n(0.0, std::sqrt(2.0 / static_cast<double>(g.fan_in)));
            for (Eigen::Index i = 0; i < g.size; ++i) p[g.offset + i] = n(rng);
        } else if (g.name.size() >= 9 && g.name.compare(g.name.size() - 9, 9, "norm.gain") == 0) {
            p.segment(g.offset, g.size).setOnes();
        }
    }
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

namespace {

void stack(const std::vector<FeatureSequence>& src, const std::vector<std::size_t>& idx, std::size_t begin,
           std::size_t end, Eigen::Index T, MatX& out) {
    out.resize(static_cast<Eigen::Index>(end - begin) * T, kFeatures);
    for (std::size_t k = begin; k < end; ++k) out.middleRows(static_cast<Eigen::Index>(k - begin) * T, T) = src[idx[k]];
}

double dataset_loss(const TcnModel& m, const std::vector<FeatureSequence>& in, const std::vector<FeatureSequence>& tg,
                    int batch, LossWeighting w) {
    if (in.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::vector<std::size_t> idx(in.size());
    std::iota(idx.begin(), idx.end(), 0);
    const Eigen::Index T = m.architecture().seq_len;
    double s = 0.0;
    MatX X, Y;
    for (std::size_t b = 0; b < in.size(); b += static_cast<std::size_t>(batch)) {
        const std::size_t e = std::min(in.size(), b + static_cast<std::size_t>(batch));
        stack(in, idx, b, e, T, X);
        stack(tg, idx, b, e, T, Y);
        s += m.loss(X, Y, w) * static_cast<double>(e - b);
    }
    return s / static_cast<double>(in.size());
}

void windows_of(const FeatureSequence& s, int T, int stride, std::vector<FeatureSequence>& in,
                std::vector<FeatureSequence>& tg) {
    for (Eigen::Index k = 0; k + T < s.rows(); k += stride) {
        in.push_back(s.middleRows(k, T));
        tg.push_back(s.middleRows(k + 1, T));
    }
}

}  // namespace

TrainResult train_on_windows(TcnModel model, const std::vector<FeatureSequence>& inputs,
                             const std::vector<FeatureSequence>& targets, const std::vector<FeatureSequence>& val_inputs,
                             const std::vector<FeatureSequence>& val_targets, const TrainConfig& config) {
    config.validate();
    if (inputs.empty()) throw std::invalid_argument("train: empty dataset");
    if (inputs.size() != targets.size() || val_inputs.size() != val_targets.size())
        throw std::invalid_argument("train: inputs and targets differ in count");

    const Eigen::Index T = model.architecture().seq_len;
    Rng rng(mix_seed(config.seed, 0x7a11));
    Eigen::VectorXd& theta = model.parameters();
    Eigen::VectorXd m = Eigen::VectorXd::Zero(theta.size());
    Eigen::VectorXd v = Eigen::VectorXd::Zero(theta.size());
    Eigen::VectorXd grad;
    long step = 0;

    TrainResult result;
    result.train_windows = inputs.size();
    result.val_windows = val_inputs.size();
    double best = std::numeric_limits<double>::infinity();
    Eigen::VectorXd best_theta = theta;

    std::vector<std::size_t> order(inputs.size());
    std::iota(order.begin(), order.end(), 0);
    MatX X, Y;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        const double lr = config.lr_at(epoch);
        // Fisher-Yates with an explicit draw so the order is library-independent.
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
        double sum = 0.0;
        for (std::size_t b = 0; b < order.size(); b += static_cast<std::size_t>(config.batch)) {
            const std::size_t e = std::min(order.size(), b + static_cast<std::size_t>(config.batch));
            stack(inputs, order, b, e, T, X);
            stack(targets, order, b, e, T, Y);
            const double l = model.loss_and_gradient(X, Y, grad, config.weighting);
            if (!std::isfinite(l) || !grad.allFinite()) {
                std::ostringstream msg;
                msg << "train: non-finite loss " << l << " at epoch " << epoch << ", batch starting " << b
                    << " (gradient norm " << grad.norm() << ")";
                throw std::runtime_error(msg.str());
            }
            const double gn = grad.norm();
            if (gn > config.grad_clip_norm) grad *= config.grad_clip_norm / gn;
            ++step;
            m = config.beta1 * m + (1.0 - config.beta1) * grad;
            v = config.beta2 * v + (1.0 - config.beta2) * grad.cwiseAbs2();
            const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(step));
            const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(step));
            theta.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + config.adam_eps);
            sum += l * static_cast<double>(e - b);
        }
        LossRecord rec;
        rec.epoch = epoch;
        rec.lr = lr;
        rec.train = sum / static_cast<double>(inputs.size());
        rec.val = val_inputs.empty() ? rec.train
                                     : dataset_loss(model, val_inputs, val_targets, config.batch, config.weighting);
        result.curve.push_back(rec);
        if (rec.val < best) {
            best = rec.val;
            best_theta = theta;
            result.best_epoch = epoch;
        }
    }
    theta = best_theta;
    result.model = std::move(model);
    return result;
}

TrainResult train(TcnModel model, const std::vector<Episode>& dataset, const TrainConfig& config) {
    config.validate();
    if (dataset.empty()) throw std::invalid_argument("train: empty dataset");
    const int T = model.architecture().seq_len;

    std::vector<std::size_t> ep(dataset.size());
    std::iota(ep.begin(), ep.end(), 0);
    Rng rng(mix_seed(config.seed, 0x5b1));
    for (std::size_t i = ep.size(); i > 1; --i) std::swap(ep[i - 1], ep[rng() % i]);
    std::size_t n_val = static_cast<std::size_t>(std::ceil(config.val_fraction * static_cast<double>(dataset.size())));
    if (dataset.size() < 2) n_val = 0;
    std::vector<std::size_t> val_ids(ep.begin(), ep.begin() + static_cast<std::ptrdiff_t>(n_val));
    std::vector<std::size_t> train_ids(ep.begin() + static_cast<std::ptrdiff_t>(n_val), ep.end());
    std::sort(val_ids.begin(), val_ids.end());
    std::sort(train_ids.begin(), train_ids.end());

    std::vector<FeatureSequence> train_raw;
    for (std::size_t i : train_ids) train_raw.push_back(episode_features(dataset[i]));
    model.normalizer() = Normalizer::fit(train_raw);

    std::vector<FeatureSequence> tin, ttg, vin, vtg;
    for (const auto& s : train_raw) windows_of(model.normalizer().normalize(s), T, config.window_stride, tin, ttg);
    for (std::size_t i : val_ids)
        windows_of(model.normalizer().normalize(episode_features(dataset[i])), T, config.window_stride, vin, vtg);
    if (tin.empty()) throw std::invalid_argument("train: episodes shorter than the model window");
    return train_on_windows(std::move(model), tin, ttg, vin, vtg, config);
}

// ---------------------------------------------------------------------------
// Recursive prediction
// ---------------------------------------------------------------------------

std::vector<FeatureFrame> predict_recursive(const TcnModel& model, const FeatureSequence& seed_raw, int horizon_steps,
                                            int n_fade) {
    return predict_recursive_batch(model, {seed_raw}, horizon_steps, n_fade).front();
}

std::vector<std::vector<FeatureFrame>> predict_recursive_batch(const TcnModel& model,
                                                               const std::vector<FeatureSequence>& seeds_raw,
                                                               int horizon_steps, int n_fade) {
    const Eigen::Index T = model.architecture().seq_len;
    if (horizon_steps < 1) throw std::invalid_argument("predict_recursive: horizon must be >= 1");
    if (n_fade < 0) throw std::invalid_argument("predict_recursive: n_fade must be >= 0");
    if (seeds_raw.empty()) return {};
    const Normalizer& norm = model.normalizer();
    std::vector<FeatureSequence> windows;
    std::vector<FeatureFrame> anchors;
    for (const auto& s : seeds_raw) {
        if (s.rows() != T) throw std::invalid_argument("predict_recursive: seed must have seq_len frames");
        windows.push_back(norm.normalize(s));
        anchors.push_back(s.row(T - 1));
    }
    std::vector<std::vector<FeatureFrame>> out(seeds_raw.size());
    for (auto& o : out) o.reserve(static_cast<std::size_t>(horizon_steps));
    for (int step = 1; step <= horizon_steps; ++step) {
        // Out-of-range feedback makes the residual stack grow without bound;
        // keep fed-back frames within a margin of the training range.
        const FeatureSequence y =
            model.forward_last_batch(windows).array().min(1.0 + kFeedbackMargin).max(-kFeedbackMargin);
        const FeatureSequence raw = norm.denormalize(y);
        const double w = step <= n_fade
                             ? 0.5 * (1.0 - std::cos(M_PI * static_cast<double>(step) / static_cast<double>(n_fade)))
                             : 1.0;
        for (std::size_t s = 0; s < windows.size(); ++s) {
            const auto r = static_cast<Eigen::Index>(s);
            out[s].push_back(w < 1.0 ? FeatureFrame((1.0 - w) * anchors[s] + w * raw.row(r)) : FeatureFrame(raw.row(r)));
            FeatureSequence& win = windows[s];
            win.topRows(T - 1) = win.bottomRows(T - 1).eval();
            win.row(T - 1) = y.row(r);
        }
    }
    return out;
}

FeatureSequence seed_window(const FeatureSequence& series, Eigen::Index end, int seq_len) {
    if (series.rows() == 0 || end < 0 || end >= series.rows()) throw std::out_of_range("seed_window: bad end index");
    FeatureSequence w(seq_len, kFeatures);
    for (int k = 0; k < seq_len; ++k) {
        const Eigen::Index src = end - (seq_len - 1) + k;
        w.row(k) = series.row(std::max<Eigen::Index>(src, 0));
    }
    return w;
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

namespace {
constexpr char kCkptMagic[8] = {'G', 'D', 'T', 'C', 'N', '0', '0', '2'};
}

void save_checkpoint(const std::filesystem::path& file, const TcnModel& model, const TrainConfig& config) {
    std::ofstream out(file, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint " + file.string());
    out.write(kCkptMagic, sizeof kCkptMagic);
    const TcnArchitecture& a = model.architecture();
    write_u64(out, static_cast<std::uint64_t>(a.seq_len));
    write_u64(out, a.blocks.size());
    for (const auto& b : a.blocks) {
        write_u64(out, static_cast<std::uint64_t>(b.dilation));
        write_u64(out, static_cast<std::uint64_t>(b.kernel));
        write_u64(out, static_cast<std::uint64_t>(b.in));
        write_u64(out, static_cast<std::uint64_t>(b.out));
        write_u64(out, b.projection ? 1u : 0u);
    }
    const Normalizer& n = model.normalizer();
    for (std::size_t c = 0; c < kFeatures; ++c) {
        write_f64(out, n.min[c]);
        write_f64(out, n.max[c]);
        write_u64(out, n.degenerate[c] ? 1u : 0u);
        write_f64(out, n.step[c]);
    }
    write_f64(out, config.lr);
    write_u64(out, config.lr_milestones.size());
    for (int mstone : config.lr_milestones) write_u64(out, static_cast<std::uint64_t>(mstone));
    write_f64(out, config.lr_decay);
    write_u64(out, static_cast<std::uint64_t>(config.batch));
    write_f64(out, config.grad_clip_norm);
    write_u64(out, static_cast<std::uint64_t>(config.epochs));
    write_f64(out, config.beta1);
    write_f64(out, config.beta2);
    write_f64(out, config.adam_eps);
    write_u64(out, config.seed);
    write_u64(out, static_cast<std::uint64_t>(config.window_stride));
    write_f64(out, config.val_fraction);
    write_u64(out, config.weighting == LossWeighting::ramp ? 1u : 0u);
    const Eigen::VectorXd& p = model.parameters();
    write_u64(out, static_cast<std::uint64_t>(p.size()));
    for (Eigen::Index i = 0; i < p.size(); ++i) write_f64(out, p[i]);
    if (!out) throw std::runtime_error("checkpoint write failed: " + file.string());
}

TcnModel load_checkpoint(const std::filesystem::path& file, TrainConfig* config) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint " + file.string());
    char magic[8];
    in.read(magic, sizeof magic);
    if (!in || !std::equal(magic, magic + 8, kCkptMagic)) throw std::runtime_error("not a checkpoint: " + file.string());
    TcnArchitecture a;
    a.seq_len = static_cast<int>(read_u64(in));
    const auto nb = read_u64(in);
    if (nb > 64) throw std::runtime_error("checkpoint: implausible block count");
    for (std::uint64_t i = 0; i < nb; ++i) {
        BlockSpec b;
        b.dilation = static_cast<int>(read_u64(in));
        b.kernel = static_cast<int>(read_u64(in));
        b.in = static_cast<int>(read_u64(in));
        b.out = static_cast<int>(read_u64(in));
        b.projection = read_u64(in) != 0;
        a.blocks.push_back(b);
    }
    TcnModel model(a);
    Normalizer& n = model.normalizer();
    for (std::size_t c = 0; c < kFeatures; ++c) {
        n.min[c] = read_f64(in);
        n.max[c] = read_f64(in);
        n.degenerate[c] = read_u64(in) != 0;
        n.step[c] = read_f64(in);
    }
    TrainConfig cfg;
    cfg.lr = read_f64(in);
    const auto nm = read_u64(in);
    if (nm > 1024) throw std::runtime_error("checkpoint: implausible milestone count");
    cfg.lr_milestones.clear();
    for (std::uint64_t i = 0; i < nm; ++i) cfg.lr_milestones.push_back(static_cast<int>(read_u64(in)));
    cfg.lr_decay = read_f64(in);
    cfg.batch = static_cast<int>(read_u64(in));
    cfg.grad_clip_norm = read_f64(in);
    cfg.epochs = static_cast<int>(read_u64(in));
    cfg.beta1 = read_f64(in);
    cfg.beta2 = read_f64(in);
    cfg.adam_eps = read_f64(in);
    cfg.seed = read_u64(in);
    cfg.window_stride = static_cast<int>(read_u64(in));
    cfg.val_fraction = read_f64(in);
    cfg.weighting = read_u64(in) != 0 ? LossWeighting::ramp : LossWeighting::uniform;
    const auto np = read_u64(in);
    if (static_cast<Eigen::Index>(np) != model.parameters().size())
        throw std::runtime_error("checkpoint: parameter count does not match the architecture");
    for (Eigen::Index i = 0; i < model.parameters().size(); ++i) model.parameters()[i] = read_f64(in);
    if (config) *config = cfg;
    return model;
}

void write_loss_curve(const std::filesystem::path& file, const std::vector<LossRecord>& curve) {
    std::ofstream out(file, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + file.string());
    out << "epoch,lr,train,val\n";
    for (const auto& r : curve)
        out << r.epoch << ',' << fmt_double(r.lr) << ',' << fmt_double(r.train) << ',' << fmt_double(r.val) << '\n';
}

}  // namespace gustdock
