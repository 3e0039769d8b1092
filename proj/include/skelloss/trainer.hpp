#pragma once
// Per-pixel multinomial logistic regression over a fixed feature bank,
// trained by full-batch gradient descent on the combined loss. Small enough to
// be deterministic and fast, and differentiable end to end so loss gradients
// turn into parameter updates exactly as in a segmentation network.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "skelloss/losses.hpp"
#include "skelloss/metrics.hpp"
#include "skelloss/raster.hpp"
#include "skelloss/synth.hpp"
#include "skelloss/types.hpp"

namespace skelloss::trainer {

using synth::Image;

/// Feature order: raw, blur σ=1, blur σ=2, blur σ=4, gradient magnitude, bias.
inline constexpr std::size_t kNumFeatures = 6;
inline constexpr std::array<double, 3> kBlurSigmas = {1.0, 2.0, 4.0};

struct FeatureBank {
    Shape shape;
    std::vector<double> values;  // feature-major: f * pixels + i

    std::size_t pixels() const { return shape.pixels(); }
    double at(std::size_t f, std::size_t i) const { return values[f * pixels() + i]; }
    double& at(std::size_t f, std::size_t i) { return values[f * pixels() + i]; }
};

/// Symmetric (half-sample) reflection of an index into [0, n).
inline std::size_t reflect_index(long i, std::size_t n) {
    const long period = 2 * static_cast<long>(n);
    long m = i % period;
    if (m < 0) m += period;
    if (m >= static_cast<long>(n)) m = period - 1 - m;
    return static_cast<std::size_t>(m);
}

/// Sampled Gaussian truncated at ceil(3σ), normalised to sum 1.
inline std::vector<double> gaussian_kernel(double sigma) {
    const long radius = static_cast<long>(std::ceil(3.0 * sigma));
    std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
    double sum = 0.0;
    for (long d = -radius; d <= radius; ++d) {
        const double v = std::exp(-static_cast<double>(d * d) / (2.0 * sigma * sigma));
        k[static_cast<std::size_t>(d + radius)] = v;
        sum += v;
    }
    for (double& v : k) v /= sum;
    return k;
}

/// Separable Gaussian blur with reflective borders.
inline Image gaussian_blur(const Image& img, double sigma) {
    const auto k = gaussian_kernel(sigma);
    const long radius = static_cast<long>(k.size() / 2);
    const std::size_t w = img.width();
    const std::size_t h = img.height();
    Image tmp(w, h, 0.0);
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            double acc = 0.0;
            for (long d = -radius; d <= radius; ++d) {
                acc += k[static_cast<std::size_t>(d + radius)] * img.at(reflect_index(static_cast<long>(x) + d, w), y);
            }
            tmp.at(x, y) = acc;
        }
    }
    Image out(w, h, 0.0);
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            double acc = 0.0;
            for (long d = -radius; d <= radius; ++d) {
                acc += k[static_cast<std::size_t>(d + radius)] * tmp.at(x, reflect_index(static_cast<long>(y) + d, h));
            }
            out.at(x, y) = acc;
        }
    }
    return out;
}

inline FeatureBank extract_features(const Image& img) {
    FeatureBank fb;
    fb.shape = img.shape();
    const std::size_t n = img.size();
    fb.values.assign(kNumFeatures * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) fb.at(0, i) = img[i];
    for (std::size_t s = 0; s < kBlurSigmas.size(); ++s) {
        const Image b = gaussian_blur(img, kBlurSigmas[s]);
        for (std::size_t i = 0; i < n; ++i) fb.at(1 + s, i) = b[i];
    }
    const std::size_t w = img.width();
    const std::size_t h = img.height();
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            const auto xl = static_cast<long>(x);
            const auto yl = static_cast<long>(y);
            const double gx = 0.5 * (img.at(reflect_index(xl + 1, w), y) - img.at(reflect_index(xl - 1, w), y));
            const double gy = 0.5 * (img.at(x, reflect_index(yl + 1, h)) - img.at(x, reflect_index(yl - 1, h)));
            fb.at(4, y * w + x) = std::sqrt(gx * gx + gy * gy);
        }
    }
    for (std::size_t i = 0; i < n; ++i) fb.at(5, i) = 1.0;
    return fb;
}

/// Weight matrix, channels x features, row-major.
struct ModelParams {
    std::size_t channels = 0;
    std::size_t features = kNumFeatures;
    std::vector<double> weights;

    ModelParams() = default;
    ModelParams(std::size_t c, std::size_t f = kNumFeatures) : channels(c), features(f), weights(c * f, 0.0) {}

    double& w(std::size_t c, std::size_t f) { return weights[c * features + f]; }
    double w(std::size_t c, std::size_t f) const { return weights[c * features + f]; }
    bool finite() const {
        for (double v : weights) {
            if (!std::isfinite(v)) return false;
        }
        return true;
    }
    bool operator==(const ModelParams&) const = default;
};

/// Per-pixel softmax of weights · features.
inline ProbMap forward(const ModelParams& params, const FeatureBank& feats) {
    if (params.features != kNumFeatures || feats.values.size() != kNumFeatures * feats.pixels()) {
        throw ValidationError("forward: feature count mismatch");
    }
    const std::size_t n = feats.pixels();
    const std::size_t c_n = params.channels;
    ProbMap p(feats.shape.width, feats.shape.height, c_n, 0.0);
    std::vector<double> z(c_n);
    for (std::size_t i = 0; i < n; ++i) {
        double zmax = -INFINITY;
        for (std::size_t c = 0; c < c_n; ++c) {
            double acc = 0.0;
            for (std::size_t f = 0; f < kNumFeatures; ++f) acc += params.w(c, f) * feats.at(f, i);
            z[c] = acc;
            zmax = std::max(zmax, acc);
        }
        double sum = 0.0;
        for (std::size_t c = 0; c < c_n; ++c) {
            z[c] = std::exp(z[c] - zmax);
            sum += z[c];
        }
        for (std::size_t c = 0; c < c_n; ++c) p.at(c, i) = z[c] / sum;
    }
    return p;
}

/// Chain rule through the softmax: dL/dW[c,f] = Σ_i s_c (g_c - Σ_c' s_c' g_c') x_f.
inline ModelParams backward(const ModelParams& params, const FeatureBank& feats, const ProbMap& probs,
                            const GradField& loss_grad) {
    if (!probs.same_layout(loss_grad) || probs.channels() != params.channels || probs.shape() != feats.shape) {
        throw ValidationError("backward: shape mismatch");
    }
    const std::size_t n = feats.pixels();
    const std::size_t c_n = params.channels;
    ModelParams grad(c_n, params.features);
    std::vector<double> dz(c_n);
    for (std::size_t i = 0; i < n; ++i) {
        double dot = 0.0;
        for (std::size_t c = 0; c < c_n; ++c) dot += probs.at(c, i) * loss_grad.at(c, i);
        for (std::size_t c = 0; c < c_n; ++c) dz[c] = probs.at(c, i) * (loss_grad.at(c, i) - dot);
        for (std::size_t c = 0; c < c_n; ++c) {
            if (dz[c] == 0.0) continue;
            for (std::size_t f = 0; f < kNumFeatures; ++f) grad.w(c, f) += dz[c] * feats.at(f, i);
        }
    }
    return grad;
}

inline ModelParams backward(const ModelParams& params, const FeatureBank& feats, const GradField& loss_grad) {
    return backward(params, feats, forward(params, feats), loss_grad);
}

struct TrainConfig {
    double learning_rate = 2.0;
    std::size_t epochs = 150;
    losses::LossConfig loss;  // loss.alpha weights the skeleton recall term
    bool use_ts = true;       // tubed skeleton (true) or dilated skeleton without the GT product
    raster::StructuringElement se;
    std::uint64_t seed = 0;

    void validate() const {
        if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
            throw ValidationError("TrainConfig: learning_rate must be > 0");
        }
        loss.validate();
    }
};

/// A training image with everything that stays fixed across epochs.
struct PreparedSample {
    FeatureBank features;
    LabelMask gt;
    LabelMask target;  // skeleton target for the recall term
};

inline PreparedSample prepare(const synth::SynthSample& s, const TrainConfig& cfg) {
    return {extract_features(s.image), s.gt,
            cfg.use_ts ? raster::tubed_skeletonize(s.gt, cfg.se) : raster::skeletonize_no_ts(s.gt, cfg.se)};
}

struct TrainResult {
    ModelParams params;
    std::vector<losses::LossBreakdown> history;  // dataset mean, evaluated before each update
};

/// Called once per epoch with the parameters the epoch starts from.
using EpochObserver = std::function<void(std::size_t epoch, const ModelParams&)>;

inline std::size_t channel_count(const std::vector<synth::SynthSample>& data) {
    unsigned k = 1;
    for (const auto& s : data) k = std::max(k, s.gt.num_classes());
    return k + 1;
}

/// Mean combined loss over the batch and its parameter gradient.
inline std::pair<losses::LossBreakdown, ModelParams> batch_loss(const ModelParams& params,
                                                                const std::vector<PreparedSample>& batch,
                                                                const losses::LossConfig& loss) {
    losses::LossBreakdown mean;
    ModelParams grad(params.channels, params.features);
    for (const auto& s : batch) {
        const ProbMap probs = forward(params, s.features);
        const auto r = losses::combined_loss(probs, s.gt, s.target, loss);
        mean.dice += r.breakdown.dice;
        mean.cce += r.breakdown.cce;
        mean.srl += r.breakdown.srl;
        mean.total += r.breakdown.total;
        const ModelParams g = backward(params, s.features, probs, r.grad);
        for (std::size_t j = 0; j < grad.weights.size(); ++j) grad.weights[j] += g.weights[j];
    }
    const double inv = 1.0 / static_cast<double>(batch.size());
    mean.dice *= inv;
    mean.cce *= inv;
    mean.srl *= inv;
    mean.total *= inv;
    for (double& v : grad.weights) v *= inv;
    return {mean, grad};
}

inline TrainResult train(const std::vector<synth::SynthSample>& data, const TrainConfig& cfg,
                         const EpochObserver& observer = {}) {
    cfg.validate();
    if (data.empty()) throw ValidationError("train: empty training set");
    std::vector<PreparedSample> batch;
    batch.reserve(data.size());
    for (const auto& s : data) batch.push_back(prepare(s, cfg));

    TrainResult r;
    r.params = ModelParams(channel_count(data));
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        if (observer) observer(epoch, r.params);
        auto [loss, grad] = batch_loss(r.params, batch, cfg.loss);
        if (!std::isfinite(loss.total) || !grad.finite()) {
            throw std::runtime_error("train: non-finite loss at epoch " + std::to_string(epoch));
        }
        r.history.push_back(loss);
        for (std::size_t j = 0; j < grad.weights.size(); ++j) r.params.weights[j] -= cfg.learning_rate * grad.weights[j];
    }
    return r;
}

/// Hard labels: two channels threshold channel 1 (a tie counts as foreground);
/// more channels take the argmax, lowest index on ties.
inline LabelMask hard_prediction(const ProbMap& probs, double threshold = 0.5) {
    const auto classes = static_cast<unsigned>(probs.channels() - 1);
    LabelMask out(probs.width(), probs.height(), classes);
    for (std::size_t i = 0; i < probs.pixels(); ++i) {
        if (probs.channels() == 2) {
            out.set(i, probs.at(1, i) >= threshold ? 1 : 0);
            continue;
        }
        std::size_t best = 0;
        for (std::size_t c = 1; c < probs.channels(); ++c) {
            if (probs.at(c, i) > probs.at(best, i)) best = c;
        }
        out.set(i, static_cast<LabelMask::Label>(best));
    }
    return out;
}

inline LabelMask predict(const ModelParams& params, const Image& img, double threshold = 0.5) {
    return hard_prediction(forward(params, extract_features(img)), threshold);
}

struct EvalResult {
    std::vector<metrics::MetricsReport> per_image;
    metrics::ClassMetrics aggregate;  // mean over images of the per-image macro averages
};

inline EvalResult evaluate(const ModelParams& params, const std::vector<synth::SynthSample>& data,
                           double threshold = 0.5) {
    if (data.empty()) throw ValidationError("evaluate: empty test set");
    EvalResult r;
    for (const auto& s : data) {
        const LabelMask pred = predict(params, s.image, threshold);
        r.per_image.push_back(metrics::evaluate(pred, s.gt));
        const auto& m = r.per_image.back().macro;
        r.aggregate.dsc += m.dsc;
        r.aggregate.cldice += m.cldice;
        r.aggregate.jsi += m.jsi;
        r.aggregate.fnr += m.fnr;
        r.aggregate.fpr += m.fpr;
    }
    const double inv = 1.0 / static_cast<double>(data.size());
    r.aggregate.dsc *= inv;
    r.aggregate.cldice *= inv;
    r.aggregate.jsi *= inv;
    r.aggregate.fnr *= inv;
    r.aggregate.fpr *= inv;
    return r;
}

}  // namespace skelloss::trainer
