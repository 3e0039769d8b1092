#pragma once
// Differentiable segmentation losses on a ProbMap: soft Dice, categorical
// cross-entropy, skeleton recall and their weighted sum. Each returns the
// loss value together with dL/ds for every channel entry; channel entries are
// treated as independent variables (softmax coupling lives in the trainer).

#include <cmath>
#include <string>
#include <vector>

#include "skelloss/types.hpp"

namespace skelloss::losses {

struct LossConfig {
    double alpha = 1.0;     // weight of the skeleton recall term
    double epsilon = 1e-6;  // Dice smoothing and cross-entropy clamp floor
    // Also score the background channel (channel 0) in Dice and skeleton recall.
    bool include_background = false;
    // Generic-loss components entering the total; a disabled component is
    // still evaluated and reported.
    bool use_dice = true;
    bool use_cce = true;

    void validate() const {
        if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw ValidationError("LossConfig: alpha must be >= 0");
        if (!(epsilon > 0.0) || !std::isfinite(epsilon)) throw ValidationError("LossConfig: epsilon must be > 0");
    }
};

struct LossResult {
    double value = 0.0;
    GradField grad;
    // Set when no class contributed (e.g. every tubed skeleton empty); value
    // and gradient are then zero.
    bool empty = false;
};

struct LossBreakdown {
    double dice = 0.0;
    double cce = 0.0;
    double srl = 0.0;
    double total = 0.0;
};

struct CombinedResult {
    LossBreakdown breakdown;
    GradField grad;
    bool srl_empty = false;
};

namespace detail {

inline void check_labels(const ProbMap& pred, const LabelMask& mask, const char* what) {
    require_same_shape(pred.shape(), mask.shape(), what);
    if (pred.channels() < 2) throw ValidationError(std::string(what) + ": need at least two channels");
    if (mask.num_classes() >= pred.channels()) {
        throw ValidationError(std::string(what) + ": mask declares " + std::to_string(mask.num_classes()) +
                              " classes but the prediction has " + std::to_string(pred.channels()) + " channels");
    }
    for (std::size_t i = 0; i < mask.size(); ++i) {
        if (mask[i] >= pred.channels()) {
            throw ValidationError(std::string(what) + ": label " + std::to_string(mask[i]) +
                                  " has no channel (channels=" + std::to_string(pred.channels()) + ")");
        }
    }
}

inline std::vector<std::size_t> scored_channels(const ProbMap& pred, const LossConfig& cfg) {
    std::vector<std::size_t> ks;
    for (std::size_t k = cfg.include_background ? 0 : 1; k < pred.channels(); ++k) ks.push_back(k);
    return ks;
}

}  // namespace detail

/// Skeleton recall: minus the mean over classes of the soft recall of the
/// prediction on the tubed skeleton. Classes with an empty skeleton are left
/// out of the mean. The gradient, -1/(|K'| * skeleton size) on skeleton pixels
/// and 0 elsewhere, does not depend on the prediction.
inline LossResult srl_loss(const ProbMap& pred, const LabelMask& tubed, const LossConfig& cfg = {}) {
    cfg.validate();
    detail::check_labels(pred, tubed, "srl_loss");
    const std::size_t n = pred.pixels();

    struct Term {
        std::size_t k;
        double overlap;
        double size;
    };
    std::vector<Term> terms;
    for (std::size_t k : detail::scored_channels(pred, cfg)) {
        double overlap = 0.0;
        double size = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (tubed[i] != k) continue;
            overlap += pred.at(k, i);
            size += 1.0;
        }
        if (size > 0.0) terms.push_back({k, overlap, size});
    }

    LossResult r;
    r.grad = GradField(pred.width(), pred.height(), pred.channels(), 0.0);
    if (terms.empty()) {
        r.empty = true;
        return r;
    }
    const double active = static_cast<double>(terms.size());
    double recall_sum = 0.0;
    for (const Term& t : terms) {
        recall_sum += t.overlap / t.size;
        const double g = -1.0 / (active * t.size);
        for (std::size_t i = 0; i < n; ++i) {
            if (tubed[i] == t.k) r.grad.at(t.k, i) = g;
        }
    }
    r.value = -recall_sum / active;
    return r;
}

/// Soft Dice with linear denominator, averaged over the scored classes:
/// 1 - mean_k (2 sum(s*g) + eps) / (sum(s) + sum(g) + eps).
inline LossResult soft_dice_loss(const ProbMap& pred, const LabelMask& gt, const LossConfig& cfg = {}) {
    cfg.validate();
    detail::check_labels(pred, gt, "soft_dice_loss");
    const std::size_t n = pred.pixels();
    const double eps = cfg.epsilon;
    const auto ks = detail::scored_channels(pred, cfg);
    const double nk = static_cast<double>(ks.size());

    LossResult r;
    r.grad = GradField(pred.width(), pred.height(), pred.channels(), 0.0);
    double score_sum = 0.0;
    for (std::size_t k : ks) {
        double inter = 0.0;
        double pred_sum = 0.0;
        double gt_sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double s = pred.at(k, i);
            const double g = gt[i] == k ? 1.0 : 0.0;
            inter += s * g;
            pred_sum += s;
            gt_sum += g;
        }
        const double num = 2.0 * inter + eps;
        const double den = pred_sum + gt_sum + eps;
        score_sum += num / den;
        const double den2 = den * den;
        for (std::size_t i = 0; i < n; ++i) {
            const double g = gt[i] == k ? 1.0 : 0.0;
            r.grad.at(k, i) = -(2.0 * g * den - num) / (den2 * nk);
        }
    }
    r.value = 1.0 - score_sum / nk;
    return r;
}

/// Mean negative log-probability of the ground-truth channel, with the
/// probability clamped to [epsilon, 1]. The gradient is zero where the clamp
/// is active.
inline LossResult cross_entropy_loss(const ProbMap& pred, const LabelMask& gt, const LossConfig& cfg = {}) {
    cfg.validate();
    detail::check_labels(pred, gt, "cross_entropy_loss");
    const std::size_t n = pred.pixels();
    const double eps = cfg.epsilon;
    const double inv_n = 1.0 / static_cast<double>(n);

    LossResult r;
    r.grad = GradField(pred.width(), pred.height(), pred.channels(), 0.0);
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t c = gt[i];
        const double s = pred.at(c, i);
        if (s < eps) {
            sum += std::log(eps);
        } else if (s > 1.0) {
            sum += 0.0;
        } else {
            sum += std::log(s);
            r.grad.at(c, i) = -inv_n / s;
        }
    }
    r.value = -sum * inv_n;
    return r;
}

/// Generic loss (Dice + CCE) plus alpha times skeleton recall.
inline CombinedResult combined_loss(const ProbMap& pred, const LabelMask& gt, const LabelMask& tubed,
                                    const LossConfig& cfg = {}) {
    require_same_shape(gt.shape(), tubed.shape(), "combined_loss");
    const LossResult dice = soft_dice_loss(pred, gt, cfg);
    const LossResult cce = cross_entropy_loss(pred, gt, cfg);
    const LossResult srl = srl_loss(pred, tubed, cfg);

    CombinedResult r;
    r.breakdown.dice = dice.value;
    r.breakdown.cce = cce.value;
    r.breakdown.srl = srl.value;
    r.breakdown.total = (cfg.use_dice ? dice.value : 0.0) + (cfg.use_cce ? cce.value : 0.0) +
                        cfg.alpha * srl.value;
    r.srl_empty = srl.empty;
    r.grad = GradField(pred.width(), pred.height(), pred.channels(), 0.0);
    if (cfg.use_dice) r.grad += dice.grad;
    if (cfg.use_cce) r.grad += cce.grad;
    if (cfg.alpha != 0.0) r.grad.add_scaled(srl.grad, cfg.alpha);
    return r;
}

}  // namespace skelloss::losses
