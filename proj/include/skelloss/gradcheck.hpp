#pragma once
// Verification machinery for the loss gradients: a central finite-difference
// oracle, a gradient comparator, the pixel-category audit of the skeleton
// recall gradient and the prediction-independence probe.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "skelloss/losses.hpp"
#include "skelloss/raster.hpp"
#include "skelloss/rng.hpp"
#include "skelloss/types.hpp"

namespace skelloss::gradcheck {

using LossFn = std::function<double(const ProbMap&)>;
using LossGradFn = std::function<losses::LossResult(const ProbMap&)>;

/// Central differences (L(s + h e) - L(s - h e)) / 2h for every channel entry.
/// Entries are perturbed independently with no re-normalisation.
inline GradField finite_diff_grad(const LossFn& loss, const ProbMap& pred, double h = 1e-4) {
    if (!(h > 0.0)) throw ValidationError("finite_diff_grad: step must be > 0");
    GradField g(pred.width(), pred.height(), pred.channels(), 0.0);
    ProbMap probe = pred;
    for (std::size_t c = 0; c < pred.channels(); ++c) {
        for (std::size_t i = 0; i < pred.pixels(); ++i) {
            const double orig = probe.at(c, i);
            probe.at(c, i) = orig + h;
            const double up = loss(probe);
            probe.at(c, i) = orig - h;
            const double down = loss(probe);
            probe.at(c, i) = orig;
            if (!std::isfinite(up) || !std::isfinite(down)) {
                throw std::runtime_error("finite_diff_grad: non-finite loss at channel " + std::to_string(c) +
                                         ", x " + std::to_string(i % pred.width()) + ", y " +
                                         std::to_string(i / pred.width()));
            }
            g.at(c, i) = (up - down) / (2.0 * h);
        }
    }
    return g;
}

struct GradComparison {
    double max_abs_err = 0.0;
    double max_rel_err = 0.0;
    // Location of the largest relative error.
    std::size_t worst_channel = 0;
    std::size_t worst_x = 0;
    std::size_t worst_y = 0;
    bool pass = true;
};

/// Relative error uses |a| + 1e-8 as denominator; a is the reference field.
inline GradComparison compare_grads(const GradField& a, const GradField& b, double tol) {
    if (!a.same_layout(b)) throw ValidationError("compare_grads: shape mismatch");
    GradComparison r;
    for (std::size_t c = 0; c < a.channels(); ++c) {
        for (std::size_t i = 0; i < a.pixels(); ++i) {
            const double abs_err = std::abs(a.at(c, i) - b.at(c, i));
            const double rel_err = abs_err / (std::abs(a.at(c, i)) + 1e-8);
            r.max_abs_err = std::max(r.max_abs_err, abs_err);
            if (rel_err > r.max_rel_err) {
                r.max_rel_err = rel_err;
                r.worst_channel = c;
                r.worst_x = i % a.width();
                r.worst_y = i / a.width();
            }
        }
    }
    r.pass = r.max_rel_err < tol;
    return r;
}

enum class Overlap { TP = 0, TN = 1, FP = 2, FN = 3 };

inline const char* to_string(Overlap o) {
    switch (o) {
        case Overlap::TP: return "TP";
        case Overlap::TN: return "TN";
        case Overlap::FP: return "FP";
        case Overlap::FN: return "FN";
    }
    return "?";
}

struct PixelCategory {
    Overlap overlap = Overlap::TN;
    bool on_skeleton = false;
};

/// Neumaier-compensated running sum.
class CompensatedSum {
public:
    void add(double v) {
        const double t = sum_ + v;
        if (std::abs(sum_) >= std::abs(v)) {
            comp_ += (sum_ - t) + v;
        } else {
            comp_ += (v - t) + sum_;
        }
        sum_ = t;
    }
    double value() const { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

struct BucketStats {
    std::uint64_t count = 0;
    double min = std::numeric_limits<double>::infinity();
    double max = -std::numeric_limits<double>::infinity();
    double mean = 0.0;
};

struct AuditBucket {
    std::size_t class_index = 0;  // foreground class k
    Overlap overlap = Overlap::TN;
    bool on_skeleton = false;
    BucketStats stats;
};

struct AuditReport {
    std::size_t num_pixels = 0;
    std::size_t num_classes = 0;
    // Ordered by class, then overlap (TP, TN, FP, FN), then on_skeleton (false, true).
    std::vector<AuditBucket> buckets;
    // Expected on-skeleton gradient -1/(|K'| * skeleton size) per class; 0 for
    // classes outside K'. Index k-1 holds class k.
    std::vector<double> expected_on_skeleton;
    std::size_t active_classes = 0;
    // Pixels whose tubed label lies outside the ground truth class (possible
    // only for masks built without the ground-truth product).
    std::size_t skeleton_outside_gt = 0;
    bool off_skeleton_zero = true;
    bool on_skeleton_constant = true;

    std::uint64_t total_count() const {
        std::uint64_t n = 0;
        for (const auto& b : buckets) n += b.stats.count;
        return n;
    }

    const AuditBucket& bucket(std::size_t k, Overlap o, bool on_skeleton) const {
        return buckets[((k - 1) * 4 + static_cast<std::size_t>(o)) * 2 + (on_skeleton ? 1 : 0)];
    }
};

/// Hard foreground decision of pred for class k at pixel i. Two-channel maps
/// use channel 1 >= threshold; more channels use argmax (lowest index on ties).
inline bool predicts_class(const ProbMap& pred, std::size_t i, std::size_t k, double threshold) {
    if (pred.channels() == 2) {
        const bool fg = pred.at(1, i) >= threshold;
        return k == 1 ? fg : !fg;
    }
    std::size_t best = 0;
    for (std::size_t c = 1; c < pred.channels(); ++c) {
        if (pred.at(c, i) > pred.at(best, i)) best = c;
    }
    return best == k;
}

inline PixelCategory categorize(const ProbMap& pred, const LabelMask& gt, const LabelMask& tubed, std::size_t i,
                                std::size_t k, double threshold) {
    const bool truth = gt[i] == k;
    const bool hit = predicts_class(pred, i, k, threshold);
    return {truth ? (hit ? Overlap::TP : Overlap::FN) : (hit ? Overlap::FP : Overlap::TN), tubed[i] == k};
}

/// Buckets every (pixel, foreground class) pair by its overlap category against
/// the original ground truth and by skeleton membership, then summarises the
/// skeleton recall gradient inside each bucket.
inline AuditReport category_audit(const ProbMap& pred, const LabelMask& gt, const LabelMask& tubed,
                                  double threshold = 0.5, const losses::LossConfig& cfg = {}) {
    if (!(threshold > 0.0 && threshold < 1.0)) throw ValidationError("category_audit: threshold must be in (0,1)");
    require_same_shape(gt.shape(), tubed.shape(), "category_audit");
    const losses::LossResult srl = losses::srl_loss(pred, tubed, cfg);
    const std::size_t n = pred.pixels();
    const std::size_t classes = pred.channels() - 1;

    AuditReport rep;
    rep.num_pixels = n;
    rep.num_classes = classes;
    rep.expected_on_skeleton.assign(classes, 0.0);
    std::vector<CompensatedSum> sums(classes * 8);
    rep.buckets.resize(classes * 8);
    for (std::size_t k = 1; k <= classes; ++k) {
        for (int o = 0; o < 4; ++o) {
            for (int on = 0; on < 2; ++on) {
                auto& b = rep.buckets[((k - 1) * 4 + o) * 2 + on];
                b.class_index = k;
                b.overlap = static_cast<Overlap>(o);
                b.on_skeleton = on == 1;
            }
        }
    }

    std::vector<std::size_t> skeleton_size(classes + 1, 0);
    for (std::size_t i = 0; i < n; ++i) ++skeleton_size[tubed[i]];
    const std::size_t first = cfg.include_background ? 0 : 1;
    for (std::size_t k = first; k <= classes; ++k) rep.active_classes += skeleton_size[k] > 0 ? 1 : 0;
    for (std::size_t k = 1; k <= classes; ++k) {
        if (skeleton_size[k] > 0) {
            rep.expected_on_skeleton[k - 1] =
                -1.0 / (static_cast<double>(rep.active_classes) * static_cast<double>(skeleton_size[k]));
        }
    }

    for (std::size_t i = 0; i < n; ++i) {
        if (tubed[i] != 0 && tubed[i] != gt[i]) ++rep.skeleton_outside_gt;
        for (std::size_t k = 1; k <= classes; ++k) {
            const PixelCategory cat = categorize(pred, gt, tubed, i, k, threshold);
            const Overlap o = cat.overlap;
            const bool on = cat.on_skeleton;
            const std::size_t idx = ((k - 1) * 4 + static_cast<std::size_t>(o)) * 2 + (on ? 1 : 0);
            auto& st = rep.buckets[idx].stats;
            const double g = srl.grad.at(k, i);
            ++st.count;
            st.min = std::min(st.min, g);
            st.max = std::max(st.max, g);
            sums[idx].add(g);
        }
    }

    for (std::size_t idx = 0; idx < rep.buckets.size(); ++idx) {
        auto& b = rep.buckets[idx];
        if (b.stats.count == 0) continue;
        b.stats.mean = sums[idx].value() / static_cast<double>(b.stats.count);
        if (!b.on_skeleton) {
            if (b.stats.min != 0.0 || b.stats.max != 0.0) rep.off_skeleton_zero = false;
        } else {
            const double expect = rep.expected_on_skeleton[b.class_index - 1];
            if (b.stats.min != expect || b.stats.max != expect) rep.on_skeleton_constant = false;
        }
    }
    return rep;
}

/// Random ProbMap with every entry drawn from [floor, 1] before per-pixel
/// normalisation, keeping probabilities away from 0 and from the clamp.
inline ProbMap random_probmap(std::size_t width, std::size_t height, std::size_t channels, Rng& rng,
                              double floor = 0.1) {
    ProbMap p(width, height, channels, 0.0);
    for (std::size_t i = 0; i < p.pixels(); ++i) {
        double sum = 0.0;
        for (std::size_t c = 0; c < channels; ++c) {
            const double v = rng.uniform(floor, 1.0);
            p.at(c, i) = v;
            sum += v;
        }
        for (std::size_t c = 0; c < channels; ++c) p.at(c, i) /= sum;
    }
    return p;
}

struct ConstancyReport {
    bool constant = true;
    std::size_t trials = 0;
    // First trial (1-based) whose gradient differs from trial 0; 0 if none.
    std::size_t first_mismatch = 0;
    double max_abs_deviation = 0.0;
    GradField gradient;  // trial 0
};

/// Evaluates the loss on `trials` random ProbMaps and reports whether every
/// gradient is bitwise identical to the first.
inline ConstancyReport gradient_constancy_probe(const LossGradFn& loss, Shape shape, std::size_t channels,
                                                std::size_t trials, std::uint64_t seed = 0) {
    if (trials < 2) throw ValidationError("gradient_constancy_probe: need at least 2 trials");
    Rng rng(seed);
    ConstancyReport rep;
    rep.trials = trials;
    for (std::size_t t = 0; t < trials; ++t) {
        const ProbMap p = random_probmap(shape.width, shape.height, channels, rng);
        GradField g = loss(p).grad;
        if (t == 0) {
            rep.gradient = std::move(g);
            continue;
        }
        for (std::size_t j = 0; j < g.size(); ++j) {
            rep.max_abs_deviation = std::max(rep.max_abs_deviation, std::abs(g[j] - rep.gradient[j]));
        }
        const bool same = g.same_layout(rep.gradient) &&
                          std::memcmp(g.values().data(), rep.gradient.values().data(),
                                      g.size() * sizeof(double)) == 0;
        if (!same && rep.constant) {
            rep.constant = false;
            rep.first_mismatch = t;
        }
    }
    return rep;
}

/// Skeleton-recall form of the probe.
inline ConstancyReport gradient_constancy_probe(const LabelMask& tubed, const losses::LossConfig& cfg,
                                                std::size_t trials, std::uint64_t seed = 0) {
    const std::size_t channels = std::max<std::size_t>(tubed.num_classes(), 1) + 1;
    return gradient_constancy_probe([&](const ProbMap& p) { return losses::srl_loss(p, tubed, cfg); },
                                    tubed.shape(), channels, trials, seed);
}

/// Random label mask made of a few axis-aligned bars with labels 1..classes.
/// Every class gets at least one bar, so no scored class is empty.
inline LabelMask random_label_mask(std::size_t width, std::size_t height, unsigned classes, Rng& rng) {
    if (width < 4 || height < 4) throw ValidationError("random_label_mask: need at least 4x4");
    for (;;) {
        LabelMask m(width, height, classes);
        const long bars = std::max<long>(rng.range(2, 4), classes);
        for (long b = 0; b < bars; ++b) {
            const auto label =
                static_cast<LabelMask::Label>(b < static_cast<long>(classes) ? b + 1 : 1 + rng.below(classes));
            const bool horizontal = rng.below(2) == 0;
            const std::size_t along = horizontal ? width : height;
            const std::size_t across = horizontal ? height : width;
            const auto thick = static_cast<std::size_t>(rng.range(1, 3));
            const auto len =
                static_cast<std::size_t>(rng.range(static_cast<long>(along / 2), static_cast<long>(along)));
            const auto a0 = static_cast<std::size_t>(rng.below(along - len + 1));
            const auto c0 = static_cast<std::size_t>(rng.below(across - thick + 1));
            for (std::size_t a = a0; a < a0 + len; ++a) {
                for (std::size_t c = c0; c < c0 + thick; ++c) m.set(horizontal ? a : c, horizontal ? c : a, label);
            }
        }
        std::vector<bool> seen(classes + 1, false);
        for (std::size_t i = 0; i < m.size(); ++i) seen[m[i]] = true;
        // A later bar can cover an earlier one completely; redraw then.
        if (std::all_of(seen.begin() + 1, seen.end(), [](bool v) { return v; })) return m;
    }
}

enum class LossKind { srl, dice, cce, combined };

inline LossKind parse_loss_kind(const std::string& s) {
    if (s == "srl") return LossKind::srl;
    if (s == "dice") return LossKind::dice;
    if (s == "cce") return LossKind::cce;
    if (s == "combined") return LossKind::combined;
    throw ValidationError("unknown loss '" + s + "' (expected srl, dice, cce or combined)");
}

inline const char* to_string(LossKind k) {
    switch (k) {
        case LossKind::srl: return "srl";
        case LossKind::dice: return "dice";
        case LossKind::cce: return "cce";
        case LossKind::combined: return "combined";
    }
    return "?";
}

/// Value and analytic gradient of one loss on (pred, gt, tubed).
inline losses::LossResult evaluate_loss(LossKind kind, const ProbMap& pred, const LabelMask& gt, const LabelMask& tubed,
                                        const losses::LossConfig& cfg) {
    switch (kind) {
        case LossKind::srl: return losses::srl_loss(pred, tubed, cfg);
        case LossKind::dice: return losses::soft_dice_loss(pred, gt, cfg);
        case LossKind::cce: return losses::cross_entropy_loss(pred, gt, cfg);
        case LossKind::combined: {
            auto r = losses::combined_loss(pred, gt, tubed, cfg);
            return {r.breakdown.total, std::move(r.grad), r.srl_empty};
        }
    }
    throw ValidationError("evaluate_loss: bad loss kind");
}

struct RandomCheck {
    GradComparison worst;  // trial with the largest relative error
    std::size_t trials = 0;
    std::size_t worst_trial = 0;
};

/// Analytic vs finite-difference gradients on `trials` random instances
/// (random bars as ground truth, tubed skeleton target, random ProbMap).
inline RandomCheck random_gradcheck(LossKind kind, std::size_t size, std::size_t channels, std::size_t trials,
                                    std::uint64_t seed, double h = 1e-4, double tol = 1e-4,
                                    const losses::LossConfig& cfg = {}) {
    if (channels < 2) throw ValidationError("random_gradcheck: need at least 2 channels");
    if (trials < 1) throw ValidationError("random_gradcheck: need at least 1 trial");
    RandomCheck out;
    out.trials = trials;
    out.worst.pass = true;
    for (std::size_t t = 0; t < trials; ++t) {
        Rng rng(stream_seed(seed, t));
        const LabelMask gt = random_label_mask(size, size, static_cast<unsigned>(channels - 1), rng);
        const LabelMask tubed = raster::tubed_skeletonize(gt);
        const ProbMap pred = random_probmap(size, size, channels, rng);
        const auto analytic = evaluate_loss(kind, pred, gt, tubed, cfg).grad;
        const auto numeric =
            finite_diff_grad([&](const ProbMap& p) { return evaluate_loss(kind, p, gt, tubed, cfg).value; }, pred, h);
        const GradComparison c = compare_grads(analytic, numeric, tol);
        if (t == 0 || c.max_rel_err > out.worst.max_rel_err) {
            const bool pass = out.worst.pass && c.pass;
            out.worst = c;
            out.worst.pass = pass;
            out.worst_trial = t;
        } else {
            out.worst.pass = out.worst.pass && c.pass;
        }
    }
    return out;
}

}  // namespace skelloss::gradcheck
