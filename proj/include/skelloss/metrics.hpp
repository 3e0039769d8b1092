#pragma once
// Overlap and centreline metrics from hard label predictions: DSC, JSI, FNR,
// FPR (one-vs-rest per foreground class) and clDice. Values are percentages.

#include <algorithm>
#include <cstdint>
#include <vector>

#include "skelloss/raster.hpp"
#include "skelloss/types.hpp"

namespace skelloss::metrics {

struct ClassCounts {
    std::uint64_t tp = 0;
    std::uint64_t fp = 0;
    std::uint64_t fn = 0;
    std::uint64_t tn = 0;

    std::uint64_t total() const { return tp + fp + fn + tn; }
    bool operator==(const ClassCounts&) const = default;
};

/// Per-class counts; index k-1 holds foreground class k.
struct ConfusionCounts {
    std::vector<ClassCounts> classes;
};

inline ConfusionCounts confusion(const LabelMask& pred, const LabelMask& gt) {
    require_same_shape(pred.shape(), gt.shape(), "confusion");
    const unsigned k_max = std::max(pred.num_classes(), gt.num_classes());
    ConfusionCounts c;
    c.classes.resize(k_max);
    for (std::size_t i = 0; i < gt.size(); ++i) {
        const auto p = pred[i];
        const auto g = gt[i];
        for (unsigned k = 1; k <= k_max; ++k) {
            auto& cc = c.classes[k - 1];
            const bool pk = p == k;
            const bool gk = g == k;
            if (pk && gk) {
                ++cc.tp;
            } else if (pk) {
                ++cc.fp;
            } else if (gk) {
                ++cc.fn;
            } else {
                ++cc.tn;
            }
        }
    }
    return c;
}

/// Exact ratio of counts; a zero denominator marks the 0/0 case.
struct Fraction {
    std::uint64_t num = 0;
    std::uint64_t den = 0;
};

inline Fraction dice_fraction(const ClassCounts& c) { return {2 * c.tp, 2 * c.tp + c.fp + c.fn}; }
inline Fraction jaccard_fraction(const ClassCounts& c) { return {c.tp, c.tp + c.fp + c.fn}; }
inline Fraction fnr_fraction(const ClassCounts& c) { return {c.fn, c.fn + c.tp}; }
inline Fraction fpr_fraction(const ClassCounts& c) { return {c.fp, c.fp + c.tn}; }

// 0/0 resolves to `empty_value`.
inline double percent(Fraction f, double empty_value) {
    if (f.den == 0) return empty_value;
    return 100.0 * static_cast<double>(f.num) / static_cast<double>(f.den);
}

struct ClassMetrics {
    double dsc = 0.0;
    double cldice = 0.0;
    double jsi = 0.0;
    double fnr = 0.0;
    double fpr = 0.0;
};

/// Per-class rows (index k-1 for class k) and their macro average.
struct MetricsReport {
    std::vector<ClassMetrics> per_class;
    ClassMetrics macro;
};

namespace detail {

inline ClassMetrics macro_average(const std::vector<ClassMetrics>& rows) {
    ClassMetrics m;
    if (rows.empty()) return m;
    for (const auto& r : rows) {
        m.dsc += r.dsc;
        m.cldice += r.cldice;
        m.jsi += r.jsi;
        m.fnr += r.fnr;
        m.fpr += r.fpr;
    }
    const double n = static_cast<double>(rows.size());
    m.dsc /= n;
    m.cldice /= n;
    m.jsi /= n;
    m.fnr /= n;
    m.fpr /= n;
    return m;
}

}  // namespace detail

/// DSC, JSI, FNR and FPR. Empty denominators give 100 for DSC/JSI and 0 for
/// FNR/FPR. clDice is left at 0; see evaluate().
inline MetricsReport overlap_metrics(const ConfusionCounts& c) {
    MetricsReport rep;
    for (const auto& cc : c.classes) {
        ClassMetrics m;
        m.dsc = percent(dice_fraction(cc), 100.0);
        m.jsi = percent(jaccard_fraction(cc), 100.0);
        m.fnr = percent(fnr_fraction(cc), 0.0);
        m.fpr = percent(fpr_fraction(cc), 0.0);
        rep.per_class.push_back(m);
    }
    rep.macro = detail::macro_average(rep.per_class);
    return rep;
}

struct ClDiceClass {
    double tprec = 0.0;  // |skel(P) ∩ G| / |skel(P)|, as a fraction
    double tsens = 0.0;  // |skel(G) ∩ P| / |skel(G)|
    double cldice = 0.0; // percent
};

struct ClDiceResult {
    std::vector<ClDiceClass> per_class;
    double macro = 0.0;
};

/// clDice of two binary masks, in percent. Both empty gives 100; exactly one
/// empty gives 0.
inline ClDiceClass cl_dice_binary(const BinaryMask& pred, const BinaryMask& gt) {
    require_same_shape(pred.shape(), gt.shape(), "cl_dice");
    const BinaryMask sp = raster::skeletonize(pred);
    const BinaryMask sg = raster::skeletonize(gt);
    std::uint64_t sp_n = 0, sp_in = 0, sg_n = 0, sg_in = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        sp_n += sp[i];
        sp_in += sp[i] & gt[i];
        sg_n += sg[i];
        sg_in += sg[i] & pred[i];
    }
    ClDiceClass r;
    if (sp_n == 0 && sg_n == 0) {
        r.tprec = r.tsens = 1.0;
        r.cldice = 100.0;
        return r;
    }
    if (sp_n == 0 || sg_n == 0) return r;
    r.tprec = static_cast<double>(sp_in) / static_cast<double>(sp_n);
    r.tsens = static_cast<double>(sg_in) / static_cast<double>(sg_n);
    if (r.tprec + r.tsens > 0.0) r.cldice = 100.0 * 2.0 * r.tprec * r.tsens / (r.tprec + r.tsens);
    return r;
}

inline ClDiceResult cl_dice(const LabelMask& pred, const LabelMask& gt) {
    require_same_shape(pred.shape(), gt.shape(), "cl_dice");
    const unsigned k_max = std::max(pred.num_classes(), gt.num_classes());
    ClDiceResult r;
    for (unsigned k = 1; k <= k_max; ++k) {
        const auto lk = static_cast<LabelMask::Label>(k);
        r.per_class.push_back(cl_dice_binary(raster::class_mask(pred, lk), raster::class_mask(gt, lk)));
        r.macro += r.per_class.back().cldice;
    }
    if (k_max > 0) r.macro /= static_cast<double>(k_max);
    return r;
}

/// All five metrics for one prediction/ground-truth pair.
inline MetricsReport evaluate(const LabelMask& pred, const LabelMask& gt) {
    MetricsReport rep = overlap_metrics(confusion(pred, gt));
    const ClDiceResult cl = cl_dice(pred, gt);
    for (std::size_t k = 0; k < rep.per_class.size(); ++k) rep.per_class[k].cldice = cl.per_class[k].cldice;
    rep.macro = detail::macro_average(rep.per_class);
    return rep;
}

}  // namespace skelloss::metrics
