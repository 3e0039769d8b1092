#include <gtest/gtest.h>

#include <cmath>

#include "skelloss/gradcheck.hpp"
#include "skelloss/losses.hpp"
#include "skelloss/raster.hpp"
#include "support/oracles.hpp"

using namespace skelloss;
using namespace skelloss::losses;

namespace {

ProbMap binary_probs(std::size_t w, std::size_t h, const std::vector<double>& fg) {
    ProbMap p(w, h, 2, 0.0);
    for (std::size_t i = 0; i < fg.size(); ++i) {
        p.at(1, i) = fg[i];
        p.at(0, i) = 1.0 - fg[i];
    }
    return p;
}

ProbMap one_hot(const LabelMask& gt, std::size_t channels) {
    ProbMap p(gt.width(), gt.height(), channels, 0.0);
    for (std::size_t i = 0; i < gt.size(); ++i) p.at(gt[i], i) = 1.0;
    return p;
}

// Direct evaluation of the skeleton recall value, class by class.
double srl_reference(const ProbMap& p, const LabelMask& y) {
    double sum = 0.0;
    int active = 0;
    for (std::size_t k = 1; k < p.channels(); ++k) {
        double num = 0.0, den = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) {
            if (y[i] == k) {
                num += p.at(k, i);
                den += 1.0;
            }
        }
        if (den > 0) {
            sum += num / den;
            ++active;
        }
    }
    return active ? -sum / active : 0.0;
}

double dice_reference(const ProbMap& p, const LabelMask& g, double eps) {
    double acc = 0.0;
    for (std::size_t k = 1; k < p.channels(); ++k) {
        double inter = 0.0, s = 0.0, gs = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) {
            const double gi = g[i] == k ? 1.0 : 0.0;
            inter += p.at(k, i) * gi;
            s += p.at(k, i);
            gs += gi;
        }
        acc += (2.0 * inter + eps) / (s + gs + eps);
    }
    return 1.0 - acc / static_cast<double>(p.channels() - 1);
}

}  // namespace

TEST(Srl, WorkedExample) {
    const auto y = LabelMask::from_labels(2, 2, 1, {1, 0, 0, 0});
    const auto p = binary_probs(2, 2, {0.8, 0.3, 0.1, 0.0});
    const auto r = srl_loss(p, y);
    EXPECT_DOUBLE_EQ(r.value, -0.8);
    EXPECT_FALSE(r.empty);
    EXPECT_EQ(r.grad.at(1, 0), -1.0);
    for (std::size_t c = 0; c < 2; ++c)
        for (std::size_t i = 0; i < 4; ++i)
            if (!(c == 1 && i == 0)) EXPECT_EQ(r.grad.at(c, i), 0.0);
}

TEST(Srl, PerfectAndZeroRecall) {
    Rng rng(1);
    for (unsigned k : {1u, 2u, 3u}) {
        const auto gt = oracle::rect_mask(16, 16, k, rng);
        const auto tubed = raster::tubed_skeletonize(gt);
        if (srl_loss(one_hot(gt, k + 1), tubed).empty) continue;
        EXPECT_DOUBLE_EQ(srl_loss(one_hot(gt, k + 1), tubed).value, -1.0);
        ProbMap bg(16, 16, k + 1, 0.0);
        for (std::size_t i = 0; i < bg.pixels(); ++i) bg.at(0, i) = 1.0;
        EXPECT_EQ(srl_loss(bg, tubed).value, 0.0);
    }
}

TEST(Srl, MatchesDirectSumAndBounds) {
    Rng rng(2);
    for (int t = 0; t < 50; ++t) {
        const unsigned k = 1 + t % 3;
        const auto gt = oracle::rect_mask(12, 12, k, rng);
        const auto tubed = raster::tubed_skeletonize(gt);
        const auto p = gradcheck::random_probmap(12, 12, k + 1, rng, 0.0);
        const auto r = srl_loss(p, tubed);
        EXPECT_NEAR(r.value, srl_reference(p, tubed), 1e-12);
        EXPECT_LE(r.value, 0.0);
        EXPECT_GE(r.value, -1.0);
    }
}

TEST(Srl, GradientSupportAndValue) {
    Rng rng(3);
    for (int t = 0; t < 30; ++t) {
        const auto gt = oracle::rect_mask(16, 16, 3, rng);
        const auto tubed = raster::tubed_skeletonize(gt);
        const auto r = srl_loss(gradcheck::random_probmap(16, 16, 4, rng), tubed);
        std::size_t active = 0;
        std::vector<double> size(4, 0.0);
        for (std::size_t i = 0; i < tubed.size(); ++i) size[tubed[i]] += 1.0;
        for (int k = 1; k <= 3; ++k) active += size[k] > 0 ? 1 : 0;
        for (std::size_t c = 0; c < 4; ++c)
            for (std::size_t i = 0; i < tubed.size(); ++i) {
                const double expect = (c >= 1 && tubed[i] == c) ? -1.0 / (static_cast<double>(active) * size[c]) : 0.0;
                ASSERT_EQ(r.grad.at(c, i), expect);
            }
    }
}

TEST(Srl, EmptySkeletonIsFlaggedNotAnError) {
    const auto r = srl_loss(ProbMap(4, 4, 2, 0.5), LabelMask(4, 4, 1));
    EXPECT_TRUE(r.empty);
    EXPECT_EQ(r.value, 0.0);
    for (double v : r.grad.values()) EXPECT_EQ(v, 0.0);
}

TEST(Srl, IncludeBackgroundScoresChannelZero) {
    const auto y = LabelMask::from_labels(2, 2, 1, {1, 0, 0, 0});
    const auto p = binary_probs(2, 2, {0.8, 0.3, 0.1, 0.0});
    LossConfig cfg;
    cfg.include_background = true;
    const auto r = srl_loss(p, y, cfg);
    // Background skeleton = the three pixels with tubed label 0.
    EXPECT_NEAR(r.value, -0.5 * (0.8 + (0.7 + 0.9 + 1.0) / 3.0), 1e-12);
    EXPECT_EQ(r.grad.at(0, 1), -1.0 / 6.0);
    EXPECT_EQ(r.grad.at(1, 0), -0.5);
}

TEST(Srl, RejectsMismatch) {
    EXPECT_THROW(srl_loss(ProbMap(4, 4, 2, 0.5), LabelMask(4, 3, 1)), ValidationError);
    EXPECT_THROW(srl_loss(ProbMap(4, 4, 2, 0.5), LabelMask(4, 4, 2)), ValidationError) << "labels beyond channels";
    EXPECT_THROW(srl_loss(ProbMap(4, 4, 1, 1.0), LabelMask(4, 4, 0)), ValidationError);
}

TEST(Dice, Examples) {
    LabelMask gt(4, 4, 1);
    gt.set(1, 1, 1);
    gt.set(2, 1, 1);
    LossConfig cfg;
    EXPECT_LT(soft_dice_loss(one_hot(gt, 2), gt, cfg).value, 1e-6);
    EXPECT_GE(soft_dice_loss(one_hot(gt, 2), gt, cfg).value, 0.0);

    const auto g1 = LabelMask::from_labels(2, 2, 1, {1, 0, 0, 0});
    cfg.epsilon = 1e-12;
    EXPECT_NEAR(soft_dice_loss(binary_probs(2, 2, {0.5, 0, 0, 0}), g1, cfg).value, 1.0 / 3.0, 1e-9);
    cfg.epsilon = 1e-6;
    EXPECT_NEAR(soft_dice_loss(binary_probs(2, 2, {0, 0, 0, 0}), g1, cfg).value, 1.0, 1e-5);
}

TEST(Dice, MatchesDirectFormulaAndBounds) {
    Rng rng(4);
    for (int t = 0; t < 50; ++t) {
        const unsigned k = 1 + t % 3;
        const auto gt = oracle::rect_mask(10, 10, k, rng);
        const auto p = gradcheck::random_probmap(10, 10, k + 1, rng, 0.0);
        const double v = soft_dice_loss(p, gt).value;
        EXPECT_NEAR(v, dice_reference(p, gt, 1e-6), 1e-12);
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
    }
}

TEST(CrossEntropy, Examples) {
    Rng rng(5);
    const auto gt = oracle::rect_mask(8, 8, 1, rng);
    LossConfig cfg;
    EXPECT_LE(cross_entropy_loss(one_hot(gt, 2), gt, cfg).value, -std::log(1.0 - 1e-6));
    EXPECT_NEAR(cross_entropy_loss(ProbMap(8, 8, 2, 0.5), gt, cfg).value, std::log(2.0), 1e-12);

    const auto one = LabelMask::from_labels(1, 1, 1, {1});
    ProbMap p(1, 1, 2, 0.0);
    p.at(1, 0) = 1e-6;
    p.at(0, 0) = 1.0 - 1e-6;
    EXPECT_NEAR(cross_entropy_loss(p, one, cfg).value, -std::log(1e-6), 1e-9);
    EXPECT_NEAR(cross_entropy_loss(p, one, cfg).value, 13.815510557964274, 1e-9);
}

TEST(CrossEntropy, ClampedEntriesHaveZeroGradient) {
    const auto one = LabelMask::from_labels(2, 1, 1, {1, 1});
    ProbMap p(2, 1, 2, 0.0);
    p.at(1, 0) = 1e-9;  // below epsilon
    p.at(1, 1) = 0.25;
    p.at(0, 0) = 1.0 - 1e-9;
    p.at(0, 1) = 0.75;
    const auto r = cross_entropy_loss(p, one);
    EXPECT_EQ(r.grad.at(1, 0), 0.0);
    EXPECT_DOUBLE_EQ(r.grad.at(1, 1), -1.0 / (2.0 * 0.25));
    EXPECT_NEAR(r.value, 0.5 * (-std::log(1e-6) - std::log(0.25)), 1e-12);
    EXPECT_GE(r.value, 0.0);
}

TEST(Combined, AlphaZeroIsVanilla) {
    Rng rng(6);
    const auto gt = oracle::rect_mask(12, 12, 2, rng);
    const auto tubed = raster::tubed_skeletonize(gt);
    const auto p = gradcheck::random_probmap(12, 12, 3, rng);
    LossConfig cfg;
    cfg.alpha = 0.0;
    const auto r = combined_loss(p, gt, tubed, cfg);
    EXPECT_EQ(r.breakdown.total, r.breakdown.dice + r.breakdown.cce);
    auto expect = soft_dice_loss(p, gt, cfg).grad;
    expect += cross_entropy_loss(p, gt, cfg).grad;
    EXPECT_EQ(r.grad, expect);
    EXPECT_NE(r.breakdown.srl, 0.0) << "srl is still reported";
}

TEST(Combined, PerfectPrediction) {
    Rng rng(7);
    const auto gt = oracle::rect_mask(16, 16, 1, rng);
    const auto r = combined_loss(one_hot(gt, 2), gt, raster::tubed_skeletonize(gt));
    EXPECT_NEAR(r.breakdown.dice, 0.0, 1e-6);
    EXPECT_NEAR(r.breakdown.cce, 0.0, 1e-6);
    EXPECT_DOUBLE_EQ(r.breakdown.srl, -1.0);
    EXPECT_NEAR(r.breakdown.total, -1.0, 1e-5);
}

TEST(Combined, LinearInAlphaAndSumInvariant) {
    Rng rng(8);
    for (int t = 0; t < 20; ++t) {
        const auto gt = oracle::rect_mask(12, 12, 2, rng);
        const auto tubed = raster::tubed_skeletonize(gt);
        const auto p = gradcheck::random_probmap(12, 12, 3, rng);
        LossConfig c0, c2;
        c0.alpha = 0.0;
        c2.alpha = 2.0;
        const auto r0 = combined_loss(p, gt, tubed, c0);
        const auto r2 = combined_loss(p, gt, tubed, c2);
        EXPECT_NEAR(r2.breakdown.total - r0.breakdown.total, 2.0 * r2.breakdown.srl, 1e-12);
        EXPECT_NEAR(r2.breakdown.total, r2.breakdown.dice + r2.breakdown.cce + 2.0 * r2.breakdown.srl, 1e-9);
    }
}

TEST(LossConfig, Validation) {
    LossConfig c;
    c.alpha = -1.0;
    EXPECT_THROW(c.validate(), ValidationError);
    c.alpha = 1.0;
    c.epsilon = 0.0;
    EXPECT_THROW(c.validate(), ValidationError);
}
