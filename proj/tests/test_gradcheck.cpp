#include <gtest/gtest.h>

#include <cmath>

#include "skelloss/gradcheck.hpp"
#include "skelloss/raster.hpp"
#include "skelloss/synth.hpp"
#include "support/oracles.hpp"

using namespace skelloss;
using namespace skelloss::gradcheck;

namespace {

ProbMap one_hot(const LabelMask& gt, std::size_t channels) {
    ProbMap p(gt.width(), gt.height(), channels, 0.0);
    for (std::size_t i = 0; i < gt.size(); ++i) p.at(gt[i], i) = 1.0;
    return p;
}

}  // namespace

namespace skelloss::gradcheck {
void PrintTo(LossKind k, std::ostream* os) { *os << to_string(k); }
}  // namespace skelloss::gradcheck

TEST(FiniteDiff, QuadraticAndConstantProbes) {
    Rng rng(1);
    const auto p = random_probmap(5, 4, 3, rng);
    const auto g = finite_diff_grad(
        [](const ProbMap& q) {
            double s = 0.0;
            for (double v : q.values()) s += v * v;
            return s;
        },
        p);
    for (std::size_t j = 0; j < p.size(); ++j) EXPECT_NEAR(g[j], 2.0 * p[j], 1e-8);
    const auto z = finite_diff_grad([](const ProbMap&) { return 3.0; }, p);
    for (double v : z.values()) EXPECT_EQ(v, 0.0);
}

TEST(FiniteDiff, SrlWorkedExample) {
    const auto y = LabelMask::from_labels(2, 2, 1, {1, 0, 0, 0});
    ProbMap p(2, 2, 2, 0.0);
    const double fg[] = {0.8, 0.3, 0.1, 0.0};
    for (std::size_t i = 0; i < 4; ++i) {
        p.at(1, i) = fg[i];
        p.at(0, i) = 1.0 - fg[i];
    }
    const auto g = finite_diff_grad([&](const ProbMap& q) { return losses::srl_loss(q, y).value; }, p);
    for (std::size_t c = 0; c < 2; ++c)
        for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(g.at(c, i), (c == 1 && i == 0) ? -1.0 : 0.0, 1e-9);
}

TEST(FiniteDiff, NonFiniteLossNamesEntry) {
    ProbMap p(3, 2, 2, 0.5);
    try {
        finite_diff_grad(
            [](const ProbMap& q) { return q.at(1, 4) > 0.5 ? std::nan("") : 0.0; }, p);
        FAIL() << "expected an error";
    } catch (const std::runtime_error& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("channel 1"), std::string::npos) << msg;
        EXPECT_NE(msg.find("x 1"), std::string::npos) << msg;
        EXPECT_NE(msg.find("y 1"), std::string::npos) << msg;
    }
    EXPECT_THROW(finite_diff_grad([](const ProbMap&) { return 0.0; }, p, 0.0), ValidationError);
}

TEST(CompareGrads, ConstructedCases) {
    Rng rng(2);
    GradField a(4, 4, 2, 0.0);
    for (double& v : a.values()) v = rng.uniform(0.5, 2.0);
    auto same = compare_grads(a, a, 1e-4);
    EXPECT_EQ(same.max_rel_err, 0.0);
    EXPECT_TRUE(same.pass);

    GradField b = a;
    for (double& v : b.values()) v *= 1.0 + 5e-5;
    EXPECT_TRUE(compare_grads(a, b, 1e-4).pass);

    GradField c = a;
    c.at(1, 6) = 1.0;
    a.at(1, 6) = -1.0;
    const auto r = compare_grads(a, c, 1e-4);
    EXPECT_FALSE(r.pass);
    EXPECT_EQ(r.worst_channel, 1u);
    EXPECT_EQ(r.worst_x, 2u);
    EXPECT_EQ(r.worst_y, 1u);
    EXPECT_THROW(compare_grads(a, GradField(4, 4, 3), 1e-4), ValidationError);
}

class RandomGradcheck : public ::testing::TestWithParam<LossKind> {};

TEST_P(RandomGradcheck, AnalyticMatchesFiniteDifferences) {
    for (std::size_t channels : {2u, 3u}) {
        const auto r = random_gradcheck(GetParam(), 16, channels, 10, 2024);
        EXPECT_TRUE(r.worst.pass) << to_string(GetParam()) << " channels " << channels << ": max rel err "
                                  << r.worst.max_rel_err;
        EXPECT_LT(r.worst.max_rel_err, 1e-4);
    }
}

TEST_P(RandomGradcheck, IncludeBackgroundVariant) {
    losses::LossConfig cfg;
    cfg.include_background = true;
    const auto r = random_gradcheck(GetParam(), 12, 2, 5, 7, 1e-4, 1e-4, cfg);
    EXPECT_TRUE(r.worst.pass) << r.worst.max_rel_err;
}

INSTANTIATE_TEST_SUITE_P(AllLosses, RandomGradcheck,
                         ::testing::Values(LossKind::srl, LossKind::dice, LossKind::cce, LossKind::combined),
                         [](const auto& info) { return std::string(to_string(info.param)); });

TEST(Audit, OneHotPrediction) {
    Rng rng(3);
    const auto gt = oracle::rect_mask(16, 16, 2, rng);
    const auto tubed = raster::tubed_skeletonize(gt);
    const auto rep = category_audit(one_hot(gt, 3), gt, tubed);
    for (std::size_t k = 1; k <= 2; ++k) {
        for (bool on : {false, true}) {
            EXPECT_EQ(rep.bucket(k, Overlap::FP, on).stats.count, 0u);
            EXPECT_EQ(rep.bucket(k, Overlap::FN, on).stats.count, 0u);
        }
        const auto& tn = rep.bucket(k, Overlap::TN, false).stats;
        EXPECT_EQ(tn.min, 0.0);
        EXPECT_EQ(tn.max, 0.0);
        EXPECT_EQ(rep.bucket(k, Overlap::TN, true).stats.count, 0u);
    }
    EXPECT_TRUE(rep.off_skeleton_zero);
    EXPECT_TRUE(rep.on_skeleton_constant);
    EXPECT_EQ(rep.total_count(), 16u * 16u * 2u);
}

TEST(Audit, AllBackgroundPrediction) {
    Rng rng(4);
    const auto gt = oracle::rect_mask(16, 16, 1, rng);
    const auto tubed = raster::tubed_skeletonize(gt);
    ProbMap p(16, 16, 2, 0.0);
    for (std::size_t i = 0; i < p.pixels(); ++i) p.at(0, i) = 1.0;
    const auto rep = category_audit(p, gt, tubed);
    double skel = 0.0, fg = 0.0;
    for (std::size_t i = 0; i < gt.size(); ++i) {
        skel += tubed[i] == 1;
        fg += gt[i] == 1;
    }
    EXPECT_EQ(rep.bucket(1, Overlap::TP, false).stats.count + rep.bucket(1, Overlap::TP, true).stats.count, 0u);
    const auto& on = rep.bucket(1, Overlap::FN, true).stats;
    const auto& off = rep.bucket(1, Overlap::FN, false).stats;
    EXPECT_EQ(static_cast<double>(on.count + off.count), fg);
    EXPECT_EQ(on.min, -1.0 / skel);
    EXPECT_EQ(on.max, -1.0 / skel);
    if (off.count) {
        EXPECT_EQ(off.min, 0.0);
        EXPECT_EQ(off.max, 0.0);
    }
}

TEST(Audit, RandomSyntheticInstances) {
    synth::SynthConfig cfg;
    cfg.count = 10;
    cfg.classes = 2;
    cfg.seed = 5;
    Rng rng(5);
    for (const auto& s : synth::generate(cfg)) {
        const auto tubed = raster::tubed_skeletonize(s.gt);
        const auto p = random_probmap(64, 64, 3, rng, 0.0);
        const auto rep = category_audit(p, s.gt, tubed);
        EXPECT_TRUE(rep.off_skeleton_zero);
        EXPECT_TRUE(rep.on_skeleton_constant);
        EXPECT_EQ(rep.skeleton_outside_gt, 0u);
        for (std::size_t k = 1; k <= 2; ++k) {
            for (bool on : {false, true}) {
                const auto& tn = rep.bucket(k, Overlap::TN, on).stats;
                const auto& fp = rep.bucket(k, Overlap::FP, on).stats;
                if (on) {
                    EXPECT_EQ(tn.count, 0u);
                    EXPECT_EQ(fp.count, 0u);
                }
            }
            const auto& tp = rep.bucket(k, Overlap::TP, true).stats;
            const auto& fn = rep.bucket(k, Overlap::FN, true).stats;
            if (tp.count) EXPECT_EQ(tp.min, tp.max);
            if (tp.count && fn.count) EXPECT_EQ(tp.min, fn.min);
            if (tp.count) EXPECT_EQ(tp.min, rep.expected_on_skeleton[k - 1]);
        }
        EXPECT_EQ(rep.total_count(), 64u * 64u * 2u);
    }
}

TEST(Audit, InvariantToThresholdPreservingPermutations) {
    Rng rng(6);
    const auto gt = oracle::rect_mask(16, 16, 1, rng);
    const auto tubed = raster::tubed_skeletonize(gt);
    const auto p = random_probmap(16, 16, 2, rng);
    ProbMap q = p;
    // Push every probability further from the threshold on its own side.
    for (std::size_t i = 0; i < q.pixels(); ++i) {
        const double v = p.at(1, i) >= 0.5 ? 0.5 + 0.5 * (p.at(1, i) - 0.5) + 0.25 : 0.5 * p.at(1, i);
        q.at(1, i) = v;
        q.at(0, i) = 1.0 - v;
    }
    const auto a = category_audit(p, gt, tubed);
    const auto b = category_audit(q, gt, tubed);
    for (std::size_t j = 0; j < a.buckets.size(); ++j) EXPECT_EQ(a.buckets[j].stats.count, b.buckets[j].stats.count);
}

TEST(Audit, NoTsTargetReportsPixelsOutsideGt) {
    LabelMask line(9, 7, 1);
    for (std::size_t x = 2; x < 7; ++x) line.set(x, 3, 1);
    const auto rep = category_audit(ProbMap(9, 7, 2, 0.5), line, raster::skeletonize_no_ts(line));
    EXPECT_GT(rep.skeleton_outside_gt, 0u);
    EXPECT_THROW(category_audit(ProbMap(9, 7, 2, 0.5), line, line, 1.0), ValidationError);
}

TEST(ConstancyProbe, SrlIsConstantDiceIsNot) {
    Rng rng(7);
    const auto gt = oracle::rect_mask(16, 16, 2, rng);
    const auto tubed = raster::tubed_skeletonize(gt);
    const auto srl = gradient_constancy_probe(tubed, {}, 10, 1);
    EXPECT_TRUE(srl.constant);
    EXPECT_EQ(srl.max_abs_deviation, 0.0);

    const auto dice = gradient_constancy_probe([&](const ProbMap& p) { return losses::soft_dice_loss(p, gt); },
                                               gt.shape(), 3, 10, 1);
    EXPECT_FALSE(dice.constant);
    EXPECT_EQ(dice.first_mismatch, 1u);

    const auto empty = gradient_constancy_probe(LabelMask(8, 8, 1), {}, 10, 2);
    EXPECT_TRUE(empty.constant);
    for (double v : empty.gradient.values()) EXPECT_EQ(v, 0.0);
    EXPECT_THROW(gradient_constancy_probe(tubed, {}, 1, 0), ValidationError);
}

TEST(RandomLabelMask, ShapesAndLabels) {
    Rng rng(8);
    for (int t = 0; t < 50; ++t) {
        const auto m = random_label_mask(16, 16, 3, rng);
        EXPECT_EQ(m.num_classes(), 3u);
        std::vector<int> seen(4, 0);
        for (std::size_t i = 0; i < m.size(); ++i) seen[m[i]] = 1;
        EXPECT_EQ(seen[1] + seen[2] + seen[3], 3);
    }
    EXPECT_THROW(random_label_mask(3, 16, 1, rng), ValidationError);
    EXPECT_THROW(parse_loss_kind("l2"), ValidationError);
}
