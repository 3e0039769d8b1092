#include <gtest/gtest.h>

#include "skelloss/raster.hpp"
#include "skelloss/synth.hpp"
#include "support/oracles.hpp"

using namespace skelloss;
using namespace skelloss::synth;

TEST(Synth, DeterministicPerSeedAndIndex) {
    SynthConfig cfg;
    cfg.count = 6;
    cfg.seed = 11;
    const auto a = generate(cfg);
    const auto b = generate(cfg);
    ASSERT_EQ(a.size(), 6u);
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i].gt, b[i].gt);
        EXPECT_EQ(a[i].image, b[i].image);
        const auto one = generate_one(cfg, i);
        EXPECT_EQ(one.gt, a[i].gt);
    }
    cfg.seed = 12;
    EXPECT_NE(generate(cfg)[0].gt, a[0].gt);
}

TEST(Synth, NoiselessImageIsScaledIndicator) {
    SynthConfig cfg;
    cfg.count = 5;
    cfg.noise_sigma = 0.0;
    cfg.contrast = 1.0;
    for (const auto& s : generate(cfg))
        for (std::size_t i = 0; i < s.gt.size(); ++i) ASSERT_EQ(s.image[i], s.gt[i] ? 1.0 : 0.0);
}

TEST(Synth, ImageInUnitRange) {
    SynthConfig cfg;
    cfg.count = 5;
    cfg.noise_sigma = 0.5;
    for (const auto& s : generate(cfg))
        for (double v : s.image.data()) {
            ASSERT_GE(v, 0.0);
            ASSERT_LE(v, 1.0);
        }
}

TEST(Synth, OnePixelStrokesAreTheirOwnSkeleton) {
    SynthConfig cfg;
    cfg.count = 40;
    cfg.width_min = cfg.width_max = 1;
    cfg.seed = 3;
    for (const auto& s : generate(cfg)) {
        const auto bin = raster::binarize(s.gt);
        EXPECT_EQ(raster::skeletonize(bin), bin);
        EXPECT_EQ(oracle::from_img(oracle::zhang_suen(oracle::to_img(bin))), bin);
    }
}

TEST(Synth, TubularForegroundStaysSparse) {
    SynthConfig cfg;
    cfg.count = 80;
    for (const auto& s : generate(cfg)) {
        const double fg = static_cast<double>(raster::count(raster::binarize(s.gt)));
        EXPECT_LT(fg, kMaxTubularFraction * 64 * 64);
        EXPECT_GT(fg, 0.0);
    }
}

TEST(Synth, ClassesAndBlobs) {
    SynthConfig cfg;
    cfg.count = 20;
    cfg.classes = 3;
    cfg.shapes_min = cfg.shapes_max = 6;
    std::vector<bool> seen(4, false);
    for (const auto& s : generate(cfg)) {
        EXPECT_EQ(s.gt.num_classes(), 3u);
        for (std::size_t i = 0; i < s.gt.size(); ++i) seen[s.gt[i]] = true;
    }
    for (bool b : seen) EXPECT_TRUE(b);

    cfg.kind = SceneKind::blobs;
    cfg.classes = 1;
    cfg.width_min = 3;
    cfg.width_max = 8;
    for (const auto& s : generate(cfg)) EXPECT_GT(raster::count(raster::binarize(s.gt)), 0u);
}

TEST(Synth, Split) {
    std::vector<int> v(10);
    for (int i = 0; i < 10; ++i) v[i] = i;
    const auto [train, test] = split(v, 0.8, 1);
    EXPECT_EQ(train.size(), 8u);
    EXPECT_EQ(test.size(), 2u);
    std::vector<int> all = train;
    all.insert(all.end(), test.begin(), test.end());
    std::sort(all.begin(), all.end());
    EXPECT_EQ(all, v);
    EXPECT_EQ(split(v, 0.8, 1), split(v, 0.8, 1));

    std::vector<int> w(80);
    EXPECT_EQ(split(w, 0.8, 0).first.size(), 64u);
    EXPECT_THROW(split(v, 1.0, 1), ValidationError);
    EXPECT_THROW(split(std::vector<int>{1}, 0.5, 1), ValidationError);
}

TEST(Synth, Validation) {
    SynthConfig cfg;
    cfg.size = 16;
    EXPECT_THROW(generate(cfg), ValidationError);
    cfg = {};
    cfg.width_min = 3;
    cfg.width_max = 2;
    EXPECT_THROW(generate(cfg), ValidationError);
    cfg = {};
    cfg.contrast = 1.5;
    EXPECT_THROW(generate(cfg), ValidationError);
    cfg = {};
    cfg.count = 0;
    EXPECT_THROW(generate(cfg), ValidationError);
    EXPECT_THROW(parse_kind("spiral"), ValidationError);
    EXPECT_EQ(parse_kind("blobs"), SceneKind::blobs);
}
