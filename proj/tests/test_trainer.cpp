#include <gtest/gtest.h>

#include <cmath>

#include "skelloss/trainer.hpp"
#include "support/oracles.hpp"

using namespace skelloss;
using namespace skelloss::trainer;

namespace {

std::vector<synth::SynthSample> small_data(std::size_t count, unsigned classes, std::uint64_t seed) {
    synth::SynthConfig cfg;
    cfg.count = count;
    cfg.size = 32;
    cfg.classes = classes;
    cfg.seed = seed;
    return synth::generate(cfg);
}

ModelParams random_params(std::size_t channels, Rng& rng, double scale) {
    ModelParams p(channels);
    for (double& v : p.weights) v = rng.uniform(-scale, scale);
    return p;
}

}  // namespace

TEST(Features, ConstantImage) {
    const Image img(9, 7, 0.4);
    const auto fb = extract_features(img);
    for (std::size_t i = 0; i < img.size(); ++i) {
        for (std::size_t f = 0; f < 4; ++f) EXPECT_NEAR(fb.at(f, i), 0.4, 1e-14);
        EXPECT_EQ(fb.at(4, i), 0.0);
        EXPECT_EQ(fb.at(5, i), 1.0);
    }
}

TEST(Features, BlurPreservesMassOfCentredImpulse) {
    Image img(41, 41, 0.0);
    img.at(20, 20) = 1.0;
    for (double sigma : kBlurSigmas) {
        const auto b = gaussian_blur(img, sigma);
        double s = 0.0;
        for (double v : b.data()) s += v;
        EXPECT_NEAR(s, 1.0, 1e-12);
    }
}

TEST(Features, BlurMatchesDirect2dConvolution) {
    Rng rng(1);
    Image img(23, 17, 0.0);
    std::vector<std::vector<double>> ref(17, std::vector<double>(23));
    for (std::size_t y = 0; y < 17; ++y)
        for (std::size_t x = 0; x < 23; ++x) ref[y][x] = img.at(x, y) = rng.uniform();
    for (double sigma : kBlurSigmas) {
        const auto b = gaussian_blur(img, sigma);
        const auto o = oracle::gaussian_2d(ref, sigma);
        for (std::size_t y = 0; y < 17; ++y)
            for (std::size_t x = 0; x < 23; ++x) ASSERT_NEAR(b.at(x, y), o[y][x], 1e-6) << sigma;
    }
}

TEST(Features, GradientMagnitudeOfRamp) {
    Image img(8, 6, 0.0);
    for (std::size_t y = 0; y < 6; ++y)
        for (std::size_t x = 0; x < 8; ++x) img.at(x, y) = 0.1 * static_cast<double>(x);
    const auto fb = extract_features(img);
    EXPECT_NEAR(fb.at(4, 2 * 8 + 3), 0.1, 1e-12);
}

TEST(Forward, ZeroWeightsAreUniform) {
    const auto fb = extract_features(Image(5, 5, 0.3));
    const auto p = forward(ModelParams(3), fb);
    for (double v : p.values()) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
}

TEST(Forward, ShiftInvariantAndStable) {
    Rng rng(2);
    Image img(6, 6, 0.0);
    for (double& v : img.data()) v = rng.uniform();
    const auto fb = extract_features(img);
    auto p = random_params(3, rng, 1.0);
    auto q = p;
    for (std::size_t f = 0; f < kNumFeatures; ++f)
        for (std::size_t c = 0; c < 3; ++c) q.w(c, f) += 0.7 * static_cast<double>(f);
    const auto a = forward(p, fb);
    const auto b = forward(q, fb);
    for (std::size_t j = 0; j < a.size(); ++j) EXPECT_NEAR(a[j], b[j], 1e-12);
    EXPECT_TRUE(is_valid_probmap(a, 1e-12));

    ModelParams big(2);
    big.w(1, 5) = 800.0;
    const auto s = forward(big, fb);
    for (std::size_t i = 0; i < s.pixels(); ++i) {
        EXPECT_EQ(s.at(1, i), 1.0);
        EXPECT_EQ(s.at(0, i), 0.0);
    }
}

TEST(Backward, ZeroLossGradientGivesZero) {
    const auto fb = extract_features(Image(4, 4, 0.5));
    const ModelParams p(2);
    const auto g = backward(p, fb, GradField(4, 4, 2, 0.0));
    for (double v : g.weights) EXPECT_EQ(v, 0.0);
    // A gradient equal in every channel is absorbed by the softmax.
    const auto h = backward(p, fb, GradField(4, 4, 2, 3.0));
    for (double v : h.weights) EXPECT_NEAR(v, 0.0, 1e-14);
}

class ParamGradient : public ::testing::TestWithParam<int> {};

TEST_P(ParamGradient, MatchesFiniteDifferences) {
    const int arm = GetParam();
    const unsigned classes = arm == 3 ? 2 : 1;
    synth::SynthConfig sc;
    sc.count = 2;
    sc.size = 32;
    sc.classes = classes;
    sc.seed = 9;
    auto data = synth::generate(sc);
    TrainConfig cfg;
    cfg.loss.alpha = arm == 0 ? 0.0 : 1.0;
    cfg.use_ts = arm != 2;
    std::vector<PreparedSample> batch;
    for (const auto& s : data) batch.push_back(prepare(s, cfg));

    Rng rng(10 + arm);
    const auto params = random_params(classes + 1, rng, 0.5);
    const auto [loss, grad] = batch_loss(params, batch, cfg.loss);
    const double h = 1e-5;
    double worst = 0.0;
    for (std::size_t j = 0; j < params.weights.size(); ++j) {
        auto up = params;
        auto dn = params;
        up.weights[j] += h;
        dn.weights[j] -= h;
        const double fd =
            (batch_loss(up, batch, cfg.loss).first.total - batch_loss(dn, batch, cfg.loss).first.total) / (2 * h);
        const double err = std::abs(fd - grad.weights[j]) / std::max(1e-8, std::abs(fd) + std::abs(grad.weights[j]));
        worst = std::max(worst, err);
    }
    EXPECT_LT(worst, 1e-4);
}

INSTANTIATE_TEST_SUITE_P(Arms, ParamGradient, ::testing::Values(0, 1, 2, 3));

TEST(Train, SrlProbabilityGradientConstantAcrossEpochs) {
    const auto data = small_data(3, 1, 4);
    TrainConfig cfg;
    cfg.epochs = 5;
    cfg.learning_rate = 0.5;
    const auto prepared = prepare(data[0], cfg);
    GradField first;
    train(data, cfg, [&](std::size_t epoch, const ModelParams& p) {
        const auto r = losses::srl_loss(forward(p, prepared.features), prepared.target, cfg.loss);
        if (epoch == 0) first = r.grad;
        else EXPECT_EQ(r.grad, first);
    });
}

TEST(Train, ZeroEpochsAndDeterminism) {
    const auto data = small_data(4, 1, 5);
    TrainConfig cfg;
    cfg.epochs = 0;
    const auto z = train(data, cfg);
    EXPECT_TRUE(z.history.empty());
    for (double v : z.params.weights) EXPECT_EQ(v, 0.0);
    cfg.epochs = 10;
    EXPECT_EQ(train(data, cfg).params, train(data, cfg).params);
    EXPECT_THROW(train({}, cfg), ValidationError);
    cfg.learning_rate = 0.0;
    EXPECT_THROW(train(data, cfg), ValidationError);
}

TEST(Train, CrossEntropyAloneDescends) {
    const auto data = small_data(4, 1, 6);
    TrainConfig cfg;
    cfg.epochs = 50;
    cfg.learning_rate = 0.1;
    cfg.loss.alpha = 0.0;
    cfg.loss.use_dice = false;
    const auto r = train(data, cfg);
    for (std::size_t e = 1; e < r.history.size(); ++e) EXPECT_LE(r.history[e].total, r.history[e - 1].total + 1e-12);
}

TEST(Train, DefaultArmsStayFinite) {
    const auto data = small_data(6, 1, 7);
    TrainConfig cfg;
    cfg.epochs = 60;
    for (double alpha : {0.0, 1.0}) {
        cfg.loss.alpha = alpha;
        const auto r = train(data, cfg);
        EXPECT_TRUE(r.params.finite());
        EXPECT_LT(r.history.back().total, r.history.front().total);
    }
}

TEST(Predict, TieRules) {
    ProbMap two(2, 1, 2, 0.5);
    EXPECT_EQ(hard_prediction(two)[0], 1);
    ProbMap three(1, 1, 3, 1.0 / 3.0);
    EXPECT_EQ(hard_prediction(three)[0], 0);
    three.at(0, 0) = 0.2;
    three.at(1, 0) = 0.4;
    three.at(2, 0) = 0.4;
    EXPECT_EQ(hard_prediction(three)[0], 1);
}

TEST(Evaluate, ZeroParamsPredictEverythingForeground) {
    const auto data = small_data(3, 1, 8);
    const auto r = evaluate(ModelParams(2), data);
    EXPECT_EQ(r.aggregate.fpr, 100.0);
    EXPECT_EQ(r.aggregate.fnr, 0.0);
}

TEST(Evaluate, MatchesManualPipeline) {
    const auto data = small_data(4, 1, 9);
    TrainConfig cfg;
    cfg.epochs = 20;
    const auto params = train(data, cfg).params;
    const auto r = evaluate(params, data);
    double dsc = 0.0;
    for (const auto& s : data) {
        const auto pred = hard_prediction(forward(params, extract_features(s.image)));
        dsc += metrics::evaluate(pred, s.gt).macro.dsc;
    }
    EXPECT_DOUBLE_EQ(r.aggregate.dsc, dsc / 4.0);
    EXPECT_THROW(evaluate(params, {}), ValidationError);
}

TEST(Evaluate, PerfectSeparationScoresFull) {
    // Noiseless images: the raw intensity alone separates the classes.
    synth::SynthConfig sc;
    sc.count = 3;
    sc.size = 32;
    sc.noise_sigma = 0.0;
    sc.contrast = 1.0;
    const auto data = synth::generate(sc);
    ModelParams p(2);
    p.w(1, 0) = 20.0;
    p.w(1, 5) = -10.0;
    const auto r = evaluate(p, data);
    EXPECT_EQ(r.aggregate.dsc, 100.0);
    EXPECT_EQ(r.aggregate.cldice, 100.0);
    EXPECT_EQ(r.aggregate.fpr, 0.0);
}
