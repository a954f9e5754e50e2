#include "stpnrca/energy.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace stpnrca;

namespace {

RbmParams zeros(std::size_t nv, std::size_t nh) {
    return {Eigen::VectorXd::Zero(static_cast<Eigen::Index>(nv)), Eigen::VectorXd::Zero(static_cast<Eigen::Index>(nh)),
            Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(nv), static_cast<Eigen::Index>(nh))};
}

RbmParams random_params(std::mt19937_64& rng, std::size_t nv, std::size_t nh, double scale = 1.0) {
    std::normal_distribution<double> g(0.0, scale);
    auto p = zeros(nv, nh);
    for (Eigen::Index i = 0; i < p.visible_bias.size(); ++i) p.visible_bias[i] = g(rng);
    for (Eigen::Index j = 0; j < p.hidden_bias.size(); ++j) p.hidden_bias[j] = g(rng);
    for (Eigen::Index i = 0; i < p.weights.size(); ++i) p.weights.data()[i] = g(rng);
    return p;
}

PatternVector random_vector(std::mt19937_64& rng, std::size_t n, double p_one = 0.5) {
    std::bernoulli_distribution b(p_one);
    PatternVector v(n);
    for (auto& x : v) x = b(rng) ? 1 : 0;
    return v;
}

/// Noisy copies of two prototypes, a stand-in for multi-mode nominal data.
std::vector<PatternVector> nominal_set(std::uint64_t seed, std::size_t n = 400) {
    std::mt19937_64 rng(seed);
    const PatternVector a{1, 1, 1, 1, 1, 1, 0, 1, 1, 1, 1, 1}, b{1, 1, 0, 1, 1, 1, 1, 1, 1, 0, 1, 1};
    std::bernoulli_distribution flip(0.03);
    std::vector<PatternVector> out;
    for (std::size_t i = 0; i < n; ++i) {
        auto v = i % 2 ? a : b;
        for (auto& x : v) x ^= flip(rng) ? 1 : 0;
        out.push_back(v);
    }
    return out;
}

RbmTrainConfig small_training(std::uint64_t seed = 3) {
    RbmTrainConfig c;
    c.hidden = 8;
    c.epochs = 80;
    c.seed = seed;
    return c;
}

}  // namespace

TEST(FreeEnergy, ZeroParameters) {
    const auto p = zeros(4, 6);
    EXPECT_NEAR(free_energy(p, PatternVector{1, 0, 1, 1}), -6.0 * std::log(2.0), 1e-12);
}

TEST(FreeEnergy, ZeroVectorIgnoresWeightsAndVisibleBias) {
    std::mt19937_64 rng(1);
    auto p = random_params(rng, 5, 3);
    p.hidden_bias.setZero();
    EXPECT_NEAR(free_energy(p, PatternVector(5, 0)), -3.0 * std::log(2.0), 1e-12);
}

TEST(FreeEnergy, HandExample) {
    RbmParams p;
    p.visible_bias = Eigen::Vector2d(0.5, -0.5);
    p.hidden_bias = Eigen::VectorXd::Constant(1, 0.1);
    p.weights = Eigen::MatrixXd(2, 1);
    p.weights << 1, -1;
    EXPECT_NEAR(free_energy(p, PatternVector{1, 0}), -0.5 - std::log(1.0 + std::exp(1.1)), 1e-12);
    EXPECT_NEAR(free_energy(p, PatternVector{1, 0}), -1.8874, 1e-4);
}

TEST(FreeEnergy, MatchesDirectFormula) {
    std::mt19937_64 rng(9);
    for (int t = 0; t < 50; ++t) {
        const auto p = random_params(rng, 7, 4);
        const auto v = random_vector(rng, 7);
        double expect = 0.0;
        for (std::size_t i = 0; i < 7; ++i) expect -= v[i] * p.visible_bias[static_cast<Eigen::Index>(i)];
        for (Eigen::Index j = 0; j < 4; ++j) {
            double x = p.hidden_bias[j];
            for (std::size_t i = 0; i < 7; ++i) x += v[i] * p.weights(static_cast<Eigen::Index>(i), j);
            expect -= std::log1p(std::exp(x));
        }
        EXPECT_NEAR(free_energy(p, v), expect, 1e-10);
    }
}

TEST(FreeEnergy, OverflowSafe) {
    auto p = zeros(2, 2);
    p.weights << 700, -700, 700, -700;
    const double f = free_energy(p, PatternVector{1, 0});
    EXPECT_TRUE(std::isfinite(f));
    EXPECT_NEAR(f, -700.0 - std::log1p(std::exp(-700.0)), 1e-9);
    EXPECT_TRUE(std::isfinite(softplus(-745.0)));
    EXPECT_DOUBLE_EQ(softplus(1000.0), 1000.0);
}

TEST(FreeEnergy, LengthMismatchAndUntrained) {
    EXPECT_THROW(free_energy(zeros(3, 2), PatternVector{1, 0}), UsageError);
    EXPECT_THROW(free_energy(RbmParams{}, PatternVector{}), UsageError);
}

TEST(SwitchedFreeEnergy, IdentitiesAndEquivalence) {
    std::mt19937_64 rng(4);
    for (int t = 0; t < 30; ++t) {
        const auto p = random_params(rng, 9, 5);
        const auto v = random_vector(rng, 9);
        const double f = free_energy(p, v);
        EXPECT_EQ(switched_free_energy(p, v, std::vector<std::size_t>{}), f);
        std::vector<std::size_t> twice;
        for (std::size_t i = 0; i < 9; ++i) twice.push_back(i);
        for (std::size_t i = 0; i < 9; ++i) twice.push_back(i);
        EXPECT_EQ(switched_free_energy(p, v, twice), f);
        const std::size_t h = static_cast<std::size_t>(t % 9);
        auto w = v;
        w[h] ^= 1u;
        EXPECT_EQ(switched_free_energy(p, v, std::vector<std::size_t>{h}), free_energy(p, w));
    }
    EXPECT_THROW(switched_free_energy(zeros(3, 1), PatternVector{1, 1, 1}, std::vector<std::size_t>{3}), UsageError);
}

TEST(TrainRbm, SeedDeterministic) {
    const auto data = nominal_set(1);
    const auto a = train_rbm(data, small_training(7));
    const auto b = train_rbm(data, small_training(7));
    EXPECT_EQ(a.weights, b.weights);
    EXPECT_EQ(a.visible_bias, b.visible_bias);
    EXPECT_EQ(a.hidden_bias, b.hidden_bias);
    const auto c = train_rbm(data, small_training(8));
    EXPECT_NE(a.weights, c.weights);
}

TEST(TrainRbm, NominalBelowRandom) {
    const auto data = nominal_set(2);
    const auto p = train_rbm(data, small_training());
    std::mt19937_64 rng(10);
    std::vector<PatternVector> noise;
    for (int i = 0; i < 200; ++i) noise.push_back(random_vector(rng, 12));
    EXPECT_LT(mean_free_energy(p, data) + 1.0, mean_free_energy(p, noise));
}

TEST(TrainRbm, FlipGapAcrossSeeds) {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const auto data = nominal_set(seed);
        const auto p = train_rbm(data, small_training(seed));
        std::mt19937_64 rng(seed);
        std::uniform_int_distribution<std::size_t> pos(0, 11);
        std::vector<PatternVector> flipped;
        for (const auto& v : data) {
            auto w = v;
            w[pos(rng)] ^= 1u;
            flipped.push_back(w);
        }
        EXPECT_LT(mean_free_energy(p, data) + 0.5, mean_free_energy(p, flipped)) << "seed " << seed;
    }
}

TEST(TrainRbm, Errors) {
    EXPECT_THROW(train_rbm(std::vector<PatternVector>{}, small_training()), UsageError);
    auto c = small_training();
    c.hidden = 0;
    EXPECT_THROW(train_rbm(nominal_set(1), c), UsageError);
    EXPECT_THROW(train_rbm(std::vector<PatternVector>{{1, 0}, {1}}, small_training()), UsageError);
}

TEST(HiddenSelection, SweepsCandidatesAndKeepsLowest) {
    const auto data = nominal_set(3);
    std::vector<PatternVector> train(data.begin(), data.begin() + 300), held(data.begin() + 300, data.end());
    auto c = small_training();
    c.epochs = 30;
    const auto sel = select_hidden_units(train, held, {16, 32, 64, 128, 256}, c);
    ASSERT_EQ(sel.scores.size(), 5u);
    double best = sel.scores.front().second;
    for (const auto& [nh, s] : sel.scores) best = std::min(best, s);
    for (const auto& [nh, s] : sel.scores)
        if (s == best) {
            EXPECT_EQ(nh, sel.hidden);
        }
    EXPECT_EQ(sel.params.hidden(), sel.hidden);
    EXPECT_THROW(select_hidden_units(train, held, {}, c), UsageError);
}

TEST(Detector, ThresholdIsMaxPlusKappaSd) {
    std::mt19937_64 rng(6);
    const auto p = random_params(rng, 6, 3);
    std::vector<PatternVector> vs;
    std::vector<double> f;
    for (int i = 0; i < 40; ++i) {
        vs.push_back(random_vector(rng, 6));
        f.push_back(free_energy(p, vs.back()));
    }
    const double mean = std::accumulate(f.begin(), f.end(), 0.0) / 40.0;
    double ss = 0.0;
    for (double x : f) ss += (x - mean) * (x - mean);
    const double sd = std::sqrt(ss / 39.0);
    const double mx = *std::max_element(f.begin(), f.end());
    EXPECT_NEAR(calibrate_detector(p, vs, 1.0).threshold, mx + sd, 1e-12);
    EXPECT_NEAR(calibrate_detector(p, vs, 0.0).threshold, mx, 1e-12);
    const auto cfg = calibrate_detector(p, vs, 1.0);
    for (const auto& v : vs) EXPECT_EQ(detect(p, v, cfg), Verdict::nominal);
    EXPECT_THROW(calibrate_detector(p, vs, -1.0), UsageError);
    EXPECT_THROW(calibrate_detector(p, std::vector<PatternVector>{}, 1.0), UsageError);
}

TEST(Detector, FlippedHighWeightBitsAreAnomalous) {
    const auto data = nominal_set(4);
    const auto p = train_rbm(data, small_training());
    const auto cfg = calibrate_detector(p, data, 1.0);
    PatternVector v{0, 0, 1, 0, 0, 1, 1, 0, 0, 1, 0, 0};
    EXPECT_EQ(detect(p, v, cfg), Verdict::anomalous);
    auto huge = cfg;
    huge.threshold = std::numeric_limits<double>::infinity();
    EXPECT_EQ(detect(p, v, huge), Verdict::nominal);
}

TEST(Detector, EveryModeBelowThreshold) {
    const auto data = nominal_set(5);
    const auto p = train_rbm(data, small_training());
    const auto cfg = calibrate_detector(p, data, 1.0);
    std::vector<PatternVector> even, odd;
    for (std::size_t i = 0; i < data.size(); ++i) (i % 2 ? odd : even).push_back(data[i]);
    EXPECT_LT(mean_free_energy(p, even), cfg.threshold);
    EXPECT_LT(mean_free_energy(p, odd), cfg.threshold);
}

TEST(Detector, TrailingMeans) {
    EXPECT_EQ(detail::trailing_means({1, 2, 3, 4}, 1), (std::vector<double>{1, 2, 3, 4}));
    EXPECT_EQ(detail::trailing_means({1, 2, 3, 4}, 2), (std::vector<double>{1, 1.5, 2.5, 3.5}));
    EXPECT_EQ(detail::trailing_means({3, 6}, 5), (std::vector<double>{3, 4.5}));
}

TEST(Detector, MeanOverKSmoothsIsolatedSpikes) {
    auto p = zeros(1, 1);
    p.visible_bias[0] = -1.0;  // F = v - ln 2
    std::vector<PatternVector> nominal(20, PatternVector{0});
    const auto single = calibrate_detector(p, nominal, 0.0);
    const auto mean4 = calibrate_detector(p, nominal, 0.0, Aggregation::mean_over_k, 4);
    std::vector<PatternVector> stream(12, PatternVector{0});
    stream[5] = {1};
    auto s = detect_stream(p, stream, single);
    EXPECT_EQ(s[5], Verdict::anomalous);
    EXPECT_EQ(std::count(s.begin(), s.end(), Verdict::anomalous), 1);
    s = detect_stream(p, stream, mean4);
    EXPECT_EQ(std::count(s.begin(), s.end(), Verdict::anomalous), 4);  // windows 5..8 include the spike
    for (std::size_t w = 5; w < 9; ++w) EXPECT_EQ(s[w], Verdict::anomalous);
}

TEST(Detector, BlocksCalibrateOnPerBlockMeans) {
    auto p = zeros(1, 1);
    p.visible_bias[0] = -1.0;
    const std::vector<std::vector<PatternVector>> blocks{{{0}, {0}, {1}}, {{1}, {1}, {0}, {0}}};
    // k = 2, first mean of each block skipped: {0.5} and {1, 0.5, 0}
    const auto cfg = calibrate_detector(p, blocks, 0.0, Aggregation::mean_over_k, 2);
    EXPECT_NEAR(cfg.threshold, 1.0 - std::log(2.0), 1e-12);
    EXPECT_EQ(cfg.window_count, 2u);
}
