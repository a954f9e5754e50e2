#include "stpnrca/a3.hpp"

#include <gtest/gtest.h>

#include <random>
#include <set>

using namespace stpnrca;

namespace {

std::vector<PatternVector> prototypes() {
    return {{1, 1, 1, 1, 1, 1, 1, 1, 1}, {1, 1, 0, 1, 1, 1, 1, 1, 1}, {1, 1, 1, 1, 0, 1, 1, 0, 1}};
}

A3TrainConfig small_config() {
    A3TrainConfig c;
    c.hidden = {32};
    c.dropout = 0.0;
    c.batch_size = 32;
    c.learning_rate = 0.1;
    c.max_epochs = 150;
    c.patience = 10;
    c.seed = 4;
    return c;
}

A3Dataset toy_dataset() {
    std::vector<PatternVector> nominal;
    for (int r = 0; r < 20; ++r)
        for (const auto& p : prototypes()) nominal.push_back(p);
    AnomalyGeneration g;
    g.flip_orders = {1};
    g.exhaustive_single = true;
    return generate_artificial_anomalies(nominal, g);
}

double flat_get(MlpParams& p, std::size_t l, bool bias, Eigen::Index i) {
    return bias ? p.layers[l].bias[i] : p.layers[l].weights.data()[i];
}
void flat_set(MlpParams& p, std::size_t l, bool bias, Eigen::Index i, double v) {
    (bias ? p.layers[l].bias[i] : p.layers[l].weights.data()[i]) = v;
}

}  // namespace

TEST(ArtificialAnomalies, NoOrdersGivesUnflippedExamples) {
    AnomalyGeneration g;
    g.flip_orders = {};
    const auto d = generate_artificial_anomalies(prototypes(), g);
    ASSERT_EQ(d.size(), 3u);
    for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_EQ(d.inputs[i], prototypes()[i]);
        EXPECT_EQ(d.labels[i], PatternVector(9, 1));
    }
}

TEST(ArtificialAnomalies, ExhaustiveSingleFlips) {
    AnomalyGeneration g;
    g.flip_orders = {1};
    g.exhaustive_single = true;
    const auto d = generate_artificial_anomalies(std::vector<PatternVector>{prototypes()[1]}, g);
    ASSERT_EQ(d.size(), 10u);
    std::set<std::size_t> seen;
    for (std::size_t k = 1; k < d.size(); ++k) {
        std::size_t diff = 0, at = 0;
        for (std::size_t i = 0; i < 9; ++i)
            if (d.inputs[k][i] != prototypes()[1][i]) ++diff, at = i;
        EXPECT_EQ(diff, 1u);
        seen.insert(at);
    }
    EXPECT_EQ(seen.size(), 9u);
}

TEST(ArtificialAnomalies, LabelsZeroExactlyAtFlips) {
    AnomalyGeneration g;
    g.samples_per_order = 7;
    g.seed = 12;
    EXPECT_EQ(g.flip_orders, (std::vector<std::size_t>{1, 2, 3, 4}));
    const auto base = prototypes();
    const auto d = generate_artificial_anomalies(base, g);
    ASSERT_EQ(d.size(), base.size() * (1 + 4 * 7));
    const std::size_t per = 1 + 4 * 7;
    for (std::size_t k = 0; k < d.size(); ++k) {
        const auto& src = base[k / per];
        std::size_t flips = 0;
        for (std::size_t i = 0; i < 9; ++i) {
            const bool flipped = d.inputs[k][i] != src[i];
            EXPECT_EQ(d.labels[k][i], flipped ? 0 : 1);
            flips += flipped;
        }
        const std::size_t slot = k % per;
        EXPECT_EQ(flips, slot == 0 ? 0 : 1 + (slot - 1) / 7);
    }
}

TEST(ArtificialAnomalies, Errors) {
    AnomalyGeneration g;
    EXPECT_THROW(generate_artificial_anomalies(std::vector<PatternVector>{}, g), UsageError);
    g.flip_orders = {10};
    EXPECT_THROW(generate_artificial_anomalies(prototypes(), g), UsageError);
    g.flip_orders = {0};
    EXPECT_THROW(generate_artificial_anomalies(prototypes(), g), UsageError);
}

TEST(A3Loss, SumOfPositionLosses) {
    std::mt19937_64 rng(2);
    const auto p = init_mlp(9, 9, {6, 5}, 0.0, rng);
    const auto d = toy_dataset();
    const auto parts = a3_position_losses(p, d.inputs, d.labels);
    EXPECT_EQ(parts.size(), 9u);
    EXPECT_NEAR(std::accumulate(parts.begin(), parts.end(), 0.0), a3_loss(p, d.inputs, d.labels), 1e-8);
}

TEST(A3Gradient, MatchesCentralDifferences) {
    std::mt19937_64 rng(5);
    for (const auto& hidden : {std::vector<std::size_t>{3}, std::vector<std::size_t>{3, 4}}) {
        auto p = init_mlp(4, 4, hidden, 0.0, rng);
        // nonzero biases keep every pre-activation away from the rectifier kink
        std::uniform_real_distribution<double> off(0.05, 0.3);
        for (auto& layer : p.layers)
            for (Eigen::Index i = 0; i < layer.bias.size(); ++i) layer.bias[i] = off(rng);
        std::vector<PatternVector> xs{{1, 0, 1, 1}, {0, 1, 1, 0}, {1, 1, 0, 0}};
        std::vector<PatternVector> ys{{1, 1, 0, 1}, {0, 1, 1, 1}, {1, 0, 1, 1}};
        const auto g = a3_gradient(p, detail::columns_of(xs), detail::columns_of(ys));
        const double h = 1e-6;
        for (std::size_t l = 0; l < p.layers.size(); ++l)
            for (bool bias : {false, true}) {
                const Eigen::Index n = bias ? p.layers[l].bias.size() : p.layers[l].weights.size();
                for (Eigen::Index i = 0; i < n; ++i) {
                    const double v = flat_get(p, l, bias, i);
                    flat_set(p, l, bias, i, v + h);
                    const double up = a3_loss(p, xs, ys);
                    flat_set(p, l, bias, i, v - h);
                    const double down = a3_loss(p, xs, ys);
                    flat_set(p, l, bias, i, v);
                    const double numeric = (up - down) / (2 * h);
                    const double analytic = bias ? g[l].bias[i] : g[l].weights.data()[i];
                    EXPECT_LE(std::abs(numeric - analytic), 1e-4 * std::max(1.0, std::abs(numeric)))
                        << "layer " << l << (bias ? " bias " : " weight ") << i;
                }
            }
    }
}

TEST(TrainA3, LossDecreasesAndIsDeterministic) {
    const auto d = toy_dataset();
    const auto a = train_a3(d, small_config());
    const auto b = train_a3(d, small_config());
    ASSERT_FALSE(a.train_loss.empty());
    EXPECT_LE(a.train_loss[a.best_epoch], a.initial_train_loss);
    for (std::size_t l = 0; l < a.params.layers.size(); ++l) EXPECT_EQ(a.params.layers[l].weights, b.params.layers[l].weights);
}

TEST(TrainA3, ReturnsBestValidationEpoch) {
    const auto d = toy_dataset();
    auto c = small_config();
    c.learning_rate = 0.5;
    c.patience = 3;
    const auto t = train_a3(d, c);
    const auto best = std::min_element(t.validation_loss.begin(), t.validation_loss.end());
    EXPECT_EQ(static_cast<std::size_t>(best - t.validation_loss.begin()), t.best_epoch);
    // recompute the validation loss of the returned parameters on the same split
    std::mt19937_64 rng(c.seed);
    std::vector<std::size_t> order(d.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<PatternVector> vx, vy;
    for (std::size_t k = d.size() / 2; k < d.size(); ++k) vx.push_back(d.inputs[order[k]]), vy.push_back(d.labels[order[k]]);
    EXPECT_NEAR(a3_loss(t.params, vx, vy), *best, 1e-9 * std::max(1.0, *best));
}

TEST(TrainA3, Errors) {
    A3Dataset tiny;
    EXPECT_THROW(train_a3(tiny, small_config()), UsageError);
    A3Dataset bad{{{1, 0}, {0, 1}}, {{1, 1}, {1}}};
    EXPECT_THROW(train_a3(bad, small_config()), UsageError);
}

TEST(InferA3, LocatesSingleFlipsOnToyData) {
    const auto t = train_a3(toy_dataset(), small_config());
    std::size_t right = 0, total = 0;
    for (const auto& p : prototypes()) {
        EXPECT_EQ(infer_a3(t.params, p).indicator, PatternVector(9, 1));
        for (std::size_t i = 0; i < 9; ++i) {
            auto v = p;
            v[i] ^= 1u;
            const auto r = infer_a3(t.params, v);
            PatternVector expect(9, 1);
            expect[i] = 0;
            for (std::size_t k = 0; k < 9; ++k) right += r.indicator[k] == expect[k];
            total += 9;
        }
    }
    EXPECT_GE(static_cast<double>(right) / static_cast<double>(total), 0.95);
}

TEST(InferA3, PureCutoffAndWeights) {
    const auto t = train_a3(toy_dataset(), small_config());
    PatternVector v{0, 1, 1, 1, 1, 1, 1, 1, 1};
    const auto a = infer_a3(t.params, v), b = infer_a3(t.params, v);
    EXPECT_EQ(a.probability, b.probability);
    for (std::size_t k = 0; k < a.anomalous_patterns.size(); ++k)
        EXPECT_DOUBLE_EQ(a.weights[k], 1.0 - a.probability[a.anomalous_patterns[k]]);
    const auto low = infer_a3(t.params, v, 1e-300);
    EXPECT_TRUE(low.anomalous_patterns.empty());
    EXPECT_THROW(infer_a3(t.params, v, 0.0), UsageError);
    EXPECT_THROW(infer_a3(t.params, PatternVector{1, 0}), UsageError);
    EXPECT_THROW(infer_a3(MlpParams{}, v), UsageError);
}
