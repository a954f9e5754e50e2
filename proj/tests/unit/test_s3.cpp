#include "stpnrca/s3.hpp"
#include "stpnrca/stpn.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace stpnrca;

namespace {

RbmParams random_params(std::mt19937_64& rng, std::size_t nv, std::size_t nh) {
    std::normal_distribution<double> g(0.0, 1.0);
    RbmParams p{Eigen::VectorXd(nv), Eigen::VectorXd(nh), Eigen::MatrixXd(nv, nh)};
    for (Eigen::Index i = 0; i < p.visible_bias.size(); ++i) p.visible_bias[i] = g(rng);
    for (Eigen::Index j = 0; j < p.hidden_bias.size(); ++j) p.hidden_bias[j] = g(rng);
    for (Eigen::Index i = 0; i < p.weights.size(); ++i) p.weights.data()[i] = g(rng);
    return p;
}

PatternVector random_vector(std::mt19937_64& rng, std::size_t n) {
    std::bernoulli_distribution b(0.5);
    PatternVector v(n);
    for (auto& x : v) x = b(rng) ? 1 : 0;
    return v;
}

RbmParams toy_model() {
    RbmTrainConfig c;
    c.hidden = 4;
    c.epochs = 300;
    c.seed = 2;
    return train_rbm(std::vector<PatternVector>(64, PatternVector{1, 1, 0, 0}), c);
}

}  // namespace

TEST(S3, ToyModelRestoresNominalVector) {
    const auto p = toy_model();
    const PatternVector v{0, 1, 0, 0};
    const auto r = s3_search(p, v);
    EXPECT_EQ(r.anomalous_patterns, (std::vector<std::size_t>{0}));
    EXPECT_EQ(apply_switches(v, r.anomalous_patterns), (PatternVector{1, 1, 0, 0}));
    const auto o = exhaustive_switch_oracle(p, v);
    EXPECT_EQ(o.flips, (std::vector<std::size_t>{0}));
    EXPECT_NEAR(o.energy, r.final_energy, 1e-12);
}

TEST(S3, NominalVectorGivesEmptySet) {
    const auto p = toy_model();
    const auto r = s3_search(p, PatternVector{1, 1, 0, 0});
    EXPECT_TRUE(r.anomalous_patterns.empty());
    EXPECT_TRUE(r.weights.empty());
    EXPECT_EQ(r.trace.size(), 1u);
    EXPECT_EQ(r.final_energy, r.initial_energy);
}

TEST(S3, PropertiesOnRandomInstances) {
    std::mt19937_64 rng(17);
    for (int t = 0; t < 200; ++t) {
        const std::size_t nv = 3 + static_cast<std::size_t>(t % 7);
        const auto p = random_params(rng, nv, 4);
        const auto v = random_vector(rng, nv);
        const auto r = s3_search(p, v);

        // no duplicates, trace strictly decreasing, bookkeeping consistent
        auto sorted = r.anomalous_patterns;
        std::sort(sorted.begin(), sorted.end());
        EXPECT_EQ(std::adjacent_find(sorted.begin(), sorted.end()), sorted.end());
        ASSERT_EQ(r.trace.size(), r.anomalous_patterns.size() + 1);
        for (std::size_t k = 1; k < r.trace.size(); ++k) EXPECT_LT(r.trace[k], r.trace[k - 1]);
        EXPECT_NEAR(r.final_energy, free_energy(p, apply_switches(v, r.anomalous_patterns)), 1e-9);
        EXPECT_EQ(r.initial_energy, free_energy(p, v));

        // weights are the single-switch relative drops
        ASSERT_EQ(r.weights.size(), r.anomalous_patterns.size());
        for (std::size_t k = 0; k < r.weights.size(); ++k) {
            const double fi = switched_free_energy(p, v, std::vector<std::size_t>{r.anomalous_patterns[k]});
            EXPECT_NEAR(r.weights[k], (r.initial_energy - fi) / std::abs(r.initial_energy), 1e-9);
        }

        // the corrected vector is a fixed point for the initial candidate pool
        const auto corrected = apply_switches(v, r.anomalous_patterns);
        for (std::size_t i = 0; i < nv; ++i) {
            const bool candidate = switched_free_energy(p, v, std::vector<std::size_t>{i}) < r.initial_energy - 1e-9;
            const bool taken = std::count(r.anomalous_patterns.begin(), r.anomalous_patterns.end(), i) > 0;
            if (candidate && !taken) {
                EXPECT_GE(switched_free_energy(p, corrected, std::vector<std::size_t>{i}), r.final_energy - 1e-9);
            }
        }

        // the oracle is a lower bound
        EXPECT_LE(exhaustive_switch_oracle(p, v).energy, r.final_energy + 1e-12);
    }
}

TEST(S3, PermutationEquivariance) {
    std::mt19937_64 rng(23);
    const std::size_t f = 3, n = f * f;
    for (int t = 0; t < 50; ++t) {
        const auto p = random_params(rng, n, 5);
        const auto v = random_vector(rng, n);
        std::vector<std::size_t> perm{0, 1, 2};
        std::shuffle(perm.begin(), perm.end(), rng);
        // pattern a->b becomes perm[a]->perm[b]
        std::vector<std::size_t> map(n);
        for (std::size_t a = 0; a < f; ++a)
            for (std::size_t b = 0; b < f; ++b) map[pattern_index(a, b, f)] = pattern_index(perm[a], perm[b], f);
        RbmParams q = p;
        PatternVector w(n);
        for (std::size_t i = 0; i < n; ++i) {
            q.visible_bias[static_cast<Eigen::Index>(map[i])] = p.visible_bias[static_cast<Eigen::Index>(i)];
            q.weights.row(static_cast<Eigen::Index>(map[i])) = p.weights.row(static_cast<Eigen::Index>(i));
            w[map[i]] = v[i];
        }
        const auto r = s3_search(p, v), s = s3_search(q, w);
        ASSERT_EQ(r.anomalous_patterns.size(), s.anomalous_patterns.size());
        for (std::size_t k = 0; k < r.anomalous_patterns.size(); ++k)
            EXPECT_EQ(map[r.anomalous_patterns[k]], s.anomalous_patterns[k]);
    }
}

TEST(S3, IdempotentWhenEveryBitIsACandidate) {
    // all visible biases favour 1 and there is no coupling: every 0 is a
    // candidate and the corrected vector is all ones
    std::mt19937_64 rng(31);
    RbmParams p{Eigen::VectorXd::Constant(8, 1.5), Eigen::VectorXd::Zero(3), Eigen::MatrixXd::Zero(8, 3)};
    const auto v = random_vector(rng, 8);
    const auto r = s3_search(p, v);
    EXPECT_EQ(apply_switches(v, r.anomalous_patterns), PatternVector(8, 1));
    EXPECT_TRUE(s3_search(p, PatternVector(8, 1)).anomalous_patterns.empty());
}

TEST(S3, TiesGoToLowestIndex) {
    // two identical bits: the same decrease either way
    RbmParams p{Eigen::Vector2d(2.0, 2.0), Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Zero(2, 1)};
    const auto r = s3_search(p, PatternVector{0, 0});
    EXPECT_EQ(r.anomalous_patterns, (std::vector<std::size_t>{0, 1}));
}

TEST(S3, ZeroInitialEnergyUsesAbsoluteDrop) { EXPECT_DOUBLE_EQ(detail::relative_drop(0.0, -0.25), 0.25); }

TEST(Oracle, EnumeratesBothSubsetsForOneBit) {
    RbmParams p{Eigen::VectorXd::Constant(1, 1.0), Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Zero(1, 1)};
    EXPECT_EQ(exhaustive_switch_oracle(p, PatternVector{0}).flips, (std::vector<std::size_t>{0}));
    EXPECT_TRUE(exhaustive_switch_oracle(p, PatternVector{1}).flips.empty());
}

TEST(Oracle, TieBreaksBySizeThenLexicographic) {
    // zero parameters: every subset has the same energy, the empty one wins
    RbmParams p{Eigen::VectorXd::Zero(3), Eigen::VectorXd::Zero(2), Eigen::MatrixXd::Zero(3, 2)};
    EXPECT_TRUE(exhaustive_switch_oracle(p, PatternVector{1, 0, 1}).flips.empty());
    // bit 0 and bit 2 give the same drop; only one may be taken without loss
    RbmParams q{Eigen::Vector3d(1.0, 0.0, 1.0), Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Zero(3, 1)};
    q.visible_bias << 1.0, -5.0, 1.0;
    EXPECT_EQ(exhaustive_switch_oracle(q, PatternVector{0, 0, 0}).flips, (std::vector<std::size_t>{0, 2}));
}

TEST(Oracle, SizeLimits) {
    std::mt19937_64 rng(1);
    const auto p = random_params(rng, 17, 2);
    EXPECT_THROW(exhaustive_switch_oracle(p, PatternVector(17, 0)), UsageError);
    const auto small = random_params(rng, 5, 2);
    EXPECT_THROW(exhaustive_switch_oracle(small, PatternVector(5, 0), 4), UsageError);
}

TEST(Kld, IdenticalIsZero) {
    const std::vector<double> a{1, 2, 3, 4, 5};
    EXPECT_NEAR(kld_distance(a, a, 5), 0.0, 1e-15);
}

TEST(Kld, DisjointIsLargeButFinite) {
    std::vector<double> a, b;
    for (int i = 0; i < 100; ++i) a.push_back(0.001 * i), b.push_back(10.0 + 0.001 * i);
    const double d = kld_distance(a, b, 10);
    EXPECT_TRUE(std::isfinite(d));
    EXPECT_GT(d, 2.0);
}

TEST(Kld, GrowsWithShift) {
    std::mt19937_64 rng(8);
    std::normal_distribution<double> g;
    std::vector<double> base(2000), one(2000), two(2000);
    for (auto& x : base) x = g(rng);
    for (auto& x : one) x = g(rng) + 1.0;
    for (auto& x : two) x = g(rng) + 2.0;
    const double d1 = kld_distance(base, one, 30), d2 = kld_distance(base, two, 30);
    EXPECT_GT(d1, 0.0);
    EXPECT_GT(d2, d1);
}

TEST(Kld, Errors) {
    EXPECT_THROW(kld_distance(std::vector<double>{1}, std::vector<double>{1, 2}, 3), UsageError);
    EXPECT_THROW(kld_distance(std::vector<double>{1, 1}, std::vector<double>{1, 1}, 3), DataError);
}
