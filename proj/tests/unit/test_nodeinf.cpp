#include "stpnrca/nodeinf.hpp"
#include "stpnrca/stpn.hpp"

#include <gtest/gtest.h>

#include <bit>
#include <iostream>
#include <random>

using namespace stpnrca;

namespace {

std::vector<FailedPattern> patterns(std::size_t f, const std::vector<std::pair<std::size_t, std::size_t>>& edges,
                                    double w = 1.0) {
    std::vector<FailedPattern> out;
    for (auto [a, b] : edges) out.push_back({pattern_index(a, b, f), w});
    return out;
}

bool covers(const std::vector<FailedPattern>& failed, std::size_t f, std::uint32_t mask) {
    for (const auto& fp : failed) {
        const auto [a, b] = index_pattern(fp.index, f);
        if (!((mask >> a) & 1u) && !((mask >> b) & 1u)) return false;
    }
    return true;
}

/// Brute-force minimum vertex cover size (self-patterns force their node).
std::size_t min_cover(const std::vector<FailedPattern>& failed, std::size_t f) {
    std::size_t best = f;
    for (std::uint32_t mask = 0; mask < (1u << f); ++mask)
        if (covers(failed, f, mask)) best = std::min<std::size_t>(best, static_cast<std::size_t>(std::popcount(mask)));
    return best;
}

std::vector<FailedPattern> random_failed(std::mt19937_64& rng, std::size_t f, double density, bool unit_weights) {
    std::bernoulli_distribution take(density);
    std::uniform_real_distribution<double> w(0.01, 1.0);
    std::vector<FailedPattern> out;
    for (std::size_t i = 0; i < f * f; ++i)
        if (take(rng)) out.push_back({i, unit_weights ? 1.0 : w(rng)});
    return out;
}

}  // namespace

TEST(NodeScores, SelfPatternCountedOnce) {
    const auto s = node_scores(patterns(3, {{1, 1}, {0, 1}}, 0.5), 3);
    EXPECT_EQ(s, (std::vector<double>{0.5, 1.0, 0.0}));
}

TEST(InferNodes, SinglePatternTiesToLowerNode) {
    const auto r = infer_nodes(patterns(5, {{3, 1}}, 0.7), 5);
    EXPECT_EQ(r.selected, (std::vector<std::size_t>{1}));
    EXPECT_DOUBLE_EQ(r.initial_scores[1], 0.7);
    EXPECT_DOUBLE_EQ(r.initial_scores[3], 0.7);
}

TEST(InferNodes, HandExample) {
    // 1->2, 1->3, 1->1 in 1-based names
    const auto r = infer_nodes(patterns(3, {{0, 1}, {0, 2}, {0, 0}}), 3);
    EXPECT_EQ(r.initial_scores, (std::vector<double>{3, 1, 1}));
    EXPECT_EQ(r.selected, (std::vector<std::size_t>{0}));
    ASSERT_EQ(r.remaining.size(), 1u);
    EXPECT_EQ(r.remaining[0].size(), 3u);
}

TEST(InferNodes, EmptyIsNotAnError) {
    const auto r = infer_nodes(std::vector<FailedPattern>{}, 4);
    EXPECT_TRUE(r.selected.empty());
    EXPECT_EQ(rank_nodes(r, 4), (std::vector<std::size_t>{0, 1, 2, 3}));
}

TEST(InferNodes, Errors) {
    EXPECT_THROW(infer_nodes(std::vector<FailedPattern>{{9, 1.0}}, 3), UsageError);
    EXPECT_THROW(infer_nodes(std::vector<FailedPattern>{{1, std::nan("")}}, 3), UsageError);
    EXPECT_THROW(infer_nodes(std::vector<FailedPattern>{{1, 1.0}, {1, 2.0}}, 3), UsageError);
}

TEST(InferNodes, WeightsSteerTheChoice) {
    // 0->1 heavy, 1->2 and 2->3 light: node 1 wins first, node 2 clears 2->3
    std::vector<FailedPattern> f{{pattern_index(0, 1, 4), 5.0}, {pattern_index(1, 2, 4), 1.0}, {pattern_index(2, 3, 4), 1.0}};
    const auto r = infer_nodes(f, 4);
    EXPECT_EQ(r.selected, (std::vector<std::size_t>{1, 2}));
    EXPECT_EQ(rank_nodes(r, 4), (std::vector<std::size_t>{1, 2, 0, 3}));
}

TEST(InferNodes, PropertiesOnRandomSets) {
    std::mt19937_64 rng(99);
    for (int t = 0; t < 300; ++t) {
        const std::size_t f = 2 + static_cast<std::size_t>(t % 5);
        const auto failed = random_failed(rng, f, 0.3, false);
        const auto r = infer_nodes(failed, f);

        EXPECT_LE(r.selected.size(), failed.size());
        std::uint32_t mask = 0;
        for (auto n : r.selected) mask |= 1u << n;
        EXPECT_TRUE(covers(failed, f, mask));
        for (std::size_t k = 0; k + 1 < r.remaining.size(); ++k) EXPECT_LT(r.remaining[k + 1].size(), r.remaining[k].size());
        for (double s : r.initial_scores) EXPECT_GE(s, 0.0);

        auto scaled = failed;
        for (auto& fp : scaled) fp.weight *= 3.7;
        EXPECT_EQ(infer_nodes(scaled, f).selected, r.selected);

        const auto ranking = rank_nodes(r, f);
        auto sorted = ranking;
        std::sort(sorted.begin(), sorted.end());
        for (std::size_t n = 0; n < f; ++n) EXPECT_EQ(sorted[n], n);
    }
}

TEST(InferNodes, GreedyCoverAgainstBruteForce) {
    std::mt19937_64 rng(7);
    std::size_t cases = 0, optimal = 0;
    for (int t = 0; t < 500; ++t) {
        const std::size_t f = 2 + static_cast<std::size_t>(t % 5);
        const auto failed = random_failed(rng, f, 0.25, true);
        if (failed.empty()) continue;
        const auto r = infer_nodes(failed, f);
        const auto best = min_cover(failed, f);
        EXPECT_GE(r.selected.size(), best);
        ++cases;
        optimal += r.selected.size() == best;
    }
    RecordProperty("optimal_cover_cases", static_cast<int>(optimal));
    RecordProperty("cases", static_cast<int>(cases));
    std::cout << "greedy node cover optimal in " << optimal << "/" << cases << " random sets (f <= 6)\n";
    EXPECT_GE(static_cast<double>(optimal) / static_cast<double>(cases), 0.8);
}

TEST(InferNodes, StarsAreCoveredByTheirCentre) {
    for (std::size_t f = 3; f <= 6; ++f)
        for (std::size_t c = 0; c < f; ++c) {
            std::vector<std::pair<std::size_t, std::size_t>> edges;
            for (std::size_t n = 0; n < f; ++n)
                if (n != c) edges.push_back(n % 2 ? std::pair{c, n} : std::pair{n, c});
            EXPECT_EQ(infer_nodes(patterns(f, edges), f).selected, (std::vector<std::size_t>{c}));
        }
}
