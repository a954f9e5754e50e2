#pragma once

// Node inference: greedy weighted cover of failed patterns by nodes. A node's
// score is the summed weight of the remaining failed patterns that start or
// end at it; the top node is selected and every pattern touching it is
// removed, until no failed pattern remains.

#include "stpnrca/error.hpp"
#include "stpnrca/stpn.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace stpnrca {

struct FailedPattern {
    std::size_t index = 0;  ///< pattern_index(a, b, f)
    double weight = 1.0;
};

struct NodeInference {
    std::vector<std::size_t> selected;                 ///< nodes in selection order
    std::vector<double> initial_scores;                ///< per node, over all failed patterns
    std::vector<std::vector<double>> step_scores;      ///< per step, per node
    std::vector<std::vector<std::size_t>> remaining;   ///< patterns left before each step
};

/// Score of each node over a pattern set. An atomic pattern a -> a adds its
/// weight to a once.
inline std::vector<double> node_scores(std::span<const FailedPattern> failed, std::size_t f) {
    std::vector<double> s(f, 0.0);
    for (const auto& fp : failed) {
        const auto [a, b] = index_pattern(fp.index, f);
        s[a] += fp.weight;
        if (b != a) s[b] += fp.weight;
    }
    return s;
}

inline NodeInference infer_nodes(std::span<const FailedPattern> failed, std::size_t f) {
    std::set<std::size_t> seen;
    for (const auto& fp : failed) {
        if (fp.index >= f * f)
            throw UsageError("failed pattern index " + std::to_string(fp.index) + " out of range for " +
                             std::to_string(f) + " nodes");
        if (!std::isfinite(fp.weight)) throw UsageError("failed pattern weight must be finite");
        if (!seen.insert(fp.index).second)
            throw UsageError("failed pattern " + std::to_string(fp.index) + " listed twice");
    }

    NodeInference out;
    out.initial_scores = node_scores(failed, f);
    std::vector<FailedPattern> left(failed.begin(), failed.end());
    while (!left.empty()) {
        std::vector<std::size_t> ids;
        for (const auto& fp : left) ids.push_back(fp.index);
        out.remaining.push_back(std::move(ids));

        const auto s = node_scores(left, f);
        out.step_scores.push_back(s);
        // argmax over nodes touched by a remaining pattern, lowest index on ties
        std::size_t pick = f;
        for (std::size_t n = 0; n < f; ++n) {
            const bool touched = std::any_of(left.begin(), left.end(), [&](const FailedPattern& fp) {
                const auto [a, b] = index_pattern(fp.index, f);
                return a == n || b == n;
            });
            if (touched && (pick == f || s[n] > s[pick])) pick = n;
        }
        out.selected.push_back(pick);
        std::erase_if(left, [&](const FailedPattern& fp) {
            const auto [a, b] = index_pattern(fp.index, f);
            return a == pick || b == pick;
        });
    }
    return out;
}

/// Full ranking of all f nodes: selected nodes in selection order, then the
/// rest by decreasing initial score (lowest index on ties).
inline std::vector<std::size_t> rank_nodes(const NodeInference& inf, std::size_t f) {
    std::vector<std::size_t> ranking = inf.selected;
    std::vector<std::size_t> rest;
    for (std::size_t n = 0; n < f; ++n)
        if (std::find(ranking.begin(), ranking.end(), n) == ranking.end()) rest.push_back(n);
    std::stable_sort(rest.begin(), rest.end(), [&](std::size_t x, std::size_t y) {
        const double sx = inf.initial_scores.empty() ? 0.0 : inf.initial_scores[x];
        const double sy = inf.initial_scores.empty() ? 0.0 : inf.initial_scores[y];
        return sx > sy;
    });
    ranking.insert(ranking.end(), rest.begin(), rest.end());
    return ranking;
}

}  // namespace stpnrca
