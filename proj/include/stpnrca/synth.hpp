#pragma once

// Vector-autoregressive benchmark data: causal graphs, simulation, fault
// injection, least-squares VAR fitting and the coefficient-difference
// root-cause baseline.

#include "stpnrca/error.hpp"
#include "stpnrca/stpn.hpp"
#include "stpnrca/symdyn.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace stpnrca {

/// Directed influence source -> target (the source's past drives the target).
struct Edge {
    std::size_t source = 0;
    std::size_t target = 0;
    friend auto operator<=>(const Edge&, const Edge&) = default;
};

/// y_t = sum_k A_k y_{t-k} + e_t with A_k(i, j) the influence of channel j
/// on channel i at lag k + 1, and e_t ~ N(0, diag(noise_sd^2)).
struct CausalGraph {
    std::vector<Eigen::MatrixXd> coefficients;
    Eigen::VectorXd noise_sd;

    std::size_t nodes() const { return static_cast<std::size_t>(noise_sd.size()); }
    std::size_t lags() const { return coefficients.size(); }

    /// Every (j -> i) with a nonzero coefficient at some lag, self-loops included.
    std::vector<Edge> edges() const {
        std::set<Edge> out;
        for (const auto& a : coefficients)
            for (Eigen::Index i = 0; i < a.rows(); ++i)
                for (Eigen::Index j = 0; j < a.cols(); ++j)
                    if (a(i, j) != 0.0) out.insert({static_cast<std::size_t>(j), static_cast<std::size_t>(i)});
        return {out.begin(), out.end()};
    }

    std::vector<Edge> cross_edges() const {
        std::vector<Edge> out;
        for (const auto& e : edges())
            if (e.source != e.target) out.push_back(e);
        return out;
    }
};

/// Largest eigenvalue magnitude of the VAR companion matrix.
inline double spectral_radius(const CausalGraph& g) {
    const auto n = static_cast<Eigen::Index>(g.nodes());
    const auto p = static_cast<Eigen::Index>(g.lags());
    if (p == 0) return 0.0;
    Eigen::MatrixXd c = Eigen::MatrixXd::Zero(n * p, n * p);
    for (Eigen::Index k = 0; k < p; ++k) c.block(0, k * n, n, n) = g.coefficients[static_cast<std::size_t>(k)];
    if (p > 1) c.block(n, 0, n * (p - 1), n * (p - 1)) = Eigen::MatrixXd::Identity(n * (p - 1), n * (p - 1));
    Eigen::EigenSolver<Eigen::MatrixXd> es(c, false);
    return es.eigenvalues().cwiseAbs().maxCoeff();
}

inline void validate_graph(const CausalGraph& g) {
    const auto n = g.noise_sd.size();
    if (n < 1) throw UsageError("causal graph needs at least one node");
    if (g.lags() < 1) throw UsageError("causal graph needs at least one lag");
    for (const auto& a : g.coefficients)
        if (a.rows() != n || a.cols() != n) throw UsageError("coefficient matrix shape does not match node count");
    for (Eigen::Index i = 0; i < n; ++i)
        if (!(g.noise_sd[i] > 0.0)) throw UsageError("noise standard deviation must be positive");
}

/// Scales every coefficient so the companion spectral radius is at most
/// `target` (no-op when already below).
inline void stabilize(CausalGraph& g, double target = 0.95) {
    const double r = spectral_radius(g);
    if (r < 1.0) return;
    const double s = target / r;
    for (std::size_t k = 0; k < g.lags(); ++k) g.coefficients[k] *= std::pow(s, static_cast<double>(k + 1));
}

/// Coefficient table for the builtin benchmark graphs.
struct GraphConstants {
    double edge = 0.2;      ///< cross-channel lag-1 coefficient
    double self_lag = 0.5;  ///< every channel's own lag-1 coefficient
    double noise_sd = 0.1;
};

inline CausalGraph graph_from_edges(std::size_t nodes, const std::vector<Edge>& cross_edges,
                                    const GraphConstants& k = {}) {
    CausalGraph g;
    g.coefficients.push_back(Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(nodes), static_cast<Eigen::Index>(nodes)) *
                             k.self_lag);
    for (const auto& e : cross_edges) {
        if (e.source >= nodes || e.target >= nodes) throw UsageError("edge endpoint out of range");
        g.coefficients[0](static_cast<Eigen::Index>(e.target), static_cast<Eigen::Index>(e.source)) = k.edge;
    }
    g.noise_sd = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(nodes), k.noise_sd);
    stabilize(g);
    return g;
}

/// Cross edges of the six builtin 5-node modes, 0-based (node 0 is x1).
inline std::vector<std::vector<Edge>> builtin_mode_edges() {
    return {
        {{0, 1}, {1, 4}, {4, 0}, {1, 2}, {2, 3}, {3, 4}},  // 1->2->5->1, 2->3->4->5
        {{0, 1}, {1, 2}, {2, 0}, {3, 4}, {4, 3}},          // 1->2->3->1, 4<->5
        {{1, 2}, {2, 1}, {0, 3}, {4, 3}, {3, 0}},          // 2<->3, 1<->4, 5->4
        {{0, 2}, {2, 4}, {4, 1}, {1, 3}},                  // chain 1->3->5->2->4
        {{0, 1}, {1, 4}, {4, 0}, {2, 0}, {3, 2}},          // 1->2->5->1 fed by 4->3->1
        {{3, 0}, {0, 4}, {4, 2}, {2, 1}, {1, 3}},          // 4->1->5->3->2->4
    };
}

/// Six stationary 5-node nominal operating modes. Every channel carries the
/// self-lag, so every atomic pattern (e.g. 4 -> 4) is an edge of every mode.
inline std::vector<CausalGraph> builtin_modes(const GraphConstants& k = {}) {
    std::vector<CausalGraph> out;
    for (const auto& edges : builtin_mode_edges()) out.push_back(graph_from_edges(5, edges, k));
    return out;
}

/// Seeded random stationary graph: each node receives `in_degree` distinct
/// cross edges from uniformly chosen other nodes.
inline CausalGraph random_graph(std::size_t nodes, std::uint64_t seed, std::size_t in_degree = 2,
                                const GraphConstants& k = {}) {
    if (nodes < 2) throw UsageError("random graph needs at least 2 nodes");
    in_degree = std::min(in_degree, nodes - 1);
    std::mt19937_64 rng(seed);
    std::vector<Edge> edges;
    for (std::size_t t = 0; t < nodes; ++t) {
        std::vector<std::size_t> src;
        for (std::size_t s = 0; s < nodes; ++s)
            if (s != t) src.push_back(s);
        std::shuffle(src.begin(), src.end(), rng);
        for (std::size_t d = 0; d < in_degree; ++d) edges.push_back({src[d], t});
    }
    return graph_from_edges(nodes, edges, k);
}

inline std::vector<std::string> default_channel_names(std::size_t n) {
    std::vector<std::string> names;
    for (std::size_t i = 0; i < n; ++i) names.push_back("x" + std::to_string(i + 1));
    return names;
}

/// Burn-in discarded before the first returned sample.
inline std::size_t burn_in(const CausalGraph& g) { return std::max<std::size_t>(10 * g.lags(), 200); }

inline TimeSeries simulate_var(const CausalGraph& g, std::size_t length, std::uint64_t seed) {
    validate_graph(g);
    if (length < 10 * g.lags())
        throw UsageError("simulation length must be at least 10 x lag order (" + std::to_string(10 * g.lags()) + ")");
    if (spectral_radius(g) >= 1.0) throw NumericalError("causal graph is not stationary (spectral radius >= 1)");

    const auto n = static_cast<Eigen::Index>(g.nodes());
    const std::size_t p = g.lags();
    const std::size_t skip = burn_in(g);
    const std::size_t total = length + skip;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, 1.0);

    Eigen::MatrixXd y = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(total), n);
    for (std::size_t t = 0; t < total; ++t) {
        Eigen::VectorXd next(n);
        for (Eigen::Index i = 0; i < n; ++i) next[i] = g.noise_sd[i] * noise(rng);
        for (std::size_t k = 1; k <= p && k <= t; ++k)
            next += g.coefficients[k - 1] * y.row(static_cast<Eigen::Index>(t - k)).transpose();
        y.row(static_cast<Eigen::Index>(t)) = next.transpose();
    }
    return TimeSeries(default_channel_names(g.nodes()),
                      y.bottomRows(static_cast<Eigen::Index>(length)));
}

struct FaultSpec {
    enum class Kind { pattern_break, node_delay };
    Kind kind = Kind::pattern_break;
    std::vector<Edge> edges;  ///< pattern_break: coefficients to zero
    std::size_t node = 0;     ///< node_delay
    std::size_t delay = 0;    ///< node_delay, samples

    static FaultSpec pattern_break(std::vector<Edge> e) { return {Kind::pattern_break, std::move(e), 0, 0}; }
    static FaultSpec node_delay(std::size_t n, std::size_t d) { return {Kind::node_delay, {}, n, d}; }
};

/// "pattern-break:S-T[,S-T...]" or "node-delay:NODE:DELAY" with 1-based node
/// numbers (node 1 is channel x1).
inline FaultSpec parse_fault_spec(const std::string& text) {
    auto fail = [&](const std::string& why) -> FaultSpec {
        throw UsageError("invalid fault spec '" + text + "': " + why);
    };
    auto to_count = [&](const std::string& s) -> std::size_t {
        if (s.empty() || s.size() > 9 || s.find_first_not_of("0123456789") != std::string::npos)
            fail("'" + s + "' is not a count");
        return static_cast<std::size_t>(std::stoull(s));
    };
    auto to_index = [&](const std::string& s) -> std::size_t {
        const auto n = to_count(s);
        if (n == 0) fail("node numbers start at 1");
        return n - 1;
    };
    const auto colon = text.find(':');
    if (colon == std::string::npos) return fail("missing ':'");
    const std::string kind = text.substr(0, colon);
    const std::string rest = text.substr(colon + 1);
    if (kind == "pattern-break") {
        std::vector<Edge> edges;
        std::stringstream ss(rest);
        std::string item;
        while (std::getline(ss, item, ',')) {
            const auto dash = item.find('-');
            if (dash == std::string::npos) return fail("edge '" + item + "' is not SOURCE-TARGET");
            edges.push_back({to_index(item.substr(0, dash)), to_index(item.substr(dash + 1))});
        }
        if (edges.empty()) return fail("no edges listed");
        return FaultSpec::pattern_break(std::move(edges));
    }
    if (kind == "node-delay") {
        const auto c2 = rest.find(':');
        if (c2 == std::string::npos) return fail("expected node-delay:NODE:DELAY");
        const auto spec = FaultSpec::node_delay(to_index(rest.substr(0, c2)), to_count(rest.substr(c2 + 1)));
        if (spec.delay < 1) return fail("delay must be at least 1");
        return spec;
    }
    return fail("unknown fault kind '" + kind + "'");
}

inline std::string to_string(const FaultSpec& f) {
    if (f.kind == FaultSpec::Kind::node_delay)
        return "node-delay:" + std::to_string(f.node + 1) + ":" + std::to_string(f.delay);
    std::string s = "pattern-break:";
    for (std::size_t i = 0; i < f.edges.size(); ++i)
        s += (i ? "," : "") + std::to_string(f.edges[i].source + 1) + "-" + std::to_string(f.edges[i].target + 1);
    return s;
}

inline void validate_fault(const CausalGraph& g, const FaultSpec& spec) {
    if (spec.kind == FaultSpec::Kind::node_delay) {
        if (spec.node >= g.nodes()) throw UsageError("fault node " + std::to_string(spec.node + 1) + " out of range");
        if (spec.delay < 1) throw UsageError("fault delay must be at least 1");
        return;
    }
    if (spec.edges.empty()) throw UsageError("pattern break lists no edges");
    const auto existing = g.edges();
    for (const auto& e : spec.edges)
        if (std::find(existing.begin(), existing.end(), e) == existing.end())
            throw UsageError("edge " + std::to_string(e.source + 1) + "->" + std::to_string(e.target + 1) +
                             " does not exist in the graph");
}

/// The graph with the broken edges zeroed at every lag.
inline CausalGraph break_edges(CausalGraph g, const std::vector<Edge>& edges) {
    for (auto& a : g.coefficients)
        for (const auto& e : edges) a(static_cast<Eigen::Index>(e.target), static_cast<Eigen::Index>(e.source)) = 0.0;
    return g;
}

/// pattern_break re-simulates the faulty graph with the given seed and the
/// length of `ts`; node_delay replaces the node's channel in `ts` with its
/// own values delayed by `delay` samples, holding the first value.
inline TimeSeries inject_fault(const CausalGraph& g, const TimeSeries& ts, const FaultSpec& spec, std::uint64_t seed) {
    validate_fault(g, spec);
    if (spec.kind == FaultSpec::Kind::pattern_break) return simulate_var(break_edges(g, spec.edges), ts.length(), seed);
    if (spec.node >= ts.channels()) throw UsageError("fault node out of range for the series");
    Eigen::MatrixXd v = ts.values();
    const auto c = static_cast<Eigen::Index>(spec.node);
    const auto d = static_cast<Eigen::Index>(spec.delay);
    for (Eigen::Index t = v.rows(); t-- > 0;) v(t, c) = ts.values()(t >= d ? t - d : 0, c);
    return TimeSeries(ts.names(), std::move(v));
}

/// Ground-truth labels for a fault: broken patterns, or for a node fault
/// every cross pattern of the graph incident to the node.
inline std::vector<std::size_t> fault_patterns(const CausalGraph& g, const FaultSpec& spec) {
    std::vector<std::size_t> out;
    const std::size_t f = g.nodes();
    if (spec.kind == FaultSpec::Kind::pattern_break) {
        for (const auto& e : spec.edges) out.push_back(pattern_index(e.source, e.target, f));
    } else {
        for (const auto& e : g.cross_edges())
            if (e.source == spec.node || e.target == spec.node) out.push_back(pattern_index(e.source, e.target, f));
    }
    std::sort(out.begin(), out.end());
    return out;
}

/// Least-squares VAR(p) fit with an intercept; returns A_1..A_p.
inline std::vector<Eigen::MatrixXd> var_fit(const TimeSeries& ts, std::size_t p) {
    if (p < 1) throw UsageError("VAR lag order must be at least 1");
    const std::size_t f = ts.channels();
    if (ts.length() < 10 * f * p)
        throw DataError("VAR fit needs at least 10 x channels x lags = " + std::to_string(10 * f * p) + " samples");
    const auto rows = static_cast<Eigen::Index>(ts.length() - p);
    const auto fi = static_cast<Eigen::Index>(f);
    Eigen::MatrixXd x(rows, fi * static_cast<Eigen::Index>(p) + 1);
    Eigen::MatrixXd y = ts.values().bottomRows(rows);
    for (Eigen::Index r = 0; r < rows; ++r) {
        for (std::size_t k = 1; k <= p; ++k)
            x.block(r, fi * static_cast<Eigen::Index>(k - 1), 1, fi) =
                ts.values().row(r + static_cast<Eigen::Index>(p - k));
        x(r, x.cols() - 1) = 1.0;
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
    if (qr.rank() < x.cols()) throw NumericalError("VAR regressor matrix is rank deficient");
    const Eigen::MatrixXd beta = qr.solve(y);  // (f p + 1) x f
    std::vector<Eigen::MatrixXd> out;
    for (std::size_t k = 0; k < p; ++k)
        out.push_back(beta.block(fi * static_cast<Eigen::Index>(k), 0, fi, fi).transpose());
    return out;
}

struct VarBaselineResult {
    std::vector<std::size_t> failed_patterns;  ///< pattern_index(j, i) for failed i <- j
    bool all_zero = false;                     ///< no coefficient changed; threshold undefined
};

/// Pattern j -> i fails when dA(i, j) > eta * max dA, with dA the largest
/// absolute coefficient change over lags.
inline VarBaselineResult var_rca_baseline(const std::vector<Eigen::MatrixXd>& nominal,
                                          const std::vector<Eigen::MatrixXd>& anomalous, double eta = 0.4) {
    if (nominal.empty() || nominal.size() != anomalous.size()) throw UsageError("VAR coefficient lag counts differ");
    const auto f = nominal.front().rows();
    Eigen::MatrixXd delta = Eigen::MatrixXd::Zero(f, f);
    for (std::size_t k = 0; k < nominal.size(); ++k) {
        if (nominal[k].rows() != f || nominal[k].cols() != f || anomalous[k].rows() != f || anomalous[k].cols() != f)
            throw UsageError("VAR coefficient shapes differ");
        delta = delta.cwiseMax((anomalous[k] - nominal[k]).cwiseAbs());
    }
    VarBaselineResult out;
    const double top = delta.maxCoeff();
    if (!(top > 0.0)) {
        out.all_zero = true;
        return out;
    }
    for (Eigen::Index j = 0; j < f; ++j)
        for (Eigen::Index i = 0; i < f; ++i)
            if (delta(i, j) > eta * top)
                out.failed_patterns.push_back(
                    pattern_index(static_cast<std::size_t>(j), static_cast<std::size_t>(i), static_cast<std::size_t>(f)));
    std::sort(out.failed_patterns.begin(), out.failed_patterns.end());
    return out;
}

struct FaultCase {
    std::size_t id = 0;
    std::size_t mode = 0;
    FaultSpec fault;
};

/// The 30-case pattern-fault suite: 5 single, 10 double, 10 triple and 5
/// quadruple edge breaks, cycling over the modes, edges drawn with the seed.
inline std::vector<FaultCase> pattern_fault_suite(const std::vector<CausalGraph>& modes, std::uint64_t seed) {
    if (modes.empty()) throw UsageError("fault suite needs at least one mode");
    const std::vector<std::pair<std::size_t, std::size_t>> plan{{1, 5}, {2, 10}, {3, 10}, {4, 5}};
    std::mt19937_64 rng(seed);
    std::vector<FaultCase> out;
    std::set<std::pair<std::size_t, std::vector<Edge>>> used;
    for (const auto& [order, count] : plan) {
        for (std::size_t c = 0; c < count; ++c) {
            const std::size_t id = out.size();
            const std::size_t mode = id % modes.size();
            auto pool = modes[mode].cross_edges();
            if (pool.size() < order) throw UsageError("mode has too few edges for the fault suite");
            std::vector<Edge> pick;
            for (int attempt = 0; attempt < 50; ++attempt) {
                std::shuffle(pool.begin(), pool.end(), rng);
                pick.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(order));
                std::sort(pick.begin(), pick.end());
                if (!used.count({mode, pick})) break;
            }
            used.insert({mode, pick});
            out.push_back({id, mode, FaultSpec::pattern_break(pick)});
        }
    }
    return out;
}

}  // namespace stpnrca
