#pragma once

// Benchmark suites: desk-scale reproductions of the method's evaluation
// protocols with pass/fail checks against fixed thresholds.

#include "stpnrca/config.hpp"
#include "stpnrca/energy.hpp"
#include "stpnrca/eval.hpp"
#include "stpnrca/pipeline.hpp"
#include "stpnrca/s3.hpp"
#include "stpnrca/stpn.hpp"
#include "stpnrca/symdyn.hpp"
#include "stpnrca/synth.hpp"

#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <iomanip>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace stpnrca {

struct BenchCheck {
    std::string name;
    bool passed = false;
    std::string detail;
};

struct BenchResult {
    std::string suite;
    std::vector<BenchCheck> checks;
    std::vector<std::string> notes;
    double seconds = 0.0;

    bool passed() const {
        return !checks.empty() && std::all_of(checks.begin(), checks.end(), [](const auto& c) { return c.passed; });
    }
    void check(std::string name, bool ok, std::string detail) { checks.push_back({std::move(name), ok, std::move(detail)}); }
};

using BenchLog = std::function<void(const std::string&)>;

namespace detail {

inline std::string num(double v, int digits = 4) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(digits) << v;
    return os.str();
}

class Stopwatch {
public:
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

}  // namespace detail

/// Two channels, two symbols, D = 1, lag 1. The nominal window holds
/// n11 (q1 -> s1), n12, n21, n22 pairs; the model counts are k times the
/// window counts; the anomalous window turns eta of the q1 -> s1 pairs into
/// q2 -> s1 by switching channel a's symbol.
struct TwoStateCase {
    std::size_t n11 = 20, n12 = 20, n21 = 20, n22 = 20;
    std::size_t k = 10;
};

inline std::pair<SymbolSequence, SymbolSequence> two_state_sequences(const TwoStateCase& c, std::size_t eta) {
    if (eta > c.n11) throw UsageError("eta exceeds the number of q1 -> s1 pairs");
    // a[t] is the state of pair t, b[t + 1] its symbol; b[0] and a[last] pad.
    std::vector<int> a, b{0};
    auto add = [&](int q, int s, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) a.push_back(q), b.push_back(s);
    };
    add(0, 0, c.n11 - eta);
    add(1, 0, eta);
    add(0, 1, c.n12);
    add(1, 0, c.n21);
    add(1, 1, c.n22);
    a.push_back(0);
    SymbolSequence sa{2, {a}}, sb{2, {b}};
    return {sa, sb};
}

inline CountMatrix two_state_counts(const TwoStateCase& c, std::size_t eta) {
    const auto [sa, sb] = two_state_sequences(c, eta);
    return count_matrix(states_from_symbols(sa, 1), 0, sb, 0, 1);
}

/// metric_delta(eta) for eta = 0..max_eta on one construction.
inline std::vector<double> two_state_deltas(const TwoStateCase& c, std::size_t max_eta) {
    const auto window = two_state_counts(c, 0);
    CountMatrix model(window.rows(), window.cols());
    for (std::size_t i = 0; i < c.k; ++i) model += window;
    const double nominal = log_inference_metric(model, window);
    std::vector<double> out;
    for (std::size_t eta = 0; eta <= max_eta; ++eta)
        out.push_back(metric_delta(nominal, log_inference_metric(model, two_state_counts(c, eta))));
    return out;
}

inline BenchResult bench_prop1(const BenchLog& log = {}) {
    detail::Stopwatch sw;
    BenchResult r;
    r.suite = "prop1";
    std::size_t configs = 0, positive = 0, increasing = 0;
    for (std::size_t k : {10, 100})
        for (std::size_t ratio : {1, 2, 3})
            for (std::size_t base : {6, 15, 40}) {
                TwoStateCase c;
                c.k = k;
                c.n21 = base;
                c.n11 = ratio * base;
                c.n12 = c.n11;
                c.n22 = base;
                const auto d = two_state_deltas(c, 5);
                ++configs;
                bool pos = true, inc = true;
                for (std::size_t eta = 1; eta <= 5; ++eta) {
                    pos = pos && d[eta] > 0.0;
                    inc = inc && d[eta] > d[eta - 1];
                }
                positive += pos;
                increasing += inc;
                if (log)
                    log("k=" + std::to_string(k) + " ratio=" + std::to_string(ratio) + " n21=" + std::to_string(base) +
                        " delta(1..5)=" + detail::num(d[1]) + ".." + detail::num(d[5]));
            }
    r.check("delta > 0 for eta in 1..5", positive == configs,
            std::to_string(positive) + "/" + std::to_string(configs) + " configurations");
    r.check("delta strictly increasing in eta", increasing == configs,
            std::to_string(increasing) + "/" + std::to_string(configs) + " configurations");
    r.seconds = sw.seconds();
    return r;
}

struct GreedyInstance {
    RbmParams rbm;
    PatternVector vector;
};

/// A seeded 9-pattern instance: an energy model trained on noisy copies of a
/// random prototype, probed with the prototype plus 1-3 switched bits.
inline GreedyInstance greedy_instance(std::uint64_t seed, std::size_t bits = 9) {
    std::mt19937_64 rng(seed);
    std::bernoulli_distribution coin(0.85);
    PatternVector proto(bits);
    for (auto& b : proto) b = coin(rng) ? 1 : 0;
    std::uniform_real_distribution<double> noise_rate(0.02, 0.12);
    const double q = noise_rate(rng);
    std::bernoulli_distribution flip(q);
    std::vector<PatternVector> train;
    for (int i = 0; i < 300; ++i) {
        auto v = proto;
        for (auto& b : v) b ^= flip(rng) ? 1 : 0;
        train.push_back(std::move(v));
    }
    RbmTrainConfig rc;
    rc.hidden = 8;
    rc.epochs = 60;
    rc.seed = seed;
    GreedyInstance g{train_rbm(train, rc), proto};
    std::uniform_int_distribution<std::size_t> count(1, 3), pos(0, bits - 1);
    const auto n = count(rng);
    for (std::size_t i = 0; i < n; ++i) g.vector[pos(rng)] ^= 1u;
    return g;
}

inline BenchResult bench_greedy(std::size_t instances = 100, std::uint64_t seed = 1000, const BenchLog& log = {}) {
    detail::Stopwatch sw;
    BenchResult r;
    r.suite = "greedy";
    std::size_t within = 0, below = 0;
    double worst = 0.0;
    for (std::size_t i = 0; i < instances; ++i) {
        const auto g = greedy_instance(seed + i);
        const auto s = s3_search(g.rbm, g.vector);
        const auto o = exhaustive_switch_oracle(g.rbm, g.vector);
        const double gap = (s.final_energy - o.energy) / std::max(std::abs(o.energy), 1e-12);
        worst = std::max(worst, gap);
        within += gap <= 0.01;
        below += s.final_energy < o.energy - 1e-9;
        if (log && gap > 0.01) log("instance " + std::to_string(i) + ": relative gap " + detail::num(gap));
    }
    r.check("greedy within 1% of the optimum in >= 90% of instances", within * 100 >= 90 * instances,
            std::to_string(within) + "/" + std::to_string(instances) + ", worst gap " + detail::num(worst));
    r.check("greedy never below the exhaustive optimum", below == 0, std::to_string(below) + " violations");
    r.seconds = sw.seconds();
    return r;
}

struct Dataset1Setup {
    std::size_t train_windows_per_mode = 200;
    std::size_t test_windows_per_case = 50;
    std::uint64_t seed = 2024;
    bool with_a3 = true;
    RunConfig config = default_bench_config();

    static RunConfig default_bench_config() {
        RunConfig c;
        c.stpn.threshold_quantile = 0.01;
        return c;
    }
};

struct Dataset1Fixture {
    Dataset1Setup setup;
    std::vector<CausalGraph> modes;
    std::vector<TimeSeries> nominal;
    TrainedSystem system;
    double train_seconds = 0.0;
};

inline Dataset1Fixture make_dataset1(const Dataset1Setup& setup = {}) {
    detail::Stopwatch sw;
    Dataset1Fixture fx;
    fx.setup = setup;
    fx.modes = builtin_modes();
    const std::size_t len = setup.train_windows_per_mode * setup.config.stpn.window_length;
    for (std::size_t m = 0; m < fx.modes.size(); ++m) fx.nominal.push_back(simulate_var(fx.modes[m], len, setup.seed + m));
    fx.system = train_system(fx.nominal, setup.config, setup.with_a3);
    fx.train_seconds = sw.seconds();
    return fx;
}

struct SuiteRun {
    std::vector<RootCauseReport> reports;
    std::vector<CaseLabels> labels;
};

/// The 30-case pattern-fault suite analyzed with every window forced through
/// RCA, one report per case and method.
inline BenchResult bench_dataset1(const Dataset1Fixture& fx, const BenchLog& log = {}) {
    detail::Stopwatch sw;
    BenchResult r;
    r.suite = "dataset1-desk";
    const auto& cfg = fx.setup.config;
    const auto cases = pattern_fault_suite(fx.modes, fx.setup.seed);
    const std::size_t len = fx.setup.test_windows_per_case * cfg.stpn.window_length;
    SuiteRun s3, a3;
    std::size_t right_mode = 0, windows = 0;
    for (const auto& c : cases) {
        const auto& g = fx.modes[c.mode];
        const std::uint64_t seed = fx.setup.seed * 1000 + 100 + c.id;
        const auto test = inject_fault(g, simulate_var(g, len, seed), c.fault, seed);
        const auto id = "case" + std::to_string(c.id);
        auto labels = labels_for_fault(id, c.mode, g, c.fault);
        auto rep = run_rca(fx.system, test, RcaMethod::s3, true, cfg);
        rep.case_id = id;
        for (const auto& w : rep.windows) right_mode += w.mode == c.mode, ++windows;
        s3.reports.push_back(std::move(rep));
        s3.labels.push_back(labels);
        if (fx.system.a3) {
            auto ra = run_rca(fx.system, test, RcaMethod::a3, true, cfg);
            ra.case_id = id;
            a3.reports.push_back(std::move(ra));
            a3.labels.push_back(labels);
        }
        if (log) log(id + " mode " + std::to_string(c.mode + 1) + " " + to_string(c.fault));
    }
    const auto es = evaluate_reports(s3.reports, s3.labels, "S3");
    r.check("S3 pattern accuracy alpha1 >= 0.90 (full-scale reference 0.9704)", *es.accuracy >= 0.90,
            "alpha1 = " + detail::num(*es.accuracy));
    std::vector<EvalReport> rows{es};
    if (fx.system.a3) {
        const auto ea = evaluate_reports(a3.reports, a3.labels, "A3");
        r.check("A3 pattern accuracy alpha1 >= 0.90 (full-scale reference 0.9866)", *ea.accuracy >= 0.90,
                "alpha1 = " + detail::num(*ea.accuracy));
        rows.push_back(ea);
    }
    r.notes.push_back("mode assignment accuracy " + detail::num(static_cast<double>(right_mode) / static_cast<double>(windows)));
    std::istringstream table(eval_table(rows));
    for (std::string line; std::getline(table, line);) r.notes.push_back(line);
    r.seconds = sw.seconds();
    return r;
}

/// Mean nominal free energy plus the margin must stay below the mean free
/// energy of every single-bit perturbation, for energy models trained with
/// several seeds on the dataset1 nominal vectors.
inline BenchResult bench_energy_gap(const Dataset1Fixture& fx, double margin = 1.0, std::size_t seeds = 5,
                                    const BenchLog& log = {}) {
    detail::Stopwatch sw;
    BenchResult r;
    r.suite = "energy-gap";
    const auto vectors = nominal_pattern_vectors(fx.system.stpn, fx.nominal);
    RbmTrainConfig rc = fx.setup.config.rbm;
    rc.hidden = fx.system.rbm.hidden();
    std::size_t ok = 0;
    double smallest = std::numeric_limits<double>::infinity();
    for (std::size_t s = 1; s <= seeds; ++s) {
        rc.seed = s;
        const auto p = train_rbm(vectors, rc);
        double nominal = 0.0, flipped = 0.0;
        std::size_t nflip = 0;
        for (const auto& v : vectors) {
            nominal += free_energy(p, v);
            auto w = v;
            for (std::size_t i = 0; i < w.size(); ++i) {
                w[i] ^= 1u;
                flipped += free_energy(p, w);
                w[i] ^= 1u;
                ++nflip;
            }
        }
        nominal /= static_cast<double>(vectors.size());
        flipped /= static_cast<double>(nflip);
        const double gap = flipped - nominal;
        smallest = std::min(smallest, gap);
        ok += nominal + margin < flipped;
        if (log) log("seed " + std::to_string(s) + ": mean F nominal " + detail::num(nominal) + ", 1-flip " + detail::num(flipped));
    }
    r.check("mean nominal F + " + detail::num(margin, 1) + " < mean 1-flip F for all seeds", ok == seeds,
            std::to_string(ok) + "/" + std::to_string(seeds) + " seeds, smallest gap " + detail::num(smallest));
    r.seconds = sw.seconds();
    return r;
}

/// Fresh nominal windows from every mode forced through RCA.
inline BenchResult bench_false_alarm(const Dataset1Fixture& fx, std::size_t min_windows = 500, const BenchLog& log = {}) {
    detail::Stopwatch sw;
    BenchResult r;
    r.suite = "false-alarm";
    const auto& cfg = fx.setup.config;
    const std::size_t per_mode = (min_windows + fx.modes.size() - 1) / fx.modes.size();
    SuiteRun s3, a3;
    for (std::size_t m = 0; m < fx.modes.size(); ++m) {
        const auto test = simulate_var(fx.modes[m], per_mode * cfg.stpn.window_length, fx.setup.seed * 1000 + 900 + m);
        CaseLabels l;
        l.case_id = "nominal" + std::to_string(m);
        l.mode = m;
        l.channel_names = test.names();
        auto rep = run_rca(fx.system, test, RcaMethod::s3, true, cfg);
        rep.case_id = l.case_id;
        s3.reports.push_back(std::move(rep));
        s3.labels.push_back(l);
        if (fx.system.a3) {
            auto ra = run_rca(fx.system, test, RcaMethod::a3, true, cfg);
            ra.case_id = l.case_id;
            a3.reports.push_back(std::move(ra));
            a3.labels.push_back(l);
        }
        if (log) log("mode " + std::to_string(m + 1) + ": " + std::to_string(per_mode) + " windows");
    }
    const auto es = evaluate_reports(s3.reports, s3.labels, "S3");
    const std::size_t n = per_mode * fx.modes.size();
    r.check("S3 mean flagged fraction <= 0.10 (full-scale reference 0.0665)", *es.false_alarm_fraction <= 0.10,
            detail::num(*es.false_alarm_fraction) + " over " + std::to_string(n) + " windows");
    if (fx.system.a3) {
        const auto ea = evaluate_reports(a3.reports, a3.labels, "A3");
        r.check("A3 mean flagged fraction <= 0.10 (full-scale reference 0.0130)", *ea.false_alarm_fraction <= 0.10,
                detail::num(*ea.false_alarm_fraction) + " over " + std::to_string(n) + " windows");
    }
    std::size_t flagged = 0;
    for (const auto& rep : s3.reports)
        for (const auto& w : rep.windows) flagged += w.verdict == Verdict::anomalous;
    r.notes.push_back("detector flagged " + std::to_string(flagged) + "/" + std::to_string(n) + " nominal windows");
    r.seconds = sw.seconds();
    return r;
}

struct NodeDeskSetup {
    std::size_t train_windows = 200;
    std::size_t test_windows_per_case = 50;
    std::size_t delay = 5;
    std::size_t random_nodes = 10;
    std::uint64_t seed = 77;
    GraphConstants graph{0.4, 0.5, 0.1};  ///< stronger edges than the pattern-fault modes
    RunConfig config = Dataset1Setup::default_bench_config();
};

/// Node-delay faults on every node of the first builtin mode and of a
/// seeded random graph; S3 forced on every window against the VAR baseline.
inline BenchResult bench_node_desk(const NodeDeskSetup& setup = {}, const BenchLog& log = {}) {
    detail::Stopwatch sw;
    BenchResult r;
    r.suite = "node-desk";
    const auto& cfg = setup.config;
    const std::vector<std::pair<std::string, CausalGraph>> graphs{
        {"mode1", builtin_modes(setup.graph).front()},
        {"random" + std::to_string(setup.random_nodes), random_graph(setup.random_nodes, setup.seed, 2, setup.graph)}};
    SuiteRun s3, var;
    for (std::size_t gi = 0; gi < graphs.size(); ++gi) {
        const auto& [name, g] = graphs[gi];
        const auto nominal = simulate_var(g, setup.train_windows * cfg.stpn.window_length, setup.seed * 10 + gi);
        const auto sys = train_system({nominal}, cfg, false);
        for (std::size_t n = 0; n < g.nodes(); ++n) {
            const std::uint64_t seed = setup.seed * 1000 + gi * 100 + n;
            const auto spec = FaultSpec::node_delay(n, setup.delay);
            const auto test =
                inject_fault(g, simulate_var(g, setup.test_windows_per_case * cfg.stpn.window_length, seed), spec, seed);
            const auto id = name + "-node" + std::to_string(n + 1);
            const auto labels = labels_for_fault(id, std::nullopt, g, spec);
            auto rs = run_rca(sys, test, RcaMethod::s3, true, cfg);
            rs.case_id = id;
            auto rv = run_var_rca(nominal, test, cfg);
            rv.case_id = id;
            if (log) {
                std::string sel;
                for (auto x : rs.summary_nodes.selected) sel += " " + std::to_string(x + 1);
                log(id + ": " + std::to_string(rs.analyses.size()) + " windows analyzed, nodes" + sel);
            }
            s3.reports.push_back(std::move(rs));
            var.reports.push_back(std::move(rv));
            s3.labels.push_back(labels);
            var.labels.push_back(labels);
        }
    }
    const auto es = evaluate_reports(s3.reports, s3.labels, "S3");
    const auto ev = evaluate_reports(var.reports, var.labels, "VAR-baseline");
    const double eps_s3 = es.error && es.error->ratio ? *es.error->ratio : 1.0;
    const double eps_var = ev.error && ev.error->ratio ? *ev.error->ratio : 1.0;
    r.check("S3 node F-measure >= 0.9", es.nodes->f_measure >= 0.9, "F = " + detail::num(es.nodes->f_measure));
    r.check("S3 error ratio < VAR baseline error ratio", eps_s3 < eps_var,
            "S3 " + detail::num(eps_s3) + " (" + std::to_string(es.error->incorrect) + "/" +
                std::to_string(es.error->predicted) + ") vs VAR " + detail::num(eps_var) + " (" +
                std::to_string(ev.error->incorrect) + "/" + std::to_string(ev.error->predicted) + ")");
    std::istringstream table(eval_table({es, ev}));
    for (std::string line; std::getline(table, line);) r.notes.push_back(line);
    r.seconds = sw.seconds();
    return r;
}

/// var_fit on simulate_var output for seeded 2-5 node graphs.
inline BenchResult bench_var_recovery(std::size_t graphs = 20, std::size_t length = 10000, double tol = 0.05,
                                      std::uint64_t seed = 500, const BenchLog& log = {}) {
    detail::Stopwatch sw;
    BenchResult r;
    r.suite = "var-recovery";
    std::size_t ok = 0;
    double worst = 0.0;
    for (std::size_t i = 0; i < graphs; ++i) {
        const std::size_t nodes = 2 + i % 4;
        const auto g = random_graph(nodes, seed + i, std::min<std::size_t>(2, nodes - 1));
        const auto fit = var_fit(simulate_var(g, length, seed + 1000 + i), 1);
        const double err = (fit[0] - g.coefficients[0]).cwiseAbs().maxCoeff();
        worst = std::max(worst, err);
        ok += err <= tol;
        if (log) log("graph " + std::to_string(i) + " (" + std::to_string(nodes) + " nodes): max error " + detail::num(err));
    }
    r.check("coefficients within +/-" + detail::num(tol, 2) + " for every graph", ok == graphs,
            std::to_string(ok) + "/" + std::to_string(graphs) + ", worst " + detail::num(worst));
    r.seconds = sw.seconds();
    return r;
}

inline std::vector<std::string> bench_suites() {
    return {"prop1", "greedy", "dataset1-desk", "energy-gap", "false-alarm", "node-desk", "var-recovery"};
}

inline std::string format_bench(const BenchResult& r) {
    std::ostringstream os;
    for (const auto& c : r.checks)
        os << (c.passed ? "PASS" : "FAIL") << "  " << r.suite << ": " << c.name << " [" << c.detail << "]\n";
    for (const auto& n : r.notes) os << "      " << n << '\n';
    os << "      " << r.suite << " took " << detail::num(r.seconds, 1) << " s\n";
    return os.str();
}

}  // namespace stpnrca
