#pragma once

// End-to-end orchestration: train STPN + energy model (+ A3), analyze test
// series window by window, and run root-cause analysis into a report.

#include "stpnrca/a3.hpp"
#include "stpnrca/config.hpp"
#include "stpnrca/energy.hpp"
#include "stpnrca/error.hpp"
#include "stpnrca/eval.hpp"
#include "stpnrca/io.hpp"
#include "stpnrca/nodeinf.hpp"
#include "stpnrca/s3.hpp"
#include "stpnrca/stpn.hpp"
#include "stpnrca/symdyn.hpp"
#include "stpnrca/synth.hpp"

#include <algorithm>
#include <cstddef>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace stpnrca {

struct TrainedSystem {
    StpnModel stpn;
    RbmParams rbm;
    DetectorConfig detector;
    std::optional<MlpParams> a3;
    std::string fingerprint;
};

/// Trains on one nominal series per operating mode.
inline TrainedSystem train_system(const std::vector<TimeSeries>& nominal_modes, const RunConfig& cfg, bool with_a3) {
    validate(cfg);
    TrainedSystem sys;
    sys.fingerprint = config_fingerprint(cfg);
    sys.stpn = train_stpn(nominal_modes, cfg.stpn);
    std::vector<std::size_t> mode_of;
    const auto vectors = nominal_pattern_vectors(sys.stpn, nominal_modes, &mode_of);

    RbmTrainConfig rc = cfg.rbm;
    if (cfg.rbm_hidden == 0) {
        std::vector<PatternVector> train, heldout;
        for (std::size_t i = 0; i < vectors.size(); ++i) (i % 5 == 4 ? heldout : train).push_back(vectors[i]);
        if (heldout.empty() || train.empty()) throw DataError("too few nominal windows to choose the hidden layer size");
        rc.hidden = select_hidden_units(train, heldout, cfg.rbm_hidden_candidates, rc).hidden;
    } else {
        rc.hidden = cfg.rbm_hidden;
    }
    sys.rbm = train_rbm(vectors, rc);
    std::vector<std::vector<PatternVector>> blocks(nominal_modes.size());
    for (std::size_t i = 0; i < vectors.size(); ++i) blocks[mode_of[i]].push_back(vectors[i]);
    sys.detector = calibrate_detector(sys.rbm, blocks, cfg.detector_kappa, cfg.detector_aggregation,
                                      cfg.detector_window_count);
    if (with_a3) sys.a3 = train_a3(generate_artificial_anomalies(vectors, cfg.a3_generation), cfg.a3).params;
    return sys;
}

struct WindowAnalysis {
    std::size_t start = 0;
    std::size_t mode = 0;
    PatternVector vector;
    double free_energy = 0.0;
    Verdict verdict = Verdict::nominal;
};

inline std::vector<WindowAnalysis> analyze_windows(const TrainedSystem& sys, const TimeSeries& test) {
    if (test.channels() != sys.stpn.channels())
        throw DataError("test data has " + std::to_string(test.channels()) + " channels, model expects " +
                        std::to_string(sys.stpn.channels()));
    if (test.length() < sys.stpn.window_length)
        throw DataError("test data has " + std::to_string(test.length()) + " samples, shorter than one window of " +
                        std::to_string(sys.stpn.window_length));
    std::vector<WindowAnalysis> out;
    std::vector<PatternVector> vectors;
    for (auto start : window_starts(test.length(), sys.stpn.window_length, sys.stpn.stride)) {
        const auto wm = window_metrics(sys.stpn, test.slice(start, sys.stpn.window_length));
        WindowAnalysis w;
        w.start = start;
        w.mode = wm.mode;
        w.vector = binarize(wm, sys.stpn);
        w.free_energy = free_energy(sys.rbm, w.vector);
        vectors.push_back(w.vector);
        out.push_back(std::move(w));
    }
    const auto verdicts = detect_stream(sys.rbm, vectors, sys.detector);
    for (std::size_t i = 0; i < out.size(); ++i) out[i].verdict = verdicts[i];
    return out;
}

enum class RcaMethod { s3, a3, var };

inline const char* to_string(RcaMethod m) {
    switch (m) {
        case RcaMethod::s3: return "S3";
        case RcaMethod::a3: return "A3";
        case RcaMethod::var: return "VAR-baseline";
    }
    return "?";
}

inline RcaMethod parse_method(const std::string& s) {
    if (s == "s3" || s == "S3") return RcaMethod::s3;
    if (s == "a3" || s == "A3") return RcaMethod::a3;
    if (s == "var" || s == "VAR-baseline") return RcaMethod::var;
    throw UsageError("unknown RCA method '" + s + "' (expected s3, a3 or var)");
}

struct WindowRca {
    std::size_t window = 0;  ///< index into RootCauseReport::windows
    std::vector<FailedPattern> patterns;
    std::vector<double> trace;  ///< S3 free-energy trace
    NodeInference nodes;
};

struct RootCauseReport {
    std::string case_id;
    RcaMethod method = RcaMethod::s3;
    std::string fingerprint;
    std::vector<std::string> channel_names;
    std::vector<WindowAnalysis> windows;
    std::vector<WindowRca> analyses;
    /// Patterns flagged in at least case_fraction of the analyzed windows,
    /// weighted by their mean weight over the windows that flagged them.
    std::vector<FailedPattern> summary_patterns;
    NodeInference summary_nodes;
    /// All channels by decreasing node score summed over analyzed windows.
    std::vector<std::size_t> node_ranking;
    std::vector<double> node_ranking_scores;
    std::vector<std::string> warnings;

    std::size_t channels() const { return channel_names.size(); }
    Verdict verdict() const {
        return std::any_of(windows.begin(), windows.end(), [](const auto& w) { return w.verdict == Verdict::anomalous; })
                   ? Verdict::anomalous
                   : Verdict::nominal;
    }
};

namespace detail {

inline void summarize(RootCauseReport& r, double case_fraction) {
    const std::size_t f = r.channels();
    std::map<std::size_t, std::pair<std::size_t, double>> tally;
    std::vector<double> summed(f, 0.0);
    for (const auto& a : r.analyses) {
        for (const auto& fp : a.patterns) {
            auto& t = tally[fp.index];
            ++t.first;
            t.second += fp.weight;
        }
        const auto s = node_scores(a.patterns, f);
        for (std::size_t n = 0; n < f; ++n) summed[n] += s[n];
    }
    const double need = case_fraction * static_cast<double>(r.analyses.size());
    for (const auto& [idx, t] : tally)
        if (static_cast<double>(t.first) >= need && t.first > 0)
            r.summary_patterns.push_back({idx, t.second / static_cast<double>(t.first)});
    r.summary_nodes = infer_nodes(r.summary_patterns, f);

    r.node_ranking.resize(f);
    std::iota(r.node_ranking.begin(), r.node_ranking.end(), std::size_t{0});
    std::stable_sort(r.node_ranking.begin(), r.node_ranking.end(),
                     [&](std::size_t a, std::size_t b) { return summed[a] > summed[b]; });
    r.node_ranking_scores.clear();
    for (auto n : r.node_ranking) r.node_ranking_scores.push_back(summed[n]);
}

}  // namespace detail

/// Root-cause analysis of each window flagged anomalous (every window when
/// `force` is set) with S3 or A3, node inference per window, and a summary.
inline RootCauseReport run_rca(const TrainedSystem& sys, const TimeSeries& test, RcaMethod method, bool force,
                               const RunConfig& cfg) {
    if (method == RcaMethod::var) throw UsageError("the VAR baseline needs nominal data; use run_var_rca");
    if (method == RcaMethod::a3 && !sys.a3) throw UsageError("model has no A3 classifier (train with --a3)");
    RootCauseReport r;
    r.method = method;
    r.fingerprint = sys.fingerprint;
    r.channel_names = sys.stpn.channel_names;
    r.windows = analyze_windows(sys, test);
    const std::size_t f = r.channels();
    for (std::size_t w = 0; w < r.windows.size(); ++w) {
        if (!force && r.windows[w].verdict == Verdict::nominal) continue;
        WindowRca a;
        a.window = w;
        if (method == RcaMethod::s3) {
            const auto s = s3_search(sys.rbm, r.windows[w].vector, cfg.s3);
            for (std::size_t i = 0; i < s.anomalous_patterns.size(); ++i)
                a.patterns.push_back({s.anomalous_patterns[i], s.weights[i]});
            a.trace = s.trace;
        } else {
            const auto inf = infer_a3(*sys.a3, r.windows[w].vector, cfg.a3_cutoff);
            for (std::size_t i = 0; i < inf.anomalous_patterns.size(); ++i)
                a.patterns.push_back({inf.anomalous_patterns[i], inf.weights[i]});
        }
        a.nodes = infer_nodes(a.patterns, f);
        r.analyses.push_back(std::move(a));
    }
    if (r.analyses.empty()) r.warnings.push_back("no window was flagged anomalous; nothing analyzed");
    detail::summarize(r, cfg.case_fraction);
    return r;
}

/// The coefficient-difference baseline: VAR fits of the nominal and the test
/// series, patterns whose coefficients moved by more than var_eta of the
/// largest move. Reported as a single analysis over the whole series.
inline RootCauseReport run_var_rca(const TimeSeries& nominal, const TimeSeries& test, const RunConfig& cfg) {
    if (nominal.channels() != test.channels()) throw DataError("nominal and test data have different channel counts");
    RootCauseReport r;
    r.method = RcaMethod::var;
    r.fingerprint = config_fingerprint(cfg);
    r.channel_names = test.names();
    const auto base = var_rca_baseline(var_fit(nominal, cfg.var_lag), var_fit(test, cfg.var_lag), cfg.var_eta);
    if (base.all_zero) r.warnings.push_back("VAR coefficients unchanged; threshold undefined");
    WindowAnalysis whole;
    whole.verdict = base.failed_patterns.empty() ? Verdict::nominal : Verdict::anomalous;
    r.windows.push_back(whole);
    WindowRca a;
    for (auto p : base.failed_patterns) a.patterns.push_back({p, 1.0});
    a.nodes = infer_nodes(a.patterns, r.channels());
    r.analyses.push_back(std::move(a));
    detail::summarize(r, 1.0);
    return r;
}

inline constexpr int report_format_version = 1;
inline constexpr int labels_format_version = 1;
inline constexpr int model_file_version = 1;

inline json patterns_json(const std::vector<FailedPattern>& ps, const std::vector<std::string>& names) {
    json a = json::array();
    const std::size_t f = names.size();
    for (const auto& p : ps) {
        const auto [s, t] = index_pattern(p.index, f);
        a.push_back({{"index", p.index},
                     {"source", s},
                     {"target", t},
                     {"name", names[s] + "->" + names[t]},
                     {"weight", p.weight}});
    }
    return a;
}

inline json to_json(const RootCauseReport& r) {
    json j;
    j["kind"] = "stpnrca-report";
    j["version"] = report_format_version;
    j["case_id"] = r.case_id;
    j["method"] = to_string(r.method);
    j["fingerprint"] = r.fingerprint;
    j["channels"] = r.channel_names;
    j["verdict"] = to_string(r.verdict());
    json windows = json::array();
    for (const auto& w : r.windows)
        windows.push_back({{"start", w.start},
                           {"mode", w.mode},
                           {"free_energy", w.free_energy},
                           {"verdict", to_string(w.verdict)}});
    j["windows"] = std::move(windows);
    json analyses = json::array();
    for (const auto& a : r.analyses) {
        json nodes = json::array();
        for (std::size_t k = 0; k < a.nodes.selected.size(); ++k) {
            const auto n = a.nodes.selected[k];
            nodes.push_back({{"node", n}, {"name", r.channel_names[n]}, {"score", a.nodes.step_scores[k][n]}});
        }
        analyses.push_back({{"window", a.window},
                            {"patterns", patterns_json(a.patterns, r.channel_names)},
                            {"nodes", std::move(nodes)},
                            {"free_energy_trace", a.trace}});
    }
    j["analyses"] = std::move(analyses);
    json summary;
    summary["analyzed_windows"] = r.analyses.size();
    summary["patterns"] = patterns_json(r.summary_patterns, r.channel_names);
    json selected = json::array();
    for (std::size_t k = 0; k < r.summary_nodes.selected.size(); ++k) {
        const auto n = r.summary_nodes.selected[k];
        selected.push_back({{"node", n}, {"name", r.channel_names[n]}, {"score", r.summary_nodes.step_scores[k][n]}});
    }
    summary["nodes"] = std::move(selected);
    json ranking = json::array();
    for (std::size_t k = 0; k < r.node_ranking.size(); ++k)
        ranking.push_back({{"node", r.node_ranking[k]},
                           {"name", r.channel_names[r.node_ranking[k]]},
                           {"score", r.node_ranking_scores[k]}});
    summary["node_ranking"] = std::move(ranking);
    j["summary"] = std::move(summary);
    j["warnings"] = r.warnings;
    return j;
}

namespace detail {

inline std::vector<FailedPattern> patterns_from_json(const json& a, std::size_t f) {
    std::vector<FailedPattern> out;
    for (const auto& p : a) {
        const auto idx = p.at("index").get<std::size_t>();
        if (idx >= f * f) throw DataError("report pattern index out of range");
        out.push_back({idx, p.at("weight").get<double>()});
    }
    return out;
}

}  // namespace detail

/// Reads back what evaluation needs: case id, method, channels, per-window
/// patterns, summary patterns and nodes, and the node ranking.
inline RootCauseReport report_from_json(const json& j) {
    RootCauseReport r;
    r.case_id = j.at("case_id").get<std::string>();
    r.method = parse_method(j.at("method").get<std::string>());
    r.fingerprint = j.at("fingerprint").get<std::string>();
    r.channel_names = j.at("channels").get<std::vector<std::string>>();
    const std::size_t f = r.channels();
    for (const auto& w : j.at("windows")) {
        WindowAnalysis wa;
        wa.start = w.at("start").get<std::size_t>();
        wa.mode = w.at("mode").get<std::size_t>();
        wa.free_energy = w.at("free_energy").get<double>();
        wa.verdict = w.at("verdict").get<std::string>() == "anomalous" ? Verdict::anomalous : Verdict::nominal;
        r.windows.push_back(wa);
    }
    for (const auto& a : j.at("analyses")) {
        WindowRca wr;
        wr.window = a.at("window").get<std::size_t>();
        wr.patterns = detail::patterns_from_json(a.at("patterns"), f);
        for (const auto& n : a.at("nodes")) wr.nodes.selected.push_back(n.at("node").get<std::size_t>());
        wr.trace = a.at("free_energy_trace").get<std::vector<double>>();
        r.analyses.push_back(std::move(wr));
    }
    const auto& s = j.at("summary");
    r.summary_patterns = detail::patterns_from_json(s.at("patterns"), f);
    for (const auto& n : s.at("nodes")) r.summary_nodes.selected.push_back(n.at("node").get<std::size_t>());
    for (const auto& n : s.at("node_ranking")) {
        const auto node = n.at("node").get<std::size_t>();
        if (node >= f) throw DataError("report node index out of range");
        r.node_ranking.push_back(node);
        r.node_ranking_scores.push_back(n.at("score").get<double>());
    }
    r.warnings = j.value("warnings", std::vector<std::string>{});
    return r;
}

/// Ground truth for one case, written next to the data it describes.
struct CaseLabels {
    std::string case_id;
    std::optional<std::size_t> mode;
    std::string fault;  ///< fault spec text, empty for nominal data
    std::vector<std::string> channel_names;
    std::vector<std::size_t> failed_patterns;
    std::vector<std::size_t> faulty_nodes;

    bool nominal() const { return fault.empty(); }
};

inline json to_json(const CaseLabels& l) {
    json j;
    j["kind"] = "stpnrca-labels";
    j["version"] = labels_format_version;
    j["case_id"] = l.case_id;
    j["mode"] = l.mode ? json(*l.mode) : json(nullptr);
    j["fault"] = l.fault;
    j["channels"] = l.channel_names;
    j["failed_patterns"] = l.failed_patterns;
    j["faulty_nodes"] = l.faulty_nodes;
    return j;
}

inline CaseLabels labels_from_json(const json& j) {
    CaseLabels l;
    l.case_id = j.at("case_id").get<std::string>();
    if (j.contains("mode") && !j["mode"].is_null()) l.mode = j["mode"].get<std::size_t>();
    l.fault = j.value("fault", std::string{});
    l.channel_names = j.at("channels").get<std::vector<std::string>>();
    l.failed_patterns = j.at("failed_patterns").get<std::vector<std::size_t>>();
    l.faulty_nodes = j.at("faulty_nodes").get<std::vector<std::size_t>>();
    const std::size_t f = l.channel_names.size();
    for (auto p : l.failed_patterns)
        if (p >= f * f) throw DataError("label pattern index out of range");
    for (auto n : l.faulty_nodes)
        if (n >= f) throw DataError("label node index out of range");
    return l;
}

inline CaseLabels labels_for_fault(std::string case_id, std::optional<std::size_t> mode, const CausalGraph& g,
                                   const FaultSpec& spec) {
    CaseLabels l;
    l.case_id = std::move(case_id);
    l.mode = mode;
    l.fault = to_string(spec);
    l.channel_names = default_channel_names(g.nodes());
    l.failed_patterns = fault_patterns(g, spec);
    if (spec.kind == FaultSpec::Kind::node_delay) l.faulty_nodes = {spec.node};
    return l;
}

/// Scores a set of reports against their labels, paired by case id. Every
/// report needs exactly one label and vice versa.
inline EvalReport evaluate_reports(const std::vector<RootCauseReport>& reports, const std::vector<CaseLabels>& labels,
                                   const std::string& title = "") {
    if (reports.empty()) throw UsageError("nothing to evaluate");
    std::map<std::string, const CaseLabels*> by_id;
    for (const auto& l : labels)
        if (!by_id.emplace(l.case_id, &l).second) throw DataError("duplicate label case id '" + l.case_id + "'");
    std::set<std::string> seen;
    for (const auto& r : reports) {
        if (!by_id.count(r.case_id)) throw DataError("report case id '" + r.case_id + "' has no label");
        if (!seen.insert(r.case_id).second) throw DataError("duplicate report case id '" + r.case_id + "'");
    }
    if (seen.size() != by_id.size()) {
        for (const auto& [id, _] : by_id)
            if (!seen.count(id)) throw DataError("label case id '" + id + "' has no report");
    }

    EvalReport e;
    e.label = title.empty() ? std::string(to_string(reports.front().method)) : title;
    e.cases = reports.size();
    std::vector<PatternVector> truth_grid, pred_grid;
    std::size_t ptp = 0, pfp = 0, pfn = 0, ntp = 0, nfp = 0, nfn = 0;
    bool any_nodes = false, any_fault = false;
    ErrorRatio err;
    std::vector<std::vector<std::size_t>> nominal_flags;
    for (const auto& r : reports) {
        const auto& l = *by_id.at(r.case_id);
        const std::size_t f = r.channels();
        if (l.channel_names.size() != f)
            throw DataError("case '" + r.case_id + "': report and labels disagree on the channel count");
        const std::set<std::size_t> truth(l.failed_patterns.begin(), l.failed_patterns.end());

        if (l.nominal()) {
            for (const auto& a : r.analyses) {
                std::vector<std::size_t> flags;
                for (const auto& p : a.patterns) flags.push_back(p.index);
                nominal_flags.push_back(std::move(flags));
            }
            continue;
        }
        any_fault = true;
        PatternVector t(f * f, 0);
        for (auto p : truth) t[p] = 1;
        for (const auto& a : r.analyses) {
            PatternVector p(f * f, 0);
            for (const auto& fp : a.patterns) p[fp.index] = 1;
            truth_grid.push_back(t);
            pred_grid.push_back(std::move(p));
        }
        std::set<std::size_t> pred;
        for (const auto& fp : r.summary_patterns) pred.insert(fp.index);
        const auto pr = prf(truth, pred, f * f);
        ptp += pr.tp, pfp += pr.fp, pfn += pr.fn;

        std::vector<std::size_t> predicted(pred.begin(), pred.end());
        const auto attributable = l.faulty_nodes.empty()
                                      ? std::function<bool(std::size_t)>([&](std::size_t p) { return truth.count(p) > 0; })
                                      : incident_to(l.faulty_nodes, f);
        const auto er = error_ratio(predicted, attributable);
        err.predicted += er.predicted;
        err.incorrect += er.incorrect;

        if (!l.faulty_nodes.empty()) {
            any_nodes = true;
            const std::set<std::size_t> tn(l.faulty_nodes.begin(), l.faulty_nodes.end());
            const std::set<std::size_t> pn(r.summary_nodes.selected.begin(), r.summary_nodes.selected.end());
            const auto nr = prf(tn, pn, f);
            ntp += nr.tp, nfp += nr.fp, nfn += nr.fn;
            e.diagnosis_costs.emplace_back(r.case_id, diagnosis_cost(r.node_ranking, l.faulty_nodes.front(), 1));
        }
    }
    if (any_fault) {
        if (!truth_grid.empty()) e.accuracy = pattern_accuracy(truth_grid, pred_grid);
        e.patterns = prf_from_counts(ptp, pfp, pfn);
        if (err.predicted > 0) err.ratio = static_cast<double>(err.incorrect) / static_cast<double>(err.predicted);
        e.error = err;
    }
    if (any_nodes) e.nodes = prf_from_counts(ntp, nfp, nfn);
    if (!nominal_flags.empty())
        e.false_alarm_fraction = false_alarm_pattern_fraction(nominal_flags, reports.front().channels());
    return e;
}

/// Model file: STPN, energy model, detector and optional A3 classifier.
inline json to_json(const TrainedSystem& s) {
    json j;
    j["kind"] = "stpnrca-model";
    j["version"] = model_file_version;
    j["fingerprint"] = s.fingerprint;
    j["stpn"] = to_json(s.stpn);
    j["rbm"] = to_json(s.rbm);
    j["detector"] = to_json(s.detector);
    j["a3"] = s.a3 ? to_json(*s.a3) : json(nullptr);
    return j;
}

inline TrainedSystem system_from_json(const json& j) {
    TrainedSystem s;
    try {
        s.fingerprint = j.at("fingerprint").get<std::string>();
        s.stpn = stpn_from_json(j.at("stpn"));
        s.rbm = rbm_from_json(j.at("rbm"));
        s.detector = detector_from_json(j.at("detector"));
        if (j.contains("a3") && !j["a3"].is_null()) s.a3 = mlp_from_json(j["a3"]);
    } catch (const json::exception& e) {
        throw DataError(std::string("malformed model file: ") + e.what());
    }
    if (s.rbm.visible() != s.stpn.patterns()) throw DataError("energy model does not match the pattern count");
    if (s.a3 && (s.a3->inputs() != s.stpn.patterns() || s.a3->outputs() != s.stpn.patterns()))
        throw DataError("A3 classifier does not match the pattern count");
    return s;
}

inline void save_system(const std::string& path, const TrainedSystem& s) {
    write_file_atomic(path, to_json(s).dump() + "\n");
}

inline TrainedSystem load_system(const std::string& path) {
    return system_from_json(read_document(path, "stpnrca-model", model_file_version));
}

}  // namespace stpnrca
