// stpnrca command-line front end: simulate, train, detect, rca, evaluate,
// bench. Exit codes: 0 ok, 1 usage, 2 data, 3 numerical (including a bench
// check that misses its threshold).

#include "stpnrca/bench.hpp"
#include "stpnrca/config.hpp"
#include "stpnrca/error.hpp"
#include "stpnrca/eval.hpp"
#include "stpnrca/io.hpp"
#include "stpnrca/pipeline.hpp"
#include "stpnrca/synth.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace stpnrca;

namespace {

struct Common {
    std::string config_path;
    std::vector<std::string> overrides;
    std::string format = "csv";
};

RunConfig load_run_config(const Common& c) {
    RunConfig cfg = resolve_config(c.config_path);
    for (const auto& kv : c.overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + kv + "'");
        set_config_value(cfg, detail::trim(kv.substr(0, eq)), kv.substr(eq + 1));
    }
    validate(cfg);
    return cfg;
}

TimeSeries read_series(const std::string& path, const std::string& format) {
    if (!fs::exists(path)) throw DataError("input file '" + path + "' does not exist");
    if (format == "csv") return read_csv(path);
    if (format == "tep") return read_tep(path);
    throw UsageError("unknown format '" + format + "' (expected csv or tep)");
}

void add_common(CLI::App* sub, Common& c, bool with_config) {
    if (with_config) {
        sub->add_option("--config", c.config_path, "key = value config file (default: $STPNRCA_CONFIG)");
        sub->add_option("--set", c.overrides, "override one config key, key=value (repeatable)");
    }
    sub->add_option("--format", c.format, "input format: csv or tep")->check(CLI::IsMember({"csv", "tep"}));
}

// simulate

struct SimulateArgs {
    std::string modes;
    std::size_t nodes = 0;
    std::uint64_t graph_seed = 1;
    std::size_t mode = 1;
    std::size_t length = 60000;
    std::string fault;
    std::size_t cases = 0;
    std::size_t nominal_length = 240000;
    std::uint64_t seed = 1;
    std::string out_dir = ".";
    std::string name = "series";
};

void write_labels(const std::string& path, const CaseLabels& l) { write_file_atomic(path, to_json(l).dump(2) + "\n"); }

int cmd_simulate(const SimulateArgs& a) {
    if (!fs::is_directory(a.out_dir)) throw UsageError("output directory '" + a.out_dir + "' does not exist");
    const bool builtin = a.modes == "builtin";
    if (!builtin && !a.modes.empty()) throw UsageError("--modes accepts only 'builtin'");
    if (builtin == (a.nodes > 0)) throw UsageError("give exactly one of --modes builtin or --nodes N");
    const auto dir = fs::path(a.out_dir);

    if (a.cases > 0) {
        if (!builtin) throw UsageError("--cases needs --modes builtin");
        if (!a.fault.empty()) throw UsageError("--cases generates its own faults; drop --fault");
        const auto modes = builtin_modes();
        auto suite = pattern_fault_suite(modes, a.seed);
        if (a.cases > suite.size()) throw UsageError("the pattern-fault suite has " + std::to_string(suite.size()) + " cases");
        suite.resize(a.cases);
        for (std::size_t m = 0; m < modes.size(); ++m) {
            const auto path = dir / ("mode" + std::to_string(m + 1) + "_nominal.csv");
            write_csv(path.string(), simulate_var(modes[m], a.nominal_length, a.seed * 100 + m));
            std::cout << "wrote " << path.string() << '\n';
        }
        for (const auto& c : suite) {
            const auto id = "case" + std::to_string(c.id + 1);
            const std::uint64_t seed = a.seed * 1000 + c.id;
            const auto& g = modes[c.mode];
            const auto ts = inject_fault(g, simulate_var(g, a.length, seed), c.fault, seed);
            write_csv((dir / (id + ".csv")).string(), ts);
            write_labels((dir / (id + ".labels.json")).string(), labels_for_fault(id, c.mode, g, c.fault));
            std::cout << "wrote " << (dir / (id + ".csv")).string() << "  mode " << c.mode + 1 << "  "
                      << to_string(c.fault) << '\n';
        }
        return 0;
    }

    CausalGraph g;
    std::optional<std::size_t> mode;
    if (builtin) {
        const auto modes = builtin_modes();
        if (a.mode < 1 || a.mode > modes.size()) throw UsageError("--mode must lie in 1..6");
        g = modes[a.mode - 1];
        mode = a.mode - 1;
    } else {
        g = random_graph(a.nodes, a.graph_seed);
    }
    std::optional<FaultSpec> spec;
    if (!a.fault.empty()) {
        spec = parse_fault_spec(a.fault);
        validate_fault(g, *spec);
    }
    auto ts = simulate_var(g, a.length, a.seed);
    CaseLabels labels;
    labels.case_id = a.name;
    labels.mode = mode;
    labels.channel_names = ts.names();
    if (spec) {
        ts = inject_fault(g, ts, *spec, a.seed);
        labels = labels_for_fault(a.name, mode, g, *spec);
    }
    write_csv((dir / (a.name + ".csv")).string(), ts);
    write_labels((dir / (a.name + ".labels.json")).string(), labels);
    std::cout << "wrote " << (dir / (a.name + ".csv")).string() << " (" << ts.length() << " samples, "
              << ts.channels() << " channels)\n";
    return 0;
}

// train

int cmd_train(const Common& c, const std::vector<std::string>& inputs, bool with_a3, const std::string& out) {
    const auto cfg = load_run_config(c);
    std::vector<TimeSeries> modes;
    for (const auto& p : inputs) modes.push_back(read_series(p, c.format));
    for (std::size_t i = 1; i < modes.size(); ++i)
        if (modes[i].names() != modes[0].names())
            throw DataError("'" + inputs[i] + "' has different channels than '" + inputs[0] + "'");
    const auto sys = train_system(modes, cfg, with_a3);
    save_system(out, sys);
    std::cout << "trained on " << modes.size() << " mode(s), " << sys.stpn.channels() << " channels, "
              << sys.rbm.hidden() << " hidden units" << (sys.a3 ? ", with A3" : "") << "\nwrote " << out << '\n';
    return 0;
}

// detect

int cmd_detect(const Common& c, const std::string& model, const std::string& input, const std::string& out) {
    const auto sys = load_system(model);
    const auto windows = analyze_windows(sys, read_series(input, c.format));
    std::ostringstream csv;
    csv << "window,start,mode,free_energy,verdict\n";
    std::size_t anomalous = 0;
    for (std::size_t i = 0; i < windows.size(); ++i) {
        const auto& w = windows[i];
        csv << i << ',' << w.start << ',' << w.mode + 1 << ',' << detail::format_double(w.free_energy) << ','
            << to_string(w.verdict) << '\n';
        anomalous += w.verdict == Verdict::anomalous;
    }
    if (!out.empty()) write_file_atomic(out, csv.str());
    std::cout << csv.str() << anomalous << "/" << windows.size() << " windows anomalous (threshold "
              << detail::format_double(sys.detector.threshold) << ")\n";
    return 0;
}

// rca

int cmd_rca(const Common& c, const std::string& model, const std::string& input, const std::string& method_name,
            bool force, const std::string& nominal, std::string case_id, const std::string& out) {
    const auto cfg = load_run_config(c);
    const auto method = parse_method(method_name);
    const auto test = read_series(input, c.format);
    RootCauseReport r;
    if (method == RcaMethod::var) {
        if (nominal.empty()) throw UsageError("--method var requires --nominal");
        r = run_var_rca(read_series(nominal, c.format), test, cfg);
    } else {
        if (model.empty()) throw UsageError("--method " + method_name + " requires --model");
        r = run_rca(load_system(model), test, method, force, cfg);
    }
    r.case_id = case_id.empty() ? fs::path(input).stem().string() : std::move(case_id);
    if (!out.empty()) write_file_atomic(out, to_json(r).dump(2) + "\n");

    std::cout << "case " << r.case_id << "  method " << to_string(r.method) << "  verdict " << to_string(r.verdict())
              << "  analyzed " << r.analyses.size() << "/" << r.windows.size() << " windows\n";
    std::cout << "anomalous patterns:";
    for (const auto& p : r.summary_patterns) {
        const auto [s, t] = index_pattern(p.index, r.channels());
        std::cout << "  " << r.channel_names[s] << "->" << r.channel_names[t] << " (" << detail::num(p.weight) << ")";
    }
    std::cout << "\ninferred nodes:";
    for (auto n : r.summary_nodes.selected) std::cout << "  " << r.channel_names[n];
    std::cout << "\nnode ranking:";
    for (std::size_t k = 0; k < r.node_ranking.size() && k < 10; ++k)
        std::cout << "  " << k + 1 << "." << r.channel_names[r.node_ranking[k]];
    if (r.node_ranking.size() > 10) std::cout << "  ...";
    std::cout << '\n';
    for (const auto& w : r.warnings) std::cerr << "warning: " << w << '\n';
    if (!out.empty()) std::cout << "wrote " << out << '\n';
    return 0;
}

// evaluate

/// fault number -> variable name, from a "fault,variable[,...]" CSV.
std::map<int, std::string> read_tep_lookup(const std::string& path) {
    std::istringstream in(read_file(path));
    std::map<int, std::string> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto h = line.find('#'); h != std::string::npos) line.erase(h);
        line = detail::trim(line);
        if (line.empty() || line.rfind("fault,", 0) == 0) continue;
        const auto fields = detail::split_fields(line, false);
        if (fields.size() < 2) throw DataError(path + ":" + std::to_string(lineno) + ": expected fault,variable");
        const auto n = detail::parse_number(fields[0]);
        if (!n) throw DataError(path + ":" + std::to_string(lineno) + ": fault number expected");
        out[static_cast<int>(*n)] = fields[1];
    }
    return out;
}

CaseLabels read_labels(const std::string& path, const std::optional<std::map<int, std::string>>& tep) {
    auto j = read_document(path, "stpnrca-labels", labels_format_version);
    if (j.contains("tep_fault")) {
        if (!tep) throw UsageError("'" + path + "' names a TEP fault; pass --tep-lookup");
        const int fault = j["tep_fault"].get<int>();
        const auto it = tep->find(fault);
        if (it == tep->end()) throw DataError("TEP fault " + std::to_string(fault) + " is not in the lookup");
        const auto names = tep_channel_names();
        const auto pos = std::find(names.begin(), names.end(), it->second);
        if (pos == names.end()) throw DataError("lookup variable '" + it->second + "' is not a TEP channel");
        j["channels"] = names;
        j["fault"] = "tep-fault:" + std::to_string(fault);
        j["failed_patterns"] = json::array();
        j["faulty_nodes"] = {static_cast<std::size_t>(pos - names.begin())};
    }
    try {
        return labels_from_json(j);
    } catch (const json::exception& e) {
        throw DataError("'" + path + "': " + e.what());
    }
}

int cmd_evaluate(const std::vector<std::string>& report_paths, const std::vector<std::string>& label_paths,
                 const std::string& tep_lookup, const std::string& out) {
    std::optional<std::map<int, std::string>> tep;
    if (!tep_lookup.empty()) tep = read_tep_lookup(tep_lookup);
    std::map<std::string, std::vector<RootCauseReport>> by_method;
    for (const auto& p : report_paths) {
        try {
            auto r = report_from_json(read_document(p, "stpnrca-report", report_format_version));
            by_method[to_string(r.method)].push_back(std::move(r));
        } catch (const json::exception& e) {
            throw DataError("'" + p + "': " + e.what());
        }
    }
    std::vector<CaseLabels> labels;
    for (const auto& p : label_paths) labels.push_back(read_labels(p, tep));
    std::vector<EvalReport> rows;
    for (const auto& [method, reports] : by_method) rows.push_back(evaluate_reports(reports, labels, method));
    if (!out.empty()) write_file_atomic(out, eval_csv(rows));
    std::cout << eval_table(rows);
    if (!out.empty()) std::cout << "wrote " << out << '\n';
    return 0;
}

// bench

int cmd_bench(std::vector<std::string> suites, bool verbose) {
    const auto known = bench_suites();
    if (suites.size() == 1 && suites.front() == "all") suites = known;
    for (const auto& s : suites)
        if (std::find(known.begin(), known.end(), s) == known.end()) {
            std::string list;
            for (const auto& k : known) list += " " + k;
            throw UsageError("unknown bench suite '" + s + "'; available:" + list + " all");
        }
    BenchLog log;
    if (verbose) log = [](const std::string& line) { std::cout << "  " << line << '\n' << std::flush; };
    std::optional<Dataset1Fixture> fx;
    auto fixture = [&]() -> const Dataset1Fixture& {
        if (!fx) {
            std::cout << "training the dataset1 system...\n" << std::flush;
            fx = make_dataset1();
        }
        return *fx;
    };
    bool all = true;
    for (const auto& s : suites) {
        BenchResult r;
        if (s == "prop1") r = bench_prop1(log);
        else if (s == "greedy") r = bench_greedy(100, 1000, log);
        else if (s == "dataset1-desk") r = bench_dataset1(fixture(), log);
        else if (s == "energy-gap") r = bench_energy_gap(fixture(), 1.0, 5, log);
        else if (s == "false-alarm") r = bench_false_alarm(fixture(), 500, log);
        else if (s == "node-desk") r = bench_node_desk({}, log);
        else if (s == "var-recovery") r = bench_var_recovery(20, 10000, 0.05, 500, log);
        std::cout << format_bench(r) << std::flush;
        all = all && r.passed();
    }
    return all ? 0 : static_cast<int>(ExitCode::numerical);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Root-cause analysis for multivariate time series with spatiotemporal pattern networks"};
    app.require_subcommand(1);

    SimulateArgs sim;
    auto* simulate = app.add_subcommand("simulate", "generate VAR benchmark data with ground-truth labels");
    simulate->add_option("--modes", sim.modes, "'builtin' for the six 5-node modes");
    simulate->add_option("--nodes", sim.nodes, "random stationary graph with this many nodes");
    simulate->add_option("--graph-seed", sim.graph_seed, "seed of the random graph");
    simulate->add_option("--mode", sim.mode, "builtin mode to simulate (1-6)");
    simulate->add_option("--length", sim.length, "samples per series");
    simulate->add_option("--fault", sim.fault, "pattern-break:S-T[,S-T...] or node-delay:NODE:DELAY (1-based nodes)");
    simulate->add_option("--cases", sim.cases, "write this many cases of the 30-case pattern-fault suite");
    simulate->add_option("--nominal-length", sim.nominal_length, "samples per nominal mode series with --cases");
    simulate->add_option("--seed", sim.seed, "noise seed");
    simulate->add_option("--out-dir", sim.out_dir, "output directory");
    simulate->add_option("--name", sim.name, "output base name and case id");

    Common tc;
    std::vector<std::string> train_inputs;
    bool train_a3 = false;
    std::string train_out = "model.json";
    auto* train = app.add_subcommand("train", "train STPN, energy model and detector (and optionally A3)");
    add_common(train, tc, true);
    train->add_option("nominal", train_inputs, "nominal series, one file per operating mode")->required();
    train->add_flag("--a3", train_a3, "also train the A3 classifier");
    train->add_option("-o,--output", train_out, "model file");

    Common dc;
    std::string detect_model, detect_input, detect_out;
    auto* detect = app.add_subcommand("detect", "per-window anomaly verdicts");
    add_common(detect, dc, false);
    detect->add_option("--model", detect_model, "model file")->required();
    detect->add_option("input", detect_input, "test series")->required();
    detect->add_option("-o,--output", detect_out, "verdict CSV");

    Common rc;
    std::string rca_model, rca_input, rca_method = "s3", rca_nominal, rca_case, rca_out;
    bool rca_force = false;
    auto* rca = app.add_subcommand("rca", "root-cause analysis report");
    add_common(rca, rc, true);
    rca->add_option("--model", rca_model, "model file (s3, a3)");
    rca->add_option("input", rca_input, "test series")->required();
    rca->add_option("--method", rca_method, "s3, a3 or var")->check(CLI::IsMember({"s3", "a3", "var"}));
    rca->add_flag("--force", rca_force, "analyze every window, not only anomalous ones");
    rca->add_option("--nominal", rca_nominal, "nominal series for the VAR baseline");
    rca->add_option("--case-id", rca_case, "case id (default: input file stem)");
    rca->add_option("-o,--output", rca_out, "report JSON");

    std::vector<std::string> eval_reports, eval_labels;
    std::string eval_tep, eval_out;
    auto* evaluate = app.add_subcommand("evaluate", "score reports against label files");
    evaluate->add_option("--reports", eval_reports, "report files")->required();
    evaluate->add_option("--labels", eval_labels, "label files")->required();
    evaluate->add_option("--tep-lookup", eval_tep, "TEP fault -> variable CSV for labels naming a tep_fault");
    evaluate->add_option("-o,--output", eval_out, "CSV table");

    std::vector<std::string> bench_names;
    bool bench_verbose = false;
    auto* bench = app.add_subcommand("bench", "run benchmark suites and compare against thresholds");
    bench->add_option("suite", bench_names, "suite names, or all")->required();
    bench->add_flag("-v,--verbose", bench_verbose, "per-case progress");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : static_cast<int>(ExitCode::usage);
    }

    try {
        if (*simulate) return cmd_simulate(sim);
        if (*train) return cmd_train(tc, train_inputs, train_a3, train_out);
        if (*detect) return cmd_detect(dc, detect_model, detect_input, detect_out);
        if (*rca) return cmd_rca(rc, rca_model, rca_input, rca_method, rca_force, rca_nominal, rca_case, rca_out);
        if (*evaluate) return cmd_evaluate(eval_reports, eval_labels, eval_tep, eval_out);
        if (*bench) return cmd_bench(bench_names, bench_verbose);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return static_cast<int>(e.code());
    } catch (const std::bad_alloc&) {
        std::cerr << "error: out of memory\n";
        return static_cast<int>(ExitCode::numerical);
    }
    return static_cast<int>(ExitCode::usage);
}
