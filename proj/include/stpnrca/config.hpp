#pragma once

// Run configuration: a key = value text file ('#' starts a comment), every
// key optional, unknown keys rejected. README.md lists the keys.

#include "stpnrca/a3.hpp"
#include "stpnrca/energy.hpp"
#include "stpnrca/error.hpp"
#include "stpnrca/s3.hpp"
#include "stpnrca/stpn.hpp"

#include <charconv>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace stpnrca {

inline constexpr const char* config_env_var = "STPNRCA_CONFIG";

struct RunConfig {
    StpnConfig stpn;

    std::size_t rbm_hidden = 0;  ///< 0: choose from rbm_hidden_candidates
    std::vector<std::size_t> rbm_hidden_candidates{16, 32, 64, 128, 256};
    RbmTrainConfig rbm;
    double detector_kappa = 1.0;
    Aggregation detector_aggregation = Aggregation::single_window;
    std::size_t detector_window_count = 1;

    A3TrainConfig a3;
    AnomalyGeneration a3_generation;
    double a3_cutoff = 0.5;

    S3Options s3;
    std::size_t var_lag = 1;
    double var_eta = 0.4;
    /// A pattern enters a multi-window summary when flagged in at least this
    /// fraction of the analyzed windows.
    double case_fraction = 0.5;

    /// Canonical key = value listing, sorted by key.
    std::string canonical() const;
};

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline std::string format_double(double v) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return {buf, r.ptr};
}

inline std::string join(const std::vector<std::size_t>& xs) {
    std::string s;
    for (std::size_t i = 0; i < xs.size(); ++i) s += (i ? "," : "") + std::to_string(xs[i]);
    return s;
}

struct ConfigKey {
    std::function<void(RunConfig&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

inline std::size_t parse_count(const std::string& key, const std::string& v) {
    std::size_t out = 0;
    const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
    if (r.ec != std::errc{} || r.ptr != v.data() + v.size())
        throw UsageError("config key '" + key + "': '" + v + "' is not a nonnegative integer");
    return out;
}

inline double parse_real(const std::string& key, const std::string& v) {
    double out = 0.0;
    const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
    if (r.ec != std::errc{} || r.ptr != v.data() + v.size() || !std::isfinite(out))
        throw UsageError("config key '" + key + "': '" + v + "' is not a finite number");
    return out;
}

inline std::vector<std::size_t> parse_counts(const std::string& key, const std::string& v) {
    std::vector<std::size_t> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(parse_count(key, trim(item)));
    if (out.empty()) throw UsageError("config key '" + key + "' needs at least one value");
    return out;
}

inline const std::map<std::string, ConfigKey>& config_keys() {
    using C = RunConfig;
    static const std::map<std::string, ConfigKey> keys = [] {
        std::map<std::string, ConfigKey> k;
        auto count = [&](const char* name, auto member) {
            k[name] = {[=](C& c, const std::string& v) { member(c) = parse_count(name, v); },
                       [=](const C& c) { return std::to_string(member(c)); }};
        };
        auto real = [&](const char* name, auto member) {
            k[name] = {[=](C& c, const std::string& v) { member(c) = parse_real(name, v); },
                       [=](const C& c) { return format_double(member(c)); }};
        };
        auto counts = [&](const char* name, auto member) {
            k[name] = {[=](C& c, const std::string& v) { member(c) = parse_counts(name, v); },
                       [=](const C& c) { return join(member(c)); }};
        };
        count("alphabet_size", [](auto& c) -> auto& { return c.stpn.alphabet_size; });
        count("depth", [](auto& c) -> auto& { return c.stpn.depth; });
        count("lag", [](auto& c) -> auto& { return c.stpn.lag; });
        count("window_length", [](auto& c) -> auto& { return c.stpn.window_length; });
        count("stride", [](auto& c) -> auto& { return c.stpn.stride; });
        real("threshold_quantile", [](auto& c) -> auto& { return c.stpn.threshold_quantile; });
        k["partition"] = {[](C& c, const std::string& v) {
                              if (v == "mep") c.stpn.method = PartitionMethod::maximum_entropy;
                              else if (v == "uniform") c.stpn.method = PartitionMethod::uniform;
                              else throw UsageError("config key 'partition': expected mep or uniform, got '" + v + "'");
                          },
                          [](const C& c) {
                              return std::string(c.stpn.method == PartitionMethod::uniform ? "uniform" : "mep");
                          }};
        count("rbm_hidden", [](auto& c) -> auto& { return c.rbm_hidden; });
        counts("rbm_hidden_candidates", [](auto& c) -> auto& { return c.rbm_hidden_candidates; });
        count("rbm_epochs", [](auto& c) -> auto& { return c.rbm.epochs; });
        real("rbm_learning_rate", [](auto& c) -> auto& { return c.rbm.learning_rate; });
        count("rbm_batch_size", [](auto& c) -> auto& { return c.rbm.batch_size; });
        count("rbm_seed", [](auto& c) -> auto& { return c.rbm.seed; });
        real("detector_kappa", [](auto& c) -> auto& { return c.detector_kappa; });
        k["detector_aggregation"] = {[](C& c, const std::string& v) {
                                         if (v == "single") c.detector_aggregation = Aggregation::single_window;
                                         else if (v == "mean") c.detector_aggregation = Aggregation::mean_over_k;
                                         else throw UsageError("config key 'detector_aggregation': expected single or mean, got '" + v + "'");
                                     },
                                     [](const C& c) {
                                         return std::string(c.detector_aggregation == Aggregation::mean_over_k ? "mean" : "single");
                                     }};
        count("detector_window_count", [](auto& c) -> auto& { return c.detector_window_count; });
        counts("a3_hidden", [](auto& c) -> auto& { return c.a3.hidden; });
        real("a3_dropout", [](auto& c) -> auto& { return c.a3.dropout; });
        count("a3_batch_size", [](auto& c) -> auto& { return c.a3.batch_size; });
        real("a3_learning_rate", [](auto& c) -> auto& { return c.a3.learning_rate; });
        real("a3_momentum", [](auto& c) -> auto& { return c.a3.momentum; });
        count("a3_max_epochs", [](auto& c) -> auto& { return c.a3.max_epochs; });
        count("a3_patience", [](auto& c) -> auto& { return c.a3.patience; });
        count("a3_seed", [](auto& c) -> auto& { return c.a3.seed; });
        counts("a3_flip_orders", [](auto& c) -> auto& { return c.a3_generation.flip_orders; });
        count("a3_samples_per_order", [](auto& c) -> auto& { return c.a3_generation.samples_per_order; });
        count("a3_generation_seed", [](auto& c) -> auto& { return c.a3_generation.seed; });
        real("a3_cutoff", [](auto& c) -> auto& { return c.a3_cutoff; });
        real("s3_tolerance", [](auto& c) -> auto& { return c.s3.tolerance; });
        count("var_lag", [](auto& c) -> auto& { return c.var_lag; });
        real("var_eta", [](auto& c) -> auto& { return c.var_eta; });
        real("case_fraction", [](auto& c) -> auto& { return c.case_fraction; });
        return k;
    }();
    return keys;
}

}  // namespace detail

/// Throws UsageError naming the first out-of-range field.
inline void validate(const RunConfig& c) {
    detail::check_window_config(c.stpn);
    auto need = [](bool ok, const char* what) {
        if (!ok) throw UsageError(std::string("config: ") + what);
    };
    for (auto h : c.rbm_hidden_candidates) need(h >= 1, "rbm_hidden_candidates entries must be positive");
    need(c.rbm.epochs >= 1, "rbm_epochs must be positive");
    need(c.rbm.learning_rate > 0.0, "rbm_learning_rate must be positive");
    need(c.rbm.batch_size >= 1, "rbm_batch_size must be positive");
    need(c.detector_kappa >= 0.0, "detector_kappa must be nonnegative");
    need(c.detector_window_count >= 1, "detector_window_count must be positive");
    for (auto h : c.a3.hidden) need(h >= 1, "a3_hidden entries must be positive");
    need(c.a3.dropout >= 0.0 && c.a3.dropout < 1.0, "a3_dropout must lie in [0, 1)");
    need(c.a3.batch_size >= 1, "a3_batch_size must be positive");
    need(c.a3.learning_rate > 0.0, "a3_learning_rate must be positive");
    need(c.a3.momentum >= 0.0 && c.a3.momentum < 1.0, "a3_momentum must lie in [0, 1)");
    need(c.a3.max_epochs >= 1, "a3_max_epochs must be positive");
    need(c.a3.patience >= 1, "a3_patience must be positive");
    for (auto k : c.a3_generation.flip_orders) need(k >= 1, "a3_flip_orders entries must be positive");
    need(c.a3_cutoff > 0.0 && c.a3_cutoff < 1.0, "a3_cutoff must lie in (0, 1)");
    need(c.s3.tolerance >= 0.0, "s3_tolerance must be nonnegative");
    need(c.var_lag >= 1, "var_lag must be positive");
    need(c.var_eta > 0.0 && c.var_eta < 1.0, "var_eta must lie in (0, 1)");
    need(c.case_fraction > 0.0 && c.case_fraction <= 1.0, "case_fraction must lie in (0, 1]");
}

inline void set_config_value(RunConfig& c, const std::string& key, const std::string& value) {
    const auto& keys = detail::config_keys();
    const auto it = keys.find(key);
    if (it == keys.end()) throw UsageError("unknown config key '" + key + "'");
    it->second.set(c, detail::trim(value));
}

inline std::string get_config_value(const RunConfig& c, const std::string& key) {
    const auto& keys = detail::config_keys();
    const auto it = keys.find(key);
    if (it == keys.end()) throw UsageError("unknown config key '" + key + "'");
    return it->second.get(c);
}

inline std::vector<std::string> config_key_names() {
    std::vector<std::string> out;
    for (const auto& [k, _] : detail::config_keys()) out.push_back(k);
    return out;
}

inline std::string RunConfig::canonical() const {
    std::string s;
    for (const auto& [k, key] : detail::config_keys()) s += k + " = " + key.get(*this) + "\n";
    return s;
}

/// Applies the key = value lines of `text` on top of `base`.
inline RunConfig parse_config(const std::string& text, RunConfig base = {}, const std::string& origin = "config") {
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw UsageError(origin + ":" + std::to_string(lineno) + ": expected key = value");
        try {
            set_config_value(base, detail::trim(line.substr(0, eq)), line.substr(eq + 1));
        } catch (const UsageError& e) {
            throw UsageError(origin + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    validate(base);
    return base;
}

inline RunConfig load_config(const std::string& path, RunConfig base = {}) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open config file '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), std::move(base), path);
}

/// The explicit path if given, else $STPNRCA_CONFIG if set, else defaults.
inline RunConfig resolve_config(const std::string& explicit_path) {
    if (!explicit_path.empty()) return load_config(explicit_path);
    if (const char* env = std::getenv(config_env_var); env && *env) return load_config(env);
    return {};
}

/// 64-bit FNV-1a; stable across platforms and runs.
inline std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 0x100000001b3ull;
    }
    return h;
}

inline constexpr int model_format_version = 1;

inline std::string config_fingerprint(const RunConfig& c) {
    const auto h = fnv1a(c.canonical() + "model_format_version = " + std::to_string(model_format_version) + "\n");
    std::ostringstream os;
    os << std::hex;
    os.width(16);
    os.fill('0');
    os << h;
    return os.str();
}

}  // namespace stpnrca
