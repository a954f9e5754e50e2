#pragma once

// Spatiotemporal pattern network: one state->symbol count matrix per ordered
// channel pair (a -> b), learned from nominal data, plus per-pattern
// thresholds that turn a window's metric grid into a binary pattern vector.

#include "stpnrca/error.hpp"
#include "stpnrca/symdyn.hpp"

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

namespace stpnrca {

/// One bit per pattern, index a * f + b for pattern a -> b (diagonal = atomic
/// patterns). 1 = pattern behaves as in the nominal model.
using PatternVector = std::vector<std::uint8_t>;

inline std::size_t pattern_index(std::size_t a, std::size_t b, std::size_t f) {
    if (a >= f || b >= f)
        throw UsageError("pattern (" + std::to_string(a) + "," + std::to_string(b) + ") out of range for " +
                         std::to_string(f) + " channels");
    return a * f + b;
}

inline std::pair<std::size_t, std::size_t> index_pattern(std::size_t i, std::size_t f) {
    if (i >= f * f)
        throw UsageError("pattern index " + std::to_string(i) + " out of range for " + std::to_string(f) +
                         " channels");
    return {i / f, i % f};
}

struct StpnConfig {
    std::size_t alphabet_size = 9;
    std::size_t depth = 1;
    std::size_t lag = 1;
    std::size_t window_length = 1200;
    std::size_t stride = 0;  ///< 0 means non-overlapping windows
    double threshold_quantile = 0.05;
    PartitionMethod method = PartitionMethod::maximum_entropy;

    std::size_t effective_stride() const { return stride == 0 ? window_length : stride; }
};

/// Counts and thresholds for one nominal operating mode.
struct ModeModel {
    std::vector<CountMatrix> counts;  ///< f*f, indexed by pattern_index
    std::vector<double> thresholds;   ///< f*f cutoffs on ln(metric)
};

struct StpnModel {
    std::vector<std::string> channel_names;
    PartitionScheme partition;
    std::size_t depth = 1;
    std::size_t lag = 1;
    std::size_t window_length = 0;
    std::size_t stride = 0;
    double threshold_quantile = 0.05;
    std::vector<ModeModel> modes;

    std::size_t channels() const { return channel_names.size(); }
    std::size_t patterns() const { return channels() * channels(); }
};

/// ln(metric) for every pattern of one window, scored against one mode.
struct WindowMetrics {
    std::size_t channels = 0;
    std::size_t mode = 0;
    std::vector<double> log_metric;  ///< f*f, indexed by pattern_index

    double at(std::size_t a, std::size_t b) const { return log_metric[pattern_index(a, b, channels)]; }
    double total() const {
        double s = 0.0;
        for (double v : log_metric) s += v;
        return s;
    }
};

/// Start offsets of all full windows.
inline std::vector<std::size_t> window_starts(std::size_t length, std::size_t window_length, std::size_t stride) {
    if (window_length == 0 || stride == 0) throw UsageError("window length and stride must be positive");
    std::vector<std::size_t> starts;
    for (std::size_t s = 0; s + window_length <= length; s += stride) starts.push_back(s);
    return starts;
}

namespace detail {

/// Count matrices of all f*f patterns over one symbolized segment.
inline std::vector<CountMatrix> pattern_counts(const SymbolSequence& symbols, std::size_t depth, std::size_t lag) {
    const auto states = states_from_symbols(symbols, depth);
    const std::size_t f = symbols.channels();
    std::vector<CountMatrix> out;
    out.reserve(f * f);
    for (std::size_t a = 0; a < f; ++a)
        for (std::size_t b = 0; b < f; ++b) out.push_back(count_matrix(states, a, symbols, b, lag));
    return out;
}

inline SymbolSequence symbol_slice(const SymbolSequence& s, std::size_t start, std::size_t count) {
    SymbolSequence out;
    out.alphabet_size = s.alphabet_size;
    out.symbols.reserve(s.channels());
    for (const auto& ch : s.symbols)
        out.symbols.emplace_back(ch.begin() + static_cast<std::ptrdiff_t>(start),
                                 ch.begin() + static_cast<std::ptrdiff_t>(start + count));
    return out;
}

inline std::vector<double> metrics_against(const std::vector<CountMatrix>& model,
                                           const std::vector<CountMatrix>& window) {
    std::vector<double> out(model.size());
    for (std::size_t i = 0; i < model.size(); ++i) out[i] = log_inference_metric(model[i], window[i]);
    return out;
}

/// Empirical q-quantile used as a ">= threshold" cutoff: the value at sorted
/// position floor(q * n), so at most floor(q * n) samples fall strictly below.
inline double lower_quantile(std::vector<double> values, double q) {
    std::sort(values.begin(), values.end());
    auto i = static_cast<std::size_t>(q * static_cast<double>(values.size()));
    if (i >= values.size()) i = values.size() - 1;
    return values[i];
}

inline void check_window_config(const StpnConfig& c) {
    if (c.alphabet_size < 2) throw UsageError("alphabet_size must be at least 2");
    if (c.depth < 1) throw UsageError("depth must be at least 1");
    if (c.lag < 1) throw UsageError("lag must be at least 1");
    if (c.window_length < c.alphabet_size) throw UsageError("window_length must be at least the alphabet size");
    if (c.window_length <= c.depth - 1 + c.lag) throw UsageError("window_length too short for depth and lag");
    if (!(c.threshold_quantile >= 0.0 && c.threshold_quantile < 1.0))
        throw UsageError("threshold_quantile must lie in [0, 1)");
}

}  // namespace detail

/// Leave-one-window-out metrics of the nominal windows of one mode: each
/// window is scored against the mode's counts with its own pairs removed, so
/// the scored window never contributes to the model it is compared with.
inline std::vector<WindowMetrics> holdout_window_metrics(const StpnModel& model, std::size_t mode,
                                                         const TimeSeries& nominal) {
    if (mode >= model.modes.size()) throw UsageError("mode index out of range");
    const auto symbols = symbolize(nominal, model.partition);
    std::vector<WindowMetrics> out;
    for (auto start : window_starts(nominal.length(), model.window_length, model.stride)) {
        const auto window = detail::pattern_counts(detail::symbol_slice(symbols, start, model.window_length),
                                                   model.depth, model.lag);
        WindowMetrics wm;
        wm.channels = model.channels();
        wm.mode = mode;
        wm.log_metric.resize(window.size());
        for (std::size_t i = 0; i < window.size(); ++i) {
            CountMatrix rest = model.modes[mode].counts[i];
            rest -= window[i];
            wm.log_metric[i] = log_inference_metric(rest, window[i]);
        }
        out.push_back(std::move(wm));
    }
    return out;
}

/// Learns the partition on all nominal data pooled, then one count grid and
/// one threshold grid per nominal mode. Pass a single series when modes are
/// not labelled.
inline StpnModel train_stpn(const std::vector<TimeSeries>& nominal_modes, const StpnConfig& config) {
    detail::check_window_config(config);
    if (nominal_modes.empty()) throw UsageError("train_stpn needs at least one nominal series");
    for (const auto& ts : nominal_modes)
        if (ts.length() < 2 * config.window_length)
            throw DataError("nominal series of length " + std::to_string(ts.length()) +
                            " is shorter than twice the window length " + std::to_string(config.window_length));

    StpnModel model;
    model.channel_names = nominal_modes.front().names();
    model.partition = learn_partition(concatenate(nominal_modes), config.alphabet_size, config.method);
    model.depth = config.depth;
    model.lag = config.lag;
    model.window_length = config.window_length;
    model.stride = config.effective_stride();
    model.threshold_quantile = config.threshold_quantile;

    for (const auto& ts : nominal_modes) {
        ModeModel mm;
        mm.counts = detail::pattern_counts(symbolize(ts, model.partition), model.depth, model.lag);
        model.modes.push_back(std::move(mm));
    }
    const std::size_t p = model.patterns();
    for (std::size_t m = 0; m < nominal_modes.size(); ++m) {
        const auto metrics = holdout_window_metrics(model, m, nominal_modes[m]);
        auto& thr = model.modes[m].thresholds;
        thr.resize(p);
        std::vector<double> column(metrics.size());
        for (std::size_t i = 0; i < p; ++i) {
            for (std::size_t w = 0; w < metrics.size(); ++w) column[w] = metrics[w].log_metric[i];
            thr[i] = detail::lower_quantile(column, config.threshold_quantile);
        }
    }
    return model;
}

/// Scores a window against every mode and keeps the mode under which the
/// fewest patterns fall below their thresholds; ties go to the larger summed
/// ln(metric), then to the lower mode index.
inline WindowMetrics window_metrics(const StpnModel& model, const TimeSeries& window) {
    if (window.length() != model.window_length)
        throw DataError("window has " + std::to_string(window.length()) + " samples, model expects " +
                        std::to_string(model.window_length));
    if (window.channels() != model.channels())
        throw DataError("window has " + std::to_string(window.channels()) + " channels, model expects " +
                        std::to_string(model.channels()));
    const auto counts = detail::pattern_counts(symbolize(window, model.partition), model.depth, model.lag);
    WindowMetrics best;
    std::size_t best_failed = std::numeric_limits<std::size_t>::max();
    double best_total = -std::numeric_limits<double>::infinity();
    for (std::size_t m = 0; m < model.modes.size(); ++m) {
        WindowMetrics wm{model.channels(), m, detail::metrics_against(model.modes[m].counts, counts)};
        const auto& thr = model.modes[m].thresholds;
        std::size_t failed = 0;
        for (std::size_t i = 0; i < thr.size(); ++i) failed += wm.log_metric[i] < thr[i];
        const double t = wm.total();
        if (failed < best_failed || (failed == best_failed && t > best_total)) {
            best_failed = failed;
            best_total = t;
            best = std::move(wm);
        }
    }
    return best;
}

/// Bit i is 1 iff ln(metric) >= threshold (inclusive).
inline PatternVector binarize(const WindowMetrics& metrics, const StpnModel& model) {
    if (metrics.mode >= model.modes.size()) throw UsageError("window metrics reference an unknown mode");
    const auto& thr = model.modes[metrics.mode].thresholds;
    if (metrics.log_metric.size() != thr.size()) throw UsageError("metric grid does not match the model");
    PatternVector v(thr.size());
    for (std::size_t i = 0; i < thr.size(); ++i) v[i] = metrics.log_metric[i] >= thr[i] ? 1 : 0;
    return v;
}

/// Holdout-binarized vectors of every nominal window of every mode, in mode
/// order. These are the vectors the energy model is trained on.
inline std::vector<PatternVector> nominal_pattern_vectors(const StpnModel& model,
                                                          const std::vector<TimeSeries>& nominal_modes,
                                                          std::vector<std::size_t>* modes_out = nullptr) {
    if (nominal_modes.size() != model.modes.size())
        throw UsageError("expected " + std::to_string(model.modes.size()) + " nominal series, got " +
                         std::to_string(nominal_modes.size()));
    std::vector<PatternVector> out;
    for (std::size_t m = 0; m < nominal_modes.size(); ++m)
        for (const auto& wm : holdout_window_metrics(model, m, nominal_modes[m])) {
            out.push_back(binarize(wm, model));
            if (modes_out) modes_out->push_back(m);
        }
    return out;
}

}  // namespace stpnrca
