#pragma once

// Symbolic dynamics: partitioning of real-valued channels into symbols,
// depth-D state encoding, state->symbol count matrices and the
// count-based inference metric used to score short windows against a
// nominal model.

#include "stpnrca/error.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace stpnrca {

/// f named channels by T samples. Rows are samples, columns are channels.
class TimeSeries {
public:
    TimeSeries() = default;

    TimeSeries(std::vector<std::string> names, Eigen::MatrixXd values)
        : names_(std::move(names)), values_(std::move(values)) {
        if (names_.empty())
            throw DataError("time series needs at least one channel");
        if (static_cast<std::size_t>(values_.cols()) != names_.size())
            throw DataError("time series has " + std::to_string(values_.cols()) +
                            " value columns but " + std::to_string(names_.size()) + " names");
        if (values_.rows() < 2)
            throw DataError("time series needs at least 2 samples, got " +
                            std::to_string(values_.rows()));
        for (Eigen::Index c = 0; c < values_.cols(); ++c)
            for (Eigen::Index t = 0; t < values_.rows(); ++t)
                if (!std::isfinite(values_(t, c)))
                    throw DataError("non-finite value in channel '" + names_[c] + "' at sample " +
                                    std::to_string(t));
    }

    std::size_t length() const { return static_cast<std::size_t>(values_.rows()); }
    std::size_t channels() const { return names_.size(); }
    const std::vector<std::string>& names() const { return names_; }
    const Eigen::MatrixXd& values() const { return values_; }
    double operator()(std::size_t t, std::size_t c) const { return values_(t, c); }

    TimeSeries slice(std::size_t start, std::size_t count) const {
        if (start + count > length())
            throw UsageError("slice [" + std::to_string(start) + ", " + std::to_string(start + count) +
                             ") exceeds series length " + std::to_string(length()));
        return TimeSeries(names_, values_.middleRows(static_cast<Eigen::Index>(start),
                                                     static_cast<Eigen::Index>(count)));
    }

private:
    std::vector<std::string> names_;
    Eigen::MatrixXd values_;
};

/// Stacks series with identical channel names end to end.
inline TimeSeries concatenate(const std::vector<TimeSeries>& parts) {
    if (parts.empty()) throw UsageError("nothing to concatenate");
    Eigen::Index rows = 0;
    for (const auto& p : parts) {
        if (p.names() != parts.front().names())
            throw DataError("cannot concatenate series with different channel names");
        rows += static_cast<Eigen::Index>(p.length());
    }
    Eigen::MatrixXd all(rows, static_cast<Eigen::Index>(parts.front().channels()));
    Eigen::Index at = 0;
    for (const auto& p : parts) {
        all.middleRows(at, p.values().rows()) = p.values();
        at += p.values().rows();
    }
    return TimeSeries(parts.front().names(), std::move(all));
}

enum class PartitionMethod { maximum_entropy, uniform };

/// Per-channel interior bin edges. Channel c has alphabet_size - 1 strictly
/// increasing edges; symbol k covers [edge[k-1], edge[k]).
struct PartitionScheme {
    PartitionMethod method = PartitionMethod::maximum_entropy;
    std::size_t alphabet_size = 0;
    std::vector<std::vector<double>> edges;

    std::size_t channels() const { return edges.size(); }
};

/// Learns bin edges per channel. MEP places edges at the midpoints between
/// the order statistics that split the sorted samples into equally sized
/// bins; UP splits [min, max] into equal-width bins.
inline PartitionScheme learn_partition(const TimeSeries& ts, std::size_t alphabet_size,
                                       PartitionMethod method = PartitionMethod::maximum_entropy) {
    if (alphabet_size < 2)
        throw UsageError("alphabet size must be at least 2, got " + std::to_string(alphabet_size));
    const std::size_t n = ts.length();
    if (n < alphabet_size)
        throw DataError("need at least " + std::to_string(alphabet_size) + " samples to partition, got " +
                        std::to_string(n));

    PartitionScheme scheme;
    scheme.method = method;
    scheme.alphabet_size = alphabet_size;
    scheme.edges.resize(ts.channels());

    std::vector<double> sorted(n);
    for (std::size_t c = 0; c < ts.channels(); ++c) {
        for (std::size_t t = 0; t < n; ++t) sorted[t] = ts(t, c);
        std::sort(sorted.begin(), sorted.end());
        if (sorted.front() == sorted.back())
            throw DataError("degenerate partition: channel '" + ts.names()[c] + "' is constant");

        auto& e = scheme.edges[c];
        e.reserve(alphabet_size - 1);
        for (std::size_t k = 1; k < alphabet_size; ++k) {
            if (method == PartitionMethod::maximum_entropy) {
                const std::size_t i = k * n / alphabet_size;
                e.push_back(0.5 * (sorted[i - 1] + sorted[i]));
            } else {
                e.push_back(sorted.front() + (sorted.back() - sorted.front()) * static_cast<double>(k) /
                                                 static_cast<double>(alphabet_size));
            }
        }
        for (std::size_t k = 1; k < e.size(); ++k)
            if (!(e[k] > e[k - 1]))
                throw DataError("degenerate partition: channel '" + ts.names()[c] + "' has too many tied values for " +
                                std::to_string(alphabet_size) + " distinct bins");
    }
    return scheme;
}

/// Symbol indices in 0..alphabet_size-1, one sequence per channel.
struct SymbolSequence {
    std::size_t alphabet_size = 0;
    std::vector<std::vector<int>> symbols;

    std::size_t channels() const { return symbols.size(); }
    std::size_t length() const { return symbols.empty() ? 0 : symbols.front().size(); }
};

/// Symbol of a single value. A value equal to an edge goes to the higher bin.
inline int symbol_of(const std::vector<double>& edges, double value) {
    return static_cast<int>(std::upper_bound(edges.begin(), edges.end(), value) - edges.begin());
}

inline SymbolSequence symbolize(const TimeSeries& ts, const PartitionScheme& scheme) {
    if (scheme.channels() != ts.channels())
        throw DataError("partition has " + std::to_string(scheme.channels()) + " channels, series has " +
                        std::to_string(ts.channels()));
    SymbolSequence out;
    out.alphabet_size = scheme.alphabet_size;
    out.symbols.assign(ts.channels(), std::vector<int>(ts.length()));
    for (std::size_t c = 0; c < ts.channels(); ++c)
        for (std::size_t t = 0; t < ts.length(); ++t) out.symbols[c][t] = symbol_of(scheme.edges[c], ts(t, c));
    return out;
}

/// Depth-D states per channel. states[c][i] encodes the symbols at samples
/// i .. i+D-1 in base alphabet_size, oldest symbol most significant, so the
/// state index i corresponds to sample time i + D - 1.
struct StateSequence {
    std::size_t alphabet_size = 0;
    std::size_t depth = 1;
    std::vector<std::vector<int>> states;

    std::size_t state_count() const {
        std::size_t q = 1;
        for (std::size_t d = 0; d < depth; ++d) q *= alphabet_size;
        return q;
    }
    std::size_t channels() const { return states.size(); }
    std::size_t length() const { return states.empty() ? 0 : states.front().size(); }
};

inline StateSequence states_from_symbols(const SymbolSequence& ss, std::size_t depth) {
    if (depth < 1) throw UsageError("state depth must be at least 1");
    if (ss.length() < depth)
        throw DataError("symbol sequence of length " + std::to_string(ss.length()) + " is shorter than depth " +
                        std::to_string(depth));
    StateSequence out;
    out.alphabet_size = ss.alphabet_size;
    out.depth = depth;
    const std::size_t n = ss.length() - depth + 1;
    out.states.assign(ss.channels(), std::vector<int>(n));
    const int base = static_cast<int>(ss.alphabet_size);
    for (std::size_t c = 0; c < ss.channels(); ++c) {
        const auto& s = ss.symbols[c];
        for (std::size_t i = 0; i < n; ++i) {
            int q = 0;
            for (std::size_t d = 0; d < depth; ++d) q = q * base + s[i + d];
            out.states[c][i] = q;
        }
    }
    return out;
}

/// Inverse of the state encoding: the D symbols, oldest first.
inline std::vector<int> decode_state(int state, std::size_t depth, std::size_t alphabet_size) {
    std::vector<int> symbols(depth);
    const int base = static_cast<int>(alphabet_size);
    for (std::size_t d = depth; d-- > 0;) {
        symbols[d] = state % base;
        state /= base;
    }
    return symbols;
}

/// Row-major |Q^a| x |Sigma^b| matrix of state->symbol pair counts.
class CountMatrix {
public:
    CountMatrix() = default;
    CountMatrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, 0) {}

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::int64_t& operator()(std::size_t m, std::size_t n) { return data_[m * cols_ + n]; }
    std::int64_t operator()(std::size_t m, std::size_t n) const { return data_[m * cols_ + n]; }
    const std::vector<std::int64_t>& data() const { return data_; }
    std::vector<std::int64_t>& data() { return data_; }

    std::int64_t row_sum(std::size_t m) const {
        std::int64_t s = 0;
        for (std::size_t n = 0; n < cols_; ++n) s += (*this)(m, n);
        return s;
    }
    std::int64_t total() const {
        std::int64_t s = 0;
        for (auto v : data_) s += v;
        return s;
    }

    CountMatrix& operator+=(const CountMatrix& o) {
        require_same_shape(o);
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
        return *this;
    }
    CountMatrix& operator-=(const CountMatrix& o) {
        require_same_shape(o);
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
        return *this;
    }

    friend bool operator==(const CountMatrix&, const CountMatrix&) = default;

    void require_same_shape(const CountMatrix& o) const {
        if (rows_ != o.rows_ || cols_ != o.cols_)
            throw UsageError("count matrix shape mismatch: " + std::to_string(rows_) + "x" + std::to_string(cols_) +
                             " vs " + std::to_string(o.rows_) + "x" + std::to_string(o.cols_));
    }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<std::int64_t> data_;
};

/// N_mn = #{k : Q^a(k) = q_m and S^b(k + lag) = sigma_n}, where k ranges over
/// sample times that have both a state for channel a and a symbol for
/// channel b at k + lag.
inline CountMatrix count_matrix(const StateSequence& qs, std::size_t a, const SymbolSequence& ss, std::size_t b,
                                std::size_t lag) {
    if (lag < 1) throw UsageError("lag must be at least 1");
    if (a >= qs.channels() || b >= ss.channels()) throw UsageError("channel index out of range");
    const auto& q = qs.states[a];
    const auto& s = ss.symbols[b];
    const std::size_t first = qs.depth - 1;  // sample time of q[0]
    if (s.size() != q.size() + first) throw UsageError("state and symbol sequences cover different sample ranges");
    if (s.size() <= first + lag) throw DataError("no state-symbol pairs remain after the lag shift");

    CountMatrix n(qs.state_count(), ss.alphabet_size);
    for (std::size_t t = first; t + lag < s.size(); ++t) ++n(static_cast<std::size_t>(q[t - first]), static_cast<std::size_t>(s[t + lag]));
    return n;
}

/// ln of the inference metric with the proportionality constant dropped:
///   sum_m [ lnG(W_m+1) + lnG(N_m+|S|) - lnG(W_m+N_m+|S|) ]
///     + sum_mn [ lnG(W_mn+N_mn+1) - lnG(W_mn+1) - lnG(N_mn+1) ]
/// with N the model counts and W the window counts. Rows and cells with no
/// window counts contribute exactly zero and are skipped.
inline double log_inference_metric(const CountMatrix& model, const CountMatrix& window) {
    model.require_same_shape(window);
    const double sigma = static_cast<double>(model.cols());
    double total = 0.0;
    for (std::size_t m = 0; m < model.rows(); ++m) {
        std::int64_t wm = 0;
        std::int64_t nm = 0;
        for (std::size_t n = 0; n < model.cols(); ++n) {
            const auto w = window(m, n);
            const auto c = model(m, n);
            if (w < 0 || c < 0) throw UsageError("negative count in inference metric");
            wm += w;
            nm += c;
        }
        if (wm == 0) continue;
        const double wmd = static_cast<double>(wm);
        const double nmd = static_cast<double>(nm);
        total += std::lgamma(wmd + 1.0) + std::lgamma(nmd + sigma) - std::lgamma(wmd + nmd + sigma);
        for (std::size_t n = 0; n < model.cols(); ++n) {
            const auto w = window(m, n);
            if (w == 0) continue;
            const double wd = static_cast<double>(w);
            const double cd = static_cast<double>(model(m, n));
            total += std::lgamma(wd + cd + 1.0) - std::lgamma(wd + 1.0) - std::lgamma(cd + 1.0);
        }
    }
    return total;
}

/// Variation of the log metric caused by an anomaly (positive = the
/// anomalous window is less consistent with the model).
inline double metric_delta(double log_metric_nominal, double log_metric_anomalous) {
    return log_metric_nominal - log_metric_anomalous;
}

}  // namespace stpnrca
