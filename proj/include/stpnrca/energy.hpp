#pragma once

// Binary restricted Boltzmann machine over pattern vectors: CD-1 training,
// free energy, free energy of a vector with a set of bits switched, and a
// free-energy threshold detector.

#include "stpnrca/error.hpp"
#include "stpnrca/stpn.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace stpnrca {

struct RbmParams {
    Eigen::VectorXd visible_bias;  ///< a, length n_v
    Eigen::VectorXd hidden_bias;   ///< b, length n_h
    Eigen::MatrixXd weights;       ///< W, n_v x n_h

    std::size_t visible() const { return static_cast<std::size_t>(visible_bias.size()); }
    std::size_t hidden() const { return static_cast<std::size_t>(hidden_bias.size()); }

    bool trained() const { return visible() > 0 && hidden() > 0; }
};

struct RbmTrainConfig {
    std::size_t hidden = 32;
    std::size_t epochs = 200;
    double learning_rate = 0.05;
    std::size_t batch_size = 32;
    std::uint64_t seed = 1;
};

/// ln(1 + e^x) without overflow.
inline double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

inline double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

namespace detail {

inline void check_vector(const RbmParams& p, std::span<const std::uint8_t> v) {
    if (!p.trained()) throw UsageError("energy model has no parameters");
    if (v.size() != p.visible())
        throw UsageError("pattern vector has " + std::to_string(v.size()) + " bits, model expects " +
                         std::to_string(p.visible()));
}

inline Eigen::MatrixXd to_matrix(std::span<const PatternVector> vectors) {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(vectors.size()), static_cast<Eigen::Index>(vectors.front().size()));
    for (std::size_t r = 0; r < vectors.size(); ++r)
        for (std::size_t c = 0; c < vectors[r].size(); ++c) m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = vectors[r][c];
    return m;
}

/// Free energy from the visible term and the hidden pre-activations.
inline double free_energy_from(double visible_term, const Eigen::VectorXd& pre) {
    double s = 0.0;
    for (Eigen::Index j = 0; j < pre.size(); ++j) s += softplus(pre[j]);
    return -visible_term - s;
}

}  // namespace detail

/// F(v) = -sum_i v_i a_i - sum_j ln(1 + exp(b_j + sum_i v_i W_ij)).
inline double free_energy(const RbmParams& p, std::span<const std::uint8_t> v) {
    detail::check_vector(p, v);
    Eigen::VectorXd pre = p.hidden_bias;
    double visible_term = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i)
        if (v[i]) {
            visible_term += p.visible_bias[static_cast<Eigen::Index>(i)];
            pre += p.weights.row(static_cast<Eigen::Index>(i)).transpose();
        }
    return detail::free_energy_from(visible_term, pre);
}

/// Free energy of v with the bits in flip_set switched (v*_h = 1 - v_h).
/// Listing an index twice switches it back.
inline double switched_free_energy(const RbmParams& p, std::span<const std::uint8_t> v,
                                   std::span<const std::size_t> flip_set) {
    detail::check_vector(p, v);
    PatternVector w(v.begin(), v.end());
    for (auto i : flip_set) {
        if (i >= w.size())
            throw UsageError("flip index " + std::to_string(i) + " out of range for " + std::to_string(w.size()) +
                             " patterns");
        w[i] ^= 1u;
    }
    return free_energy(p, w);
}

/// Contrastive divergence with one Gibbs step, mini-batches, and a fixed
/// seed. Visible biases start at the log-odds of the training bit rates.
inline RbmParams train_rbm(std::span<const PatternVector> vectors, const RbmTrainConfig& config) {
    if (vectors.empty()) throw UsageError("cannot train the energy model on an empty set");
    if (config.hidden < 1) throw UsageError("energy model needs at least one hidden unit");
    if (config.batch_size < 1) throw UsageError("batch size must be positive");
    const std::size_t nv = vectors.front().size();
    for (const auto& v : vectors)
        if (v.size() != nv) throw UsageError("training vectors have inconsistent lengths");

    std::mt19937_64 rng(config.seed);
    std::normal_distribution<double> init(0.0, 0.01);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    const auto data = detail::to_matrix(vectors);
    const auto n = static_cast<Eigen::Index>(nv);
    const auto h = static_cast<Eigen::Index>(config.hidden);

    RbmParams p;
    p.weights.resize(n, h);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < h; ++j) p.weights(i, j) = init(rng);
    p.hidden_bias = Eigen::VectorXd::Zero(h);
    p.visible_bias.resize(n);
    const Eigen::VectorXd rate = data.colwise().mean().transpose();
    for (Eigen::Index i = 0; i < n; ++i) {
        const double q = std::clamp(rate[i], 1e-3, 1.0 - 1e-3);
        p.visible_bias[i] = std::log(q / (1.0 - q));
    }

    std::vector<Eigen::Index> order(vectors.size());
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    const auto batch = static_cast<Eigen::Index>(config.batch_size);
    const auto rows = static_cast<Eigen::Index>(vectors.size());

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (Eigen::Index start = 0; start < rows; start += batch) {
            const Eigen::Index m = std::min(batch, rows - start);
            Eigen::MatrixXd v0(m, n);
            for (Eigen::Index r = 0; r < m; ++r) v0.row(r) = data.row(order[static_cast<std::size_t>(start + r)]);

            Eigen::MatrixXd h0 = ((v0 * p.weights).rowwise() + p.hidden_bias.transpose()).unaryExpr([](double x) { return sigmoid(x); });
            Eigen::MatrixXd h0s(m, h);
            for (Eigen::Index r = 0; r < m; ++r)
                for (Eigen::Index j = 0; j < h; ++j) h0s(r, j) = unit(rng) < h0(r, j) ? 1.0 : 0.0;
            Eigen::MatrixXd v1 =
                ((h0s * p.weights.transpose()).rowwise() + p.visible_bias.transpose()).unaryExpr([](double x) { return sigmoid(x); });
            Eigen::MatrixXd h1 = ((v1 * p.weights).rowwise() + p.hidden_bias.transpose()).unaryExpr([](double x) { return sigmoid(x); });

            const double scale = config.learning_rate / static_cast<double>(m);
            p.weights += scale * (v0.transpose() * h0 - v1.transpose() * h1);
            p.visible_bias += scale * (v0 - v1).colwise().sum().transpose();
            p.hidden_bias += scale * (h0 - h1).colwise().sum().transpose();
        }
    }
    for (Eigen::Index i = 0; i < p.weights.size(); ++i)
        if (!std::isfinite(p.weights.data()[i])) throw NumericalError("energy model training diverged");
    return p;
}

inline double mean_free_energy(const RbmParams& p, std::span<const PatternVector> vectors) {
    if (vectors.empty()) throw UsageError("mean free energy of an empty set");
    double s = 0.0;
    for (const auto& v : vectors) s += free_energy(p, v);
    return s / static_cast<double>(vectors.size());
}

struct HiddenUnitSelection {
    std::size_t hidden = 0;
    std::vector<std::pair<std::size_t, double>> scores;  ///< (n_h, mean held-out nominal F)
    RbmParams params;
};

/// Trains one model per candidate hidden-layer size and keeps the one with
/// the lowest mean free energy on held-out nominal vectors.
inline HiddenUnitSelection select_hidden_units(std::span<const PatternVector> train,
                                               std::span<const PatternVector> heldout,
                                               const std::vector<std::size_t>& candidates, RbmTrainConfig config) {
    if (candidates.empty()) throw UsageError("no hidden-unit candidates given");
    HiddenUnitSelection best;
    double best_score = std::numeric_limits<double>::infinity();
    for (auto nh : candidates) {
        config.hidden = nh;
        auto params = train_rbm(train, config);
        const double score = mean_free_energy(params, heldout);
        best.scores.emplace_back(nh, score);
        if (score < best_score) {
            best_score = score;
            best.hidden = nh;
            best.params = std::move(params);
        }
    }
    return best;
}

enum class Verdict { nominal, anomalous };

inline const char* to_string(Verdict v) { return v == Verdict::nominal ? "nominal" : "anomalous"; }

enum class Aggregation { single_window, mean_over_k };

struct DetectorConfig {
    double threshold = 0.0;  ///< F_thr
    Aggregation aggregation = Aggregation::single_window;
    std::size_t window_count = 1;  ///< k for mean_over_k
};

namespace detail {

/// Mean of f[max(0, w-k+1) .. w] for every w.
inline std::vector<double> trailing_means(const std::vector<double>& f, std::size_t k) {
    std::vector<double> out(f.size());
    for (std::size_t w = 0; w < f.size(); ++w) {
        const std::size_t lo = w + 1 >= k ? w + 1 - k : 0;
        double s = 0.0;
        for (std::size_t i = lo; i <= w; ++i) s += f[i];
        out[w] = s / static_cast<double>(w - lo + 1);
    }
    return out;
}

}  // namespace detail

/// F_thr = max + kappa * stddev of the nominal detection statistic: the free
/// energy of each window, or with mean_over_k the mean over the last k
/// windows of each block (a block is one contiguous nominal recording).
inline DetectorConfig calibrate_detector(const RbmParams& p, const std::vector<std::vector<PatternVector>>& blocks,
                                         double kappa, Aggregation aggregation = Aggregation::single_window,
                                         std::size_t window_count = 1) {
    if (!std::isfinite(kappa) || kappa < 0.0) throw UsageError("kappa must be finite and nonnegative");
    const std::size_t k = aggregation == Aggregation::mean_over_k ? std::max<std::size_t>(1, window_count) : 1;
    std::vector<double> stat;
    for (const auto& block : blocks) {
        std::vector<double> f;
        f.reserve(block.size());
        for (const auto& v : block) f.push_back(free_energy(p, v));
        const auto means = detail::trailing_means(f, k);
        // the first k-1 trailing means average fewer windows; keep them only
        // when the block is too short to fill one aggregate
        const std::size_t skip = block.size() >= k ? k - 1 : 0;
        stat.insert(stat.end(), means.begin() + static_cast<std::ptrdiff_t>(skip), means.end());
    }
    if (stat.empty()) throw UsageError("detector calibration needs nominal vectors");
    const double mean = std::accumulate(stat.begin(), stat.end(), 0.0) / static_cast<double>(stat.size());
    double var = 0.0;
    for (double x : stat) var += (x - mean) * (x - mean);
    const double sd = stat.size() > 1 ? std::sqrt(var / static_cast<double>(stat.size() - 1)) : 0.0;
    DetectorConfig cfg;
    cfg.threshold = *std::max_element(stat.begin(), stat.end()) + kappa * sd;
    cfg.aggregation = aggregation;
    cfg.window_count = std::max<std::size_t>(1, window_count);
    return cfg;
}

inline DetectorConfig calibrate_detector(const RbmParams& p, std::span<const PatternVector> nominal, double kappa,
                                         Aggregation aggregation = Aggregation::single_window,
                                         std::size_t window_count = 1) {
    return calibrate_detector(p, std::vector<std::vector<PatternVector>>{{nominal.begin(), nominal.end()}}, kappa,
                              aggregation, window_count);
}

/// Anomalous iff F(v) > F_thr.
inline Verdict detect(const RbmParams& p, std::span<const std::uint8_t> v, const DetectorConfig& cfg) {
    return free_energy(p, v) > cfg.threshold ? Verdict::anomalous : Verdict::nominal;
}

/// Per-window verdicts. With mean_over_k, window w is judged on the mean free
/// energy of windows max(0, w-k+1) .. w.
inline std::vector<Verdict> detect_stream(const RbmParams& p, std::span<const PatternVector> vectors,
                                          const DetectorConfig& cfg) {
    std::vector<double> f;
    f.reserve(vectors.size());
    for (const auto& v : vectors) f.push_back(free_energy(p, v));
    const std::size_t k = cfg.aggregation == Aggregation::mean_over_k ? cfg.window_count : 1;
    const auto stat = detail::trailing_means(f, k);
    std::vector<Verdict> out(vectors.size());
    for (std::size_t w = 0; w < f.size(); ++w) out[w] = stat[w] > cfg.threshold ? Verdict::anomalous : Verdict::nominal;
    return out;
}

}  // namespace stpnrca
