#pragma once

// Artificial anomaly association: a multi-label feedforward network that maps
// a pattern vector to one nominal/anomalous indicator per pattern. Training
// data comes from nominal vectors with random bits switched; the label is 0
// exactly where a bit was switched.

#include "stpnrca/energy.hpp"
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
#include <vector>

namespace stpnrca {

struct A3Dataset {
    std::vector<PatternVector> inputs;
    std::vector<PatternVector> labels;  ///< 1 = nominal pattern, 0 = anomalous

    std::size_t size() const { return inputs.size(); }
};

struct AnomalyGeneration {
    std::vector<std::size_t> flip_orders{1, 2, 3, 4};
    std::size_t samples_per_order = 5;
    std::uint64_t seed = 1;
    /// Enumerate every single-bit switch instead of sampling (order 1 only).
    bool exhaustive_single = false;
};

inline A3Dataset generate_artificial_anomalies(std::span<const PatternVector> nominal, const AnomalyGeneration& gen) {
    if (nominal.empty()) throw UsageError("artificial anomaly generation needs nominal vectors");
    const std::size_t n = nominal.front().size();
    for (auto k : gen.flip_orders)
        if (k < 1 || k > n)
            throw UsageError("flip order " + std::to_string(k) + " outside 1.." + std::to_string(n));

    std::mt19937_64 rng(gen.seed);
    std::vector<std::size_t> idx(n);
    A3Dataset out;
    for (const auto& v : nominal) {
        if (v.size() != n) throw UsageError("nominal vectors have inconsistent lengths");
        out.inputs.push_back(v);
        out.labels.emplace_back(n, 1);
        for (auto k : gen.flip_orders) {
            if (gen.exhaustive_single && k == 1) {
                for (std::size_t i = 0; i < n; ++i) {
                    PatternVector x = v;
                    PatternVector y(n, 1);
                    x[i] ^= 1u;
                    y[i] = 0;
                    out.inputs.push_back(std::move(x));
                    out.labels.push_back(std::move(y));
                }
                continue;
            }
            for (std::size_t s = 0; s < gen.samples_per_order; ++s) {
                std::iota(idx.begin(), idx.end(), std::size_t{0});
                // partial Fisher-Yates: first k entries are a uniform k-subset
                for (std::size_t j = 0; j < k; ++j) {
                    std::uniform_int_distribution<std::size_t> pick(j, n - 1);
                    std::swap(idx[j], idx[pick(rng)]);
                }
                PatternVector x = v;
                PatternVector y(n, 1);
                for (std::size_t j = 0; j < k; ++j) {
                    x[idx[j]] ^= 1u;
                    y[idx[j]] = 0;
                }
                out.inputs.push_back(std::move(x));
                out.labels.push_back(std::move(y));
            }
        }
    }
    return out;
}

struct MlpLayer {
    Eigen::MatrixXd weights;  ///< out x in
    Eigen::VectorXd bias;
};

/// Rectifier hidden layers, logistic outputs. dropout[l] applies to the
/// output of hidden layer l during training only.
struct MlpParams {
    std::vector<MlpLayer> layers;
    std::vector<double> dropout;

    std::size_t inputs() const { return layers.empty() ? 0 : static_cast<std::size_t>(layers.front().weights.cols()); }
    std::size_t outputs() const { return layers.empty() ? 0 : static_cast<std::size_t>(layers.back().weights.rows()); }
};

struct A3TrainConfig {
    std::vector<std::size_t> hidden{256, 256};
    double dropout = 0.5;
    std::size_t batch_size = 64;
    double learning_rate = 0.05;
    double momentum = 0.9;
    std::size_t max_epochs = 60;
    std::size_t patience = 5;
    std::uint64_t seed = 1;
};

struct A3Training {
    MlpParams params;
    double initial_train_loss = 0.0;
    std::vector<double> train_loss;       ///< per epoch, full pass without dropout
    std::vector<double> validation_loss;  ///< per epoch
    std::size_t best_epoch = 0;           ///< index into validation_loss
};

namespace detail {

inline Eigen::MatrixXd columns_of(std::span<const PatternVector> vs) {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(vs.front().size()), static_cast<Eigen::Index>(vs.size()));
    for (std::size_t c = 0; c < vs.size(); ++c)
        for (std::size_t r = 0; r < vs[c].size(); ++r) m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = vs[c][r];
    return m;
}

/// Column-batch forward pass; returns activations per layer (input first)
/// and the output logits.
struct Forward {
    std::vector<Eigen::MatrixXd> activations;
    std::vector<Eigen::MatrixXd> masks;
    Eigen::MatrixXd logits;
};

inline Forward forward(const MlpParams& p, const Eigen::MatrixXd& x, std::mt19937_64* rng) {
    Forward f;
    f.activations.push_back(x);
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
        Eigen::MatrixXd z = (p.layers[l].weights * f.activations.back()).colwise() + p.layers[l].bias;
        if (l + 1 == p.layers.size()) {
            f.logits = std::move(z);
            break;
        }
        z = z.cwiseMax(0.0);
        const double drop = l < p.dropout.size() ? p.dropout[l] : 0.0;
        if (rng && drop > 0.0) {
            std::uniform_real_distribution<double> unit(0.0, 1.0);
            Eigen::MatrixXd mask(z.rows(), z.cols());
            const double keep = 1.0 - drop;
            for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = unit(*rng) < keep ? 1.0 / keep : 0.0;
            z = z.cwiseProduct(mask);
            f.masks.push_back(std::move(mask));
        } else {
            f.masks.emplace_back();
        }
        f.activations.push_back(std::move(z));
    }
    return f;
}

/// Logistic cross-entropy of one logit against a 0/1 target, stable form.
inline double logistic_loss(double z, double y) { return softplus(z) - y * z; }

}  // namespace detail

/// Summed negative log-likelihood over examples and output positions,
/// dropout disabled.
inline double a3_loss(const MlpParams& p, std::span<const PatternVector> inputs, std::span<const PatternVector> labels) {
    if (inputs.size() != labels.size()) throw UsageError("input/label count mismatch");
    if (inputs.empty()) return 0.0;
    const auto f = detail::forward(p, detail::columns_of(inputs), nullptr);
    const auto y = detail::columns_of(labels);
    double s = 0.0;
    for (Eigen::Index i = 0; i < y.size(); ++i) s += detail::logistic_loss(f.logits.data()[i], y.data()[i]);
    return s;
}

/// Per-position losses summed over examples (their sum is a3_loss).
inline std::vector<double> a3_position_losses(const MlpParams& p, std::span<const PatternVector> inputs,
                                              std::span<const PatternVector> labels) {
    const auto f = detail::forward(p, detail::columns_of(inputs), nullptr);
    const auto y = detail::columns_of(labels);
    std::vector<double> out(static_cast<std::size_t>(y.rows()), 0.0);
    for (Eigen::Index c = 0; c < y.cols(); ++c)
        for (Eigen::Index r = 0; r < y.rows(); ++r)
            out[static_cast<std::size_t>(r)] += detail::logistic_loss(f.logits(r, c), y(r, c));
    return out;
}

/// Gradient of the summed loss over a batch (dropout disabled), laid out
/// like the parameters.
inline std::vector<MlpLayer> a3_gradient(const MlpParams& p, const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                                         const detail::Forward* fwd = nullptr) {
    detail::Forward local;
    if (!fwd) {
        local = detail::forward(p, x, nullptr);
        fwd = &local;
    }
    std::vector<MlpLayer> g(p.layers.size());
    Eigen::MatrixXd delta = fwd->logits.unaryExpr([](double z) { return sigmoid(z); }) - y;
    for (std::size_t l = p.layers.size(); l-- > 0;) {
        g[l].weights = delta * fwd->activations[l].transpose();
        g[l].bias = delta.rowwise().sum();
        if (l == 0) break;
        Eigen::MatrixXd back = p.layers[l].weights.transpose() * delta;
        const auto& a = fwd->activations[l];
        back = back.cwiseProduct(a.unaryExpr([](double v) { return v > 0.0 ? 1.0 : 0.0; }));
        if (fwd->masks[l - 1].size() > 0) back = back.cwiseProduct(fwd->masks[l - 1]);
        delta = std::move(back);
    }
    return g;
}

inline MlpParams init_mlp(std::size_t inputs, std::size_t outputs, const std::vector<std::size_t>& hidden,
                          double dropout, std::mt19937_64& rng) {
    MlpParams p;
    std::size_t in = inputs;
    std::vector<std::size_t> sizes = hidden;
    sizes.push_back(outputs);
    for (std::size_t l = 0; l < sizes.size(); ++l) {
        const std::size_t out = sizes[l];
        // He initialisation for rectifier layers
        std::normal_distribution<double> init(0.0, std::sqrt(2.0 / static_cast<double>(in)));
        MlpLayer layer;
        layer.weights.resize(static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in));
        for (Eigen::Index i = 0; i < layer.weights.size(); ++i) layer.weights.data()[i] = init(rng);
        layer.bias = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(out));
        p.layers.push_back(std::move(layer));
        in = out;
    }
    p.dropout.assign(hidden.size(), dropout);
    return p;
}

/// Mini-batch gradient descent with momentum on the mean per-example loss.
/// The data is shuffled once with the seed and split into equal training
/// and validation halves; training stops when the validation loss has not
/// improved for `patience` epochs and the best-validation parameters are
/// returned.
inline A3Training train_a3(const A3Dataset& data, const A3TrainConfig& config) {
    if (data.size() < 2) throw UsageError("A3 training needs at least 2 examples");
    if (data.inputs.size() != data.labels.size()) throw UsageError("A3 dataset input/label count mismatch");
    const std::size_t n = data.inputs.front().size();
    for (std::size_t i = 0; i < data.size(); ++i)
        if (data.inputs[i].size() != n || data.labels[i].size() != n)
            throw UsageError("A3 output width must equal the pattern vector length");
    if (config.batch_size < 1) throw UsageError("batch size must be positive");
    if (!(config.dropout >= 0.0 && config.dropout < 1.0)) throw UsageError("dropout must lie in [0, 1)");

    std::mt19937_64 rng(config.seed);
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    const std::size_t half = data.size() / 2;
    std::vector<PatternVector> tx, ty, vx, vy;
    for (std::size_t k = 0; k < data.size(); ++k) {
        const auto i = order[k];
        (k < half ? tx : vx).push_back(data.inputs[i]);
        (k < half ? ty : vy).push_back(data.labels[i]);
    }
    const Eigen::MatrixXd X = detail::columns_of(tx);
    const Eigen::MatrixXd Y = detail::columns_of(ty);

    A3Training out;
    out.params = init_mlp(n, n, config.hidden, config.dropout, rng);
    out.initial_train_loss = a3_loss(out.params, tx, ty);

    std::vector<MlpLayer> velocity(out.params.layers.size());
    for (std::size_t l = 0; l < velocity.size(); ++l) {
        velocity[l].weights = Eigen::MatrixXd::Zero(out.params.layers[l].weights.rows(), out.params.layers[l].weights.cols());
        velocity[l].bias = Eigen::VectorXd::Zero(out.params.layers[l].bias.size());
    }

    MlpParams best = out.params;
    double best_val = std::numeric_limits<double>::infinity();
    std::size_t since_best = 0;
    std::vector<Eigen::Index> cols(tx.size());
    std::iota(cols.begin(), cols.end(), Eigen::Index{0});
    const auto batch = static_cast<Eigen::Index>(config.batch_size);
    const auto total = static_cast<Eigen::Index>(tx.size());

    for (std::size_t epoch = 0; epoch < config.max_epochs; ++epoch) {
        std::shuffle(cols.begin(), cols.end(), rng);
        for (Eigen::Index start = 0; start < total; start += batch) {
            const Eigen::Index m = std::min(batch, total - start);
            Eigen::MatrixXd xb(X.rows(), m), yb(Y.rows(), m);
            for (Eigen::Index c = 0; c < m; ++c) {
                xb.col(c) = X.col(cols[static_cast<std::size_t>(start + c)]);
                yb.col(c) = Y.col(cols[static_cast<std::size_t>(start + c)]);
            }
            const auto fwd = detail::forward(out.params, xb, &rng);
            const auto g = a3_gradient(out.params, xb, yb, &fwd);
            const double step = config.learning_rate / static_cast<double>(m);
            for (std::size_t l = 0; l < g.size(); ++l) {
                velocity[l].weights = config.momentum * velocity[l].weights - step * g[l].weights;
                velocity[l].bias = config.momentum * velocity[l].bias - step * g[l].bias;
                out.params.layers[l].weights += velocity[l].weights;
                out.params.layers[l].bias += velocity[l].bias;
            }
        }
        const double tl = a3_loss(out.params, tx, ty);
        const double vl = a3_loss(out.params, vx, vy);
        if (!std::isfinite(tl) || !std::isfinite(vl)) throw NumericalError("A3 training diverged");
        out.train_loss.push_back(tl);
        out.validation_loss.push_back(vl);
        if (vl < best_val) {
            best_val = vl;
            best = out.params;
            out.best_epoch = epoch;
            since_best = 0;
        } else if (++since_best >= config.patience) {
            break;
        }
    }
    out.params = std::move(best);
    return out;
}

struct A3Inference {
    PatternVector indicator;                    ///< 1 = nominal
    std::vector<double> probability;            ///< logistic output per position
    std::vector<std::size_t> anomalous_patterns;  ///< positions with indicator 0
    std::vector<double> weights;                ///< 1 - probability at those positions
};

inline A3Inference infer_a3(const MlpParams& p, std::span<const std::uint8_t> v, double cutoff = 0.5) {
    if (p.layers.empty()) throw UsageError("A3 model has no parameters");
    if (v.size() != p.inputs())
        throw UsageError("pattern vector has " + std::to_string(v.size()) + " bits, A3 model expects " +
                         std::to_string(p.inputs()));
    if (!(cutoff > 0.0 && cutoff < 1.0)) throw UsageError("A3 cutoff must lie in (0, 1)");
    Eigen::MatrixXd x(static_cast<Eigen::Index>(v.size()), 1);
    for (std::size_t i = 0; i < v.size(); ++i) x(static_cast<Eigen::Index>(i), 0) = v[i];
    const auto f = detail::forward(p, x, nullptr);
    A3Inference out;
    out.indicator.resize(p.outputs());
    out.probability.resize(p.outputs());
    for (std::size_t i = 0; i < p.outputs(); ++i) {
        const double prob = sigmoid(f.logits(static_cast<Eigen::Index>(i), 0));
        out.probability[i] = prob;
        out.indicator[i] = prob >= cutoff ? 1 : 0;
        if (!out.indicator[i]) {
            out.anomalous_patterns.push_back(i);
            out.weights.push_back(1.0 - prob);
        }
    }
    return out;
}

}  // namespace stpnrca
