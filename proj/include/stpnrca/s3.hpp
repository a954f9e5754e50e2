#pragma once

// Sequential state switching: greedily switch the pattern bits whose
// switching lowers the free energy the most, until no remaining candidate
// lowers it further. The switched bits are the anomalous patterns.

#include "stpnrca/energy.hpp"
#include "stpnrca/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace stpnrca {

struct S3Result {
    std::vector<std::size_t> anomalous_patterns;  ///< in order of selection
    /// Relative free-energy decrease when only that pattern is switched:
    /// (F0 - F_i) / |F0|. Equals (F_i - F0) / F0 for the usual negative F0.
    std::vector<double> weights;
    std::vector<double> trace;  ///< F0 followed by F after each accepted switch
    double initial_energy = 0.0;
    double final_energy = 0.0;
};

struct S3Options {
    double tolerance = 1e-9;  ///< minimum decrease that counts as strict
};

namespace detail {

/// Free energy bookkeeping for incremental bit switches.
class SwitchState {
public:
    SwitchState(const RbmParams& p, std::span<const std::uint8_t> v) : p_(p), v_(v.begin(), v.end()) {
        pre_ = p.hidden_bias;
        for (std::size_t i = 0; i < v_.size(); ++i)
            if (v_[i]) {
                visible_ += p.visible_bias[static_cast<Eigen::Index>(i)];
                pre_ += p.weights.row(static_cast<Eigen::Index>(i)).transpose();
            }
    }

    double energy() const { return free_energy_from(visible_, pre_); }

    /// Energy after switching bit i, without committing.
    double energy_if_switched(std::size_t i) const {
        const auto r = static_cast<Eigen::Index>(i);
        const double sign = v_[i] ? -1.0 : 1.0;
        double s = 0.0;
        for (Eigen::Index j = 0; j < pre_.size(); ++j) s += softplus(pre_[j] + sign * p_.weights(r, j));
        return -(visible_ + sign * p_.visible_bias[r]) - s;
    }

    void commit(std::size_t i) {
        const auto r = static_cast<Eigen::Index>(i);
        const double sign = v_[i] ? -1.0 : 1.0;
        visible_ += sign * p_.visible_bias[r];
        pre_ += sign * p_.weights.row(r).transpose();
        v_[i] ^= 1u;
    }

    const PatternVector& vector() const { return v_; }

private:
    const RbmParams& p_;
    PatternVector v_;
    Eigen::VectorXd pre_;
    double visible_ = 0.0;
};

inline double relative_drop(double f0, double fi) {
    const double d = f0 - fi;
    return std::abs(f0) < 1e-12 ? d : d / std::abs(f0);
}

}  // namespace detail

/// Greedy minimisation of the free energy over switched pattern subsets.
/// Candidates are the bits whose single switch lowers F(v); at each step the
/// candidate with the largest decrease on top of the accumulated switches is
/// accepted (lowest index on ties) and removed. Stops when no remaining
/// candidate lowers the current energy by more than the tolerance.
inline S3Result s3_search(const RbmParams& p, std::span<const std::uint8_t> v, const S3Options& options = {}) {
    detail::check_vector(p, v);
    detail::SwitchState state(p, v);
    S3Result out;
    out.initial_energy = state.energy();
    out.trace.push_back(out.initial_energy);

    std::vector<std::size_t> candidates;
    for (std::size_t i = 0; i < v.size(); ++i)
        if (state.energy_if_switched(i) < out.initial_energy - options.tolerance) candidates.push_back(i);

    double current = out.initial_energy;
    while (!candidates.empty()) {
        std::size_t best_pos = candidates.size();
        double best_energy = current - options.tolerance;
        for (std::size_t k = 0; k < candidates.size(); ++k) {
            const double e = state.energy_if_switched(candidates[k]);
            if (e < best_energy) {
                best_energy = e;
                best_pos = k;
            }
        }
        if (best_pos == candidates.size()) break;
        const std::size_t chosen = candidates[best_pos];
        state.commit(chosen);
        current = state.energy();
        out.anomalous_patterns.push_back(chosen);
        out.trace.push_back(current);
        candidates.erase(candidates.begin() + static_cast<std::ptrdiff_t>(best_pos));
    }
    out.final_energy = current;

    detail::SwitchState fresh(p, v);
    for (auto i : out.anomalous_patterns)
        out.weights.push_back(detail::relative_drop(out.initial_energy, fresh.energy_if_switched(i)));
    return out;
}

/// The vector with the bits S3 selected switched back.
inline PatternVector apply_switches(std::span<const std::uint8_t> v, std::span<const std::size_t> switches) {
    PatternVector out(v.begin(), v.end());
    for (auto i : switches) out.at(i) ^= 1u;
    return out;
}

struct SwitchOracleResult {
    std::vector<std::size_t> flips;  ///< ascending indices
    double energy = 0.0;
};

/// Brute force over all 2^n switch subsets; returns the global minimiser of
/// F. Ties go to the smaller subset, then the lexicographically smaller one.
inline SwitchOracleResult exhaustive_switch_oracle(const RbmParams& p, std::span<const std::uint8_t> v,
                                                   std::size_t max_bits = 16) {
    detail::check_vector(p, v);
    if (max_bits > 16) throw UsageError("exhaustive switch oracle supports at most 16 bits");
    if (v.size() > max_bits)
        throw UsageError("exhaustive switch oracle limited to " + std::to_string(max_bits) + " bits, vector has " +
                         std::to_string(v.size()));
    const std::size_t n = v.size();
    SwitchOracleResult best;
    best.energy = std::numeric_limits<double>::infinity();
    PatternVector w(n);
    std::vector<std::size_t> flips;
    for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
        flips.clear();
        for (std::size_t i = 0; i < n; ++i) {
            const bool on = (mask >> i) & 1u;
            w[i] = static_cast<std::uint8_t>(v[i] ^ (on ? 1u : 0u));
            if (on) flips.push_back(i);
        }
        const double e = free_energy(p, w);
        const bool better = e < best.energy ||
                            (e == best.energy && (flips.size() < best.flips.size() ||
                                                  (flips.size() == best.flips.size() && flips < best.flips)));
        if (better) {
            best.energy = e;
            best.flips = flips;
        }
    }
    return best;
}

/// KL(test || nominal) between histograms of two free-energy samples on a
/// shared equal-width binning over the pooled range, with add-one smoothing.
inline double kld_distance(std::span<const double> nominal, std::span<const double> test, std::size_t bins) {
    if (nominal.size() < 2 || test.size() < 2) throw UsageError("KL distance needs at least 2 samples per set");
    if (bins < 1) throw UsageError("KL distance needs at least one bin");
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (double x : nominal) lo = std::min(lo, x), hi = std::max(hi, x);
    for (double x : test) lo = std::min(lo, x), hi = std::max(hi, x);
    if (!std::isfinite(lo) || !std::isfinite(hi)) throw NumericalError("non-finite free energy sample");
    if (hi == lo) throw DataError("degenerate histograms: all samples are identical");

    auto histogram = [&](std::span<const double> xs) {
        std::vector<double> h(bins, 1.0);
        for (double x : xs) {
            auto b = static_cast<std::size_t>((x - lo) / (hi - lo) * static_cast<double>(bins));
            h[std::min(b, bins - 1)] += 1.0;
        }
        const double total = static_cast<double>(xs.size() + bins);
        for (auto& c : h) c /= total;
        return h;
    };
    const auto pn = histogram(nominal);
    const auto pt = histogram(test);
    double kl = 0.0;
    for (std::size_t b = 0; b < bins; ++b) kl += pt[b] * std::log(pt[b] / pn[b]);
    return std::max(kl, 0.0);
}

}  // namespace stpnrca
