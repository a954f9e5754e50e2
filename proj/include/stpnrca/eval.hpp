#pragma once

// Evaluation metrics for root-cause outputs.

#include "stpnrca/error.hpp"
#include "stpnrca/stpn.hpp"

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <iomanip>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace stpnrca {

/// Fraction of matching cells between two m x f^2 binary grids.
inline double pattern_accuracy(const std::vector<PatternVector>& truth, const std::vector<PatternVector>& pred) {
    if (truth.size() != pred.size()) throw UsageError("pattern accuracy: row counts differ");
    if (truth.empty()) throw UsageError("pattern accuracy of an empty set");
    std::size_t cells = 0, match = 0;
    for (std::size_t r = 0; r < truth.size(); ++r) {
        if (truth[r].size() != pred[r].size()) throw UsageError("pattern accuracy: row lengths differ");
        for (std::size_t c = 0; c < truth[r].size(); ++c) match += truth[r][c] == pred[r][c];
        cells += truth[r].size();
    }
    if (cells == 0) throw UsageError("pattern accuracy over zero cells");
    return static_cast<double>(match) / static_cast<double>(cells);
}

struct Prf {
    double recall = 0.0;
    double precision = 0.0;
    double f_measure = 0.0;
    std::size_t tp = 0, fp = 0, fn = 0;
};

/// Recall, precision and F from counts. An empty prediction has precision 1
/// when the truth is also empty, 0 otherwise; an empty truth has recall 1.
inline Prf prf_from_counts(std::size_t tp, std::size_t fp, std::size_t fn) {
    Prf r{0.0, 0.0, 0.0, tp, fp, fn};
    r.recall = tp + fn == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
    r.precision = tp + fp == 0 ? (fn == 0 ? 1.0 : 0.0) : static_cast<double>(tp) / static_cast<double>(tp + fp);
    r.f_measure = r.recall > 0.0 && r.precision > 0.0 ? 2.0 / (1.0 / r.recall + 1.0 / r.precision) : 0.0;
    return r;
}

inline Prf prf(const std::set<std::size_t>& truth, const std::set<std::size_t>& pred, std::size_t universe) {
    for (auto x : truth)
        if (x >= universe) throw UsageError("truth element outside the universe");
    for (auto x : pred)
        if (x >= universe) throw UsageError("predicted element outside the universe");
    std::size_t tp = 0;
    for (auto x : pred) tp += truth.count(x);
    return prf_from_counts(tp, pred.size() - tp, truth.size() - tp);
}

struct ErrorRatio {
    std::size_t predicted = 0;  ///< |anomalous|
    std::size_t incorrect = 0;  ///< |not attributable|
    std::optional<double> ratio;  ///< empty when nothing was predicted
};

inline ErrorRatio error_ratio(const std::vector<std::size_t>& pred_patterns,
                              const std::function<bool(std::size_t)>& attributable) {
    ErrorRatio r;
    r.predicted = pred_patterns.size();
    for (auto p : pred_patterns) r.incorrect += attributable(p) ? 0 : 1;
    if (r.predicted > 0) r.ratio = static_cast<double>(r.incorrect) / static_cast<double>(r.predicted);
    return r;
}

/// The node-incidence predicate: pattern a -> b is attributable iff a or b
/// is one of the faulty nodes.
inline std::function<bool(std::size_t)> incident_to(std::vector<std::size_t> nodes, std::size_t f) {
    return [nodes = std::move(nodes), f](std::size_t p) {
        const auto [a, b] = index_pattern(p, f);
        return std::find(nodes.begin(), nodes.end(), a) != nodes.end() ||
               std::find(nodes.begin(), nodes.end(), b) != nodes.end();
    };
}

struct DiagnosisCost {
    std::size_t cost = 0;
    bool found = true;  ///< false: node absent, cost = (ranking length + 1) x n
};

inline DiagnosisCost diagnosis_cost(const std::vector<std::size_t>& ranking, std::size_t true_node,
                                    std::size_t n_measurements) {
    const auto it = std::find(ranking.begin(), ranking.end(), true_node);
    if (it == ranking.end()) return {(ranking.size() + 1) * n_measurements, false};
    return {static_cast<std::size_t>(it - ranking.begin() + 1) * n_measurements, true};
}

/// Mean fraction of the f^2 patterns flagged per nominal case.
inline double false_alarm_pattern_fraction(const std::vector<std::vector<std::size_t>>& flagged, std::size_t f) {
    if (flagged.empty()) return 0.0;
    if (f == 0) throw UsageError("false alarm fraction needs at least one channel");
    double s = 0.0;
    for (const auto& case_flags : flagged) {
        std::set<std::size_t> uniq(case_flags.begin(), case_flags.end());
        for (auto p : uniq)
            if (p >= f * f) throw UsageError("flagged pattern out of range");
        s += static_cast<double>(uniq.size()) / static_cast<double>(f * f);
    }
    return s / static_cast<double>(flagged.size());
}

/// One row of an evaluation table. Fields not measured by a run stay empty.
struct EvalReport {
    std::string label;
    std::size_t cases = 0;
    std::optional<double> accuracy;
    std::optional<Prf> patterns;
    std::optional<Prf> nodes;
    std::optional<ErrorRatio> error;
    std::vector<std::pair<std::string, DiagnosisCost>> diagnosis_costs;
    std::optional<double> false_alarm_fraction;
};

namespace detail {

inline std::string fmt(const std::optional<double>& v, int digits = 4) {
    if (!v) return "NA";
    std::ostringstream os;
    os << std::fixed << std::setprecision(digits) << *v;
    return os.str();
}

}  // namespace detail

inline std::vector<std::string> eval_columns() {
    return {"label", "cases", "alpha1", "recall", "precision", "f_measure", "node_recall", "node_precision",
            "node_f_measure", "predicted", "incorrect", "epsilon", "false_alarm_fraction", "diagnosis_cost"};
}

inline std::vector<std::string> eval_cells(const EvalReport& r) {
    using detail::fmt;
    auto part = [](const std::optional<Prf>& p, double Prf::*m) -> std::optional<double> {
        if (!p) return std::nullopt;
        return (*p).*m;
    };
    std::string costs;
    for (const auto& [name, c] : r.diagnosis_costs) {
        if (!costs.empty()) costs += ";";
        costs += name + "=" + std::to_string(c.cost) + (c.found ? "" : "*");
    }
    return {r.label,
            std::to_string(r.cases),
            fmt(r.accuracy),
            fmt(part(r.patterns, &Prf::recall)),
            fmt(part(r.patterns, &Prf::precision)),
            fmt(part(r.patterns, &Prf::f_measure)),
            fmt(part(r.nodes, &Prf::recall)),
            fmt(part(r.nodes, &Prf::precision)),
            fmt(part(r.nodes, &Prf::f_measure)),
            r.error ? std::to_string(r.error->predicted) : "NA",
            r.error ? std::to_string(r.error->incorrect) : "NA",
            fmt(r.error ? r.error->ratio : std::nullopt),
            fmt(r.false_alarm_fraction),
            costs.empty() ? "NA" : costs};
}

inline std::string eval_csv(const std::vector<EvalReport>& rows) {
    std::ostringstream os;
    const auto cols = eval_columns();
    for (std::size_t i = 0; i < cols.size(); ++i) os << (i ? "," : "") << cols[i];
    os << '\n';
    for (const auto& r : rows) {
        const auto cells = eval_cells(r);
        for (std::size_t i = 0; i < cells.size(); ++i) os << (i ? "," : "") << cells[i];
        os << '\n';
    }
    return os.str();
}

/// Space-aligned table; NA marks metrics a run did not produce, '*' marks a
/// diagnosis cost whose true node was missing from the ranking.
inline std::string eval_table(const std::vector<EvalReport>& rows) {
    std::vector<std::vector<std::string>> grid{eval_columns()};
    for (const auto& r : rows) grid.push_back(eval_cells(r));
    std::vector<std::size_t> width(grid.front().size(), 0);
    for (const auto& row : grid)
        for (std::size_t i = 0; i < row.size(); ++i) width[i] = std::max(width[i], row[i].size());
    std::ostringstream os;
    for (const auto& row : grid) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i) os << "  ";
            os << std::setw(static_cast<int>(width[i])) << (i == 0 ? std::left : std::right) << row[i];
        }
        os << '\n';
    }
    return os.str();
}

}  // namespace stpnrca
