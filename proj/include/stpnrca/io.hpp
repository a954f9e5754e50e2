#pragma once

// File formats: CSV time series, the TEP column adapter, JSON persistence of
// trained models, and atomic file writes.

#include "stpnrca/a3.hpp"
#include "stpnrca/config.hpp"
#include "stpnrca/energy.hpp"
#include "stpnrca/error.hpp"
#include "stpnrca/stpn.hpp"
#include "stpnrca/symdyn.hpp"

#include <Eigen/Dense>
#include <json.hpp>

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

namespace stpnrca {

using json = nlohmann::json;

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Writes to a sibling temporary file and renames it over `path`, so readers
/// never see a partial file.
inline void write_file_atomic(const std::string& path, const std::string& content) {
    namespace fs = std::filesystem;
    const fs::path target(path);
    if (target.has_parent_path() && !fs::exists(target.parent_path()))
        throw DataError("output directory '" + target.parent_path().string() + "' does not exist");
    const fs::path tmp = target.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError("cannot write '" + tmp.string() + "'");
        out << content;
        out.flush();
        if (!out) {
            std::error_code ec;
            fs::remove(tmp, ec);
            throw DataError("write to '" + tmp.string() + "' failed");
        }
    }
    std::error_code ec;
    fs::rename(tmp, target, ec);
    if (ec) {
        fs::remove(tmp, ec);
        throw DataError("cannot move output into place at '" + path + "'");
    }
}

namespace detail {

inline std::vector<std::string> split_fields(const std::string& line, bool whitespace) {
    std::vector<std::string> out;
    if (whitespace) {
        std::istringstream ss(line);
        std::string tok;
        while (ss >> tok) out.push_back(tok);
        return out;
    }
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(trim(cur));
            cur.clear();
        } else {
            cur += ch;
        }
    }
    out.push_back(trim(cur));
    return out;
}

inline std::optional<double> parse_number(const std::string& s) {
    double v = 0.0;
    const char* b = s.data();
    const char* e = s.data() + s.size();
    if (b != e && *b == '+') ++b;
    const auto r = std::from_chars(b, e, v);
    if (r.ec != std::errc{} || r.ptr != e || b == e) return std::nullopt;
    return v;
}

inline std::string strip_cr(std::string line) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return line;
}

}  // namespace detail

/// First row channel names, then one row per sample. Blank lines are
/// skipped; ragged or non-numeric rows fail with their line number.
inline TimeSeries parse_csv(const std::string& text, const std::string& origin = "csv") {
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    std::vector<std::string> names;
    while (names.empty() && std::getline(in, line)) {
        ++lineno;
        line = detail::strip_cr(line);
        if (detail::trim(line).empty()) continue;
        names = detail::split_fields(line, false);
    }
    if (names.empty()) throw DataError(origin + ": empty file");
    for (const auto& n : names)
        if (n.empty()) throw DataError(origin + ":" + std::to_string(lineno) + ": empty channel name");

    std::vector<double> values;
    std::size_t rows = 0;
    while (std::getline(in, line)) {
        ++lineno;
        line = detail::strip_cr(line);
        if (detail::trim(line).empty()) continue;
        const auto fields = detail::split_fields(line, false);
        if (fields.size() != names.size())
            throw DataError(origin + ":" + std::to_string(lineno) + ": expected " + std::to_string(names.size()) +
                            " fields, got " + std::to_string(fields.size()));
        for (std::size_t c = 0; c < fields.size(); ++c) {
            const auto v = detail::parse_number(fields[c]);
            if (!v || !std::isfinite(*v))
                throw DataError(origin + ":" + std::to_string(lineno) + ": field " + std::to_string(c + 1) + " ('" +
                                fields[c] + "') is not a finite number");
            values.push_back(*v);
        }
        ++rows;
    }
    if (rows < 2) throw DataError(origin + ": need at least 2 samples, got " + std::to_string(rows));
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(names.size()));
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < names.size(); ++c)
            m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = values[r * names.size() + c];
    try {
        return TimeSeries(std::move(names), std::move(m));
    } catch (const Error& e) {
        throw DataError(origin + ": " + e.what());
    }
}

inline TimeSeries read_csv(const std::string& path) { return parse_csv(read_file(path), path); }

inline std::string to_csv(const TimeSeries& ts) {
    std::string out;
    for (std::size_t c = 0; c < ts.channels(); ++c) out += (c ? "," : "") + ts.names()[c];
    out += '\n';
    char buf[64];
    for (std::size_t t = 0; t < ts.length(); ++t) {
        for (std::size_t c = 0; c < ts.channels(); ++c) {
            const auto r = std::to_chars(buf, buf + sizeof buf, ts(t, c));
            if (c) out += ',';
            out.append(buf, r.ptr);
        }
        out += '\n';
    }
    return out;
}

inline void write_csv(const std::string& path, const TimeSeries& ts) { write_file_atomic(path, to_csv(ts)); }

inline constexpr std::size_t tep_columns = 52;

/// XMEAS(1) .. XMEAS(41), XMV(1) .. XMV(11).
inline std::vector<std::string> tep_channel_names() {
    std::vector<std::string> names;
    for (int i = 1; i <= 41; ++i) names.push_back("XMEAS(" + std::to_string(i) + ")");
    for (int i = 1; i <= 11; ++i) names.push_back("XMV(" + std::to_string(i) + ")");
    return names;
}

/// TEP data files: 52 numeric columns per row, separated by commas or
/// whitespace. A leading non-numeric row is treated as a header and ignored.
inline TimeSeries parse_tep(const std::string& text, const std::string& origin = "tep") {
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    std::vector<double> values;
    std::size_t rows = 0;
    bool first = true;
    while (std::getline(in, line)) {
        ++lineno;
        line = detail::strip_cr(line);
        if (detail::trim(line).empty()) continue;
        const bool comma = line.find(',') != std::string::npos;
        const auto fields = detail::split_fields(line, !comma);
        if (first) {
            first = false;
            if (!fields.empty() && !detail::parse_number(fields.front())) continue;
        }
        if (fields.size() != tep_columns)
            throw DataError(origin + ":" + std::to_string(lineno) + ": expected 52 TEP columns, got " +
                            std::to_string(fields.size()));
        for (std::size_t c = 0; c < fields.size(); ++c) {
            const auto v = detail::parse_number(fields[c]);
            if (!v || !std::isfinite(*v))
                throw DataError(origin + ":" + std::to_string(lineno) + ": field " + std::to_string(c + 1) +
                                " is not a finite number");
            values.push_back(*v);
        }
        ++rows;
    }
    if (rows < 2) throw DataError(origin + ": need at least 2 samples, got " + std::to_string(rows));
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(tep_columns));
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < tep_columns; ++c)
            m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = values[r * tep_columns + c];
    return TimeSeries(tep_channel_names(), std::move(m));
}

inline TimeSeries read_tep(const std::string& path) { return parse_tep(read_file(path), path); }

// JSON encodings. Every top-level document carries "kind" and "version";
// readers reject anything else.

inline json to_json(const Eigen::MatrixXd& m) {
    json rows = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline json to_json(const Eigen::VectorXd& v) {
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
    return a;
}

inline Eigen::MatrixXd matrix_from_json(const json& j) {
    const auto rows = static_cast<Eigen::Index>(j.size());
    const auto cols = rows ? static_cast<Eigen::Index>(j.at(0).size()) : 0;
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        if (static_cast<Eigen::Index>(j.at(r).size()) != cols) throw DataError("ragged matrix in model file");
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = j.at(r).at(c).get<double>();
    }
    return m;
}

inline Eigen::VectorXd vector_from_json(const json& j) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = j.at(i).get<double>();
    return v;
}

inline json to_json(const CountMatrix& m) {
    json rows = json::array();
    for (std::size_t r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (std::size_t c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline CountMatrix count_matrix_from_json(const json& j) {
    const std::size_t rows = j.size();
    const std::size_t cols = rows ? j.at(0).size() : 0;
    CountMatrix m(rows, cols);
    for (std::size_t r = 0; r < rows; ++r) {
        if (j.at(r).size() != cols) throw DataError("ragged count matrix in model file");
        for (std::size_t c = 0; c < cols; ++c) m(r, c) = j.at(r).at(c).get<std::int64_t>();
    }
    return m;
}

inline json to_json(const StpnModel& m) {
    json j;
    j["channels"] = m.channel_names;
    j["partition"] = {{"method", m.partition.method == PartitionMethod::uniform ? "uniform" : "mep"},
                      {"alphabet_size", m.partition.alphabet_size},
                      {"edges", m.partition.edges}};
    j["depth"] = m.depth;
    j["lag"] = m.lag;
    j["window_length"] = m.window_length;
    j["stride"] = m.stride;
    j["threshold_quantile"] = m.threshold_quantile;
    json modes = json::array();
    for (const auto& mm : m.modes) {
        json counts = json::array();
        for (const auto& c : mm.counts) counts.push_back(to_json(c));
        modes.push_back({{"counts", std::move(counts)}, {"thresholds", mm.thresholds}});
    }
    j["modes"] = std::move(modes);
    return j;
}

inline StpnModel stpn_from_json(const json& j) {
    StpnModel m;
    m.channel_names = j.at("channels").get<std::vector<std::string>>();
    const auto& p = j.at("partition");
    const auto method = p.at("method").get<std::string>();
    if (method != "mep" && method != "uniform") throw DataError("unknown partition method '" + method + "'");
    m.partition.method = method == "uniform" ? PartitionMethod::uniform : PartitionMethod::maximum_entropy;
    m.partition.alphabet_size = p.at("alphabet_size").get<std::size_t>();
    m.partition.edges = p.at("edges").get<std::vector<std::vector<double>>>();
    m.depth = j.at("depth").get<std::size_t>();
    m.lag = j.at("lag").get<std::size_t>();
    m.window_length = j.at("window_length").get<std::size_t>();
    m.stride = j.at("stride").get<std::size_t>();
    m.threshold_quantile = j.at("threshold_quantile").get<double>();
    for (const auto& mj : j.at("modes")) {
        ModeModel mm;
        for (const auto& c : mj.at("counts")) mm.counts.push_back(count_matrix_from_json(c));
        mm.thresholds = mj.at("thresholds").get<std::vector<double>>();
        if (mm.counts.size() != m.patterns() || mm.thresholds.size() != m.patterns())
            throw DataError("model mode does not cover every pattern");
        m.modes.push_back(std::move(mm));
    }
    if (m.modes.empty()) throw DataError("model has no modes");
    if (m.partition.edges.size() != m.channels()) throw DataError("partition does not match channel count");
    return m;
}

inline json to_json(const RbmParams& p) {
    return {{"visible_bias", to_json(p.visible_bias)},
            {"hidden_bias", to_json(p.hidden_bias)},
            {"weights", to_json(p.weights)}};
}

inline RbmParams rbm_from_json(const json& j) {
    RbmParams p;
    p.visible_bias = vector_from_json(j.at("visible_bias"));
    p.hidden_bias = vector_from_json(j.at("hidden_bias"));
    p.weights = matrix_from_json(j.at("weights"));
    if (p.weights.rows() != p.visible_bias.size() || p.weights.cols() != p.hidden_bias.size())
        throw DataError("energy model shapes are inconsistent");
    return p;
}

inline json to_json(const DetectorConfig& d) {
    return {{"threshold", d.threshold},
            {"aggregation", d.aggregation == Aggregation::mean_over_k ? "mean" : "single"},
            {"window_count", d.window_count}};
}

inline DetectorConfig detector_from_json(const json& j) {
    DetectorConfig d;
    d.threshold = j.at("threshold").get<double>();
    d.aggregation = j.at("aggregation").get<std::string>() == "mean" ? Aggregation::mean_over_k
                                                                     : Aggregation::single_window;
    d.window_count = j.at("window_count").get<std::size_t>();
    return d;
}

inline json to_json(const MlpParams& p) {
    json layers = json::array();
    for (const auto& l : p.layers) layers.push_back({{"weights", to_json(l.weights)}, {"bias", to_json(l.bias)}});
    return {{"layers", std::move(layers)}, {"dropout", p.dropout}};
}

inline MlpParams mlp_from_json(const json& j) {
    MlpParams p;
    for (const auto& lj : j.at("layers"))
        p.layers.push_back({matrix_from_json(lj.at("weights")), vector_from_json(lj.at("bias"))});
    p.dropout = j.at("dropout").get<std::vector<double>>();
    for (std::size_t l = 1; l < p.layers.size(); ++l)
        if (p.layers[l].weights.cols() != p.layers[l - 1].weights.rows()) throw DataError("A3 layer shapes disagree");
    return p;
}

/// Parses a JSON document and checks its kind and version fields.
inline json read_document(const std::string& path, const std::string& kind, int version) {
    json j;
    try {
        j = json::parse(read_file(path));
    } catch (const json::exception& e) {
        throw DataError("'" + path + "' is not valid JSON: " + e.what());
    }
    if (!j.is_object() || !j.contains("kind") || j["kind"] != kind)
        throw DataError("'" + path + "' is not a " + kind + " file");
    if (!j.contains("version") || j["version"] != version)
        throw DataError("'" + path + "' has unsupported " + kind + " version (expected " + std::to_string(version) +
                        ")");
    return j;
}

}  // namespace stpnrca
