#include "stpnrca/stpn.hpp"
#include "stpnrca/synth.hpp"

#include <gtest/gtest.h>

using namespace stpnrca;

namespace {

StpnConfig small_config(double q = 0.05) {
    StpnConfig c;
    c.alphabet_size = 4;
    c.window_length = 300;
    c.threshold_quantile = q;
    return c;
}

const TimeSeries& mode1_data() {
    static const TimeSeries ts = simulate_var(builtin_modes().front(), 60 * 300, 21);
    return ts;
}

}  // namespace

TEST(PatternIndex, Examples) {
    EXPECT_EQ(pattern_index(0, 0, 5), 0u);
    EXPECT_EQ(pattern_index(1, 2, 5), 7u);
    EXPECT_THROW(pattern_index(5, 0, 5), UsageError);
    EXPECT_THROW(index_pattern(25, 5), UsageError);
}

TEST(PatternIndex, RoundTrip) {
    for (std::size_t f : {1, 2, 5, 12})
        for (std::size_t a = 0; a < f; ++a)
            for (std::size_t b = 0; b < f; ++b) {
                const auto [x, y] = index_pattern(pattern_index(a, b, f), f);
                EXPECT_EQ(x, a);
                EXPECT_EQ(y, b);
            }
}

TEST(WindowStarts, NonOverlappingAndStrided) {
    EXPECT_EQ(window_starts(10, 4, 4), (std::vector<std::size_t>{0, 4}));
    EXPECT_EQ(window_starts(10, 4, 3), (std::vector<std::size_t>{0, 3, 6}));
    EXPECT_TRUE(window_starts(3, 4, 4).empty());
    EXPECT_THROW(window_starts(10, 0, 1), UsageError);
}

TEST(TrainStpn, GridShape) {
    const auto m = train_stpn({mode1_data()}, small_config());
    ASSERT_EQ(m.modes.size(), 1u);
    EXPECT_EQ(m.modes[0].counts.size(), 25u);
    EXPECT_EQ(m.modes[0].thresholds.size(), 25u);
    for (double t : m.modes[0].thresholds) EXPECT_TRUE(std::isfinite(t));
    EXPECT_EQ(StpnConfig{}.window_length, 1200u);
}

TEST(TrainStpn, CountsCoverTheWholeSeries) {
    const auto m = train_stpn({mode1_data()}, small_config());
    for (const auto& c : m.modes[0].counts) EXPECT_EQ(c.total(), static_cast<std::int64_t>(mode1_data().length() - 1));
}

TEST(TrainStpn, Errors) {
    EXPECT_THROW(train_stpn({mode1_data().slice(0, 500)}, small_config()), DataError);
    auto bad = small_config();
    bad.alphabet_size = 1;
    EXPECT_THROW(train_stpn({mode1_data()}, bad), UsageError);
    bad = small_config();
    bad.threshold_quantile = 1.0;
    EXPECT_THROW(train_stpn({mode1_data()}, bad), UsageError);
    EXPECT_THROW(train_stpn({}, small_config()), UsageError);
}

TEST(TrainStpn, SingleChannelHasOnePattern) {
    const auto one = mode1_data().slice(0, 3000);
    Eigen::MatrixXd col = one.values().col(0);
    const auto m = train_stpn({TimeSeries({"x1"}, col)}, small_config());
    const auto wm = window_metrics(m, TimeSeries({"x1"}, col).slice(0, 300));
    EXPECT_EQ(wm.log_metric.size(), 1u);
}

TEST(Thresholds, ZeroQuantileGivesAllOnesOnNominalWindows) {
    const auto m = train_stpn({mode1_data()}, small_config(0.0));
    for (const auto& v : nominal_pattern_vectors(m, {mode1_data()}))
        for (auto b : v) EXPECT_EQ(b, 1);
}

TEST(Thresholds, CalibrationBound) {
    for (double q : {0.01, 0.05, 0.2}) {
        const auto m = train_stpn({mode1_data()}, small_config(q));
        const auto vs = nominal_pattern_vectors(m, {mode1_data()});
        const double n = static_cast<double>(vs.size());
        for (std::size_t i = 0; i < m.patterns(); ++i) {
            double zeros = 0;
            for (const auto& v : vs) zeros += v[i] == 0;
            EXPECT_LE(zeros / n, q + 1.0 / n) << "pattern " << i << " q " << q;
        }
    }
}

TEST(Thresholds, LowerQuantileIndex) {
    EXPECT_EQ(detail::lower_quantile({5, 1, 4, 2, 3}, 0.0), 1.0);
    EXPECT_EQ(detail::lower_quantile({5, 1, 4, 2, 3}, 0.2), 2.0);
    EXPECT_EQ(detail::lower_quantile({5, 1, 4, 2, 3}, 0.99), 5.0);
}

TEST(WindowMetricsTest, ModelWindowsPassAtUsualQuantile) {
    const auto m = train_stpn({mode1_data()}, small_config(0.05));
    std::vector<std::size_t> passing(m.patterns(), 0);
    std::size_t windows = 0;
    for (auto s : window_starts(mode1_data().length(), 300, 300)) {
        const auto v = binarize(window_metrics(m, mode1_data().slice(s, 300)), m);
        ++windows;
        for (std::size_t i = 0; i < v.size(); ++i) passing[i] += v[i];
    }
    for (std::size_t i = 0; i < m.patterns(); ++i)
        EXPECT_GE(static_cast<double>(passing[i]) / static_cast<double>(windows), 0.95) << "pattern " << i;
}

TEST(WindowMetricsTest, BrokenEdgeLowersItsMetric) {
    const auto g = builtin_modes().front();
    const auto m = train_stpn({mode1_data()}, small_config());
    const auto spec = FaultSpec::pattern_break({{0, 1}});
    const auto broken = inject_fault(g, simulate_var(g, 3000, 5), spec, 5);
    const auto nominal = simulate_var(g, 3000, 5);
    double drop = 0.0;
    for (std::size_t s = 0; s < 3000; s += 300)
        drop += window_metrics(m, nominal.slice(s, 300)).at(0, 1) - window_metrics(m, broken.slice(s, 300)).at(0, 1);
    EXPECT_GT(drop / 10.0, 0.0);
}

TEST(WindowMetricsTest, LengthAndChannelChecks) {
    const auto m = train_stpn({mode1_data()}, small_config());
    EXPECT_THROW(window_metrics(m, mode1_data().slice(0, 299)), DataError);
    Eigen::MatrixXd four = mode1_data().values().leftCols(4).topRows(300);
    EXPECT_THROW(window_metrics(m, TimeSeries({"a", "b", "c", "d"}, four)), DataError);
}

TEST(WindowMetricsTest, PicksModeWithFewestFailedPatterns) {
    const auto modes = builtin_modes();
    std::vector<TimeSeries> data;
    for (std::size_t i = 0; i < 3; ++i) data.push_back(simulate_var(modes[i], 40 * 300, 100 + i));
    const auto m = train_stpn(data, small_config(0.05));
    ASSERT_EQ(m.modes.size(), 3u);
    for (std::size_t i = 0; i < 3; ++i) {
        const auto test = simulate_var(modes[i], 10 * 300, 900 + i);
        std::size_t right = 0;
        for (std::size_t s = 0; s < test.length(); s += 300) right += window_metrics(m, test.slice(s, 300)).mode == i;
        EXPECT_GE(right, 8u) << "mode " << i;
    }
}

TEST(Binarize, InclusiveThresholdRule) {
    StpnModel m;
    m.channel_names = {"a", "b"};
    m.modes.push_back({{}, {1.0, 2.0, 3.0, 4.0}});
    WindowMetrics wm{2, 0, {1.0, 1.5, 3.5, -10.0}};
    EXPECT_EQ(binarize(wm, m), (PatternVector{1, 0, 1, 0}));
    wm.log_metric = {10, 10, 10, 10};
    EXPECT_EQ(binarize(wm, m), (PatternVector{1, 1, 1, 1}));
    wm.log_metric = {0, 0, 0, 0};
    EXPECT_EQ(binarize(wm, m), (PatternVector{0, 0, 0, 0}));
    wm.mode = 1;
    EXPECT_THROW(binarize(wm, m), UsageError);
}

TEST(TrainStpn, Deterministic) {
    const auto a = train_stpn({mode1_data()}, small_config());
    const auto b = train_stpn({mode1_data()}, small_config());
    EXPECT_EQ(a.partition.edges, b.partition.edges);
    EXPECT_EQ(a.modes[0].counts, b.modes[0].counts);
    EXPECT_EQ(a.modes[0].thresholds, b.modes[0].thresholds);
    EXPECT_EQ(nominal_pattern_vectors(a, {mode1_data()}), nominal_pattern_vectors(b, {mode1_data()}));
}
