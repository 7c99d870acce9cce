#include "asvlab/stats.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <stdexcept>
#include <vector>

using namespace asvlab::stats;

TEST(ConfidenceInterval, FormulaAndSymmetry) {
    const std::vector<double> s{1.0, 2.0, 4.0, 7.0};
    const Interval ci = confidence_interval(s);
    const double mean = 3.5;
    const double sd = std::sqrt((6.25 + 2.25 + 0.25 + 12.25) / 3.0);
    EXPECT_DOUBLE_EQ(ci.mean, mean);
    EXPECT_DOUBLE_EQ(ci.stddev, sd);
    EXPECT_NEAR(ci.hi - ci.mean, 1.96 * sd / 2.0, 1e-12);
    EXPECT_NEAR(ci.mean - ci.lo, ci.hi - ci.mean, 1e-12);
    EXPECT_EQ(ci.n, 4u);
}

TEST(ConfidenceInterval, IdenticalSamplesGiveZeroWidth) {
    const std::vector<double> s(10, 42.0);
    const Interval ci = confidence_interval(s);
    EXPECT_EQ(ci.lo, 42.0);
    EXPECT_EQ(ci.hi, 42.0);
    EXPECT_EQ(ci.stddev, 0.0);
}

TEST(ConfidenceInterval, ReconstructsReportedBracket) {
    // 100 samples with mean 96.7 and the std implied by a half-width of 2.2.
    const double sd = 2.2 * std::sqrt(100.0) / 1.96;
    std::vector<double> s;
    for (int i = 0; i < 50; ++i) {
        s.push_back(96.7 + sd * std::sqrt(99.0 / 100.0));
        s.push_back(96.7 - sd * std::sqrt(99.0 / 100.0));
    }
    const Interval ci = confidence_interval(s);
    EXPECT_NEAR(ci.mean, 96.7, 1e-9);
    EXPECT_NEAR(ci.lo, 94.5, 1e-9);
    EXPECT_NEAR(ci.hi, 98.9, 1e-9);
}

TEST(ConfidenceInterval, NeedsTwoSamples) {
    const std::vector<double> one{1.0};
    EXPECT_THROW(confidence_interval(one), std::invalid_argument);
    EXPECT_THROW(confidence_interval({}), std::invalid_argument);
}

TEST(Smooth, ConstantSeries) {
    const std::vector<double> s(250, 3.25);
    const auto m = smooth(s);
    ASSERT_EQ(m.smoothed.size(), s.size());
    EXPECT_EQ(m.window, 100u);
    for (std::size_t i = 0; i < s.size(); ++i) {
        EXPECT_NEAR(m.smoothed[i], 3.25, 1e-12);
        EXPECT_NEAR(m.rolling_std[i], 0.0, 1e-6);
    }
}

TEST(Smooth, WindowOneIsIdentity) {
    const std::vector<double> s{1.0, -2.0, 5.0, 0.5};
    const auto m = smooth(s, 1);
    EXPECT_EQ(m.smoothed, s);
    for (double v : m.rolling_std) {
        EXPECT_EQ(v, 0.0);
    }
}

TEST(Smooth, StepSeriesMatchesDirectSum) {
    std::vector<double> s(300);
    for (std::size_t i = 0; i < s.size(); ++i) {
        s[i] = i < 140 ? 0.0 : 1.0;
    }
    const std::size_t window = 40;
    const auto m = smooth(s, window);
    const double sigma = window / 4.0;
    const long half = static_cast<long>(window / 2);
    for (long i = 0; i < static_cast<long>(s.size()); ++i) {
        double wsum = 0.0;
        double acc = 0.0;
        for (long k = i - half; k <= i + half; ++k) {
            if (k < 0 || k >= static_cast<long>(s.size())) {
                continue;
            }
            const double w = std::exp(-0.5 * double((k - i) * (k - i)) / (sigma * sigma));
            wsum += w;
            acc += w * s[static_cast<std::size_t>(k)];
        }
        EXPECT_NEAR(m.smoothed[static_cast<std::size_t>(i)], acc / wsum, 1e-12);
    }
}

TEST(Smooth, RejectsBadInput) {
    EXPECT_THROW(smooth({}, 10), std::invalid_argument);
    const std::vector<double> s{1.0};
    EXPECT_THROW(smooth(s, 0), std::invalid_argument);
}
