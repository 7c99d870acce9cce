// Summary statistics for reports and training curves.
#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace asvlab::stats {

struct Interval {
    double mean = 0.0;
    double lo = 0.0;
    double hi = 0.0;
    double stddev = 0.0;  // sample standard deviation
    std::size_t n = 0;
};

/// Normal-approximation 95% interval: mean +- 1.96 s / sqrt(n).
/// Throws std::invalid_argument for n < 2.
Interval confidence_interval(std::span<const double> samples);

struct MetricsSeries {
    std::vector<double> raw;
    std::vector<double> smoothed;
    std::vector<double> rolling_std;
    std::size_t window = 1;
};

/// Centered Gaussian-kernel rolling mean and standard deviation with
/// sigma = window / 4 over offsets |j| <= window / 2; kernels truncated at
/// the series edges are renormalized. Throws std::invalid_argument for an
/// empty series or window 0.
MetricsSeries smooth(std::span<const double> series, std::size_t window = 100);

}  // namespace asvlab::stats
