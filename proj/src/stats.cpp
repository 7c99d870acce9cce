#include "asvlab/stats.hpp"

#include <cmath>
#include <stdexcept>

namespace asvlab::stats {

Interval confidence_interval(std::span<const double> samples) {
    if (samples.size() < 2) {
        throw std::invalid_argument("confidence_interval needs at least two samples");
    }
    const double n = static_cast<double>(samples.size());
    double sum = 0.0;
    for (double x : samples) {
        sum += x;
    }
    const double mean = sum / n;
    double ss = 0.0;
    for (double x : samples) {
        ss += (x - mean) * (x - mean);
    }
    const double sd = std::sqrt(ss / (n - 1.0));
    const double half = 1.96 * sd / std::sqrt(n);
    return {mean, mean - half, mean + half, sd, samples.size()};
}

MetricsSeries smooth(std::span<const double> series, std::size_t window) {
    if (series.empty()) {
        throw std::invalid_argument("smooth: empty series");
    }
    if (window == 0) {
        throw std::invalid_argument("smooth: window must be >= 1");
    }
    const double sigma = static_cast<double>(window) / 4.0;
    const auto half = static_cast<std::ptrdiff_t>(window / 2);
    std::vector<double> kernel(static_cast<std::size_t>(2 * half + 1));
    for (std::ptrdiff_t j = -half; j <= half; ++j) {
        kernel[static_cast<std::size_t>(j + half)] = std::exp(-0.5 * (j / sigma) * (j / sigma));
    }
    MetricsSeries out;
    out.window = window;
    out.raw.assign(series.begin(), series.end());
    const auto n = static_cast<std::ptrdiff_t>(series.size());
    out.smoothed.resize(series.size());
    out.rolling_std.resize(series.size());
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        double wsum = 0.0;
        double acc = 0.0;
        for (std::ptrdiff_t j = -half; j <= half; ++j) {
            if (i + j < 0 || i + j >= n) {
                continue;
            }
            const double w = kernel[static_cast<std::size_t>(j + half)];
            wsum += w;
            acc += w * series[static_cast<std::size_t>(i + j)];
        }
        const double mean = acc / wsum;
        double var = 0.0;
        for (std::ptrdiff_t j = -half; j <= half; ++j) {
            if (i + j < 0 || i + j >= n) {
                continue;
            }
            const double d = series[static_cast<std::size_t>(i + j)] - mean;
            var += kernel[static_cast<std::size_t>(j + half)] * d * d;
        }
        out.smoothed[static_cast<std::size_t>(i)] = mean;
        out.rolling_std[static_cast<std::size_t>(i)] = std::sqrt(var / wsum);
    }
    return out;
}

}  // namespace asvlab::stats
