#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "mott/error.hpp"

namespace mott {

inline double mean(std::span<const double> x) {
    if (x.empty()) throw invalid_input("mean: empty sample");
    double acc = 0.0;
    for (double v : x) acc += v;
    return acc / static_cast<double>(x.size());
}

/// Sample standard deviation (n - 1 denominator); 0 for a single value.
inline double stddev(std::span<const double> x) {
    const double m = mean(x);
    if (x.size() < 2) return 0.0;
    double acc = 0.0;
    for (double v : x) acc += (v - m) * (v - m);
    return std::sqrt(acc / static_cast<double>(x.size() - 1));
}

/// Linear-interpolated quantile (type 7), q in [0, 1].
inline double quantile(std::span<const double> x, double q) {
    if (x.empty()) throw invalid_input("quantile: empty sample");
    std::vector<double> s(x.begin(), x.end());
    std::sort(s.begin(), s.end());
    const double pos = q * static_cast<double>(s.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, s.size() - 1);
    return s[lo] + (pos - static_cast<double>(lo)) * (s[hi] - s[lo]);
}

inline double median(std::span<const double> x) { return quantile(x, 0.5); }

/// Moment skewness g1.
inline double skewness(std::span<const double> x) {
    const double m = mean(x);
    double m2 = 0.0;
    double m3 = 0.0;
    for (double v : x) {
        const double d = v - m;
        m2 += d * d;
        m3 += d * d * d;
    }
    const auto n = static_cast<double>(x.size());
    m2 /= n;
    m3 /= n;
    return m2 > 0.0 ? m3 / std::pow(m2, 1.5) : 0.0;
}

struct HistogramBin {
    double left = 0.0;
    double right = 0.0;
    std::size_t count = 0;
};

/// Bins of fixed width anchored at min(x). A sample with zero spread yields a
/// single degenerate bin [x, x].
inline std::vector<HistogramBin> histogram(std::span<const double> x, double bin_width) {
    if (x.empty()) return {};
    if (!(bin_width > 0.0)) throw invalid_input("histogram: bin width must be positive");
    const auto [lo_it, hi_it] = std::minmax_element(x.begin(), x.end());
    const double lo = *lo_it;
    const double hi = *hi_it;
    if (hi == lo) return {{lo, hi, x.size()}};
    const auto nbins = static_cast<std::size_t>(std::floor((hi - lo) / bin_width)) + 1;
    std::vector<HistogramBin> bins(nbins);
    for (std::size_t b = 0; b < nbins; ++b) {
        bins[b].left = lo + static_cast<double>(b) * bin_width;
        bins[b].right = bins[b].left + bin_width;
    }
    for (double v : x) {
        auto b = static_cast<std::size_t>(std::floor((v - lo) / bin_width));
        bins[std::min(b, nbins - 1)].count++;
    }
    return bins;
}

/// Histogram with a bin count instead of a width.
inline std::vector<HistogramBin> histogram_bins(std::span<const double> x, std::size_t nbins) {
    if (x.empty()) return {};
    if (nbins == 0) throw invalid_input("histogram: need at least one bin");
    const auto [lo_it, hi_it] = std::minmax_element(x.begin(), x.end());
    if (*hi_it == *lo_it) return {{*lo_it, *hi_it, x.size()}};
    auto bins = histogram(x, (*hi_it - *lo_it) / static_cast<double>(nbins));
    if (bins.size() > nbins) {
        bins[nbins - 1].count += bins.back().count;
        bins.resize(nbins);
    }
    return bins;
}

struct LineFit {
    double intercept = 0.0;
    double slope = 0.0;
    double intercept_stderr = 0.0;
    double slope_stderr = 0.0;
    double residual_sd = 0.0;
};

/// Ordinary least-squares line y = intercept + slope*x.
inline LineFit fit_line(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw invalid_input("fit_line: size mismatch");
    if (x.size() < 2) throw invalid_input("fit_line: need at least two points");
    const double mx = mean(x);
    const double my = mean(y);
    double sxx = 0.0;
    double sxy = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        sxx += (x[k] - mx) * (x[k] - mx);
        sxy += (x[k] - mx) * (y[k] - my);
    }
    if (!(sxx > 0.0)) throw invalid_input("fit_line: rank-deficient input (all x equal)");
    LineFit f;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    const auto n = static_cast<double>(x.size());
    if (x.size() > 2) {
        double sse = 0.0;
        for (std::size_t k = 0; k < x.size(); ++k) {
            const double r = y[k] - f.intercept - f.slope * x[k];
            sse += r * r;
        }
        const double s2 = sse / (n - 2.0);
        f.residual_sd = std::sqrt(s2);
        f.slope_stderr = std::sqrt(s2 / sxx);
        f.intercept_stderr = std::sqrt(s2 * (1.0 / n + mx * mx / sxx));
    }
    return f;
}

}  // namespace mott
