#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "mott/error.hpp"

namespace mott {

/// Uniformly sampled voltage trace. Sample k sits at t0 + k*dt.
struct Waveform {
    double dt = 0.0;
    std::vector<double> samples;
    double t0 = 0.0;

    [[nodiscard]] std::size_t size() const noexcept { return samples.size(); }
    [[nodiscard]] bool empty() const noexcept { return samples.empty(); }
    [[nodiscard]] double time(std::size_t k) const noexcept {
        return t0 + static_cast<double>(k) * dt;
    }
    [[nodiscard]] double t_end() const noexcept {
        return samples.empty() ? t0 : time(samples.size() - 1);
    }
    [[nodiscard]] std::span<const double> view() const noexcept { return samples; }

    bool operator==(const Waveform&) const = default;
};

inline void validate(const Waveform& w) {
    if (!(w.dt > 0.0) || !std::isfinite(w.dt)) throw invalid_input("waveform: dt must be positive");
    if (w.samples.empty()) throw invalid_input("waveform: no samples");
    for (double v : w.samples) {
        if (!std::isfinite(v)) throw invalid_input("waveform: non-finite sample");
    }
}

/// Samples with time in [t_from, t_to], as a new waveform keeping absolute time.
inline Waveform slice(const Waveform& w, double t_from, double t_to) {
    Waveform out{w.dt, {}, 0.0};
    if (w.empty() || t_to < t_from) return out;
    const double first = std::ceil((t_from - w.t0) / w.dt - 1e-9);
    const auto k0 = static_cast<std::size_t>(std::max(0.0, first));
    out.t0 = w.time(k0);
    for (std::size_t k = k0; k < w.size() && w.time(k) <= t_to + 1e-9 * w.dt; ++k) {
        out.samples.push_back(w.samples[k]);
    }
    return out;
}

/// Linear interpolation of the trace at time t (clamped to the record).
inline double value_at(const Waveform& w, double t) {
    if (w.empty()) throw invalid_input("waveform: no samples");
    const double x = (t - w.t0) / w.dt;
    if (x <= 0.0) return w.samples.front();
    const auto k = static_cast<std::size_t>(x);
    if (k + 1 >= w.size()) return w.samples.back();
    const double frac = x - static_cast<double>(k);
    return w.samples[k] + frac * (w.samples[k + 1] - w.samples[k]);
}

}  // namespace mott
