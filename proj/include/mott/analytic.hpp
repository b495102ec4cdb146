#pragma once

// Closed-form relaxation-oscillator timing for an ideal current bias into
// C_L in parallel with the affine memristor. Each phase relaxes exponentially
// towards its asymptote:
//   v_ar = v_oi + r_i*I, tau_r = C_L*r_i   (insulating, rising)
//   v_af = v_om + r_m*I, tau_f = C_L*r_m   (metallic, falling)

#include <cmath>
#include <sstream>

#include "mott/device_model.hpp"
#include "mott/error.hpp"
#include "mott/waveform.hpp"

namespace mott {

struct OscillationAssessment {
    bool oscillates = false;
    double v_ar = 0.0;
    double v_af = 0.0;
    double threshold_margin = 0.0;  ///< v_th - v_ar, negative when the rise reaches v_th
    double holding_margin = 0.0;    ///< v_af - v_hl, negative when the fall reaches v_hl
};

struct PeriodBreakdown {
    double t_rise = 0.0;
    double t_fall = 0.0;
    double period = 0.0;
    double frequency = 0.0;
};

inline OscillationAssessment assess(const MemristorParams& p, double i_bias) {
    if (!(i_bias > 0.0)) throw invalid_input("assess: bias current must be positive");
    OscillationAssessment a;
    a.v_ar = p.v_oi + p.r_i * i_bias;
    a.v_af = p.v_om + p.r_m * i_bias;
    a.threshold_margin = p.v_th - a.v_ar;
    a.holding_margin = a.v_af - p.v_hl;
    a.oscillates = a.threshold_margin < 0.0 && a.holding_margin < 0.0;
    return a;
}

inline PeriodBreakdown period(const MemristorParams& p, double i_bias, double c_l) {
    if (!(c_l > 0.0)) throw invalid_input("period: load capacitance must be positive");
    const auto a = assess(p, i_bias);
    if (!a.oscillates) {
        const bool th = a.threshold_margin >= 0.0;
        const bool hl = a.holding_margin >= 0.0;
        std::ostringstream os;
        os << "period: bias " << i_bias << " A outside the oscillation window";
        if (th) os << "; threshold margin " << a.threshold_margin << " V >= 0";
        if (hl) os << "; holding margin " << a.holding_margin << " V >= 0";
        throw not_oscillating(os.str(), th, hl);
    }
    PeriodBreakdown b;
    b.t_rise = c_l * p.r_i * std::log((p.v_hl - a.v_ar) / (p.v_th - a.v_ar));
    b.t_fall = c_l * p.r_m * std::log((p.v_th - a.v_af) / (p.v_hl - a.v_af));
    b.period = b.t_rise + b.t_fall;
    b.frequency = 1.0 / b.period;
    return b;
}

/// Time for V(t) = (v_from - v_a) exp(-t/tau) + v_a to reach v_to.
inline double segment_time(double v_from, double v_to, double v_a, double tau) {
    if (!(tau > 0.0)) throw invalid_input("segment_time: tau must be positive");
    if (v_to == v_from) return 0.0;
    const double num = v_from - v_a;
    const double den = v_to - v_a;
    if (num == 0.0 || den == 0.0 || (num > 0.0) != (den > 0.0) || std::abs(den) > std::abs(num)) {
        std::ostringstream os;
        os << "segment_time: target " << v_to << " V unreachable from " << v_from
           << " V with asymptote " << v_a << " V";
        throw unreachable_target(os.str());
    }
    return tau * std::log(num / den);
}

/// Voltage on the relaxation curve after time t; inverse of segment_time.
inline double relax(double v_from, double v_a, double tau, double t) noexcept {
    return (v_from - v_a) * std::exp(-t / tau) + v_a;
}

/// Trapezoidal integral of v(t)*I over the segment.
inline double energy_per_spike(const Waveform& segment, double i_bias) {
    if (segment.empty()) throw invalid_input("energy_per_spike: empty segment");
    const auto& s = segment.samples;
    double acc = 0.0;
    for (std::size_t k = 1; k < s.size(); ++k) acc += 0.5 * (s[k - 1] + s[k]);
    return acc * segment.dt * i_bias;
}

}  // namespace mott
