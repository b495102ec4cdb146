#pragma once

// Piecewise-affine two-state Mott memristor model.
//
// Each phase is a linear resistor in series with an offset source:
//   I = (V - v_oi) / r_i   while insulating,
//   I = (V - v_om) / r_m   while metallic.
// The device switches insulating -> metallic at V >= v_th and back at V <= v_hl.

#include <array>
#include <cmath>
#include <cstddef>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "mott/error.hpp"

namespace mott {

enum class Phase { insulating, metallic };

inline std::string_view to_string(Phase p) noexcept {
    return p == Phase::insulating ? "insulating" : "metallic";
}

struct MemristorParams {
    double v_th = 0.0;  ///< insulator -> metal threshold [V]
    double v_hl = 0.0;  ///< metal -> insulator holding voltage [V]
    double r_i = 0.0;   ///< insulating affine resistance [Ohm]
    double r_m = 0.0;   ///< metallic affine resistance [Ohm]
    double v_oi = 0.0;  ///< insulating offset [V]
    double v_om = 0.0;  ///< metallic offset [V]

    bool operator==(const MemristorParams&) const = default;

    static constexpr std::array<std::string_view, 6> field_names{"v_th", "v_hl", "r_i",
                                                                 "r_m",  "v_oi", "v_om"};

    [[nodiscard]] std::array<double, 6> as_array() const noexcept {
        return {v_th, v_hl, r_i, r_m, v_oi, v_om};
    }
    static MemristorParams from_array(const std::array<double, 6>& a) noexcept {
        return {a[0], a[1], a[2], a[3], a[4], a[5]};
    }
};

namespace detail {
inline std::string fmt_pair(std::string_view a, double va, std::string_view b, double vb) {
    std::ostringstream os;
    os.precision(12);
    os << a << " = " << va << ", " << b << " = " << vb;
    return os.str();
}
}  // namespace detail

/// Throws invariant_violation naming the offending parameter pair.
inline void validate(const MemristorParams& p) {
    const auto a = p.as_array();
    for (std::size_t k = 0; k < a.size(); ++k) {
        if (!std::isfinite(a[k])) {
            throw invariant_violation("memristor params: " + std::string(MemristorParams::field_names[k]) +
                                      " is not finite");
        }
    }
    if (!(p.v_th > p.v_hl)) {
        throw invariant_violation("memristor params: hysteresis window collapsed (" +
                                  detail::fmt_pair("v_th", p.v_th, "v_hl", p.v_hl) + ")");
    }
    if (!(p.r_m > 0.0)) {
        throw invariant_violation("memristor params: r_m must be positive (" +
                                  detail::fmt_pair("r_m", p.r_m, "r_i", p.r_i) + ")");
    }
    if (!(p.r_i > p.r_m)) {
        throw invariant_violation("memristor params: r_i must exceed r_m (" +
                                  detail::fmt_pair("r_i", p.r_i, "r_m", p.r_m) + ")");
    }
}

/// Linear temperature dependence of all six parameters around t_ref.
struct TemperatureModel {
    MemristorParams base;
    double t_ref = 25.0;      ///< [degC]
    MemristorParams slopes;   ///< per-degree coefficients, same field layout as base
    double t_min = 20.0;      ///< validity interval [degC]
    double t_max = 50.0;

    bool operator==(const TemperatureModel&) const = default;
};

inline MemristorParams params_at_temperature(const TemperatureModel& model, double t) {
    if (!(t >= model.t_min && t <= model.t_max)) {
        std::ostringstream os;
        os << "temperature " << t << " degC outside validity interval [" << model.t_min << ", "
           << model.t_max << "]";
        throw invalid_input(os.str());
    }
    const double dt = t - model.t_ref;
    const auto b = model.base.as_array();
    const auto s = model.slopes.as_array();
    std::array<double, 6> out{};
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = b[k] + s[k] * dt;
    auto p = MemristorParams::from_array(out);
    try {
        validate(p);
    } catch (const invariant_violation& e) {
        std::ostringstream os;
        os << e.what() << " at " << t << " degC";
        throw invariant_violation(os.str());
    }
    return p;
}

/// Current through the active affine branch.
inline double branch_current(const MemristorParams& p, Phase phase, double v) noexcept {
    return phase == Phase::insulating ? (v - p.v_oi) / p.r_i : (v - p.v_om) / p.r_m;
}

/// One step of the hysteresis state machine. Comparisons are inclusive.
inline Phase next_phase(const MemristorParams& p, Phase phase, double v) noexcept {
    if (phase == Phase::insulating && v >= p.v_th) return Phase::metallic;
    if (phase == Phase::metallic && v <= p.v_hl) return Phase::insulating;
    return phase;
}

struct IvPoint {
    double v;
    double i;
    Phase phase;
    bool forward;  ///< true on the up-sweep
};

/// Quasi-static up/down voltage sweep starting insulating. The backward branch
/// starts at the last forward sample and ends at v_start. No interpolation:
/// switching happens at the first sample that meets the threshold.
inline std::vector<IvPoint> quasistatic_iv(const MemristorParams& p, double v_start, double v_max,
                                           double step) {
    if (!(v_max > v_start)) throw invalid_input("quasistatic_iv: degenerate sweep (v_max <= v_start)");
    if (!(step > 0.0)) throw invalid_input("quasistatic_iv: step must be positive");
    validate(p);
    if (!(v_start < p.v_hl && p.v_th < v_max)) {
        throw invalid_input("quasistatic_iv: sweep must satisfy v_start < v_hl <= v_th < v_max");
    }
    const auto n = static_cast<std::size_t>(std::floor((v_max - v_start) / step + 1e-9));
    std::vector<IvPoint> out;
    out.reserve(2 * (n + 1));
    Phase phase = Phase::insulating;
    for (std::size_t k = 0; k <= n; ++k) {
        const double v = v_start + static_cast<double>(k) * step;
        phase = next_phase(p, phase, v);
        out.push_back({v, branch_current(p, phase, v), phase, true});
    }
    for (std::size_t k = n + 1; k-- > 0;) {
        const double v = v_start + static_cast<double>(k) * step;
        phase = next_phase(p, phase, v);
        out.push_back({v, branch_current(p, phase, v), phase, false});
    }
    return out;
}

}  // namespace mott
