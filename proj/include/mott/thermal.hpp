#pragma once

// Quasi-static thermal side: sigmoid film conductance G(T) and the
// analytical threshold current / power / spike-temperature scaling laws.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "mott/detail/levenberg_marquardt.hpp"
#include "mott/error.hpp"
#include "mott/statistics.hpp"

namespace mott {

struct GtModel {
    double g_i = 0.0;      ///< insulating conductance [S]
    double g_m = 0.0;      ///< metallic conductance [S]
    double t_imt = 68.0;   ///< [degC]
    double delta_t = 5.0;  ///< transition width [K]

    bool operator==(const GtModel&) const = default;
};

inline void validate(const GtModel& m) {
    if (!(m.g_i > 0.0)) throw invariant_violation("GtModel: g_i must be positive");
    if (!(m.g_m > m.g_i)) throw invariant_violation("GtModel: need g_m > g_i");
    if (!(m.delta_t > 0.0)) throw invariant_violation("GtModel: delta_t must be positive");
    if (!std::isfinite(m.t_imt)) throw invariant_violation("GtModel: t_imt must be finite");
}

/// G(T) = G_i + (G_m - G_i) / (1 + exp((T_IMT - T)/dT)).
inline double conductance(const GtModel& m, double t) noexcept {
    return m.g_i + (m.g_m - m.g_i) / (1.0 + std::exp((m.t_imt - t) / m.delta_t));
}

/// Least-squares sigmoid fit on relative residuals (g_fit/g - 1), so both
/// plateaus weigh equally.
inline GtModel fit_gt(std::span<const std::pair<double, double>> data) {
    if (data.size() < 8) throw invalid_input("fit_gt: need at least 8 points");
    std::vector<double> t;
    std::vector<double> g;
    for (const auto& [tt, gg] : data) {
        if (!(gg > 0.0) || !std::isfinite(tt)) throw invalid_input("fit_gt: conductances must be positive");
        t.push_back(tt);
        g.push_back(gg);
    }
    const auto [g_lo, g_hi] = std::minmax_element(g.begin(), g.end());
    const auto [t_lo, t_hi] = std::minmax_element(t.begin(), t.end());
    const double gs = *g_hi;
    const double tc = 0.5 * (*t_lo + *t_hi);
    const double ts = *t_hi - *t_lo;
    if (!(ts > 0.0)) throw invalid_input("fit_gt: temperatures must span an interval");

    // Transition guess: where G crosses the geometric mean of the extremes.
    const double mid = std::sqrt(*g_lo * *g_hi);
    std::size_t below = 0;
    std::size_t above = 0;
    double t_below = -INFINITY;
    double t_above = INFINITY;
    for (std::size_t k = 0; k < g.size(); ++k) {
        if (g[k] < mid) {
            ++below;
            t_below = std::max(t_below, t[k]);
        } else {
            ++above;
            t_above = std::min(t_above, t[k]);
        }
    }
    if (below < 2 || above < 2 || *g_hi < 2.0 * *g_lo) {
        throw invalid_input("fit_gt: data do not span both sides of the transition");
    }
    const double t_guess = 0.5 * (t_below + t_above);

    Eigen::VectorXd x(4);
    x << *g_lo / gs, *g_hi / gs, (t_guess - tc) / ts, 0.05;
    const std::size_t n = g.size();
    auto residual = [&](const Eigen::VectorXd& p, Eigen::VectorXd& r) {
        for (std::size_t k = 0; k < n; ++k) {
            const double u = (t[k] - tc) / ts;
            const double s = 1.0 / (1.0 + std::exp((p[2] - u) / p[3]));
            r[static_cast<Eigen::Index>(k)] = (p[0] + (p[1] - p[0]) * s) * gs / g[k] - 1.0;
        }
    };
    auto jacobian = [&](const Eigen::VectorXd& p, Eigen::MatrixXd& J) {
        for (std::size_t k = 0; k < n; ++k) {
            const auto i = static_cast<Eigen::Index>(k);
            const double u = (t[k] - tc) / ts;
            const double z = (p[2] - u) / p[3];
            const double s = 1.0 / (1.0 + std::exp(z));
            const double ds = s * (1.0 - s);  // d s / d(-z)
            const double w = gs / g[k];
            J(i, 0) = (1.0 - s) * w;
            J(i, 1) = s * w;
            J(i, 2) = -(p[1] - p[0]) * ds / p[3] * w;
            J(i, 3) = (p[1] - p[0]) * ds * (p[2] - u) / (p[3] * p[3]) * w;
        }
    };
    const auto res = detail::levenberg_marquardt(residual, jacobian, x, n);
    GtModel m{res.x[0] * gs, res.x[1] * gs, tc + res.x[2] * ts, std::abs(res.x[3]) * ts};
    if (!res.converged || !res.x.allFinite()) {
        throw numerical_failure("fit_gt: no convergence after " + std::to_string(res.iterations) + " iterations");
    }
    if (m.t_imt < *t_lo || m.t_imt > *t_hi) throw numerical_failure("fit_gt: fitted t_imt outside the data range");
    validate(m);
    return m;
}

// -----------------------------------------------------------------------------
// Threshold scaling
// -----------------------------------------------------------------------------

enum class ThresholdConvention {
    celsius,  ///< T_TH = 0.9*T_IMT with both in degC
    kelvin,   ///< 0.9 applied to absolute temperature
};

inline std::string_view to_string(ThresholdConvention c) noexcept {
    return c == ThresholdConvention::celsius ? "celsius" : "kelvin";
}

/// Threshold temperature [degC] from the transition temperature [degC].
inline double threshold_temperature(double t_imt, ThresholdConvention c = ThresholdConvention::celsius) {
    constexpr double zero_c = 273.15;
    return c == ThresholdConvention::celsius ? 0.9 * t_imt : 0.9 * (t_imt + zero_c) - zero_c;
}

struct ThermalGeometry {
    double w_dev = 2e-6;      ///< [m]
    double l_dev = 3e-6;      ///< [m]
    double thickness = 60e-9; ///< [m]
    double a_c = 6e-12;       ///< contact/footprint area [m^2]
    double a_cs = 1.2e-13;    ///< conduction cross-section [m^2]
    double r_th0 = 9e-6;      ///< specific thermal resistance [K m^2/W]: 1.5 MK/W over 6 um^2
    double rho_20 = 1e-2;     ///< resistivity at 20 degC [Ohm m]
    double r_r = 30.0;        ///< R(20 degC)/R(95 degC)
    double t_th = 0.9 * 68.0; ///< [degC]
    /// Boundary conductance per area and effective thickness; only their
    /// product (= a_c/r_th0) is constrained.
    std::optional<double> g_eff;
    std::optional<double> t_eff;

    bool operator==(const ThermalGeometry&) const = default;

    /// Geometry with a_c = W*L and a_cs = W*thickness, r_th0 chosen so the
    /// lumped contact resistance r_th0/a_c equals r_th.
    static ThermalGeometry from_dimensions(double w, double l, double t, double r_th, double rho_20, double r_r,
                                           double t_th) {
        ThermalGeometry g;
        g.w_dev = w;
        g.l_dev = l;
        g.thickness = t;
        g.a_c = w * l;
        g.a_cs = w * t;
        g.r_th0 = r_th * g.a_c;
        g.rho_20 = rho_20;
        g.r_r = r_r;
        g.t_th = t_th;
        return g;
    }
};

inline void validate(const ThermalGeometry& g) {
    const double pos[] = {g.w_dev, g.l_dev, g.thickness, g.a_c, g.a_cs, g.r_th0, g.rho_20};
    for (double v : pos) {
        if (!(v > 0.0) || !std::isfinite(v)) throw invariant_violation("ThermalGeometry: all dimensions and constants must be positive");
    }
    if (!(g.r_r > 1.0)) throw invariant_violation("ThermalGeometry: need r_r > 1");
    if (!std::isfinite(g.t_th)) throw invariant_violation("ThermalGeometry: t_th must be finite");
    if (g.g_eff && g.t_eff) {
        const double prod = *g.g_eff * *g.t_eff;
        const double want = g.a_c / g.r_th0;
        if (!(std::abs(prod - want) <= 1e-6 * want)) {
            std::ostringstream os;
            os << "ThermalGeometry: g_eff*t_eff = " << prod << " differs from a_c/r_th0 = " << want;
            throw invariant_violation(os.str());
        }
    }
}

/// Cross-check of a geometry against the conductance model it is paired with.
inline void validate(const ThermalGeometry& g, const GtModel& m) {
    validate(g);
    validate(m);
    if (!(g.t_th < m.t_imt)) throw invariant_violation("ThermalGeometry: t_th must lie below the model's t_imt");
}

namespace detail {
/// t_th - t; t = t_th is accepted only where the formula vanishes there.
inline double thermal_gap(const ThermalGeometry& g, double t, const char* what, bool allow_zero) {
    validate(g);
    if (!(t < g.t_th || (allow_zero && t == g.t_th))) {
        std::ostringstream os;
        os << what << ": ambient " << t << " degC not below t_th = " << g.t_th << " degC";
        throw invalid_input(os.str());
    }
    return g.t_th - t;
}
}  // namespace detail

/// I_TH = 1/2 sqrt(3 R_R/(R_R-1)) sqrt(1/rho_20) sqrt(A_c/R_th0) sqrt(A_cs/L) (T_TH - T)^(2/3).
inline double threshold_current(const ThermalGeometry& g, double t) {
    const double gap = detail::thermal_gap(g, t, "threshold_current", true);
    return 0.5 * std::sqrt(3.0 * g.r_r / (g.r_r - 1.0)) * std::sqrt(1.0 / g.rho_20) * std::sqrt(g.a_c / g.r_th0) *
           std::sqrt(g.a_cs / g.l_dev) * std::pow(gap, 2.0 / 3.0);
}

/// P_TH = A_c/(2 R_th0) R_R/(R_R-1) (T_TH - T)^(4/3).
inline double threshold_power(const ThermalGeometry& g, double t) {
    const double gap = detail::thermal_gap(g, t, "threshold_power", true);
    return g.a_c / (2.0 * g.r_th0) * g.r_r / (g.r_r - 1.0) * std::pow(gap, 4.0 / 3.0);
}

/// T_spk/P_TH = 2 (R_th0/A_c) (R_R - 1) (T_TH - T)^(-1/3)  [K/W].
inline double spike_temp_power_ratio(const ThermalGeometry& g, double t) {
    const double gap = detail::thermal_gap(g, t, "spike_temp_power_ratio", false);
    return 2.0 * g.r_th0 / g.a_c * (g.r_r - 1.0) * std::pow(gap, -1.0 / 3.0);
}

struct ThermalSweepRow {
    double t = 0.0;
    double i_th = 0.0;
    double p_th = 0.0;
    double ratio = 0.0;
};

/// Tabulates the three formulas over ambient temperatures below t_th.
inline std::vector<ThermalSweepRow> thermal_sweep(const ThermalGeometry& g, std::span<const double> temperatures) {
    std::vector<ThermalSweepRow> out;
    out.reserve(temperatures.size());
    for (double t : temperatures) {
        out.push_back({t, threshold_current(g, t), threshold_power(g, t), spike_temp_power_ratio(g, t)});
    }
    return out;
}

}  // namespace mott
