#pragma once

// =============================================================================
// Time-domain simulation of 1T-1MR oscillator nodes
// =============================================================================
// Node equation (single node):
//   C_L dV/dt = I_drive(t) - branch_current(V) - V/R_L
// Inside one phase the right-hand side is affine in V, so a node relaxes
// exactly towards the Thevenin asymptote of (drive, R_L, affine branch).
// Single-node runs use that closed form; the coupled pair uses RK4 with
// root-refined switching instants.
// =============================================================================

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <optional>
#include <sstream>
#include <utility>
#include <variant>
#include <vector>

#include "mott/analytic.hpp"
#include "mott/device_model.hpp"
#include "mott/error.hpp"
#include "mott/waveform.hpp"

namespace mott {

// -----------------------------------------------------------------------------
// Behavioral junctionless transistor
// -----------------------------------------------------------------------------

/// Square-law stand-in for the depletion-mode p-type JLFET. The channel
/// conducts while v_g < v_t; overdrive is v_t - v_g.
struct JlfetModel {
    double v_t = 3.0;      ///< full-depletion gate voltage [V]
    double k = 2e-6;       ///< transconductance factor [A/V^2]
    double r_sd = 343e3;   ///< series resistance [Ohm]
    double lambda = 0.0;   ///< output-conductance factor [1/V]

    bool operator==(const JlfetModel&) const = default;
};

namespace detail {
inline double jlfet_channel_current(const JlfetModel& m, double v_ov, double v_ds) noexcept {
    if (v_ov <= 0.0 || v_ds <= 0.0) return 0.0;
    const double clm = 1.0 + m.lambda * v_ds;
    if (v_ds < v_ov) return m.k * (v_ov * v_ds - 0.5 * v_ds * v_ds) * clm;
    return 0.5 * m.k * v_ov * v_ov * clm;
}
}  // namespace detail

/// Drain current magnitude for a drain-source drop v_ds >= 0, with the series
/// resistance solved self-consistently: I = f(v_ds - I*r_sd).
inline double jlfet_current(const JlfetModel& m, double v_g, double v_ds) {
    if (!(m.k > 0.0) || !(m.r_sd >= 0.0)) throw invalid_input("jlfet: k must be > 0 and r_sd >= 0");
    const double v_ov = m.v_t - v_g;
    if (v_ov <= 0.0 || v_ds <= 0.0) return 0.0;
    if (m.r_sd == 0.0) return detail::jlfet_channel_current(m, v_ov, v_ds);
    // g(I) = f(v_ds - I r_sd) - I is strictly decreasing on [0, v_ds/r_sd].
    double lo = 0.0;
    double hi = v_ds / m.r_sd;
    for (int it = 0; it < 200 && hi - lo > 1e-16 * hi; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (detail::jlfet_channel_current(m, v_ov, v_ds - mid * m.r_sd) - mid > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

// -----------------------------------------------------------------------------
// Gate signals and bias drives
// -----------------------------------------------------------------------------

struct GateConstant {
    double v = 0.0;
    bool operator==(const GateConstant&) const = default;
};
struct GateRamp {
    double v0 = 0.0;
    double v1 = 0.0;
    double t_total = 0.0;
    bool operator==(const GateRamp&) const = default;
};
struct GateSine {
    double v_mid = 0.0;
    double v_amp = 0.0;
    double f = 0.0;
    bool operator==(const GateSine&) const = default;
};
/// v_high for the first duty fraction of each period, v_low for the rest.
struct GateSquare {
    double v_low = 0.0;
    double v_high = 0.0;
    double f = 0.0;
    double duty = 0.5;
    bool operator==(const GateSquare&) const = default;
};

using GateSignal = std::variant<GateConstant, GateRamp, GateSine, GateSquare>;

inline void validate(const GateSignal& g) {
    std::visit(
        [](const auto& s) {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, GateSine> || std::is_same_v<T, GateSquare>) {
                if (!(s.f > 0.0)) throw invalid_input("gate signal: frequency must be positive");
            }
            if constexpr (std::is_same_v<T, GateSquare>) {
                if (!(s.duty > 0.0 && s.duty < 1.0)) throw invalid_input("gate signal: duty must be in (0, 1)");
            }
            if constexpr (std::is_same_v<T, GateRamp>) {
                if (!(s.t_total > 0.0)) throw invalid_input("gate signal: ramp duration must be positive");
            }
        },
        g);
}

inline double gate_voltage(const GateSignal& g, double t) {
    return std::visit(
        [t](const auto& s) -> double {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, GateConstant>) {
                return s.v;
            } else if constexpr (std::is_same_v<T, GateRamp>) {
                return s.v0 + (s.v1 - s.v0) * std::clamp(t / s.t_total, 0.0, 1.0);
            } else if constexpr (std::is_same_v<T, GateSine>) {
                return s.v_mid + s.v_amp * std::sin(2.0 * std::numbers::pi * s.f * t);
            } else {
                const double cyc = s.f * t;
                return (cyc - std::floor(cyc)) < s.duty ? s.v_high : s.v_low;
            }
        },
        g);
}

/// Period of the gate signal; nullopt for a constant gate.
inline std::optional<double> gate_period(const GateSignal& g) {
    return std::visit(
        [](const auto& s) -> std::optional<double> {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, GateConstant>) {
                return std::nullopt;
            } else if constexpr (std::is_same_v<T, GateRamp>) {
                return s.t_total;
            } else {
                return 1.0 / s.f;
            }
        },
        g);
}

/// A handful of gate levels spanning the signal's range.
inline std::vector<double> gate_levels(const GateSignal& g) {
    return std::visit(
        [](const auto& s) -> std::vector<double> {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, GateConstant>) {
                return {s.v};
            } else if constexpr (std::is_same_v<T, GateSquare>) {
                return {s.v_low, s.v_high};
            } else {
                double lo = 0.0;
                double hi = 0.0;
                if constexpr (std::is_same_v<T, GateRamp>) {
                    lo = std::min(s.v0, s.v1);
                    hi = std::max(s.v0, s.v1);
                } else {
                    lo = s.v_mid - std::abs(s.v_amp);
                    hi = s.v_mid + std::abs(s.v_amp);
                }
                std::vector<double> out;
                for (int k = 0; k <= 32; ++k) out.push_back(lo + (hi - lo) * k / 32.0);
                return out;
            }
        },
        g);
}

struct ConstantCurrent {
    double i = 0.0;
    bool operator==(const ConstantCurrent&) const = default;
};

/// Transistor current source between the node and the supply. The transistor
/// sees a drain-source drop of |v_ss|; node swing is neglected.
struct TransistorDrive {
    JlfetModel model;
    GateSignal gate = GateConstant{};
    double v_ss = -10.0;
    bool operator==(const TransistorDrive&) const = default;
};

using BiasDrive = std::variant<ConstantCurrent, TransistorDrive>;

inline double drive_current(const BiasDrive& d, double t) {
    if (const auto* cc = std::get_if<ConstantCurrent>(&d)) return cc->i;
    const auto& tr = std::get<TransistorDrive>(d);
    return jlfet_current(tr.model, gate_voltage(tr.gate, t), std::abs(tr.v_ss));
}

/// Throws invalid_input unless the drive is positive over its whole range.
inline void validate(const BiasDrive& d) {
    if (const auto* cc = std::get_if<ConstantCurrent>(&d)) {
        if (!(cc->i > 0.0)) throw invalid_input("bias drive: drive current must be positive");
        return;
    }
    const auto& tr = std::get<TransistorDrive>(d);
    validate(tr.gate);
    for (double vg : gate_levels(tr.gate)) {
        if (!(jlfet_current(tr.model, vg, std::abs(tr.v_ss)) > 0.0)) {
            std::ostringstream os;
            os << "bias drive: transistor current nonpositive at gate voltage " << vg << " V";
            throw invalid_input(os.str());
        }
    }
}

// -----------------------------------------------------------------------------
// Circuit description and results
// -----------------------------------------------------------------------------

struct CircuitConfig {
    double c_l = 70e-12;
    double r_l = 1e6;  ///< +inf disables the load resistor
    BiasDrive drive = ConstantCurrent{20e-6};
    double temperature = 25.0;

    bool operator==(const CircuitConfig&) const = default;
};

inline void validate(const CircuitConfig& c) {
    if (!(c.c_l > 0.0)) throw invalid_input("circuit: c_l must be positive");
    if (!(c.r_l > 0.0)) throw invalid_input("circuit: r_l must be positive");
    validate(c.drive);
}

struct SwitchEvent {
    double time = 0.0;
    int direction = 0;  ///< +1 insulator->metal, -1 metal->insulator
    bool operator==(const SwitchEvent&) const = default;
};

struct SimulationResult {
    Waveform waveform;
    std::vector<SwitchEvent> events;
};

struct InitialState {
    double v = 0.0;
    Phase phase = Phase::insulating;
};

namespace detail {

struct Relaxation {
    double v_a;
    double tau;
};

inline Relaxation thevenin(const MemristorParams& p, Phase ph, double i_drive, double c_l, double r_l) {
    const double r = ph == Phase::insulating ? p.r_i : p.r_m;
    const double v_o = ph == Phase::insulating ? p.v_oi : p.v_om;
    const double g = 1.0 / r + 1.0 / r_l;
    return {(i_drive + v_o / r) / g, c_l / g};
}

inline std::size_t step_count(double duration, double dt) {
    if (!(duration > 0.0)) throw invalid_input("simulation: duration must be positive");
    if (!(dt > 0.0)) throw invalid_input("simulation: dt must be positive");
    return static_cast<std::size_t>(std::llround(duration / dt));
}

inline void check_resolution(const MemristorParams& p, double c_l, double dt, double divisor) {
    const double limit = std::min(c_l * p.r_m, c_l * p.r_i) / divisor;
    if (dt > limit * (1.0 + 1e-12)) {
        std::ostringstream os;
        os << "simulation: dt = " << dt << " s violates the resolution guard (<= " << limit << " s)";
        throw invalid_input(os.str());
    }
}

/// Advance one node by h seconds at constant drive, switching phase exactly
/// where the relaxation curve meets v_th or v_hl.
inline void advance_exact(const MemristorParams& p, double c_l, double r_l, double i_drive, double t,
                          double h, double& v, Phase& phase, std::vector<SwitchEvent>& events) {
    double elapsed = 0.0;
    for (;;) {
        const Phase np = next_phase(p, phase, v);
        if (np != phase) {
            events.push_back({t + elapsed, np == Phase::metallic ? +1 : -1});
            phase = np;
            continue;
        }
        const double rem = h - elapsed;
        const auto [v_a, tau] = thevenin(p, phase, i_drive, c_l, r_l);
        const bool rising = phase == Phase::insulating;
        const double level = rising ? p.v_th : p.v_hl;
        const bool reachable = rising ? v_a > level : v_a < level;
        if (reachable) {
            const double t_cross = tau * std::log((v - v_a) / (level - v_a));
            if (t_cross <= rem) {
                elapsed += t_cross;
                v = level;
                phase = rising ? Phase::metallic : Phase::insulating;
                events.push_back({t + elapsed, rising ? +1 : -1});
                continue;
            }
        }
        v = relax(v, v_a, tau, rem);
        return;
    }
}

template <class CurrentAt>
SimulationResult run_exact(const MemristorParams& p, double c_l, double r_l, double duration, double dt,
                           InitialState init, CurrentAt&& current_at) {
    const std::size_t n = step_count(duration, dt);
    SimulationResult out;
    out.waveform.dt = dt;
    out.waveform.t0 = 0.0;
    out.waveform.samples.reserve(n + 1);
    double v = init.v;
    Phase phase = init.phase;
    out.waveform.samples.push_back(v);
    for (std::size_t k = 0; k < n; ++k) {
        const double t = static_cast<double>(k) * dt;
        const double i = current_at(t);
        advance_exact(p, c_l, r_l, i, t, dt, v, phase, out.events);
        out.waveform.samples.push_back(v);
    }
    return out;
}

}  // namespace detail

/// Single node under its configured drive (constant current or transistor
/// with a zero-order-held gate voltage). Requires dt <= C_L*min(r_m, r_i)/50.
inline SimulationResult simulate_single(const MemristorParams& p, const CircuitConfig& circuit, double duration,
                                        double dt, InitialState init = {}) {
    validate(p);
    validate(circuit);
    detail::check_resolution(p, circuit.c_l, dt, 50.0);
    return detail::run_exact(p, circuit.c_l, circuit.r_l, duration, dt, init,
                             [&](double t) { return drive_current(circuit.drive, t); });
}

/// Voltage-controlled operation. Same dynamics as simulate_single; the gate
/// period must be at least ten times the fastest oscillation period reached
/// over the gate range.
inline SimulationResult simulate_vco(const MemristorParams& p, const CircuitConfig& circuit, double duration,
                                     double dt, InitialState init = {}) {
    const auto* tr = std::get_if<TransistorDrive>(&circuit.drive);
    if (tr == nullptr) throw invalid_input("simulate_vco: circuit drive must be a transistor");
    validate(circuit);
    if (const auto gp = gate_period(tr->gate)) {
        double fastest = std::numeric_limits<double>::infinity();
        for (double vg : gate_levels(tr->gate)) {
            const double i = jlfet_current(tr->model, vg, std::abs(tr->v_ss));
            if (i > 0.0 && assess(p, i).oscillates) fastest = std::min(fastest, period(p, i, circuit.c_l).period);
        }
        if (std::isfinite(fastest) && *gp < 10.0 * fastest) {
            std::ostringstream os;
            os << "simulate_vco: gate period " << *gp << " s is not >= 10x the oscillation period " << fastest
               << " s";
            throw invalid_input(os.str());
        }
    }
    return simulate_single(p, circuit, duration, dt, init);
}

/// Number of rising switch events inside each [start, end) window.
inline std::vector<std::size_t> spikes_per_window(const std::vector<SwitchEvent>& events,
                                                  const std::vector<std::pair<double, double>>& windows) {
    std::vector<std::size_t> counts(windows.size(), 0);
    for (std::size_t w = 0; w < windows.size(); ++w) {
        for (const auto& e : events) {
            if (e.direction > 0 && e.time >= windows[w].first && e.time < windows[w].second) ++counts[w];
        }
    }
    return counts;
}

/// Complete low-level intervals of a square gate inside [0, duration]. For the
/// p-type transistor the low level is the conducting one.
inline std::vector<std::pair<double, double>> square_low_windows(const GateSquare& sq, double duration) {
    std::vector<std::pair<double, double>> out;
    const double period = 1.0 / sq.f;
    for (std::size_t n = 0;; ++n) {
        const double start = (static_cast<double>(n) + sq.duty) * period;
        const double end = static_cast<double>(n + 1) * period;
        if (end > duration * (1.0 + 1e-12)) break;
        out.emplace_back(start, end);
    }
    return out;
}

// -----------------------------------------------------------------------------
// Resistively coupled pair
// -----------------------------------------------------------------------------

struct CoupledConfig {
    CircuitConfig node_a;
    CircuitConfig node_b;
    double r_c = 343e3;
    /// Supply overrides applied to transistor drives.
    std::optional<double> v_ss_a;
    std::optional<double> v_ss_b;

    bool operator==(const CoupledConfig&) const = default;
};

struct CoupledInitialState {
    InitialState a;
    InitialState b;
};

struct CoupledResult {
    SimulationResult a;
    SimulationResult b;
};

namespace detail {

inline BiasDrive with_supply(BiasDrive d, std::optional<double> v_ss) {
    if (auto* tr = std::get_if<TransistorDrive>(&d); tr != nullptr && v_ss) tr->v_ss = *v_ss;
    return d;
}

struct PairState {
    double va;
    double vb;
};

class CoupledSystem {
public:
    CoupledSystem(const MemristorParams& pa, const MemristorParams& pb, const CoupledConfig& cfg)
        : pa_(pa), pb_(pb), cfg_(cfg) {}

    PairState deriv(const PairState& s, Phase pha, Phase phb, double ia, double ib) const noexcept {
        const double ic = (s.va - s.vb) / cfg_.r_c;
        const double da =
            (ia - branch_current(pa_, pha, s.va) - s.va / cfg_.node_a.r_l - ic) / cfg_.node_a.c_l;
        const double db =
            (ib - branch_current(pb_, phb, s.vb) - s.vb / cfg_.node_b.r_l + ic) / cfg_.node_b.c_l;
        return {da, db};
    }

    PairState rk4(const PairState& s, Phase pha, Phase phb, double ia, double ib, double h) const noexcept {
        const auto k1 = deriv(s, pha, phb, ia, ib);
        const auto k2 = deriv({s.va + 0.5 * h * k1.va, s.vb + 0.5 * h * k1.vb}, pha, phb, ia, ib);
        const auto k3 = deriv({s.va + 0.5 * h * k2.va, s.vb + 0.5 * h * k2.vb}, pha, phb, ia, ib);
        const auto k4 = deriv({s.va + h * k3.va, s.vb + h * k3.vb}, pha, phb, ia, ib);
        return {s.va + h / 6.0 * (k1.va + 2.0 * k2.va + 2.0 * k3.va + k4.va),
                s.vb + h / 6.0 * (k1.vb + 2.0 * k2.vb + 2.0 * k3.vb + k4.vb)};
    }

private:
    MemristorParams pa_;
    MemristorParams pb_;
    CoupledConfig cfg_;
};

/// Signed distance to the switching level; >= 0 means the node has switched.
inline double switch_gap(const MemristorParams& p, Phase ph, double v) noexcept {
    return ph == Phase::insulating ? v - p.v_th : p.v_hl - v;
}

}  // namespace detail

/// Two nodes joined by r_c. Fixed-step RK4 (dt <= min time constant / 100)
/// with switching instants refined by false position on the RK4 sub-step.
inline CoupledResult simulate_coupled(const MemristorParams& pa, const MemristorParams& pb,
                                      const CoupledConfig& config, double duration, double dt,
                                      CoupledInitialState init = {}) {
    validate(pa);
    validate(pb);
    if (!(config.r_c > 0.0)) throw invalid_input("coupled: r_c must be positive");
    CoupledConfig cfg = config;
    cfg.node_a.drive = detail::with_supply(cfg.node_a.drive, cfg.v_ss_a);
    cfg.node_b.drive = detail::with_supply(cfg.node_b.drive, cfg.v_ss_b);
    validate(cfg.node_a);
    validate(cfg.node_b);
    detail::check_resolution(pa, cfg.node_a.c_l, dt, 100.0);
    detail::check_resolution(pb, cfg.node_b.c_l, dt, 100.0);

    const std::size_t n = detail::step_count(duration, dt);
    const detail::CoupledSystem sys(pa, pb, cfg);
    CoupledResult out;
    for (auto* r : {&out.a, &out.b}) {
        r->waveform.dt = dt;
        r->waveform.t0 = 0.0;
        r->waveform.samples.reserve(n + 1);
    }
    detail::PairState s{init.a.v, init.b.v};
    Phase pha = init.a.phase;
    Phase phb = init.b.phase;
    out.a.waveform.samples.push_back(s.va);
    out.b.waveform.samples.push_back(s.vb);

    auto settle = [&](double t) {
        for (bool changed = true; changed;) {
            changed = false;
            if (const Phase np = next_phase(pa, pha, s.va); np != pha) {
                out.a.events.push_back({t, np == Phase::metallic ? +1 : -1});
                pha = np;
                changed = true;
            }
            if (const Phase np = next_phase(pb, phb, s.vb); np != phb) {
                out.b.events.push_back({t, np == Phase::metallic ? +1 : -1});
                phb = np;
                changed = true;
            }
        }
    };

    for (std::size_t k = 0; k < n; ++k) {
        const double t = static_cast<double>(k) * dt;
        const double ia = drive_current(cfg.node_a.drive, t);
        const double ib = drive_current(cfg.node_b.drive, t);
        double elapsed = 0.0;
        for (int guard = 0; guard < 64; ++guard) {
            settle(t + elapsed);
            const double rem = dt - elapsed;
            const auto trial = sys.rk4(s, pha, phb, ia, ib, rem);
            const bool hit_a = detail::switch_gap(pa, pha, trial.va) >= 0.0;
            const bool hit_b = detail::switch_gap(pb, phb, trial.vb) >= 0.0;
            if (!hit_a && !hit_b) {
                s = trial;
                break;
            }
            // Earliest crossing among the nodes that switch inside this sub-step.
            auto locate = [&](bool node_a) {
                auto gap = [&](double h) {
                    const auto st = sys.rk4(s, pha, phb, ia, ib, h);
                    return node_a ? detail::switch_gap(pa, pha, st.va) : detail::switch_gap(pb, phb, st.vb);
                };
                double lo = 0.0;
                double hi = rem;
                double g_lo = gap(lo);
                double g_hi = gap(hi);
                int side = 0;
                for (int it = 0; it < 200 && hi - lo > 1e-13 * dt; ++it) {
                    double h = (lo * g_hi - hi * g_lo) / (g_hi - g_lo);
                    if (!(h > lo && h < hi)) h = 0.5 * (lo + hi);
                    const double g = gap(h);
                    if (g >= 0.0) {
                        hi = h;
                        g_hi = g;
                        if (side == +1) g_lo *= 0.5;
                        side = +1;
                    } else {
                        lo = h;
                        g_lo = g;
                        if (side == -1) g_hi *= 0.5;
                        side = -1;
                    }
                }
                return hi;
            };
            double h_star = rem;
            if (hit_a) h_star = std::min(h_star, locate(true));
            if (hit_b) h_star = std::min(h_star, locate(false));
            s = sys.rk4(s, pha, phb, ia, ib, h_star);
            elapsed += h_star;
            if (elapsed >= dt) {
                settle(t + dt);
                break;
            }
        }
        out.a.waveform.samples.push_back(s.va);
        out.b.waveform.samples.push_back(s.vb);
    }
    return out;
}

}  // namespace mott
