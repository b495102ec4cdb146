#pragma once

// Waveform -> parameters: cycle segmentation, single-exponential branch fits,
// parameter extraction, jitter and frequency statistics, plus the two
// transistor characterisation helpers (series resistance, Y-function).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "mott/analytic.hpp"
#include "mott/detail/levenberg_marquardt.hpp"
#include "mott/device_model.hpp"
#include "mott/error.hpp"
#include "mott/statistics.hpp"
#include "mott/waveform.hpp"

namespace mott {

struct Cycle {
    double t_start = 0.0;
    double t_end = 0.0;
    double period = 0.0;
    double frequency = 0.0;
    double v_max = 0.0;
    double v_min = 0.0;
    std::optional<double> energy;  ///< only with a bias current
};

struct Segmentation {
    std::vector<Cycle> cycles;
    std::vector<double> crossings;  ///< debounced rising trigger crossings
    std::string diagnostic;         ///< set when fewer than two crossings were found
};

struct TriggerLevels {
    double trigger;
    double hysteresis;
};

/// Midpoint trigger, hysteresis 10% of the record swing.
inline TriggerLevels default_trigger(const Waveform& w) {
    validate(w);
    const auto [lo, hi] = std::minmax_element(w.samples.begin(), w.samples.end());
    return {0.5 * (*lo + *hi), 0.1 * (*hi - *lo)};
}

/// Rising crossings of `trigger`, re-armed only after the signal has gone
/// below trigger - hysteresis. Crossing times are linearly interpolated.
inline std::vector<double> rising_crossings(const Waveform& w, double trigger, double hysteresis) {
    validate(w);
    if (!(hysteresis >= 0.0)) throw invalid_input("segment: hysteresis must be >= 0");
    std::vector<double> out;
    const auto& s = w.samples;
    bool armed = s.front() < trigger - hysteresis;
    for (std::size_t k = 1; k < s.size(); ++k) {
        if (!armed) {
            if (s[k] < trigger - hysteresis) armed = true;
            continue;
        }
        if (s[k - 1] < trigger && s[k] >= trigger) {
            const double frac = (trigger - s[k - 1]) / (s[k] - s[k - 1]);
            out.push_back(w.time(k - 1) + frac * w.dt);
            armed = s[k] < trigger - hysteresis;
        }
    }
    return out;
}

/// Cycles between consecutive debounced rising crossings. With i_bias the
/// per-cycle energy integral of V*I is filled in.
inline Segmentation segment_cycles(const Waveform& w, double trigger, double hysteresis,
                                   std::optional<double> i_bias = std::nullopt) {
    validate(w);
    const auto [lo, hi] = std::minmax_element(w.samples.begin(), w.samples.end());
    if (trigger < *lo || trigger > *hi) {
        std::ostringstream os;
        os << "segment: trigger " << trigger << " V outside the record range [" << *lo << ", " << *hi << "] V";
        throw invalid_input(os.str());
    }
    Segmentation seg;
    seg.crossings = rising_crossings(w, trigger, hysteresis);
    if (seg.crossings.size() < 2) {
        seg.diagnostic = "segment: fewer than two rising crossings (" + std::to_string(seg.crossings.size()) + ")";
        return seg;
    }
    for (std::size_t c = 0; c + 1 < seg.crossings.size(); ++c) {
        Cycle cy;
        cy.t_start = seg.crossings[c];
        cy.t_end = seg.crossings[c + 1];
        cy.period = cy.t_end - cy.t_start;
        cy.frequency = 1.0 / cy.period;
        const Waveform part = slice(w, cy.t_start, cy.t_end);
        if (part.empty()) {
            cy.v_max = cy.v_min = trigger;
        } else {
            const auto [a, b] = std::minmax_element(part.samples.begin(), part.samples.end());
            cy.v_min = std::min(*a, trigger);
            cy.v_max = std::max(*b, trigger);
            if (i_bias) cy.energy = energy_per_spike(part, *i_bias);
        }
        seg.cycles.push_back(cy);
    }
    return seg;
}

inline Segmentation segment_cycles(const Waveform& w, std::optional<double> i_bias = std::nullopt) {
    const auto t = default_trigger(w);
    return segment_cycles(w, t.trigger, t.hysteresis, i_bias);
}

// -----------------------------------------------------------------------------
// Exponential fit
// -----------------------------------------------------------------------------

struct ExpFit {
    double v0 = 0.0;  ///< value at t0
    double va = 0.0;  ///< asymptote
    double tau = 0.0;
    double t0 = 0.0;
    double rms_residual = 0.0;
    int iterations = 0;

    [[nodiscard]] double operator()(double t) const noexcept { return relax(v0, va, tau, t - t0); }
};

namespace detail {

/// Starting point: three-point asymptote extrapolation from equally spaced
/// samples, then a log-linear fit of |V - va|.
inline std::array<double, 3> exp_fit_guess(std::span<const double> u, std::span<const double> y) {
    const std::size_t n = y.size();
    const std::size_t h = (n - 1) / 2;
    const double y0 = y[0];
    const double y1 = y[h];
    const double y2 = y[2 * h];
    const double den = y0 + y2 - 2.0 * y1;
    const bool rising = y.back() > y.front();
    double va = 0.0;
    const double span = std::abs(y.back() - y.front());
    if (den != 0.0) va = (y0 * y2 - y1 * y1) / den;
    const bool ok = std::isfinite(va) && (rising ? va > *std::max_element(y.begin(), y.end())
                                                 : va < *std::min_element(y.begin(), y.end()));
    if (!ok) va = rising ? y.back() + span : y.back() - span;
    std::vector<double> xs;
    std::vector<double> ls;
    for (std::size_t k = 0; k < n; ++k) {
        const double d = std::abs(y[k] - va);
        if (d > 0.0) {
            xs.push_back(u[k]);
            ls.push_back(std::log(d));
        }
    }
    double s = 1.0;
    double v0 = y0;
    if (xs.size() >= 2) {
        try {
            const auto lf = fit_line(xs, ls);
            if (lf.slope < 0.0) {
                s = -1.0 / lf.slope;
                v0 = va + (rising ? -1.0 : 1.0) * std::exp(lf.intercept);
            }
        } catch (const invalid_input&) {
        }
    }
    return {v0, va, s};
}

}  // namespace detail

/// Least-squares fit of V(t) = (v0 - va) exp(-(t - t0)/tau) + va over the
/// samples in [t_from, t_to]; t0 is pinned to the first sample time.
inline ExpFit fit_exponential(const Waveform& w, double t_from, double t_to) {
    const Waveform seg = slice(w, t_from, t_to);
    if (seg.size() < 8) {
        std::ostringstream os;
        os << "fit_exponential: segment [" << t_from << ", " << t_to << "] s has " << seg.size()
           << " samples (need 8)";
        throw invalid_input(os.str());
    }
    const std::size_t n = seg.size();
    const double t0 = seg.t0;
    const double length = seg.t_end() - t0;
    std::vector<double> u(n);
    for (std::size_t k = 0; k < n; ++k) u[k] = static_cast<double>(k) * seg.dt / length;
    const auto& y = seg.samples;
    const auto [lo, hi] = std::minmax_element(y.begin(), y.end());
    const double swing = *hi - *lo;
    if (!(swing > 1e-12 * std::max(1.0, std::abs(*hi)))) throw numerical_failure("fit_exponential: flat segment");

    const auto g = detail::exp_fit_guess(u, y);
    Eigen::VectorXd x(3);
    x << g[0], g[1], g[2];
    // Voltages are normalised by the swing so all three unknowns are O(1).
    const double vs = swing;
    x[0] /= vs;
    x[1] /= vs;

    auto residual = [&](const Eigen::VectorXd& p, Eigen::VectorXd& r) {
        for (std::size_t k = 0; k < n; ++k) {
            const double e = std::exp(-u[k] / p[2]);
            r[static_cast<Eigen::Index>(k)] = (p[0] - p[1]) * e + p[1] - y[k] / vs;
        }
    };
    auto jacobian = [&](const Eigen::VectorXd& p, Eigen::MatrixXd& J) {
        for (std::size_t k = 0; k < n; ++k) {
            const auto i = static_cast<Eigen::Index>(k);
            const double e = std::exp(-u[k] / p[2]);
            J(i, 0) = e;
            J(i, 1) = 1.0 - e;
            J(i, 2) = (p[0] - p[1]) * e * u[k] / (p[2] * p[2]);
        }
    };
    const auto res = detail::levenberg_marquardt(residual, jacobian, x, n);
    if (!res.converged || !(res.x[2] > 0.0) || !res.x.allFinite()) {
        std::ostringstream os;
        os << "fit_exponential: no convergence on [" << t_from << ", " << t_to << "] s after " << res.iterations
           << " iterations";
        throw numerical_failure(os.str());
    }
    ExpFit f;
    f.v0 = res.x[0] * vs;
    f.va = res.x[1] * vs;
    f.tau = res.x[2] * length;
    f.t0 = t0;
    f.iterations = res.iterations;
    double ss = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        const double r = f(seg.time(k)) - y[k];
        ss += r * r;
    }
    f.rms_residual = std::sqrt(ss / static_cast<double>(n));
    return f;
}

// -----------------------------------------------------------------------------
// Parameter extraction
// -----------------------------------------------------------------------------

struct SpreadEntry {
    double q25 = 0.0;
    double median = 0.0;
    double q75 = 0.0;
    std::size_t count = 0;
};

struct ExtractionReport {
    MemristorParams params;
    /// Indexed like MemristorParams::field_names.
    std::array<SpreadEntry, 6> spread{};
    std::array<SpreadEntry, 2> tau{};  ///< rising, falling time constants
    std::size_t cycles = 0;
};

namespace detail {

inline SpreadEntry spread_of(std::span<const double> x) {
    return {quantile(x, 0.25), quantile(x, 0.5), quantile(x, 0.75), x.size()};
}

/// Samples of [k_from, k_to] whose values lie within 5%-95% of [v_lo, v_hi],
/// returned as the covering time interval.
inline std::optional<std::pair<double, double>> fit_window(const Waveform& w, std::size_t k_from, std::size_t k_to,
                                                           double v_lo, double v_hi) {
    const double a = v_lo + 0.05 * (v_hi - v_lo);
    const double b = v_lo + 0.95 * (v_hi - v_lo);
    std::optional<std::size_t> first;
    std::size_t last = 0;
    for (std::size_t k = k_from; k <= k_to; ++k) {
        const double v = w.samples[k];
        if (v >= a && v <= b) {
            if (!first) first = k;
            last = k;
        }
    }
    if (!first) return std::nullopt;
    return std::make_pair(w.time(*first), w.time(last));
}

/// Time in [ta, tb] where two fitted branches meet; nullopt without a sign change.
inline std::optional<double> branch_intersection(const ExpFit& f, const ExpFit& g, double ta, double tb) {
    auto d = [&](double t) { return f(t) - g(t); };
    double da = d(ta);
    const double db = d(tb);
    if (!(da * db <= 0.0)) return std::nullopt;
    for (int i = 0; i < 200 && tb - ta > 1e-15 * std::abs(tb); ++i) {
        const double tm = 0.5 * (ta + tb);
        const double dm = d(tm);
        if ((dm <= 0.0) == (da <= 0.0)) {
            ta = tm;
            da = dm;
        } else {
            tb = tm;
        }
    }
    return 0.5 * (ta + tb);
}

}  // namespace detail

/// Per cycle: exponential fits of the falling branch (peak -> trough) and of
/// the following rising branch (trough -> next peak) inside 5%-95% of the
/// swing. R = tau/C_L and V_o = V_a - I*R; with a finite load r_l the
/// Thevenin combination is undone first. V_TH and V_HL are the meeting points
/// of adjacent fitted branches, falling back to sample extrema. Returned
/// parameters are per-parameter medians.
inline ExtractionReport extract_model_params(const Waveform& w, double c_l, double i_bias, double trigger,
                                             double r_l = std::numeric_limits<double>::infinity(),
                                             std::optional<double> hysteresis = std::nullopt) {
    if (!(c_l > 0.0)) throw invalid_input("extract: c_l must be positive");
    if (!(r_l > 0.0)) throw invalid_input("extract: r_l must be positive");
    const auto dflt = default_trigger(w);
    const auto seg = segment_cycles(w, trigger, hysteresis.value_or(dflt.hysteresis));
    if (seg.cycles.size() < 5) {
        std::ostringstream os;
        os << "extract: need at least 5 cycles, found " << seg.cycles.size();
        if (!seg.diagnostic.empty()) os << " (" << seg.diagnostic << ")";
        throw invalid_input(os.str());
    }
    const auto index_at = [&](double t) {
        const double x = std::ceil((t - w.t0) / w.dt - 1e-9);
        return std::min(static_cast<std::size_t>(std::max(0.0, x)), w.size() - 1);
    };
    // Peak and following trough inside each cycle.
    struct Turn {
        std::size_t peak;
        std::size_t trough;
    };
    std::vector<Turn> turns;
    for (const auto& cy : seg.cycles) {
        const std::size_t a = index_at(cy.t_start);
        const std::size_t b = std::min(index_at(cy.t_end), w.size() - 1);
        std::size_t kp = a;
        for (std::size_t k = a; k <= b; ++k) {
            if (w.samples[k] > w.samples[kp]) kp = k;
        }
        std::size_t kt = kp;
        for (std::size_t k = kp; k <= b; ++k) {
            if (w.samples[k] < w.samples[kt]) kt = k;
        }
        turns.push_back({kp, kt});
    }

    const double g_l = std::isfinite(r_l) ? 1.0 / r_l : 0.0;
    auto undo_load = [&](double tau, double v_a, double& r, double& v_o) {
        const double g = c_l / tau;
        const double gr = g - g_l;
        if (!(gr > 0.0)) throw numerical_failure("extract: fitted time constant inconsistent with r_l");
        r = 1.0 / gr;
        v_o = r * (v_a * g - i_bias);
    };

    std::vector<double> r_i, r_m, v_oi, v_om, v_th, v_hl, tau_r, tau_f;
    std::vector<std::optional<ExpFit>> falls(turns.size());
    std::vector<std::optional<ExpFit>> rises(turns.size());
    for (std::size_t c = 0; c < turns.size(); ++c) {
        const auto& tn = turns[c];
        const double vp = w.samples[tn.peak];
        const double vt = w.samples[tn.trough];
        try {
            if (auto win = detail::fit_window(w, tn.peak, tn.trough, vt, vp)) {
                const auto f = fit_exponential(w, win->first, win->second);
                falls[c] = f;
                double r = 0.0;
                double vo = 0.0;
                undo_load(f.tau, f.va, r, vo);
                r_m.push_back(r);
                v_om.push_back(vo);
                tau_f.push_back(f.tau);
            }
            if (c + 1 < turns.size()) {
                const auto& nx = turns[c + 1];
                if (auto win = detail::fit_window(w, tn.trough, nx.peak, vt, w.samples[nx.peak])) {
                    const auto f = fit_exponential(w, win->first, win->second);
                    rises[c] = f;
                    double r = 0.0;
                    double vo = 0.0;
                    undo_load(f.tau, f.va, r, vo);
                    r_i.push_back(r);
                    v_oi.push_back(vo);
                    tau_r.push_back(f.tau);
                }
            }
        } catch (const error& e) {
            std::ostringstream os;
            os << "extract: cycle " << c << ": " << e.what();
            throw numerical_failure(os.str());
        }
    }
    for (std::size_t c = 0; c < turns.size(); ++c) {
        const auto& tn = turns[c];
        // Peak of cycle c: rising branch of cycle c-1 meets falling branch of c.
        std::optional<double> vth;
        if (c > 0 && rises[c - 1] && falls[c] && tn.peak + 1 < w.size()) {
            if (auto t = detail::branch_intersection(*rises[c - 1], *falls[c], w.time(tn.peak), w.time(tn.peak + 1))) {
                vth = (*falls[c])(*t);
            }
        }
        v_th.push_back(vth.value_or(w.samples[tn.peak]));
        std::optional<double> vhl;
        if (falls[c] && rises[c] && tn.trough + 1 < w.size()) {
            if (auto t = detail::branch_intersection(*falls[c], *rises[c], w.time(tn.trough), w.time(tn.trough + 1))) {
                vhl = (*rises[c])(*t);
            }
        }
        v_hl.push_back(vhl.value_or(w.samples[tn.trough]));
    }
    if (r_i.empty() || r_m.empty()) throw numerical_failure("extract: no fittable rising or falling branch");

    ExtractionReport rep;
    rep.cycles = seg.cycles.size();
    const std::array<const std::vector<double>*, 6> cols{&v_th, &v_hl, &r_i, &r_m, &v_oi, &v_om};
    std::array<double, 6> med{};
    for (std::size_t k = 0; k < 6; ++k) {
        rep.spread[k] = detail::spread_of(*cols[k]);
        med[k] = rep.spread[k].median;
    }
    rep.params = MemristorParams::from_array(med);
    rep.tau[0] = detail::spread_of(tau_r);
    rep.tau[1] = detail::spread_of(tau_f);
    return rep;
}

// -----------------------------------------------------------------------------
// Jitter and frequency statistics
// -----------------------------------------------------------------------------

struct JitterTrace {
    std::vector<std::pair<std::size_t, double>> pairs;  ///< (spike index in a, t_b - t_a)

    [[nodiscard]] std::vector<double> delays() const {
        std::vector<double> d;
        d.reserve(pairs.size());
        for (const auto& p : pairs) d.push_back(p.second);
        return d;
    }
};

/// Order-preserving nearest-neighbour pairing of the rising trigger crossings.
inline JitterTrace compute_jitter(const Waveform& w_a, const Waveform& w_b, double trigger,
                                  std::optional<double> hysteresis = std::nullopt) {
    const double h_a = hysteresis.value_or(default_trigger(w_a).hysteresis);
    const double h_b = hysteresis.value_or(default_trigger(w_b).hysteresis);
    const auto ta = rising_crossings(w_a, trigger, h_a);
    const auto tb = rising_crossings(w_b, trigger, h_b);
    if (ta.empty() || tb.empty()) throw invalid_input("jitter: a record has no trigger crossings");
    const auto na = static_cast<double>(ta.size());
    const auto nb = static_cast<double>(tb.size());
    if (std::abs(na - nb) > 0.1 * std::max(na, nb) + 1.0) {
        std::ostringstream os;
        os << "jitter: spike counts " << ta.size() << " and " << tb.size() << " differ by more than 10%";
        throw invalid_input(os.str());
    }
    JitterTrace out;
    std::size_t j = 0;
    for (std::size_t i = 0; i < ta.size() && j < tb.size(); ++i) {
        while (j + 1 < tb.size() && std::abs(tb[j + 1] - ta[i]) < std::abs(tb[j] - ta[i])) ++j;
        // Leave tb[j] for a later a-spike if that one is strictly closer to it.
        if (i + 1 < ta.size() && std::abs(ta[i + 1] - tb[j]) < std::abs(ta[i] - tb[j]) && tb[j] > ta[i]) continue;
        out.pairs.emplace_back(i, tb[j] - ta[i]);
        ++j;
    }
    if (out.pairs.empty()) throw invalid_input("jitter: no pairable spikes");
    return out;
}

struct FrequencyStats {
    double mean = 0.0;
    double median = 0.0;
    double sigma = 0.0;
    std::vector<HistogramBin> histogram;
};

/// Descriptive statistics of per-cycle frequencies. Without a bin width the
/// histogram uses 20 equal bins.
inline FrequencyStats frequency_stats(std::span<const Cycle> cycles, std::optional<double> bin_width = std::nullopt) {
    if (cycles.size() < 2) throw invalid_input("frequency_stats: need at least 2 cycles");
    std::vector<double> f;
    f.reserve(cycles.size());
    for (const auto& c : cycles) f.push_back(c.frequency);
    FrequencyStats s;
    s.mean = mean(f);
    s.median = median(f);
    s.sigma = stddev(f);
    s.histogram = bin_width ? histogram(f, *bin_width) : histogram_bins(f, 20);
    return s;
}

// -----------------------------------------------------------------------------
// Transistor characterisation
// -----------------------------------------------------------------------------

struct SeriesResistanceFit {
    double r_sd = 0.0;
    double slope = 0.0;  ///< rho/W [ohm/m]
    double r_sd_stderr = 0.0;
    double slope_stderr = 0.0;
};

/// R_tot = R_SD + slope*(L - delta_l); R_SD is the line evaluated at delta_l.
inline SeriesResistanceFit extract_series_resistance(std::span<const std::pair<double, double>> r_tot_by_length,
                                                     double delta_l = 0.0) {
    std::vector<double> l;
    std::vector<double> r;
    for (const auto& [len, res] : r_tot_by_length) {
        l.push_back(len);
        r.push_back(res);
    }
    const auto lf = fit_line(l, r);
    SeriesResistanceFit out;
    out.slope = lf.slope;
    out.r_sd = lf.intercept + lf.slope * delta_l;
    out.slope_stderr = lf.slope_stderr;
    if (l.size() > 2) {
        // Standard error of the fitted line at x = delta_l.
        const double mx = mean(l);
        double sxx = 0.0;
        for (double x : l) sxx += (x - mx) * (x - mx);
        out.r_sd_stderr = lf.residual_sd * std::sqrt(1.0 / static_cast<double>(l.size()) +
                                                     (delta_l - mx) * (delta_l - mx) / sxx);
    }
    return out;
}

struct MobilityResult {
    double mu_eff = 0.0;  ///< m^2/(V s)
    double s1 = 0.0;      ///< low-V_G slope of Y
    std::optional<double> s2;
    std::optional<double> v_break;  ///< gate voltage where the second slope starts
    std::vector<double> y;          ///< Y = |I_D|/sqrt(g_m), sorted by V_G
};

/// Y-function method: Y = I_D/sqrt(g_m) is linear in V_G with slope
/// S1 = sqrt((W/L) C_ox mu V_DS). A two-segment least-squares split (at
/// least 3 points per side) separates the low-V_G slope from a second one.
inline MobilityResult mobility_y_function(std::span<const double> i_d, std::span<const double> g_m,
                                          std::span<const double> v_g, double w, double l, double c_ox,
                                          double v_ds) {
    if (i_d.size() != g_m.size() || i_d.size() != v_g.size()) throw invalid_input("mobility: arrays not aligned");
    if (i_d.size() < 2) throw invalid_input("mobility: need at least 2 points");
    if (v_ds == 0.0) throw invalid_input("mobility: v_ds must be nonzero");
    if (!(w > 0.0 && l > 0.0 && c_ox > 0.0)) throw invalid_input("mobility: w, l, c_ox must be positive");
    const std::size_t n = i_d.size();
    std::vector<std::size_t> order(n);
    for (std::size_t k = 0; k < n; ++k) {
        order[k] = k;
        if (!(g_m[k] > 0.0)) {
            std::ostringstream os;
            os << "mobility: nonpositive g_m at index " << k;
            throw invalid_input(os.str());
        }
    }
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v_g[a] < v_g[b]; });
    MobilityResult out;
    std::vector<double> x(n);
    out.y.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        x[k] = v_g[order[k]];
        out.y[k] = std::abs(i_d[order[k]]) / std::sqrt(g_m[order[k]]);
    }
    auto sse = [&](const LineFit& f, std::size_t a, std::size_t b) {
        double s = 0.0;
        for (std::size_t k = a; k < b; ++k) {
            const double r = out.y[k] - f.intercept - f.slope * x[k];
            s += r * r;
        }
        return s;
    };
    const auto whole = fit_line(x, out.y);
    out.s1 = whole.slope;
    if (n >= 6) {
        double best = sse(whole, 0, n);
        std::span<const double> xs(x);
        std::span<const double> ys(out.y);
        for (std::size_t b = 3; b + 3 <= n; ++b) {
            try {
                const auto f1 = fit_line(xs.first(b), ys.first(b));
                const auto f2 = fit_line(xs.subspan(b), ys.subspan(b));
                const double s = sse(f1, 0, b) + sse(f2, b, n);
                if (s < best * (1.0 - 1e-9)) {
                    best = s;
                    out.s1 = f1.slope;
                    out.s2 = f2.slope;
                    out.v_break = x[b];
                }
            } catch (const invalid_input&) {
            }
        }
    }
    out.mu_eff = out.s1 * out.s1 * l / (w * c_ox * std::abs(v_ds));
    return out;
}

}  // namespace mott
