#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "mott/analysis.hpp"
#include "mott/analytic.hpp"
#include "mott/transient.hpp"

using namespace mott;
using Catch::Approx;

namespace {

const MemristorParams fig3{0.95, 0.65, 40e3, 10e3, 0.8926, 0.30};
constexpr double inf = std::numeric_limits<double>::infinity();

CircuitConfig current_bias(double i, double r_l = inf) {
    CircuitConfig c;
    c.r_l = r_l;
    c.drive = ConstantCurrent{i};
    return c;
}

double simulated_period(const SimulationResult& r) {
    std::vector<double> up;
    for (const auto& e : r.events) {
        if (e.direction > 0) up.push_back(e.time);
    }
    REQUIRE(up.size() >= 4);
    return (up.back() - up[1]) / static_cast<double>(up.size() - 2);
}

// Reference solution of C dV/dt = I - branch(V) - V/R_L with classic RK4 and
// bisection on the switching instants, independent of the exact integrator.
std::vector<double> rk4_reference(const MemristorParams& p, double c, double r_l, double i, double duration,
                                  double dt, double v0) {
    auto f = [&](double v, Phase ph) { return (i - branch_current(p, ph, v) - v / r_l) / c; };
    auto step = [&](double v, Phase ph, double h) {
        const double k1 = f(v, ph);
        const double k2 = f(v + 0.5 * h * k1, ph);
        const double k3 = f(v + 0.5 * h * k2, ph);
        const double k4 = f(v + h * k3, ph);
        return v + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
    };
    const int sub = 10;
    const double h = dt / sub;
    const auto n = static_cast<std::size_t>(std::llround(duration / dt));
    std::vector<double> out{v0};
    double v = v0;
    Phase ph = Phase::insulating;
    for (std::size_t k = 0; k < n; ++k) {
        for (int s = 0; s < sub; ++s) {
            double vn = step(v, ph, h);
            if (next_phase(p, ph, vn) != ph) {
                double lo = 0.0;
                double hi = h;
                for (int it = 0; it < 80; ++it) {
                    const double mid = 0.5 * (lo + hi);
                    (next_phase(p, ph, step(v, ph, mid)) != ph ? hi : lo) = mid;
                }
                const double vs = step(v, ph, hi);
                ph = next_phase(p, ph, vs);
                vn = step(vs, ph, h - hi);
            }
            v = vn;
        }
        out.push_back(v);
    }
    return out;
}

}  // namespace

TEST_CASE("assess by direct substitution") {
    MemristorParams p{0.9, 0.6, 50e3, 10e3, 0.0, 0.05};
    const auto a = assess(p, 20e-6);
    REQUIRE(a.v_ar == Approx(1.0));
    REQUIRE(a.v_af == Approx(0.25));
    REQUIRE(a.threshold_margin == Approx(-0.1));
    REQUIRE(a.holding_margin == Approx(-0.35));
    REQUIRE(a.oscillates);
    REQUIRE_THROWS_AS(assess(p, 0.0), invalid_input);
}

TEST_CASE("high bias at 45 degC fails the holding condition only") {
    TemperatureModel m;
    m.base = fig3;
    m.slopes = {-6e-3, -4e-3, -1000.0, -100.0, -5e-3, -2e-3};
    const auto hot = params_at_temperature(m, 45.0);
    const double i = 1.2 * (hot.v_hl - hot.v_om) / hot.r_m;
    const auto a = assess(hot, i);
    REQUIRE_FALSE(a.oscillates);
    REQUIRE(a.holding_margin > 0.0);
    REQUIRE(a.threshold_margin < 0.0);
}

TEST_CASE("period of the symmetric case is 2 C R ln 2") {
    const double r = 10e3;
    const double c = 70e-12;
    // v_ar = 2 V, v_af = -1 V at I = 100 uA; period() does not require r_i > r_m.
    const MemristorParams p{1.0, 0.0, r, r, 2.0 - r * 100e-6, -1.0 - r * 100e-6};
    const auto b = period(p, 100e-6, c);
    REQUIRE(b.period == Approx(2.0 * c * r * std::log(2.0)).epsilon(1e-14));
    REQUIRE(b.t_rise == Approx(b.t_fall).epsilon(1e-14));
    REQUIRE(b.frequency == Approx(1.0 / b.period));
}

TEST_CASE("period reports the failing margin") {
    const double i_lo = (fig3.v_th - fig3.v_oi) / fig3.r_i;
    const double i_hi = (fig3.v_hl - fig3.v_om) / fig3.r_m;
    try {
        period(fig3, 0.5 * i_lo, 70e-12);
        FAIL("expected not_oscillating");
    } catch (const not_oscillating& e) {
        REQUIRE(e.threshold_failed());
        REQUIRE_FALSE(e.holding_failed());
    }
    try {
        period(fig3, 1.5 * i_hi, 70e-12);
        FAIL("expected not_oscillating");
    } catch (const not_oscillating& e) {
        REQUIRE_FALSE(e.threshold_failed());
        REQUIRE(e.holding_failed());
    }
}

TEST_CASE("period raises exactly when assess says no oscillation") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(0.1e-6, 60e-6);
    for (int k = 0; k < 500; ++k) {
        const double i = u(rng);
        if (assess(fig3, i).oscillates) {
            REQUIRE(period(fig3, i, 70e-12).period > 0.0);
        } else {
            REQUIRE_THROWS_AS(period(fig3, i, 70e-12), not_oscillating);
        }
    }
}

TEST_CASE("period scales linearly with C_L") {
    const double base = period(fig3, 10e-6, 70e-12).period;
    for (double k : {0.5, 2.0, 7.0}) {
        REQUIRE(period(fig3, 10e-6, k * 70e-12).period == Approx(k * base).epsilon(1e-14));
    }
}

TEST_CASE("period diverges at both window edges and peaks inside") {
    const double i_lo = (fig3.v_th - fig3.v_oi) / fig3.r_i;
    const double i_hi = (fig3.v_hl - fig3.v_om) / fig3.r_m;
    double prev = 0.0;
    for (double e = 1e-1; e > 1e-7; e /= 10.0) {
        const double t = period(fig3, i_lo * (1.0 + e), 70e-12).t_rise;
        REQUIRE(t > prev);
        prev = t;
    }
    prev = 0.0;
    for (double e = 1e-1; e > 1e-7; e /= 10.0) {
        const double t = period(fig3, i_hi * (1.0 - e), 70e-12).t_fall;
        REQUIRE(t > prev);
        prev = t;
    }
    const double f_mid = period(fig3, std::sqrt(i_lo * i_hi), 70e-12).frequency;
    REQUIRE(period(fig3, i_lo * 1.001, 70e-12).frequency < f_mid);
    REQUIRE(period(fig3, i_hi * 0.999, 70e-12).frequency < f_mid);
}

TEST_CASE("segment_time and relax are inverse") {
    REQUIRE(segment_time(1.0, 0.5, 0.0, 1e-6) == Approx(1e-6 * std::log(2.0)));
    REQUIRE(segment_time(0.7, 0.7, 0.0, 1e-6) == 0.0);
    REQUIRE_THROWS_AS(segment_time(1.0, -0.1, 0.0, 1e-6), unreachable_target);
    REQUIRE_THROWS_AS(segment_time(0.5, 1.0, 0.0, 1e-6), unreachable_target);
    REQUIRE_THROWS_AS(segment_time(1.0, 0.5, 0.0, 0.0), invalid_input);

    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int k = 0; k < 200; ++k) {
        const double va = u(rng);
        const double from = va + 0.5 + std::abs(u(rng));
        const double to = va + (from - va) * (0.01 + 0.98 * std::abs(u(rng)));
        const double tau = 1e-6 * (1.0 + std::abs(u(rng)));
        const double t = segment_time(from, to, va, tau);
        REQUIRE(relax(from, va, tau, t) == Approx(to).epsilon(1e-12));
    }
}

TEST_CASE("energy_per_spike integrates V*I") {
    Waveform w{1e-9, std::vector<double>(1001, 0.5), 0.0};
    REQUIRE(energy_per_spike(w, 20e-6) == Approx(10e-12).epsilon(1e-12));
    REQUIRE(energy_per_spike(w, 0.0) == 0.0);
    REQUIRE_THROWS_AS(energy_per_spike(Waveform{1e-9, {}, 0.0}, 1e-6), invalid_input);
}

TEST_CASE("jlfet current") {
    JlfetModel m;
    REQUIRE(jlfet_current(m, m.v_t, 5.0) == 0.0);
    REQUIRE(jlfet_current(m, m.v_t + 1.0, 5.0) == 0.0);

    // Deep accumulation, small v_ds: linear channel resistance in series with r_sd.
    const double v_g = -20.0;
    const double v_ov = m.v_t - v_g;
    const double v_ds = 1e-3;
    const double r_ch = 1.0 / (m.k * v_ov);
    REQUIRE(jlfet_current(m, v_g, v_ds) == Approx(v_ds / (r_ch + m.r_sd)).epsilon(1e-3));

    double prev = -1.0;
    for (double vg = 3.0; vg >= -10.0; vg -= 0.05) {
        const double i = jlfet_current(m, vg, 10.0);
        REQUIRE(i >= prev);
        prev = i;
    }
}

TEST_CASE("transient period matches the closed form with R_L disabled") {
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int k = 0; k < 10; ++k) {
        const double i_lo = (fig3.v_th - fig3.v_oi) / fig3.r_i;
        const double i_hi = (fig3.v_hl - fig3.v_om) / fig3.r_m;
        const double i = i_lo + (0.1 + 0.8 * u(rng)) * (i_hi - i_lo);
        const double c = 70e-12;
        const auto b = period(fig3, i, c);
        const double dt = c * fig3.r_m / 50.0;
        const auto r = simulate_single(fig3, current_bias(i), 8.0 * b.period, dt, {fig3.v_hl, Phase::insulating});
        REQUIRE(simulated_period(r) == Approx(b.period).epsilon(1e-3));
    }
}

TEST_CASE("transient sub-threshold bias settles at the rising asymptote") {
    const double i = 0.5 * (fig3.v_th - fig3.v_oi) / fig3.r_i;
    const auto r = simulate_single(fig3, current_bias(i), 200e-6, 70e-12 * 10e3 / 50.0);
    REQUIRE(r.events.empty());
    REQUIRE(r.waveform.samples.back() == Approx(assess(fig3, i).v_ar).epsilon(1e-9));
}

TEST_CASE("transient swing equals the hysteresis window") {
    const double dt = 70e-12 * 10e3 / 50.0;
    const auto r = simulate_single(fig3, current_bias(10e-6), 50e-6, dt, {0.7, Phase::insulating});
    const Waveform w = slice(r.waveform, 10e-6, 50e-6);
    const auto [lo, hi] = std::minmax_element(w.samples.begin(), w.samples.end());
    // Within one sample of the rise/fall slopes near the switching points.
    const double slope = (assess(fig3, 10e-6).v_ar - fig3.v_hl) / (70e-12 * fig3.r_i);
    REQUIRE(*hi - *lo == Approx(fig3.v_th - fig3.v_hl).margin(2.0 * slope * dt));
    REQUIRE(*hi <= fig3.v_th + 1e-12);
    REQUIRE(*lo >= fig3.v_hl - 1e-12);
}

TEST_CASE("transient events alternate and replays are bit-identical") {
    const auto c = current_bias(10e-6, 1e6);
    const double dt = 70e-12 * 10e3 / 50.0;
    const auto a = simulate_single(fig3, c, 40e-6, dt);
    const auto b = simulate_single(fig3, c, 40e-6, dt);
    REQUIRE(a.waveform == b.waveform);
    REQUIRE(a.events.size() == b.events.size());
    REQUIRE(a.events.size() > 10);
    REQUIRE(a.events.front().direction == 1);
    for (std::size_t k = 1; k < a.events.size(); ++k) {
        REQUIRE(a.events[k].direction == -a.events[k - 1].direction);
        REQUIRE(a.events[k].time > a.events[k - 1].time);
    }
}

TEST_CASE("transient resolution guard") {
    const double dt = 70e-12 * 10e3 / 49.0;
    REQUIRE_THROWS_AS(simulate_single(fig3, current_bias(10e-6), 1e-5, dt), invalid_input);
    REQUIRE_THROWS_AS(simulate_single(fig3, current_bias(-1e-6), 1e-5, dt / 2), invalid_input);
}

TEST_CASE("exact integrator agrees with an RK4 reference") {
    const double c = 70e-12;
    const double r_l = 1e6;
    const double i = 10e-6;
    const double dt = c * fig3.r_m / 50.0;
    const double duration = 12e-6;
    const auto r = simulate_single(fig3, current_bias(i, r_l), duration, dt, {0.7, Phase::insulating});
    const auto ref = rk4_reference(fig3, c, r_l, i, duration, dt, 0.7);
    REQUIRE(ref.size() == r.waveform.size());
    const double cycles = duration / period(fig3, i, c).period;
    double worst = 0.0;
    for (std::size_t k = 0; k < ref.size(); ++k) worst = std::max(worst, std::abs(ref[k] - r.waveform.samples[k]));
    REQUIRE(worst < 1e-6 * std::max(1.0, cycles));
}

TEST_CASE("simulate_vco with a constant gate reduces to simulate_single") {
    TransistorDrive tr;
    tr.gate = GateConstant{0.5};
    CircuitConfig c;
    c.r_l = inf;
    c.drive = tr;
    const double dt = 70e-12 * 10e3 / 50.0;
    const auto v = simulate_vco(fig3, c, 30e-6, dt);
    const double i = jlfet_current(tr.model, 0.5, std::abs(tr.v_ss));
    const auto s = simulate_single(fig3, current_bias(i), 30e-6, dt);
    REQUIRE(v.waveform.size() == s.waveform.size());
    for (std::size_t k = 0; k < s.waveform.size(); ++k) {
        REQUIRE(std::abs(v.waveform.samples[k] - s.waveform.samples[k]) < 1e-9);
    }
}

TEST_CASE("simulate_vco frequency follows a gate ramp monotonically") {
    TransistorDrive tr;
    tr.gate = GateRamp{2.0, 0.0, 2e-3};
    CircuitConfig c;
    c.r_l = inf;
    c.drive = tr;
    const auto r = simulate_vco(fig3, c, 2e-3, 70e-12 * 10e3 / 50.0);
    std::vector<double> up;
    for (const auto& e : r.events) {
        if (e.direction > 0) up.push_back(e.time);
    }
    REQUIRE(up.size() > 50);
    // Average frequency over consecutive tenths of the ramp increases.
    double prev = 0.0;
    for (int q = 1; q < 10; ++q) {
        const double t0 = q * 2e-4;
        const double t1 = t0 + 2e-4;
        const auto n = std::count_if(up.begin(), up.end(), [&](double t) { return t >= t0 && t < t1; });
        REQUIRE(static_cast<double>(n) >= prev);
        prev = static_cast<double>(n);
    }
}

TEST_CASE("simulate_vco square gate: spike count halves with doubled gate frequency") {
    TransistorDrive tr;
    tr.gate = GateSquare{1.0, 2.5, 5e3};
    CircuitConfig c;
    c.r_l = inf;
    c.drive = tr;
    const double dt = 70e-12 * 10e3 / 50.0;
    const double i_on = jlfet_current(tr.model, 1.0, 10.0);
    const double f_osc = period(fig3, i_on, c.c_l).frequency;
    std::vector<std::size_t> per;
    for (double f : {5e3, 10e3}) {
        std::get<GateSquare>(std::get<TransistorDrive>(c.drive).gate).f = f;
        const auto sq = std::get<GateSquare>(std::get<TransistorDrive>(c.drive).gate);
        const auto r = simulate_vco(fig3, c, 3.0 / f, dt);
        const auto counts = spikes_per_window(r.events, square_low_windows(sq, 3.0 / f));
        REQUIRE(counts.size() == 3);
        for (auto n : counts) {
            const double expect = std::floor(0.5 / f * f_osc);
            REQUIRE(std::abs(static_cast<double>(n) - expect) <= 1.0);
        }
        per.push_back(counts.front());
    }
    REQUIRE(std::abs(static_cast<double>(per[0]) - 2.0 * static_cast<double>(per[1])) <= 1.0);
}

TEST_CASE("simulate_vco enforces the quasi-static gate") {
    TransistorDrive tr;
    tr.gate = GateSquare{1.0, 2.5, 1e6};
    CircuitConfig c;
    c.r_l = inf;
    c.drive = tr;
    REQUIRE_THROWS_AS(simulate_vco(fig3, c, 1e-5, 1e-8), invalid_input);
}

TEST_CASE("coupled decoupling limit matches single-node runs") {
    CircuitConfig c = current_bias(10e-6);
    CircuitConfig cb = current_bias(12e-6);
    const MemristorParams pb{0.96, 0.66, 41e3, 10e3, 0.8926, 0.30};
    CoupledConfig cc{c, cb, 1e12, std::nullopt, std::nullopt};
    const double dt = 70e-12 * 10e3 / 100.0;
    const auto r = simulate_coupled(fig3, pb, cc, 30e-6, dt, {{0.7, Phase::insulating}, {0.8, Phase::insulating}});
    const auto sa = simulate_single(fig3, c, 30e-6, dt, {0.7, Phase::insulating});
    const auto sb = simulate_single(pb, cb, 30e-6, dt, {0.8, Phase::insulating});
    auto rms = [](const Waveform& x, const Waveform& y) {
        REQUIRE(x.size() == y.size());
        double acc = 0.0;
        for (std::size_t k = 0; k < x.size(); ++k) acc += std::pow(x.samples[k] - y.samples[k], 2);
        return std::sqrt(acc / static_cast<double>(x.size()));
    };
    REQUIRE(rms(r.a.waveform, sa.waveform) < 1e-6);
    REQUIRE(rms(r.b.waveform, sb.waveform) < 1e-6);
}

TEST_CASE("identical coupled nodes lock from antisymmetric starts") {
    CircuitConfig c = current_bias(10e-6);
    CoupledConfig cc{c, c, 343e3, std::nullopt, std::nullopt};
    const double dt = 70e-12 * 10e3 / 100.0;
    const auto r = simulate_coupled(fig3, fig3, cc, 400e-6, dt, {{0.68, Phase::insulating}, {0.92, Phase::insulating}});
    const auto wa = slice(r.a.waveform, 200e-6, 400e-6);
    const auto wb = slice(r.b.waveform, 200e-6, 400e-6);
    const auto fa = frequency_stats(segment_cycles(wa).cycles);
    const auto fb = frequency_stats(segment_cycles(wb).cycles);
    REQUIRE(std::abs(fa.mean - fb.mean) / fa.mean < 1e-3);
}

TEST_CASE("coupled resolution guard and r_c") {
    CircuitConfig c = current_bias(10e-6);
    CoupledConfig cc{c, c, 343e3, std::nullopt, std::nullopt};
    REQUIRE_THROWS_AS(simulate_coupled(fig3, fig3, cc, 1e-5, 70e-12 * 10e3 / 99.0), invalid_input);
    cc.r_c = 0.0;
    REQUIRE_THROWS_AS(simulate_coupled(fig3, fig3, cc, 1e-5, 70e-12 * 10e3 / 100.0), invalid_input);
}
