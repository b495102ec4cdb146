#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <random>

#include "mott/analytic.hpp"
#include "mott/statistics.hpp"
#include "mott/stochastic.hpp"

using namespace mott;
using Catch::Approx;

namespace {

const MemristorParams fig3{0.95, 0.65, 40e3, 10e3, 0.8926, 0.30};

NoiseConfig silent() {
    NoiseConfig n;
    n.pink_amplitude = 0.0;
    n.v_hl_sigma = 0.0;
    return n;
}

// Periodogram at bin k by direct summation (no FFT), averaged over `width`
// adjacent bins.
double band_power(std::span<const double> x, std::size_t k0, std::size_t width) {
    const auto n = static_cast<double>(x.size());
    double acc = 0.0;
    for (std::size_t k = k0; k < k0 + width; ++k) {
        // Goertzel recurrence.
        const double w = 2.0 * std::numbers::pi * static_cast<double>(k) / n;
        const double c = 2.0 * std::cos(w);
        double s1 = 0.0;
        double s2 = 0.0;
        for (double v : x) {
            const double s0 = v + c * s1 - s2;
            s2 = s1;
            s1 = s0;
        }
        acc += s1 * s1 + s2 * s2 - c * s1 * s2;
    }
    return acc / static_cast<double>(width);
}

// Least-squares log-log slope of the periodogram between f_lo and f_hi,
// sampled on log-spaced groups of bins.
double psd_slope(const Waveform& w, double f_lo, double f_hi, int groups = 24, std::size_t width = 8) {
    const double df = 1.0 / (static_cast<double>(w.size()) * w.dt);
    std::vector<double> lf;
    std::vector<double> lp;
    for (int g = 0; g < groups; ++g) {
        const double f = f_lo * std::pow(f_hi / f_lo, (g + 0.5) / groups);
        const auto k0 = static_cast<std::size_t>(f / df);
        lf.push_back(std::log(f));
        lp.push_back(std::log(band_power(w.samples, k0, width)));
    }
    return fit_line(lf, lp).slope;
}

}  // namespace

TEST_CASE("noise config invariants") {
    NoiseConfig n;
    REQUIRE_NOTHROW(validate(n));
    n.f_low = n.f_high;
    REQUIRE_THROWS_AS(validate(n), invalid_input);
    n = NoiseConfig{};
    n.v_hl_sigma = -1e-3;
    REQUIRE_THROWS_AS(validate(n), invalid_input);
    n = NoiseConfig{};
    n.tau_thermal = -1.0;
    REQUIRE_THROWS_AS(validate(n), invalid_input);
    n = NoiseConfig{};
    n.pink_amplitude = -1.0;
    REQUIRE_THROWS_AS(validate(n), invalid_input);
}

TEST_CASE("pink noise basics") {
    NoiseConfig n;
    n.f_low = 1e3;
    n.f_high = 1e6;
    n.pink_amplitude = 5e-3;
    n.seed = 99;
    const std::size_t len = 1 << 16;
    const double dt = 100e-9;

    SECTION("zero amplitude gives zeros") {
        NoiseConfig z = n;
        z.pink_amplitude = 0.0;
        const auto w = generate_pink_noise(len, dt, z);
        REQUIRE(std::all_of(w.samples.begin(), w.samples.end(), [](double v) { return v == 0.0; }));
    }
    SECTION("fixed seed repeats bit for bit") {
        REQUIRE(generate_pink_noise(len, dt, n) == generate_pink_noise(len, dt, n));
        NoiseConfig other = n;
        other.seed = 100;
        REQUIRE_FALSE(generate_pink_noise(len, dt, n) == generate_pink_noise(len, dt, other));
    }
    SECTION("zero mean and RMS") {
        const auto w = generate_pink_noise(len, dt, n);
        REQUIRE(std::abs(mean(w.samples)) < 1e-12);
        double ss = 0.0;
        for (double v : w.samples) ss += v * v;
        REQUIRE(std::sqrt(ss / static_cast<double>(len)) == Approx(n.pink_amplitude).epsilon(0.05));
    }
    SECTION("periodogram slope is -1 inside the band") {
        const auto w = generate_pink_noise(len, dt, n);
        REQUIRE(psd_slope(w, 2e3, 0.8e6) == Approx(-1.0).margin(0.2));
    }
    SECTION("band edge must be resolvable") {
        REQUIRE_THROWS_AS(generate_pink_noise(1024, dt, n), invalid_input);
        REQUIRE_THROWS_AS(generate_pink_noise(1, dt, n), invalid_input);
    }
}

TEST_CASE("holding voltage trace") {
    const std::vector<double> t{0.0, 1e-6, 2e-6, 1e-3};
    const auto flat = holding_voltage_trace(0.6, 0.7, 0.0, t);
    REQUIRE(std::all_of(flat.begin(), flat.end(), [](double v) { return v == 0.6; }));

    const auto tr = holding_voltage_trace(0.6, 0.7, 1e-6, t);
    REQUIRE(tr[0] == Approx(0.7));
    REQUIRE(tr[1] == Approx(0.7 + (0.6 - 0.7) * (1.0 - std::exp(-1.0))).epsilon(1e-14));
    REQUIRE(std::abs(tr[3] - 0.6) < 1e-9);
    REQUIRE_THROWS_AS(holding_voltage_trace(0.6, 0.7, -1.0, t), invalid_input);
}

TEST_CASE("noise-free falling escape reduces to the closed form") {
    // Asymptote 20 mV below the holding level.
    const double i = (fig3.v_hl - 0.02 - fig3.v_om) / fig3.r_m;
    const double c = 70e-12;
    const auto run = monte_carlo_falling_escape(fig3, i, c, silent(), 50);
    const double v_af = assess(fig3, i).v_af;
    const double expect = segment_time(v_af + escape_start_offset, fig3.v_hl, v_af, c * fig3.r_m);
    REQUIRE(run.samples.size() == 50);
    REQUIRE(run.censored == 0);
    for (double t : run.samples) REQUIRE(t == Approx(expect).epsilon(1e-12));
}

TEST_CASE("noise-free rising escape reduces to the closed form") {
    const double i = (fig3.v_th + 0.02 - fig3.v_oi) / fig3.r_i;
    const double c = 70e-12;
    const auto run = monte_carlo_rising_escape(fig3, i, c, silent(), 20);
    const double v_ar = assess(fig3, i).v_ar;
    const double expect = segment_time(v_ar - escape_start_offset, fig3.v_th, v_ar, c * fig3.r_i);
    REQUIRE(run.samples.size() == 20);
    for (double t : run.samples) REQUIRE(t == Approx(expect).epsilon(1e-12));
}

TEST_CASE("all-censored run is an error") {
    // Bias above the holding condition and no noise: never crosses.
    const double i = 1.2 * (fig3.v_hl - fig3.v_om) / fig3.r_m;
    REQUIRE_THROWS_AS(monte_carlo_falling_escape(fig3, i, 70e-12, silent(), 10), numerical_failure);
    REQUIRE_THROWS_AS(monte_carlo_falling_escape(fig3, 10e-6, 70e-12, silent(), 0), invalid_input);
}

TEST_CASE("escape runs are reproducible and order independent") {
    NoiseConfig n;
    n.seed = 17;
    const auto a = escape_run_at_margin(fig3, 70e-12, n, 0.0, 300);
    const auto b = escape_run_at_margin(fig3, 70e-12, n, 0.0, 300);
    REQUIRE(a.samples == b.samples);
    REQUIRE(std::is_sorted(a.samples.begin(), a.samples.end()));
    REQUIRE(a.samples.size() + a.censored == a.iterations);
    REQUIRE(std::all_of(a.samples.begin(), a.samples.end(), [](double t) { return t >= 0.0; }));
    n.seed = 18;
    REQUIRE(escape_run_at_margin(fig3, 70e-12, n, 0.0, 300).samples != a.samples);
}

TEST_CASE("negative margin gives a near-Gaussian escape histogram") {
    NoiseConfig n;
    n.seed = 5;
    const auto run = escape_run_at_margin(fig3, 70e-12, n, -0.02, 3000);
    REQUIRE(std::abs(skewness(run.samples)) < 0.5);
    REQUIRE(fit_distribution(run.samples).family == Family::gaussian);
}

TEST_CASE("thermal relaxation of the holding level shortens falling escapes") {
    NoiseConfig n = silent();
    const auto cold = escape_run_at_margin(fig3, 70e-12, n, -0.01, 10);
    n.tau_thermal = 0.5e-6;
    n.v_hl_start = fig3.v_hl + 0.03;
    const auto hot = escape_run_at_margin(fig3, 70e-12, n, -0.01, 10);
    REQUIRE(hot.samples.front() < cold.samples.front());
}

TEST_CASE("escape_time_vs_margin in the noise-free limit") {
    const double tau = 70e-12 * fig3.r_m;
    const std::vector<double> margins{-0.04, -0.02, -0.01, 0.01};
    const auto pts = escape_time_vs_margin(fig3, 70e-12, silent(), margins, 20, std::nullopt, 1);
    REQUIRE(pts.size() == 4);
    for (std::size_t k = 0; k < 3; ++k) {
        REQUIRE(pts[k].median);
        REQUIRE(*pts[k].median == Approx(analytic_escape_time(margins[k], tau)).epsilon(1e-12));
    }
    REQUIRE_FALSE(pts[3].median);
    REQUIRE(pts[3].censored == 20);
}

TEST_CASE("escape_time_vs_margin needs enough survivors") {
    NoiseConfig n;
    n.seed = 3;
    // Far positive margin with a short timeout: a handful of survivors.
    const std::vector<double> margins{0.03};
    REQUIRE_THROWS_AS(escape_time_vs_margin(fig3, 70e-12, n, margins, 200, 20 * 70e-12 * fig3.r_m),
                      numerical_failure);
}

TEST_CASE("medians normalised by tau collapse across devices") {
    NoiseConfig n = silent();
    n.v_hl_sigma = 1e-3;
    n.seed = 4;
    auto other = fig3;
    other.r_m = 15e3;
    const std::vector<double> margins{-0.04, -0.02};
    const auto a = escape_time_vs_margin(fig3, 70e-12, n, margins, 200);
    const auto b = escape_time_vs_margin(other, 70e-12, n, margins, 200);
    for (std::size_t k = 0; k < margins.size(); ++k) {
        REQUIRE(*a[k].median / (70e-12 * fig3.r_m) == Approx(*b[k].median / (70e-12 * other.r_m)).epsilon(1e-9));
    }
}

TEST_CASE("margin-offset fit recovers a shifted analytic curve") {
    const double tau = 0.7e-6;
    for (double delta : {0.005, 0.01}) {
        std::vector<MarginPoint> pts;
        for (double m = -0.03; m <= 0.0; m += 0.005) {
            MarginPoint p;
            p.margin = m;
            p.median = tau * std::log(escape_start_offset / (delta - m));
            pts.push_back(p);
        }
        const auto fit = fit_margin_offset(pts, tau, 0.0, 100.0);
        REQUIRE(fit.offset == Approx(delta).margin(1e-7));
        REQUIRE(fit.rms_log_residual < 1e-6);
    }
}

TEST_CASE("fit_distribution recovers the generating family") {
    std::mt19937_64 rng(2024);
    std::vector<double> x(10000);

    SECTION("exponential") {
        // The nested tie rule rejects a true exponential about 5% of the time.
        std::exponential_distribution<double> d(3e5);
        int chosen = 0;
        for (int rep = 0; rep < 40; ++rep) {
            for (auto& v : x) v = d(rng);
            const auto f = fit_distribution(x);
            if (f.family == Family::exponential) ++chosen;
            REQUIRE(f.exp_rate == Approx(3e5).epsilon(0.05));
        }
        REQUIRE(chosen >= 34);
    }
    SECTION("gaussian") {
        std::normal_distribution<double> d(5e-6, 0.4e-6);
        for (auto& v : x) v = d(rng);
        const auto f = fit_distribution(x);
        REQUIRE(f.family == Family::gaussian);
        REQUIRE(f.gauss_mu == Approx(5e-6).epsilon(0.05));
        REQUIRE(f.gauss_sigma == Approx(0.4e-6).epsilon(0.05));
    }
    SECTION("gamma") {
        std::gamma_distribution<double> d(3.0, 1e-6);
        for (auto& v : x) v = d(rng);
        const auto f = fit_distribution(x);
        REQUIRE(f.family == Family::gamma);
        REQUIRE(f.gamma_shape == Approx(3.0).epsilon(0.10));
        REQUIRE(f.loglik() == f.loglik_gamma);
    }
}

TEST_CASE("fit_distribution edge cases") {
    std::vector<double> same(200, 1e-6);
    const auto f = fit_distribution(same);
    REQUIRE(f.degenerate);
    REQUIRE(f.family == Family::gaussian);
    REQUIRE(f.gauss_sigma == 0.0);

    std::vector<double> few(99, 1e-6);
    REQUIRE_THROWS_AS(fit_distribution(few), invalid_input);
}

TEST_CASE("stream seeds differ per iteration and stream") {
    REQUIRE(detail::stream_seed(1, 0, 0) != detail::stream_seed(1, 0, 1));
    REQUIRE(detail::stream_seed(1, 0, 0) != detail::stream_seed(1, 1, 0));
    REQUIRE(detail::stream_seed(1, 0, 0) != detail::stream_seed(2, 0, 0));
    REQUIRE(detail::stream_seed(1, 2, 3) == detail::stream_seed(1, 2, 3));
}
