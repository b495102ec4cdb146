#pragma once

// =============================================================================
// Noise-driven escape-time Monte-Carlo
// =============================================================================
// Each iteration replays the noise-free relaxation of one phase, adds a fresh
// band-limited 1/f record, draws the switching level from a normal
// distribution, lets that level relax thermally from a start value, and
// records the first time the noisy signal meets it.
// =============================================================================

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <string_view>
#include <vector>

#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/trigamma.hpp>
#include <boost/math/tools/minima.hpp>
#include <boost/random/normal_distribution.hpp>

#include "mott/analytic.hpp"
#include "mott/detail/fft.hpp"
#include "mott/device_model.hpp"
#include "mott/error.hpp"
#include "mott/statistics.hpp"
#include "mott/waveform.hpp"

namespace mott {

struct NoiseConfig {
    double pink_amplitude = 6e-3;  ///< RMS [V]
    double f_low = 1e6;            ///< [Hz]
    double f_high = 2e7;           ///< [Hz]
    /// Mean switching level; the device's own v_hl (or v_th) when unset.
    std::optional<double> v_hl_mu;
    double v_hl_sigma = 1.4e-3;    ///< [V]
    double tau_thermal = 0.0;      ///< [s]; 0 disables the thermal relaxation
    /// Level at t = 0 of the thermal trace; v_hl_mu + 3*sigma when unset.
    std::optional<double> v_hl_start;
    std::uint64_t seed = 1;

    bool operator==(const NoiseConfig&) const = default;
};

inline void validate(const NoiseConfig& n) {
    if (!(n.f_low > 0.0 && n.f_low < n.f_high)) throw invalid_input("noise: need 0 < f_low < f_high");
    if (!(n.pink_amplitude >= 0.0)) throw invalid_input("noise: pink_amplitude must be >= 0");
    if (!(n.v_hl_sigma >= 0.0)) throw invalid_input("noise: v_hl_sigma must be >= 0");
    if (!(n.tau_thermal >= 0.0)) throw invalid_input("noise: tau_thermal must be >= 0");
}

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

/// Independent stream seed for (master, stream, iteration).
inline std::uint64_t stream_seed(std::uint64_t master, std::uint64_t stream, std::uint64_t iteration) noexcept {
    return splitmix64(splitmix64(splitmix64(master) ^ stream) ^ iteration);
}

}  // namespace detail

/// Band-limited 1/f synthesiser: seeded white spectrum shaped to amplitude
/// 1/sqrt(f) inside [f_low, f_high], flat below f_low, zero above f_high and
/// at DC, inverse transformed and scaled to the requested RMS.
class PinkNoiseGenerator {
public:
    PinkNoiseGenerator(std::size_t n, double dt, const NoiseConfig& cfg)
        : fft_(n), shape_(fft_.bins(), 0.0), amplitude_(cfg.pink_amplitude) {
        validate(cfg);
        if (!(dt > 0.0)) throw invalid_input("pink noise: dt must be positive");
        if (1.0 / (static_cast<double>(n) * dt) > cfg.f_low * (1.0 + 1e-12)) {
            std::ostringstream os;
            os << "pink noise: band edge f_low = " << cfg.f_low << " Hz unresolvable with n = " << n
               << ", dt = " << dt << " s (resolution " << 1.0 / (static_cast<double>(n) * dt) << " Hz)";
            throw invalid_input(os.str());
        }
        const double df = 1.0 / (static_cast<double>(n) * dt);
        for (std::size_t k = 1; k < shape_.size(); ++k) {
            const double f = static_cast<double>(k) * df;
            if (f > cfg.f_high) break;
            shape_[k] = 1.0 / std::sqrt(std::max(f, cfg.f_low));
            bins_used_ = k + 1;
        }
    }

    [[nodiscard]] std::size_t size() const noexcept { return fft_.size(); }

    /// Draws one record into the internal buffer and returns the factor that
    /// scales raw() to the requested RMS. Only in-band bins consume random
    /// numbers. The DC bin is zero, so the record has zero mean.
    template <class Rng>
    double generate(Rng& rng) {
        boost::random::normal_distribution<double> gauss(0.0, 1.0);
        auto spec = fft_.spectrum();
        const std::size_t n = fft_.size();
        double power = 0.0;
        for (std::size_t k = 0; k < spec.size(); ++k) {
            if (k == 0 || k >= bins_used_) {
                spec[k] = 0.0;
                continue;
            }
            const double re = gauss(rng) * shape_[k];
            double im = gauss(rng) * shape_[k];
            if (n % 2 == 0 && k == n / 2) im = 0.0;
            spec[k] = std::complex<double>(re, im);
            power += (n % 2 == 0 && k == n / 2 ? 1.0 : 2.0) * (re * re + im * im);
        }
        fft_.inverse();
        // Parseval for the unnormalised inverse: sum x^2 = n * sum |X|^2.
        const double rms = std::sqrt(power);
        return rms > 0.0 ? amplitude_ / rms : 0.0;
    }

    /// Unscaled record from the last generate().
    [[nodiscard]] std::span<const double> raw() noexcept { return fft_.real(); }

    /// Fills out (length n) with one scaled record drawn from rng.
    template <class Rng>
    void generate(Rng& rng, std::span<double> out) {
        const double scale = generate(rng);
        const auto x = raw();
        for (std::size_t k = 0; k < x.size(); ++k) out[k] = x[k] * scale;
    }

private:
    detail::RealFft fft_;
    std::vector<double> shape_;
    double amplitude_;
    std::size_t bins_used_ = 0;
};

/// One seeded pink-noise record of n samples.
inline Waveform generate_pink_noise(std::size_t n, double dt, const NoiseConfig& config) {
    if (n < 2) throw invalid_input("pink noise: need n >= 2");
    PinkNoiseGenerator gen(n, dt, config);
    std::mt19937_64 rng(config.seed);
    Waveform w{dt, std::vector<double>(n), 0.0};
    gen.generate(rng, w.samples);
    return w;
}

/// V_hl(t) = drawn + (start - drawn) exp(-t/tau); tau = 0 gives the drawn value.
inline std::vector<double> holding_voltage_trace(double v_hl_drawn, double v_hl_start, double tau_thermal,
                                                 std::span<const double> times) {
    if (!(tau_thermal >= 0.0)) throw invalid_input("holding trace: tau_thermal must be >= 0");
    std::vector<double> out(times.size(), v_hl_drawn);
    if (tau_thermal == 0.0) return out;
    for (std::size_t k = 0; k < times.size(); ++k) {
        out[k] = v_hl_drawn + (v_hl_start - v_hl_drawn) * std::exp(-times[k] / tau_thermal);
    }
    return out;
}

enum class EscapeOrientation { falling, rising };

inline std::string_view to_string(EscapeOrientation o) noexcept {
    return o == EscapeOrientation::falling ? "falling" : "rising";
}

struct EscapeRecord {
    std::size_t iteration = 0;
    double time = 0.0;  ///< NaN when censored
    bool censored = false;
};

struct EscapeRun {
    std::vector<double> samples;  ///< uncensored escape times, sorted ascending
    std::vector<EscapeRecord> records;
    std::size_t iterations = 0;
    std::size_t censored = 0;
    NoiseConfig config;
    EscapeOrientation orientation = EscapeOrientation::falling;
    double asymptote = 0.0;  ///< V_af (or V_ar)
    double level_mean = 0.0; ///< mean switching level
    double tau = 0.0;
    double timeout = 0.0;

    /// Signed margin: asymptote beyond the level is positive.
    [[nodiscard]] double margin() const noexcept {
        return orientation == EscapeOrientation::falling ? asymptote - level_mean : level_mean - asymptote;
    }
};

/// Distance from the asymptote at which each iteration starts.
inline constexpr double escape_start_offset = 50e-3;

namespace detail {

struct EscapeSetup {
    EscapeOrientation orientation;
    double asymptote;   ///< relaxation target
    double level_mean;  ///< switching level mean
    double tau;
    std::uint64_t stream = 0;
};

/// Engine for both orientations. Rising runs are mirrored (v -> -v) so the
/// core only handles a signal falling onto a level from above.
inline EscapeRun run_escape(const EscapeSetup& setup, const NoiseConfig& noise, std::size_t iterations,
                            double timeout) {
    validate(noise);
    if (iterations < 1) throw invalid_input("escape: iterations must be >= 1");
    if (!(timeout > 0.0)) throw invalid_input("escape: timeout must be positive");
    if (!(setup.tau > 0.0)) throw invalid_input("escape: time constant must be positive");

    const double sign = setup.orientation == EscapeOrientation::falling ? 1.0 : -1.0;
    const double v_a = sign * setup.asymptote;
    const double mu = sign * setup.level_mean;
    const double sigma = noise.v_hl_sigma;
    const double start = noise.v_hl_start ? sign * *noise.v_hl_start : mu + 3.0 * sigma;
    const double v0 = v_a + escape_start_offset;
    const double tau = setup.tau;

    const double dt = std::min(tau / 50.0, 1.0 / (2.5 * noise.f_high));
    const auto n_used = static_cast<std::size_t>(std::ceil(timeout / dt)) + 1;
    const auto n_band = static_cast<std::size_t>(std::ceil(1.0 / (noise.f_low * dt)));
    std::size_t n_fft = 2;
    while (n_fft < std::max(n_used, n_band)) n_fft *= 2;

    PinkNoiseGenerator gen(n_fft, dt, noise);
    std::vector<double> det(n_used);
    std::vector<double> decay(n_used, 0.0);
    for (std::size_t k = 0; k < n_used; ++k) {
        const double t = static_cast<double>(k) * dt;
        det[k] = relax(v0, v_a, tau, t);
        if (noise.tau_thermal > 0.0) decay[k] = std::exp(-t / noise.tau_thermal);
    }
    const bool noiseless = noise.pink_amplitude == 0.0;

    EscapeRun run;
    run.iterations = iterations;
    run.config = noise;
    run.orientation = setup.orientation;
    run.asymptote = setup.asymptote;
    run.level_mean = setup.level_mean;
    run.tau = tau;
    run.timeout = timeout;
    run.records.reserve(iterations);

    for (std::size_t it = 0; it < iterations; ++it) {
        std::mt19937_64 rng(stream_seed(noise.seed, setup.stream, it));
        boost::random::normal_distribution<double> gauss(0.0, 1.0);
        const double drawn = mu + sigma * gauss(rng);
        const double scale = noiseless ? 0.0 : gen.generate(rng);
        const auto raw = gen.raw();
        auto noise_at = [&](std::size_t k) { return noiseless ? 0.0 : raw[k] * scale; };
        auto level = [&](double t) {
            return noise.tau_thermal > 0.0 ? drawn + (start - drawn) * std::exp(-t / noise.tau_thermal) : drawn;
        };

        EscapeRecord r{it, std::numeric_limits<double>::quiet_NaN(), true};
        for (std::size_t k = 0; k < n_used; ++k) {
            const double t = static_cast<double>(k) * dt;
            if (t > timeout) break;
            if (det[k] + noise_at(k) > drawn + (start - drawn) * decay[k]) continue;
            r.censored = false;
            if (k == 0) {
                r.time = 0.0;
                break;
            }
            if (noiseless && noise.tau_thermal == 0.0) {
                r.time = segment_time(v0, drawn, v_a, tau);
                break;
            }
            // Root of signal - level with the noise linearly interpolated.
            const double ta = t - dt;
            const double n0 = noise_at(k - 1);
            const double n1 = noise_at(k);
            auto gap = [&](double tt) {
                const double w = (tt - ta) / dt;
                return relax(v0, v_a, tau, tt) + n0 + w * (n1 - n0) - level(tt);
            };
            double lo = ta;
            double hi = t;
            for (int i = 0; i < 200 && hi - lo > 1e-15 * hi; ++i) {
                const double mid = 0.5 * (lo + hi);
                if (gap(mid) > 0.0) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            r.time = hi;
            break;
        }
        if (r.censored) {
            ++run.censored;
        } else {
            run.samples.push_back(r.time);
        }
        run.records.push_back(r);
    }
    std::sort(run.samples.begin(), run.samples.end());
    return run;
}

}  // namespace detail

/// Falling escape: relaxation from V_af + 50 mV towards V_af = v_om + r_m*I
/// with tau_f = C_L*r_m, crossing a normally drawn holding voltage.
inline EscapeRun monte_carlo_falling_escape(const MemristorParams& p, double i_bias, double c_l,
                                            const NoiseConfig& noise, std::size_t iterations,
                                            std::optional<double> timeout = std::nullopt) {
    const double tau = c_l * p.r_m;
    detail::EscapeSetup s{EscapeOrientation::falling, p.v_om + p.r_m * i_bias, noise.v_hl_mu.value_or(p.v_hl), tau};
    auto run = detail::run_escape(s, noise, iterations, timeout.value_or(100.0 * tau));
    if (run.samples.empty()) throw numerical_failure("escape: all iterations censored before timeout");
    return run;
}

/// Rising counterpart: relaxation from V_ar - 50 mV towards V_ar = v_oi + r_i*I
/// with tau_r = C_L*r_i, crossing a normally drawn threshold voltage (mean
/// v_hl_mu when set, else v_th; spread v_hl_sigma).
inline EscapeRun monte_carlo_rising_escape(const MemristorParams& p, double i_bias, double c_l,
                                           const NoiseConfig& noise, std::size_t iterations,
                                           std::optional<double> timeout = std::nullopt) {
    const double tau = c_l * p.r_i;
    detail::EscapeSetup s{EscapeOrientation::rising, p.v_oi + p.r_i * i_bias, noise.v_hl_mu.value_or(p.v_th), tau};
    auto run = detail::run_escape(s, noise, iterations, timeout.value_or(100.0 * tau));
    if (run.samples.empty()) throw numerical_failure("escape: all iterations censored before timeout");
    return run;
}

struct MarginPoint {
    double margin = 0.0;
    std::optional<double> median;  ///< nullopt when every iteration was censored
    std::size_t survivors = 0;
    std::size_t censored = 0;
    EscapeRun run;
};

/// One Monte-Carlo run at a prescribed margin. Falling: the asymptote sits
/// `margin` above the mean holding level (tau = C_L*r_m). Rising: `margin`
/// below the mean threshold level (tau = C_L*r_i). `stream` separates the
/// random streams of different grid points.
inline EscapeRun escape_run_at_margin(const MemristorParams& p, double c_l, const NoiseConfig& noise, double margin,
                                      std::size_t iterations, std::optional<double> timeout = std::nullopt,
                                      std::uint64_t stream = 0,
                                      EscapeOrientation orientation = EscapeOrientation::falling) {
    const bool falling = orientation == EscapeOrientation::falling;
    const double tau = c_l * (falling ? p.r_m : p.r_i);
    const double mu = noise.v_hl_mu.value_or(falling ? p.v_hl : p.v_th);
    detail::EscapeSetup s{orientation, falling ? mu + margin : mu - margin, mu, tau, stream};
    return detail::run_escape(s, noise, iterations, timeout.value_or(100.0 * tau));
}

/// Median escape time over a grid of margins. Grid point m uses stream m, so
/// points are statistically independent.
inline std::vector<MarginPoint> escape_time_vs_margin(const MemristorParams& p, double c_l,
                                                      const NoiseConfig& noise, std::span<const double> margins,
                                                      std::size_t iterations,
                                                      std::optional<double> timeout = std::nullopt,
                                                      std::size_t min_survivors = 100,
                                                      EscapeOrientation orientation = EscapeOrientation::falling) {
    std::vector<MarginPoint> out;
    out.reserve(margins.size());
    for (std::size_t m = 0; m < margins.size(); ++m) {
        MarginPoint pt;
        pt.margin = margins[m];
        pt.run = escape_run_at_margin(p, c_l, noise, margins[m], iterations, timeout, m, orientation);
        pt.survivors = pt.run.samples.size();
        pt.censored = pt.run.censored;
        if (pt.survivors > 0 && pt.survivors < min_survivors) {
            std::ostringstream os;
            os << "escape_time_vs_margin: only " << pt.survivors << " surviving iterations at margin "
               << margins[m] << " V (need " << min_survivors << ")";
            throw numerical_failure(os.str());
        }
        if (pt.survivors > 0) pt.median = median(pt.run.samples);
        out.push_back(std::move(pt));
    }
    return out;
}

/// Noise-free median escape time at a given margin (negative margins only).
inline double analytic_escape_time(double margin, double tau) {
    return segment_time(escape_start_offset, -margin, 0.0, tau);
}

struct OffsetFit {
    double offset = 0.0;        ///< margin shift of the analytic curve [V]
    std::size_t points = 0;     ///< grid points inside the fit window
    double rms_log_residual = 0.0;
};

/// Least-squares shift delta such that t(m) = tau*ln(50 mV / (delta - m))
/// matches the medians in log-time. Only medians within
/// [window_lo, window_hi]*tau enter: below, the curve carries no offset
/// information; above, it is noise dominated.
inline OffsetFit fit_margin_offset(std::span<const MarginPoint> points, double tau, double window_lo = 0.5,
                                   double window_hi = 5.0) {
    std::vector<double> m;
    std::vector<double> logt;
    for (const auto& pt : points) {
        if (!pt.median) continue;
        const double t = *pt.median;
        if (t >= window_lo * tau && t <= window_hi * tau) {
            m.push_back(pt.margin);
            logt.push_back(std::log(t));
        }
    }
    if (m.size() < 2) throw numerical_failure("fit_margin_offset: fewer than two points inside the fit window");
    const double m_max = *std::max_element(m.begin(), m.end());
    const double m_min = *std::min_element(m.begin(), m.end());
    const double lo = m_max;
    const double hi = m_min + escape_start_offset;
    if (!(hi > lo)) throw numerical_failure("fit_margin_offset: window spans more than the start offset");
    auto sse = [&](double d) {
        double acc = 0.0;
        for (std::size_t k = 0; k < m.size(); ++k) {
            const double r = logt[k] - std::log(tau * std::log(escape_start_offset / (d - m[k])));
            acc += r * r;
        }
        return acc;
    };
    const double eps = 1e-9 * (hi - lo);
    const auto [d, f] = boost::math::tools::brent_find_minima(sse, lo + eps, hi - eps, 40);
    return {d, m.size(), std::sqrt(f / static_cast<double>(m.size()))};
}

// -----------------------------------------------------------------------------
// Distribution fitting
// -----------------------------------------------------------------------------

enum class Family { exponential, gaussian, gamma };

inline std::string_view to_string(Family f) noexcept {
    switch (f) {
        case Family::exponential: return "exponential";
        case Family::gaussian: return "gaussian";
        case Family::gamma: return "gamma";
    }
    return "?";
}

/// Log-likelihood gap below which a richer family does not displace a nested
/// poorer one (half the 95% chi-square quantile with one degree of freedom).
inline constexpr double nested_tie_tolerance = 1.920729410347062;

struct DistributionFit {
    Family family = Family::gaussian;
    double exp_rate = 0.0;
    double gauss_mu = 0.0;
    double gauss_sigma = 0.0;
    double gamma_shape = 0.0;
    double gamma_scale = 0.0;
    double loglik_exponential = -std::numeric_limits<double>::infinity();
    double loglik_gaussian = -std::numeric_limits<double>::infinity();
    double loglik_gamma = -std::numeric_limits<double>::infinity();
    std::size_t n = 0;
    bool degenerate = false;  ///< zero spread: Gaussian with sigma = 0

    [[nodiscard]] double loglik() const noexcept {
        switch (family) {
            case Family::exponential: return loglik_exponential;
            case Family::gaussian: return loglik_gaussian;
            case Family::gamma: return loglik_gamma;
        }
        return loglik_gaussian;
    }
};

/// Maximum-likelihood fits of the three families, selected by log-likelihood.
/// Exponential is nested in Gamma, so it is kept whenever Gamma's gain is
/// within nested_tie_tolerance; a Gaussian/Gamma tie goes to Gaussian.
inline DistributionFit fit_distribution(std::span<const double> samples, std::size_t min_samples = 100) {
    if (samples.size() < min_samples) {
        std::ostringstream os;
        os << "fit_distribution: need at least " << min_samples << " samples, got " << samples.size();
        throw invalid_input(os.str());
    }
    DistributionFit fit;
    fit.n = samples.size();
    const auto n = static_cast<double>(samples.size());
    const double mu = mean(samples);
    double ss = 0.0;
    for (double x : samples) ss += (x - mu) * (x - mu);
    const double var = ss / n;

    fit.gauss_mu = mu;
    fit.gauss_sigma = std::sqrt(var);
    const auto [lo, hi] = std::minmax_element(samples.begin(), samples.end());
    if (*lo == *hi) {
        fit.gauss_mu = *lo;
        fit.gauss_sigma = 0.0;
        fit.degenerate = true;
        fit.family = Family::gaussian;
        fit.loglik_gaussian = std::numeric_limits<double>::infinity();
        return fit;
    }
    fit.loglik_gaussian = -0.5 * n * std::log(2.0 * std::numbers::pi * var) - 0.5 * n;

    const bool nonneg = std::all_of(samples.begin(), samples.end(), [](double x) { return x >= 0.0; });
    const bool positive = std::all_of(samples.begin(), samples.end(), [](double x) { return x > 0.0; });
    if (nonneg && mu > 0.0) {
        fit.exp_rate = 1.0 / mu;
        fit.loglik_exponential = n * std::log(fit.exp_rate) - n;
    }
    if (positive) {
        double mean_log = 0.0;
        for (double x : samples) mean_log += std::log(x);
        mean_log /= n;
        const double s = std::log(mu) - mean_log;
        if (s > 0.0) {
            double k = (3.0 - s + std::sqrt((s - 3.0) * (s - 3.0) + 24.0 * s)) / (12.0 * s);
            for (int it = 0; it < 100; ++it) {
                const double g = std::log(k) - boost::math::digamma(k) - s;
                const double dg = 1.0 / k - boost::math::trigamma(k);
                double next = k - g / dg;
                if (!(next > 0.0)) next = 0.5 * k;
                const bool done = std::abs(next - k) <= 1e-14 * k;
                k = next;
                if (done) break;
            }
            fit.gamma_shape = k;
            fit.gamma_scale = mu / k;
            fit.loglik_gamma = (k - 1.0) * n * mean_log - n * mu / fit.gamma_scale - n * k * std::log(fit.gamma_scale) -
                               n * std::lgamma(k);
        }
    }

    const double best2 = std::max(fit.loglik_gaussian, fit.loglik_gamma);
    if (fit.loglik_exponential >= fit.loglik_gaussian &&
        fit.loglik_exponential + nested_tie_tolerance >= fit.loglik_gamma) {
        fit.family = Family::exponential;
    } else if (fit.loglik_gamma > fit.loglik_gaussian && fit.loglik_gamma == best2) {
        fit.family = Family::gamma;
    } else {
        fit.family = Family::gaussian;
    }
    return fit;
}

}  // namespace mott
