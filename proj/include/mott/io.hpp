#pragma once

// File formats: JSON for parameter sets and fit reports, CSV for waveforms,
// events, escape runs, cycles and histograms. Every write goes through a
// temp file and a rename so readers never see a truncated file.

#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <json.hpp>

#include "mott/analysis.hpp"
#include "mott/device_model.hpp"
#include "mott/error.hpp"
#include "mott/statistics.hpp"
#include "mott/stochastic.hpp"
#include "mott/thermal.hpp"
#include "mott/transient.hpp"
#include "mott/waveform.hpp"

namespace mott::io {

using json = nlohmann::json;

/// Shortest round-trip decimal form.
inline std::string fmt(double x) {
    if (std::isnan(x)) return "nan";
    char buf[32];
    const auto r = std::to_chars(buf, buf + sizeof buf, x);
    return {buf, r.ptr};
}

inline double parse_double(std::string_view s, std::string_view where) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    if (s == "nan" || s == "NaN") return std::numeric_limits<double>::quiet_NaN();
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    double v = 0.0;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc{} || r.ptr != s.data() + s.size()) {
        throw invalid_input(std::string(where) + ": cannot parse number '" + std::string(s) + "'");
    }
    return v;
}

/// Writes `content` to `path` via a sibling temp file and rename.
inline void atomic_write(const std::filesystem::path& path, std::string_view content) {
    namespace fs = std::filesystem;
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    thread_local std::mt19937_64 rng{std::random_device{}()};
    const fs::path tmp = path.string() + ".tmp" + std::to_string(rng() & 0xffffffu);
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw error("cannot open " + tmp.string() + " for writing");
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        out.flush();
        if (!out) {
            std::error_code ec;
            fs::remove(tmp, ec);
            throw error("write failed for " + tmp.string());
        }
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) {
        fs::remove(tmp, ec);
        throw error("cannot rename into " + path.string());
    }
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw invalid_input("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// -----------------------------------------------------------------------------
// JSON
// -----------------------------------------------------------------------------

inline json to_json(const MemristorParams& p) {
    json j;
    const auto a = p.as_array();
    for (std::size_t k = 0; k < a.size(); ++k) j[std::string(MemristorParams::field_names[k])] = a[k];
    return j;
}

namespace detail {
inline double req_number(const json& j, std::string_view key, std::string_view path) {
    const auto it = j.find(std::string(key));
    if (it == j.end()) throw config_error(std::string(path) + "." + std::string(key) + ": missing");
    if (!it->is_number()) throw config_error(std::string(path) + "." + std::string(key) + ": expected a number");
    return it->get<double>();
}
inline std::optional<double> opt_number(const json& j, std::string_view key, std::string_view path) {
    const auto it = j.find(std::string(key));
    if (it == j.end() || it->is_null()) return std::nullopt;
    if (!it->is_number()) throw config_error(std::string(path) + "." + std::string(key) + ": expected a number");
    return it->get<double>();
}
}  // namespace detail

inline MemristorParams params_from_json(const json& j, std::string_view path = "params") {
    if (!j.is_object()) throw config_error(std::string(path) + ": expected an object");
    std::array<double, 6> a{};
    for (std::size_t k = 0; k < a.size(); ++k) a[k] = detail::req_number(j, MemristorParams::field_names[k], path);
    return MemristorParams::from_array(a);
}

inline json units_block() {
    return {{"voltage", "V"}, {"resistance", "Ohm"}, {"temperature", "degC"}, {"slopes", "per degC"}};
}

inline json to_json(const TemperatureModel& m) {
    return {{"base", to_json(m.base)}, {"slopes", to_json(m.slopes)}, {"t_ref", m.t_ref},
            {"t_min", m.t_min},        {"t_max", m.t_max},          {"units", units_block()}};
}

inline TemperatureModel temperature_model_from_json(const json& j, std::string_view path = "device") {
    if (!j.is_object()) throw config_error(std::string(path) + ": expected an object");
    if (auto u = j.find("units"); u != j.end() && *u != units_block()) {
        throw config_error(std::string(path) + ".units: unsupported unit block " + u->dump());
    }
    TemperatureModel m;
    const std::string p(path);
    if (!j.contains("base")) throw config_error(p + ".base: missing");
    m.base = params_from_json(j.at("base"), p + ".base");
    if (j.contains("slopes")) m.slopes = params_from_json(j.at("slopes"), p + ".slopes");
    m.t_ref = detail::opt_number(j, "t_ref", p).value_or(m.t_ref);
    m.t_min = detail::opt_number(j, "t_min", p).value_or(m.t_min);
    m.t_max = detail::opt_number(j, "t_max", p).value_or(m.t_max);
    if (!(m.t_min <= m.t_max)) throw config_error(p + ": need t_min <= t_max");
    return m;
}

inline json to_json(const NoiseConfig& n) {
    json j{{"pink_amplitude", n.pink_amplitude}, {"f_low", n.f_low},          {"f_high", n.f_high},
           {"v_hl_sigma", n.v_hl_sigma},         {"tau_thermal", n.tau_thermal}, {"seed", n.seed}};
    j["v_hl_mu"] = n.v_hl_mu ? json(*n.v_hl_mu) : json(nullptr);
    j["v_hl_start"] = n.v_hl_start ? json(*n.v_hl_start) : json(nullptr);
    return j;
}

inline NoiseConfig noise_from_json(const json& j, std::string_view path = "noise") {
    if (!j.is_object()) throw config_error(std::string(path) + ": expected an object");
    NoiseConfig n;
    n.pink_amplitude = detail::opt_number(j, "pink_amplitude", path).value_or(n.pink_amplitude);
    n.f_low = detail::opt_number(j, "f_low", path).value_or(n.f_low);
    n.f_high = detail::opt_number(j, "f_high", path).value_or(n.f_high);
    n.v_hl_mu = detail::opt_number(j, "v_hl_mu", path);
    n.v_hl_sigma = detail::opt_number(j, "v_hl_sigma", path).value_or(n.v_hl_sigma);
    n.tau_thermal = detail::opt_number(j, "tau_thermal", path).value_or(n.tau_thermal);
    n.v_hl_start = detail::opt_number(j, "v_hl_start", path);
    if (auto it = j.find("seed"); it != j.end()) {
        if (!it->is_number_unsigned()) throw config_error(std::string(path) + ".seed: expected a non-negative integer");
        n.seed = it->get<std::uint64_t>();
    }
    try {
        validate(n);
    } catch (const invalid_input& e) {
        throw config_error(std::string(path) + ": " + e.what());
    }
    return n;
}

inline json to_json(const GtModel& m) {
    return {{"g_i", m.g_i}, {"g_m", m.g_m}, {"t_imt", m.t_imt}, {"delta_t", m.delta_t}};
}

inline GtModel gt_from_json(const json& j, std::string_view path = "gt_model") {
    if (!j.is_object()) throw config_error(std::string(path) + ": expected an object");
    GtModel m{detail::req_number(j, "g_i", path), detail::req_number(j, "g_m", path),
              detail::req_number(j, "t_imt", path), detail::req_number(j, "delta_t", path)};
    try {
        validate(m);
    } catch (const error& e) {
        throw config_error(std::string(path) + ": " + e.what());
    }
    return m;
}

inline json to_json(const ThermalGeometry& g) {
    json j{{"w_dev", g.w_dev},   {"l_dev", g.l_dev},   {"thickness", g.thickness}, {"a_c", g.a_c},
           {"a_cs", g.a_cs},     {"r_th0", g.r_th0},   {"rho_20", g.rho_20},       {"r_r", g.r_r},
           {"t_th", g.t_th}};
    j["g_eff"] = g.g_eff ? json(*g.g_eff) : json(nullptr);
    j["t_eff"] = g.t_eff ? json(*g.t_eff) : json(nullptr);
    return j;
}

inline ThermalGeometry geometry_from_json(const json& j, std::string_view path = "geometry") {
    if (!j.is_object()) throw config_error(std::string(path) + ": expected an object");
    ThermalGeometry g;
    g.w_dev = detail::req_number(j, "w_dev", path);
    g.l_dev = detail::req_number(j, "l_dev", path);
    g.thickness = detail::req_number(j, "thickness", path);
    g.a_c = detail::req_number(j, "a_c", path);
    g.a_cs = detail::req_number(j, "a_cs", path);
    g.r_th0 = detail::req_number(j, "r_th0", path);
    g.rho_20 = detail::req_number(j, "rho_20", path);
    g.r_r = detail::req_number(j, "r_r", path);
    g.t_th = detail::req_number(j, "t_th", path);
    g.g_eff = detail::opt_number(j, "g_eff", path);
    g.t_eff = detail::opt_number(j, "t_eff", path);
    try {
        validate(g);
    } catch (const error& e) {
        throw config_error(std::string(path) + ": " + e.what());
    }
    return g;
}

inline json to_json(const DistributionFit& f, std::size_t censored) {
    json params;
    params["exponential"] = {{"rate", f.exp_rate}};
    params["gaussian"] = {{"mu", f.gauss_mu}, {"sigma", f.gauss_sigma}};
    params["gamma"] = {{"shape", f.gamma_shape}, {"scale", f.gamma_scale}};
    auto ll = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
    return {{"family", std::string(to_string(f.family))},
            {"params", params},
            {"loglik", ll(f.loglik())},
            {"loglik_all",
             {{"exponential", ll(f.loglik_exponential)},
              {"gaussian", ll(f.loglik_gaussian)},
              {"gamma", ll(f.loglik_gamma)}}},
            {"degenerate", f.degenerate},
            {"n", f.n},
            {"censored", censored}};
}

inline json to_json(const ExtractionReport& r) {
    json spread;
    for (std::size_t k = 0; k < 6; ++k) {
        const auto& s = r.spread[k];
        spread[std::string(MemristorParams::field_names[k])] = {
            {"q25", s.q25}, {"median", s.median}, {"q75", s.q75}, {"count", s.count}};
    }
    const char* tau_names[] = {"tau_r", "tau_f"};
    for (std::size_t k = 0; k < 2; ++k) {
        const auto& s = r.tau[k];
        spread[tau_names[k]] = {{"q25", s.q25}, {"median", s.median}, {"q75", s.q75}, {"count", s.count}};
    }
    return {{"params", to_json(r.params)}, {"spread", spread}, {"cycles", r.cycles}};
}

inline json to_json(const Waveform& w) { return {{"dt", w.dt}, {"t0", w.t0}, {"samples", w.samples}}; }

inline Waveform waveform_from_json(const json& j) {
    Waveform w;
    w.dt = detail::req_number(j, "dt", "waveform");
    w.t0 = detail::opt_number(j, "t0", "waveform").value_or(0.0);
    if (!j.contains("samples") || !j.at("samples").is_array()) throw invalid_input("waveform.samples: expected an array");
    w.samples = j.at("samples").get<std::vector<double>>();
    validate(w);
    return w;
}

// -----------------------------------------------------------------------------
// CSV
// -----------------------------------------------------------------------------

/// `t_seconds,v_volts` rows.
inline std::string waveform_csv(const Waveform& w) {
    std::string s = "t_seconds,v_volts\n";
    s.reserve(w.size() * 28);
    for (std::size_t k = 0; k < w.size(); ++k) {
        s += fmt(w.time(k));
        s += ',';
        s += fmt(w.samples[k]);
        s += '\n';
    }
    return s;
}

namespace detail {
inline std::vector<std::string_view> split_lines(std::string_view text) {
    std::vector<std::string_view> out;
    while (!text.empty()) {
        const auto nl = text.find('\n');
        auto line = text.substr(0, nl);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (!line.empty() && line.front() != '#') out.push_back(line);
        if (nl == std::string_view::npos) break;
        text.remove_prefix(nl + 1);
    }
    return out;
}
}  // namespace detail

/// Reads either `t_seconds,v_volts` rows (uniform sampling required) or the
/// dt variant: `dt_seconds,<dt>`, optional `t0_seconds,<t0>`, a `v_volts`
/// header, then one value per line.
inline Waveform waveform_from_csv(std::string_view text) {
    const auto lines = detail::split_lines(text);
    if (lines.empty()) throw invalid_input("waveform csv: empty input");
    Waveform w;
    if (lines[0].starts_with("dt_seconds,")) {
        w.dt = parse_double(lines[0].substr(11), "waveform csv dt");
        std::size_t k = 1;
        if (k < lines.size() && lines[k].starts_with("t0_seconds,")) {
            w.t0 = parse_double(lines[k].substr(11), "waveform csv t0");
            ++k;
        }
        if (k >= lines.size() || lines[k] != "v_volts") throw invalid_input("waveform csv: expected 'v_volts' header");
        for (++k; k < lines.size(); ++k) w.samples.push_back(parse_double(lines[k], "waveform csv"));
        validate(w);
        return w;
    }
    if (lines[0] != "t_seconds,v_volts") throw invalid_input("waveform csv: unknown header '" + std::string(lines[0]) + "'");
    std::vector<double> t;
    for (std::size_t k = 1; k < lines.size(); ++k) {
        const auto c = lines[k].find(',');
        if (c == std::string_view::npos) throw invalid_input("waveform csv: line " + std::to_string(k + 1) + " lacks a comma");
        t.push_back(parse_double(lines[k].substr(0, c), "waveform csv time"));
        w.samples.push_back(parse_double(lines[k].substr(c + 1), "waveform csv value"));
    }
    if (t.size() < 2) throw invalid_input("waveform csv: need at least two rows");
    w.t0 = t.front();
    w.dt = (t.back() - t.front()) / static_cast<double>(t.size() - 1);
    for (std::size_t k = 1; k < t.size(); ++k) {
        const double expect = w.t0 + static_cast<double>(k) * w.dt;
        if (std::abs(t[k] - expect) > 1e-6 * w.dt) {
            throw invalid_input("waveform csv: non-uniform sampling at row " + std::to_string(k + 1));
        }
    }
    validate(w);
    return w;
}

inline std::string events_csv(std::span<const SwitchEvent> events) {
    std::string s = "t_seconds,direction\n";
    for (const auto& e : events) s += fmt(e.time) + ',' + std::to_string(e.direction) + '\n';
    return s;
}

inline std::string escape_run_csv(const EscapeRun& run) {
    std::string s = "iteration,escape_time_seconds,censored\n";
    for (const auto& r : run.records) {
        s += std::to_string(r.iteration) + ',' + (r.censored ? std::string() : fmt(r.time)) + ',' +
             (r.censored ? "1" : "0") + '\n';
    }
    return s;
}

inline std::string histogram_csv(std::span<const HistogramBin> bins) {
    std::string s = "bin_left,bin_right,count\n";
    for (const auto& b : bins) s += fmt(b.left) + ',' + fmt(b.right) + ',' + std::to_string(b.count) + '\n';
    return s;
}

inline std::string cycles_csv(std::span<const Cycle> cycles) {
    std::string s = "t_start_seconds,t_end_seconds,period_seconds,frequency_hz,v_max_volts,v_min_volts,energy_joules\n";
    for (const auto& c : cycles) {
        s += fmt(c.t_start) + ',' + fmt(c.t_end) + ',' + fmt(c.period) + ',' + fmt(c.frequency) + ',' +
             fmt(c.v_max) + ',' + fmt(c.v_min) + ',' + (c.energy ? fmt(*c.energy) : std::string()) + '\n';
    }
    return s;
}

}  // namespace mott::io
