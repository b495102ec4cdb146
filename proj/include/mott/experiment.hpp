#pragma once

// Config-driven experiment runner behind the mott-osc command line tool.
// One JSON document per experiment, SI base units, mandatory units_version.
// Sweep points run on a bounded worker pool; results are ordered by sweep
// index and the manifest is written last.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <iostream>
#include <limits>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <json.hpp>

#include "mott/analysis.hpp"
#include "mott/analytic.hpp"
#include "mott/device_model.hpp"
#include "mott/error.hpp"
#include "mott/io.hpp"
#include "mott/statistics.hpp"
#include "mott/stochastic.hpp"
#include "mott/thermal.hpp"
#include "mott/transient.hpp"

namespace mott::cli {

using json = nlohmann::json;
namespace fs = std::filesystem;

inline constexpr int units_version = 1;
inline constexpr std::string_view tool_version = "1.0.0";

enum ExitCode : int { exit_ok = 0, exit_config = 2, exit_numerical = 3, exit_partial = 4 };

struct Options {
    fs::path config_path;
    fs::path out_dir = "out";
    std::optional<std::uint64_t> seed;
    unsigned jobs = 1;
    std::optional<fs::path> input;  ///< waveform for `extract`
};

// -----------------------------------------------------------------------------
// Config access with path-qualified errors
// -----------------------------------------------------------------------------

namespace detail {

inline std::string join(std::string_view path, std::string_view key) {
    return path.empty() ? std::string(key) : std::string(path) + "." + std::string(key);
}

inline const json& section(const json& j, std::string_view key, std::string_view path = "") {
    const auto it = j.find(std::string(key));
    if (it == j.end()) throw config_error(join(path, key) + ": missing section");
    if (!it->is_object()) throw config_error(join(path, key) + ": expected an object");
    return *it;
}

inline std::optional<double> opt_num(const json& j, std::string_view key, std::string_view path) {
    const auto it = j.find(std::string(key));
    if (it == j.end() || it->is_null()) return std::nullopt;
    if (!it->is_number()) throw config_error(join(path, key) + ": expected a number");
    return it->get<double>();
}

inline double num(const json& j, std::string_view key, std::string_view path) {
    auto v = opt_num(j, key, path);
    if (!v) throw config_error(join(path, key) + ": missing");
    return *v;
}

inline double positive(const json& j, std::string_view key, std::string_view path) {
    const double v = num(j, key, path);
    if (!(v > 0.0)) throw config_error(join(path, key) + ": must be positive");
    return v;
}

inline std::size_t count(const json& j, std::string_view key, std::string_view path, std::size_t dflt) {
    const auto it = j.find(std::string(key));
    if (it == j.end()) return dflt;
    if (!it->is_number_integer() || it->get<std::int64_t>() <= 0) {
        throw config_error(join(path, key) + ": expected a positive integer");
    }
    return it->get<std::size_t>();
}

inline std::string text(const json& j, std::string_view key, std::string_view path, std::string dflt) {
    const auto it = j.find(std::string(key));
    if (it == j.end()) return dflt;
    if (!it->is_string()) throw config_error(join(path, key) + ": expected a string");
    return it->get<std::string>();
}

/// A number, an array of numbers, or {from, to, count}.
inline std::vector<double> values(const json& v, std::string_view path) {
    if (v.is_number()) return {v.get<double>()};
    if (v.is_array()) {
        std::vector<double> out;
        for (std::size_t k = 0; k < v.size(); ++k) {
            if (!v[k].is_number()) throw config_error(std::string(path) + "[" + std::to_string(k) + "]: expected a number");
            out.push_back(v[k].get<double>());
        }
        if (out.empty()) throw config_error(std::string(path) + ": empty list");
        return out;
    }
    if (v.is_object()) {
        const double a = num(v, "from", path);
        const double b = num(v, "to", path);
        const std::size_t n = count(v, "count", path, 0);
        if (n == 0) throw config_error(join(path, "count") + ": missing");
        if (n == 1) return {a};
        std::vector<double> out(n);
        for (std::size_t k = 0; k < n; ++k) out[k] = a + (b - a) * static_cast<double>(k) / static_cast<double>(n - 1);
        return out;
    }
    throw config_error(std::string(path) + ": expected a number, a list, or {from, to, count}");
}

inline std::optional<std::vector<double>> opt_values(const json& j, std::string_view key, std::string_view path) {
    const auto it = j.find(std::string(key));
    if (it == j.end() || it->is_null()) return std::nullopt;
    return values(*it, join(path, key));
}

/// r_l: number, or null / "inf" to disable.
inline double load_resistance(const json& c, std::string_view path, double dflt) {
    const auto it = c.find("r_l");
    if (it == c.end()) return dflt;
    if (it->is_null() || (it->is_string() && it->get<std::string>() == "inf")) {
        return std::numeric_limits<double>::infinity();
    }
    if (!it->is_number() || !(it->get<double>() > 0.0)) {
        throw config_error(join(path, "r_l") + ": expected a positive number, null or \"inf\"");
    }
    return it->get<double>();
}

inline json r_l_json(double r_l) { return std::isfinite(r_l) ? json(r_l) : json(nullptr); }

inline GateSignal gate_from_json(const json& g, std::string_view path) {
    if (!g.is_object()) throw config_error(std::string(path) + ": expected an object");
    const std::string type = text(g, "type", path, "");
    GateSignal out;
    if (type == "constant") {
        out = GateConstant{num(g, "v", path)};
    } else if (type == "ramp") {
        out = GateRamp{num(g, "v0", path), num(g, "v1", path), positive(g, "t_total", path)};
    } else if (type == "sine") {
        out = GateSine{num(g, "v_mid", path), num(g, "v_amp", path), positive(g, "f", path)};
    } else if (type == "square") {
        out = GateSquare{num(g, "v_low", path), num(g, "v_high", path), positive(g, "f", path),
                         opt_num(g, "duty", path).value_or(0.5)};
    } else {
        throw config_error(join(path, "type") + ": expected constant, ramp, sine or square");
    }
    try {
        validate(out);
    } catch (const invalid_input& e) {
        throw config_error(std::string(path) + ": " + e.what());
    }
    return out;
}

inline json to_json(const GateSignal& g) {
    return std::visit(
        [](const auto& s) -> json {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, GateConstant>) {
                return {{"type", "constant"}, {"v", s.v}};
            } else if constexpr (std::is_same_v<T, GateRamp>) {
                return {{"type", "ramp"}, {"v0", s.v0}, {"v1", s.v1}, {"t_total", s.t_total}};
            } else if constexpr (std::is_same_v<T, GateSine>) {
                return {{"type", "sine"}, {"v_mid", s.v_mid}, {"v_amp", s.v_amp}, {"f", s.f}};
            } else {
                return {{"type", "square"}, {"v_low", s.v_low}, {"v_high", s.v_high}, {"f", s.f}, {"duty", s.duty}};
            }
        },
        g);
}

inline BiasDrive drive_from_json(const json& d, std::string_view path) {
    if (!d.is_object()) throw config_error(std::string(path) + ": expected an object");
    const std::string type = text(d, "type", path, "current");
    if (type == "current") return ConstantCurrent{positive(d, "i", path)};
    if (type != "transistor") throw config_error(join(path, "type") + ": expected current or transistor");
    TransistorDrive tr;
    if (auto it = d.find("jlfet"); it != d.end()) {
        const std::string p = join(path, "jlfet");
        if (!it->is_object()) throw config_error(p + ": expected an object");
        tr.model.v_t = opt_num(*it, "v_t", p).value_or(tr.model.v_t);
        tr.model.k = opt_num(*it, "k", p).value_or(tr.model.k);
        tr.model.r_sd = opt_num(*it, "r_sd", p).value_or(tr.model.r_sd);
        tr.model.lambda = opt_num(*it, "lambda", p).value_or(tr.model.lambda);
    }
    if (auto it = d.find("gate"); it != d.end()) tr.gate = gate_from_json(*it, join(path, "gate"));
    tr.v_ss = opt_num(d, "v_ss", path).value_or(tr.v_ss);
    return tr;
}

inline json to_json(const BiasDrive& d) {
    if (const auto* cc = std::get_if<ConstantCurrent>(&d)) return {{"type", "current"}, {"i", cc->i}};
    const auto& tr = std::get<TransistorDrive>(d);
    return {{"type", "transistor"},
            {"v_ss", tr.v_ss},
            {"jlfet", {{"v_t", tr.model.v_t}, {"k", tr.model.k}, {"r_sd", tr.model.r_sd}, {"lambda", tr.model.lambda}}},
            {"gate", to_json(tr.gate)}};
}

inline CircuitConfig circuit_from_json(const json& c, std::string_view path, const CircuitConfig& base = {}) {
    if (!c.is_object()) throw config_error(std::string(path) + ": expected an object");
    CircuitConfig out = base;
    out.c_l = opt_num(c, "c_l", path).value_or(out.c_l);
    out.r_l = load_resistance(c, path, out.r_l);
    out.temperature = opt_num(c, "temperature", path).value_or(out.temperature);
    if (auto it = c.find("drive"); it != c.end()) out.drive = drive_from_json(*it, join(path, "drive"));
    if (!(out.c_l > 0.0)) throw config_error(join(path, "c_l") + ": must be positive");
    return out;
}

inline json to_json(const CircuitConfig& c) {
    return {{"c_l", c.c_l}, {"r_l", r_l_json(c.r_l)}, {"temperature", c.temperature}, {"drive", to_json(c.drive)}};
}

inline InitialState initial_from_json(const json& j, std::string_view key, std::string_view path) {
    InitialState s;
    const auto it = j.find(std::string(key));
    if (it == j.end()) return s;
    const std::string p = join(path, key);
    if (!it->is_object()) throw config_error(p + ": expected an object");
    s.v = opt_num(*it, "v", p).value_or(0.0);
    const std::string ph = text(*it, "phase", p, "insulating");
    if (ph == "metallic") {
        s.phase = Phase::metallic;
    } else if (ph != "insulating") {
        throw config_error(join(p, "phase") + ": expected insulating or metallic");
    }
    return s;
}

}  // namespace detail

/// Parsed experiment document. `raw` keeps the resolved JSON (device files
/// inlined, seed override applied) for the manifest echo.
struct ExperimentConfig {
    json raw;
    fs::path base_dir;
    TemperatureModel device;
    CircuitConfig circuit;
    std::optional<NoiseConfig> noise;
    std::optional<TemperatureModel> device_b;  ///< couple.device_b
};

/// `device` is either a TemperatureModel object, {"params": {...}} for a
/// temperature-independent set, or {"file": "..."} naming another JSON file
/// (relative to the config) holding either form.
inline TemperatureModel device_from_json(json& d, const fs::path& base_dir, std::string_view path) {
    if (!d.is_object()) throw config_error(std::string(path) + ": expected an object");
    if (auto it = d.find("file"); it != d.end()) {
        if (!it->is_string()) throw config_error(detail::join(path, "file") + ": expected a string");
        const fs::path f = base_dir / it->get<std::string>();
        if (!fs::exists(f)) throw config_error(detail::join(path, "file") + ": " + f.string() + " does not exist");
        json inner;
        try {
            inner = json::parse(io::read_file(f));
        } catch (const json::parse_error& e) {
            throw config_error(detail::join(path, "file") + ": " + e.what());
        }
        if (inner.contains("device")) inner = inner.at("device");
        d = inner;
        return device_from_json(d, f.parent_path(), path);
    }
    if (auto it = d.find("params"); it != d.end()) {
        TemperatureModel m;
        m.base = io::params_from_json(*it, detail::join(path, "params"));
        m.t_min = -std::numeric_limits<double>::infinity();
        m.t_max = std::numeric_limits<double>::infinity();
        try {
            validate(m.base);
        } catch (const error& e) {
            throw config_error(detail::join(path, "params") + ": " + e.what());
        }
        return m;
    }
    return io::temperature_model_from_json(d, path);
}

inline ExperimentConfig load_config(const fs::path& path, std::optional<std::uint64_t> seed_override) {
    ExperimentConfig cfg;
    cfg.base_dir = path.parent_path();
    if (!fs::exists(path)) throw config_error("config file " + path.string() + " does not exist");
    try {
        cfg.raw = json::parse(io::read_file(path));
    } catch (const json::parse_error& e) {
        throw config_error(std::string("config: ") + e.what());
    }
    json& j = cfg.raw;
    if (!j.is_object()) throw config_error("config: expected a JSON object");
    const auto uv = j.find("units_version");
    if (uv == j.end()) throw config_error("units_version: missing (expected " + std::to_string(units_version) + ")");
    if (!uv->is_number_integer() || uv->get<int>() != units_version) {
        throw config_error("units_version: unsupported value " + uv->dump() + " (expected " +
                           std::to_string(units_version) + ")");
    }
    if (auto it = j.find("device"); it != j.end()) {
        cfg.device = device_from_json(*it, cfg.base_dir, "device");
    }
    if (auto it = j.find("circuit"); it != j.end()) cfg.circuit = detail::circuit_from_json(*it, "circuit");
    if (auto it = j.find("noise"); it != j.end()) {
        if (seed_override) (*it)["seed"] = *seed_override;
        cfg.noise = io::noise_from_json(*it, "noise");
    } else if (seed_override) {
        j["noise_seed_override"] = *seed_override;
    }
    if (auto it = j.find("couple"); it != j.end() && it->is_object() && it->contains("device_b")) {
        cfg.device_b = device_from_json((*it)["device_b"], cfg.base_dir, "couple.device_b");
    }
    const char* runnable[] = {"simulate", "montecarlo", "couple", "vco", "extract", "thermal"};
    if (std::none_of(std::begin(runnable), std::end(runnable), [&](const char* k) { return j.contains(k); })) {
        throw config_error("config: no runnable section (simulate, montecarlo, couple, vco, extract or thermal)");
    }
    return cfg;
}

inline MemristorParams params_at(const ExperimentConfig& cfg, double t, std::string_view path) {
    if (!cfg.raw.contains("device")) throw config_error("device: missing section");
    (void)path;
    return params_at_temperature(cfg.device, t);
}

// -----------------------------------------------------------------------------
// Worker pool and per-point bookkeeping
// -----------------------------------------------------------------------------

struct PointResult {
    std::string label;
    bool ok = false;
    std::string error;
    std::vector<std::string> files;
    json summary = json::object();
};

/// Runs task(i) for i in [0, n) on at most `jobs` threads. Exceptions become
/// failed points; results keep sweep order.
inline std::vector<PointResult> run_points(std::size_t n, unsigned jobs,
                                           const std::function<PointResult(std::size_t)>& task) {
    std::vector<PointResult> out(n);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n) return;
            try {
                out[i] = task(i);
                out[i].ok = true;
            } catch (const std::exception& e) {
                out[i].ok = false;
                out[i].error = e.what();
            }
        }
    };
    const unsigned threads = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
    std::vector<std::thread> pool;
    for (unsigned t = 1; t < threads; ++t) pool.emplace_back(worker);
    worker();
    for (auto& th : pool) th.join();
    return out;
}

struct RunContext {
    const Options& opt;
    const ExperimentConfig& cfg;
    std::string command;

    [[nodiscard]] fs::path out() const { return opt.out_dir; }

    /// Writes `content` under the output directory and returns the relative name.
    std::string write(const std::string& rel, std::string_view content) const {
        io::atomic_write(opt.out_dir / rel, content);
        return rel;
    }
};

inline std::string point_dir(std::string_view stem, std::size_t i) {
    std::ostringstream os;
    os << stem << "_" << std::setw(3) << std::setfill('0') << i;
    return os.str();
}

/// Exit code from point outcomes: all ok 0, none ok 3, otherwise 4.
inline int sweep_exit_code(const std::vector<PointResult>& pts) {
    const auto good = std::count_if(pts.begin(), pts.end(), [](const PointResult& p) { return p.ok; });
    if (good == static_cast<std::ptrdiff_t>(pts.size())) return exit_ok;
    return good == 0 ? exit_numerical : exit_partial;
}

inline void write_manifest(const RunContext& ctx, const std::vector<PointResult>& pts,
                           const std::vector<std::string>& files, int code) {
    json points = json::array();
    for (std::size_t i = 0; i < pts.size(); ++i) {
        json p{{"index", i}, {"label", pts[i].label}, {"status", pts[i].ok ? "ok" : "failed"}, {"files", pts[i].files}};
        if (!pts[i].ok) p["error"] = pts[i].error;
        if (!pts[i].summary.empty()) p["summary"] = pts[i].summary;
        points.push_back(std::move(p));
    }
    json m{{"tool", "mott-osc"},
           {"version", std::string(tool_version)},
           {"command", ctx.command},
           {"config", ctx.cfg.raw},
           {"points", points},
           {"files", files},
           {"exit_code", code}};
    if (ctx.opt.input) m["input"] = ctx.opt.input->string();
    io::atomic_write(ctx.out() / "manifest.json", m.dump(2) + "\n");
}

// -----------------------------------------------------------------------------
// Helpers shared by the subcommands
// -----------------------------------------------------------------------------

/// Mean frequency from rising events after t_from; nullopt with < 2 events.
inline std::optional<double> event_frequency(const std::vector<SwitchEvent>& events, double t_from = 0.0) {
    std::vector<double> t;
    for (const auto& e : events) {
        if (e.direction > 0 && e.time >= t_from) t.push_back(e.time);
    }
    if (t.size() < 2) return std::nullopt;
    return static_cast<double>(t.size() - 1) / (t.back() - t.front());
}

inline double default_dt(const MemristorParams& p, double c_l, double divisor) {
    return c_l * std::min(p.r_i, p.r_m) / divisor;
}

inline json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

inline bool want_json_waveforms(const ExperimentConfig& cfg) {
    const auto it = cfg.raw.find("outputs");
    if (it == cfg.raw.end() || !it->is_object()) return false;
    const auto f = it->find("formats");
    if (f == it->end() || !f->is_array()) return false;
    return std::any_of(f->begin(), f->end(), [](const json& x) { return x == "json"; });
}

// -----------------------------------------------------------------------------
// simulate
// -----------------------------------------------------------------------------

inline int cmd_simulate(const RunContext& ctx) {
    const auto& cfg = ctx.cfg;
    const json& s = detail::section(cfg.raw, "simulate");
    const double duration = detail::positive(s, "duration", "simulate");
    const auto dt_cfg = detail::opt_num(s, "dt", "simulate");
    const auto currents = detail::opt_values(s, "currents", "simulate");
    const auto temps = detail::opt_values(s, "temperatures", "simulate").value_or(std::vector<double>{cfg.circuit.temperature});
    const InitialState init = detail::initial_from_json(s, "initial", "simulate");
    const bool as_json = want_json_waveforms(cfg);
    if (!currents && !std::holds_alternative<ConstantCurrent>(cfg.circuit.drive) &&
        !std::holds_alternative<TransistorDrive>(cfg.circuit.drive)) {
        throw config_error("simulate.currents: missing");
    }
    const std::vector<double> cur = currents.value_or(std::vector<double>{std::numeric_limits<double>::quiet_NaN()});
    for (double i : cur) {
        if (!std::isnan(i) && !(i > 0.0)) throw config_error("simulate.currents: values must be positive");
    }
    const std::size_t n = temps.size() * cur.size();
    auto pts = run_points(n, ctx.opt.jobs, [&](std::size_t idx) {
        const double t = temps[idx / cur.size()];
        const double i = cur[idx % cur.size()];
        PointResult r;
        const auto p = params_at(cfg, t, "device");
        CircuitConfig c = cfg.circuit;
        c.temperature = t;
        if (!std::isnan(i)) c.drive = ConstantCurrent{i};
        std::ostringstream label;
        label << "T=" << t << "C";
        if (const auto* cc = std::get_if<ConstantCurrent>(&c.drive)) label << " I=" << cc->i << "A";
        r.label = label.str();
        const double dt = dt_cfg.value_or(default_dt(p, c.c_l, 50.0));
        const auto res = simulate_single(p, c, duration, dt, init);
        const std::string dir = point_dir("point", idx);
        r.files.push_back(ctx.write(dir + "/waveform.csv", io::waveform_csv(res.waveform)));
        if (as_json) r.files.push_back(ctx.write(dir + "/waveform.json", io::to_json(res.waveform).dump() + "\n"));
        r.files.push_back(ctx.write(dir + "/events.csv", io::events_csv(res.events)));
        r.summary["temperature"] = t;
        r.summary["params"] = io::to_json(p);
        std::optional<double> f_analytic;
        if (const auto* cc = std::get_if<ConstantCurrent>(&c.drive)) {
            r.summary["i_bias"] = cc->i;
            const auto a = assess(p, cc->i);
            r.summary["oscillates"] = a.oscillates;
            if (a.oscillates) f_analytic = period(p, cc->i, c.c_l).frequency;
        }
        r.summary["f_analytic"] = opt_json(f_analytic);
        r.summary["f_simulated"] = opt_json(event_frequency(res.events, 0.2 * duration));
        return r;
    });
    std::string table = "index,temperature_c,i_bias_a,oscillates,f_analytic_hz,f_simulated_hz,status\n";
    for (std::size_t k = 0; k < pts.size(); ++k) {
        const auto& sm = pts[k].summary;
        auto cell = [&](const char* key) -> std::string {
            if (!sm.contains(key) || sm[key].is_null()) return "";
            if (sm[key].is_boolean()) return sm[key].get<bool>() ? "1" : "0";
            return io::fmt(sm[key].get<double>());
        };
        const double t = temps[k / cur.size()];
        const double i = cur[k % cur.size()];
        table += std::to_string(k) + ',' + io::fmt(t) + ',' + (std::isnan(i) ? cell("i_bias") : io::fmt(i)) + ',' +
                 cell("oscillates") + ',' + cell("f_analytic") + ',' + cell("f_simulated") + ',' +
                 (pts[k].ok ? "ok" : "failed") + '\n';
    }
    std::vector<std::string> files{ctx.write("summary.csv", table)};
    const int code = sweep_exit_code(pts);
    write_manifest(ctx, pts, files, code);
    return code;
}

// -----------------------------------------------------------------------------
// montecarlo
// -----------------------------------------------------------------------------

inline int cmd_montecarlo(const RunContext& ctx) {
    const auto& cfg = ctx.cfg;
    if (!cfg.noise) throw config_error("noise: missing section (required by montecarlo)");
    const json& s = detail::section(cfg.raw, "montecarlo");
    if (!s.contains("margins")) throw config_error("montecarlo.margins: missing");
    const auto margins = detail::values(s.at("margins"), "montecarlo.margins");
    const std::size_t iterations = detail::count(s, "iterations", "montecarlo", 10000);
    const auto timeout = detail::opt_num(s, "timeout", "montecarlo");
    const auto bin_width = detail::opt_num(s, "bin_width", "montecarlo");
    const std::string orient = detail::text(s, "orientation", "montecarlo", "falling");
    if (orient != "falling" && orient != "rising") throw config_error("montecarlo.orientation: expected falling or rising");
    const auto o = orient == "falling" ? EscapeOrientation::falling : EscapeOrientation::rising;
    const double temp = detail::opt_num(s, "temperature", "montecarlo").value_or(cfg.circuit.temperature);
    const double c_l = detail::opt_num(s, "c_l", "montecarlo").value_or(cfg.circuit.c_l);
    const auto p = params_at(cfg, temp, "device");
    const NoiseConfig noise = *cfg.noise;

    std::vector<MarginPoint> mpts(margins.size());
    auto pts = run_points(margins.size(), ctx.opt.jobs, [&](std::size_t k) {
        PointResult r;
        r.label = "margin=" + io::fmt(margins[k]) + "V";
        auto run = escape_run_at_margin(p, c_l, noise, margins[k], iterations, timeout, k, o);
        const std::string dir = point_dir("margin", k);
        r.files.push_back(ctx.write(dir + "/escape_run.csv", io::escape_run_csv(run)));
        r.summary["margin"] = margins[k];
        r.summary["survivors"] = run.samples.size();
        r.summary["censored"] = run.censored;
        if (run.samples.empty()) throw numerical_failure("all iterations censored before timeout");
        const auto bins = bin_width ? histogram(run.samples, *bin_width) : histogram_bins(run.samples, 50);
        r.files.push_back(ctx.write(dir + "/histogram.csv", io::histogram_csv(bins)));
        r.summary["median"] = median(run.samples);
        if (run.samples.size() >= 100) {
            const auto fit = fit_distribution(run.samples);
            r.files.push_back(ctx.write(dir + "/fit.json", io::to_json(fit, run.censored).dump(2) + "\n"));
            r.summary["family"] = std::string(to_string(fit.family));
        }
        MarginPoint mp;
        mp.margin = margins[k];
        mp.survivors = run.samples.size();
        mp.censored = run.censored;
        mp.median = median(run.samples);
        mpts[k] = std::move(mp);
        return r;
    });
    std::string table = "margin_volts,median_escape_seconds,survivors,censored,family,status\n";
    for (std::size_t k = 0; k < pts.size(); ++k) {
        const auto& sm = pts[k].summary;
        table += io::fmt(margins[k]) + ',' + (sm.contains("median") ? io::fmt(sm["median"].get<double>()) : "") + ',' +
                 (sm.contains("survivors") ? std::to_string(sm["survivors"].get<std::size_t>()) : "") + ',' +
                 (sm.contains("censored") ? std::to_string(sm["censored"].get<std::size_t>()) : "") + ',' +
                 (sm.contains("family") ? sm["family"].get<std::string>() : "") + ',' + (pts[k].ok ? "ok" : "failed") +
                 '\n';
    }
    std::vector<std::string> files{ctx.write("medians.csv", table)};
    if (o == EscapeOrientation::falling && margins.size() >= 2) {
        const double tau = c_l * p.r_m;
        json off;
        try {
            const auto f = fit_margin_offset(mpts, tau);
            off = {{"offset_volts", f.offset}, {"points", f.points}, {"rms_log_residual", f.rms_log_residual},
                   {"tau_seconds", tau}};
        } catch (const error& e) {
            off = {{"offset_volts", nullptr}, {"error", e.what()}, {"tau_seconds", tau}};
        }
        files.push_back(ctx.write("offset.json", off.dump(2) + "\n"));
    }
    const int code = sweep_exit_code(pts);
    write_manifest(ctx, pts, files, code);
    return code;
}

// -----------------------------------------------------------------------------
// couple
// -----------------------------------------------------------------------------

inline int cmd_couple(const RunContext& ctx) {
    const auto& cfg = ctx.cfg;
    const json& s = detail::section(cfg.raw, "couple");
    const double duration = detail::positive(s, "duration", "couple");
    const auto dt_cfg = detail::opt_num(s, "dt", "couple");
    const auto r_cs = detail::values(s.contains("r_c") ? s.at("r_c") : json(343e3), "couple.r_c");
    for (double r : r_cs) {
        if (!(r > 0.0)) throw config_error("couple.r_c: values must be positive");
    }
    const double settle = detail::opt_num(s, "settle", "couple").value_or(0.0);
    const auto p_a = params_at(cfg, cfg.circuit.temperature, "device");
    MemristorParams p_b = p_a;
    CircuitConfig node_b = cfg.circuit;
    if (s.contains("node_b")) node_b = detail::circuit_from_json(s.at("node_b"), "couple.node_b", cfg.circuit);
    if (cfg.device_b) {
        p_b = params_at_temperature(*cfg.device_b, node_b.temperature);
    } else {
        p_b = params_at(cfg, node_b.temperature, "device");
    }
    CoupledConfig cc;
    cc.node_a = cfg.circuit;
    cc.node_b = node_b;
    cc.v_ss_a = detail::opt_num(s, "v_ss_a", "couple");
    cc.v_ss_b = detail::opt_num(s, "v_ss_b", "couple");
    CoupledInitialState init{detail::initial_from_json(s, "initial_a", "couple"),
                             detail::initial_from_json(s, "initial_b", "couple")};
    const double dt = dt_cfg.value_or(std::min(default_dt(p_a, cc.node_a.c_l, 100.0), default_dt(p_b, cc.node_b.c_l, 100.0)));

    auto pts = run_points(r_cs.size(), ctx.opt.jobs, [&](std::size_t k) {
        PointResult r;
        r.label = "r_c=" + io::fmt(r_cs[k]) + "Ohm";
        CoupledConfig c = cc;
        c.r_c = r_cs[k];
        const auto res = simulate_coupled(p_a, p_b, c, duration, dt, init);
        const std::string dir = point_dir("coupling", k);
        r.files.push_back(ctx.write(dir + "/waveform_a.csv", io::waveform_csv(res.a.waveform)));
        r.files.push_back(ctx.write(dir + "/waveform_b.csv", io::waveform_csv(res.b.waveform)));
        r.files.push_back(ctx.write(dir + "/events_a.csv", io::events_csv(res.a.events)));
        r.files.push_back(ctx.write(dir + "/events_b.csv", io::events_csv(res.b.events)));
        r.summary["r_c"] = r_cs[k];
        const Waveform wa = slice(res.a.waveform, settle, duration);
        const Waveform wb = slice(res.b.waveform, settle, duration);
        const auto seg_a = segment_cycles(wa);
        const auto seg_b = segment_cycles(wb);
        if (seg_a.cycles.size() >= 2 && seg_b.cycles.size() >= 2) {
            const auto fa = frequency_stats(seg_a.cycles);
            const auto fb = frequency_stats(seg_b.cycles);
            r.summary["f_mean_a"] = fa.mean;
            r.summary["f_mean_b"] = fb.mean;
            r.summary["f_sigma_a"] = fa.sigma;
            r.summary["f_sigma_b"] = fb.sigma;
            r.summary["relative_difference"] = std::abs(fa.mean - fb.mean) / (0.5 * (fa.mean + fb.mean));
            r.files.push_back(ctx.write(dir + "/cycles_a.csv", io::cycles_csv(seg_a.cycles)));
            r.files.push_back(ctx.write(dir + "/cycles_b.csv", io::cycles_csv(seg_b.cycles)));
            // Jitter against a common trigger midway through both swings.
            const auto ta = default_trigger(wa);
            const auto tb = default_trigger(wb);
            try {
                const auto jt = compute_jitter(wa, wb, 0.5 * (ta.trigger + tb.trigger),
                                               std::min(ta.hysteresis, tb.hysteresis));
                std::string jc = "spike_index,delay_seconds\n";
                for (const auto& [i, d] : jt.pairs) jc += std::to_string(i) + ',' + io::fmt(d) + '\n';
                r.files.push_back(ctx.write(dir + "/jitter.csv", jc));
                const auto d = jt.delays();
                r.summary["jitter_mean"] = mean(d);
                r.summary["jitter_sigma"] = stddev(d);
            } catch (const invalid_input& e) {
                r.summary["jitter_error"] = e.what();
            }
        }
        return r;
    });
    std::string table = "r_c_ohm,f_mean_a_hz,f_mean_b_hz,relative_difference,jitter_mean_s,jitter_sigma_s,status\n";
    for (std::size_t k = 0; k < pts.size(); ++k) {
        const auto& sm = pts[k].summary;
        auto cell = [&](const char* key) { return sm.contains(key) ? io::fmt(sm[key].get<double>()) : std::string(); };
        table += io::fmt(r_cs[k]) + ',' + cell("f_mean_a") + ',' + cell("f_mean_b") + ',' + cell("relative_difference") +
                 ',' + cell("jitter_mean") + ',' + cell("jitter_sigma") + ',' + (pts[k].ok ? "ok" : "failed") + '\n';
    }
    std::vector<std::string> files{ctx.write("summary.csv", table)};
    const int code = sweep_exit_code(pts);
    write_manifest(ctx, pts, files, code);
    return code;
}

// -----------------------------------------------------------------------------
// vco
// -----------------------------------------------------------------------------

inline int cmd_vco(const RunContext& ctx) {
    const auto& cfg = ctx.cfg;
    const json& s = detail::section(cfg.raw, "vco");
    const auto* tr = std::get_if<TransistorDrive>(&cfg.circuit.drive);
    if (tr == nullptr) throw config_error("circuit.drive: vco requires a transistor drive");
    const auto p = params_at(cfg, cfg.circuit.temperature, "device");
    const auto dt_cfg = detail::opt_num(s, "dt", "vco");
    const auto freqs = detail::opt_values(s, "gate_frequencies", "vco");
    const std::size_t bursts = detail::count(s, "bursts", "vco", 4);
    const auto duration_cfg = detail::opt_num(s, "duration", "vco");
    const bool square = std::holds_alternative<GateSquare>(tr->gate);
    if (freqs && !square) throw config_error("vco.gate_frequencies: requires a square gate");
    const std::vector<double> fs = freqs.value_or(std::vector<double>{std::numeric_limits<double>::quiet_NaN()});

    auto pts = run_points(fs.size(), ctx.opt.jobs, [&](std::size_t k) {
        PointResult r;
        CircuitConfig c = cfg.circuit;
        auto& drv = std::get<TransistorDrive>(c.drive);
        if (!std::isnan(fs[k])) std::get<GateSquare>(drv.gate).f = fs[k];
        const auto gp = gate_period(drv.gate);
        double duration = 0.0;
        if (duration_cfg) {
            duration = *duration_cfg;
        } else if (gp) {
            duration = static_cast<double>(bursts) * *gp;
        } else {
            throw config_error("vco.duration: required for a constant gate");
        }
        r.label = gp ? "gate_f=" + io::fmt(1.0 / *gp) + "Hz" : "constant gate";
        const double dt = dt_cfg.value_or(default_dt(p, c.c_l, 50.0));
        const auto res = simulate_vco(p, c, duration, dt);
        const std::string dir = point_dir("gate", k);
        r.files.push_back(ctx.write(dir + "/waveform.csv", io::waveform_csv(res.waveform)));
        r.files.push_back(ctx.write(dir + "/events.csv", io::events_csv(res.events)));
        r.summary["spikes_total"] = std::count_if(res.events.begin(), res.events.end(),
                                                  [](const SwitchEvent& e) { return e.direction > 0; });
        if (const auto* sq = std::get_if<GateSquare>(&drv.gate)) {
            const auto windows = square_low_windows(*sq, duration);
            const auto counts = spikes_per_window(res.events, windows);
            std::string bc = "burst,t_start_seconds,t_end_seconds,spikes\n";
            for (std::size_t b = 0; b < windows.size(); ++b) {
                bc += std::to_string(b) + ',' + io::fmt(windows[b].first) + ',' + io::fmt(windows[b].second) + ',' +
                      std::to_string(counts[b]) + '\n';
            }
            r.files.push_back(ctx.write(dir + "/bursts.csv", bc));
            r.summary["gate_frequency"] = sq->f;
            r.summary["spikes_per_burst"] = counts;
        }
        return r;
    });
    const int code = sweep_exit_code(pts);
    write_manifest(ctx, pts, {}, code);
    return code;
}

// -----------------------------------------------------------------------------
// extract
// -----------------------------------------------------------------------------

inline Waveform load_waveform(const fs::path& f) {
    const std::string txt = io::read_file(f);
    if (f.extension() == ".json") {
        try {
            return io::waveform_from_json(json::parse(txt));
        } catch (const json::exception& e) {
            throw invalid_input(f.string() + ": " + e.what());
        }
    }
    return io::waveform_from_csv(txt);
}

inline int cmd_extract(const RunContext& ctx) {
    const auto& cfg = ctx.cfg;
    const json& s = detail::section(cfg.raw, "extract");
    fs::path input;
    if (ctx.opt.input) {
        input = *ctx.opt.input;
    } else if (s.contains("input")) {
        input = cfg.base_dir / detail::text(s, "input", "extract", "");
    } else {
        throw config_error("extract.input: missing (or pass --input)");
    }
    if (!fs::exists(input)) throw config_error("extract.input: " + input.string() + " does not exist");
    const double c_l = detail::opt_num(s, "c_l", "extract").value_or(cfg.circuit.c_l);
    std::optional<double> i_bias = detail::opt_num(s, "i_bias", "extract");
    if (!i_bias) {
        if (const auto* cc = std::get_if<ConstantCurrent>(&cfg.circuit.drive)) i_bias = cc->i;
    }
    if (!i_bias || !(*i_bias > 0.0)) throw config_error("extract.i_bias: missing (no constant-current circuit drive)");
    const double r_l = detail::load_resistance(s, "extract", cfg.circuit.r_l);
    const Waveform w = load_waveform(input);
    const auto dflt = default_trigger(w);
    const double trigger = detail::opt_num(s, "trigger", "extract").value_or(dflt.trigger);
    const double hyst = detail::opt_num(s, "hysteresis", "extract").value_or(dflt.hysteresis);
    const auto bin_width = detail::opt_num(s, "bin_width", "extract");

    std::vector<PointResult> pts(1);
    pts[0].label = input.filename().string();
    std::vector<std::string> files;
    int code = exit_ok;
    try {
        const auto rep = extract_model_params(w, c_l, *i_bias, trigger, r_l, hyst);
        const auto seg = segment_cycles(w, trigger, hyst, *i_bias);
        const auto fst = frequency_stats(seg.cycles, bin_width);
        json pj = io::to_json(rep);
        pj["c_l"] = c_l;
        pj["i_bias"] = *i_bias;
        pj["r_l"] = detail::r_l_json(r_l);
        pj["trigger"] = trigger;
        pts[0].files.push_back(ctx.write("params.json", pj.dump(2) + "\n"));
        pts[0].files.push_back(ctx.write("cycles.csv", io::cycles_csv(seg.cycles)));
        pts[0].files.push_back(ctx.write("frequency_histogram.csv", io::histogram_csv(fst.histogram)));
        pts[0].summary = {{"f_mean", fst.mean}, {"f_median", fst.median}, {"f_sigma", fst.sigma},
                          {"cycles", seg.cycles.size()}, {"params", io::to_json(rep.params)}};
        pts[0].ok = true;
    } catch (const invalid_input& e) {
        pts[0].error = e.what();
        code = exit_numerical;
    } catch (const numerical_failure& e) {
        pts[0].error = e.what();
        code = exit_numerical;
    }
    write_manifest(ctx, pts, files, code);
    return code;
}

// -----------------------------------------------------------------------------
// thermal
// -----------------------------------------------------------------------------

inline int cmd_thermal(const RunContext& ctx) {
    const auto& cfg = ctx.cfg;
    const json& s = detail::section(cfg.raw, "thermal");
    ThermalGeometry g;
    if (s.contains("geometry")) {
        g = io::geometry_from_json(s.at("geometry"), "thermal.geometry");
    } else if (s.contains("dimensions")) {
        const json& d = s.at("dimensions");
        const std::string p = "thermal.dimensions";
        const std::string conv = detail::text(d, "convention", p, "celsius");
        if (conv != "celsius" && conv != "kelvin") throw config_error(p + ".convention: expected celsius or kelvin");
        const double t_th = threshold_temperature(detail::num(d, "t_imt", p),
                                                  conv == "celsius" ? ThresholdConvention::celsius
                                                                    : ThresholdConvention::kelvin);
        g = ThermalGeometry::from_dimensions(detail::positive(d, "w", p), detail::positive(d, "l", p),
                                             detail::positive(d, "thickness", p), detail::positive(d, "r_th", p),
                                             detail::positive(d, "rho_20", p), detail::num(d, "r_r", p), t_th);
        try {
            validate(g);
        } catch (const error& e) {
            throw config_error(p + ": " + e.what());
        }
    } else {
        throw config_error("thermal: need geometry or dimensions");
    }
    std::optional<GtModel> gt;
    if (s.contains("gt_model")) {
        gt = io::gt_from_json(s.at("gt_model"), "thermal.gt_model");
        try {
            validate(g, *gt);
        } catch (const error& e) {
            throw config_error(std::string("thermal: ") + e.what());
        }
    }
    const auto temps = detail::values(s.contains("temperatures") ? s.at("temperatures") : json(20.0), "thermal.temperatures");

    std::vector<PointResult> pts(1);
    pts[0].label = "thermal";
    int code = exit_ok;
    try {
        std::string tab = "t_celsius,i_th_amperes,p_th_watts,t_spk_per_p_th_kelvin_per_watt\n";
        for (const auto& row : thermal_sweep(g, temps)) {
            tab += io::fmt(row.t) + ',' + io::fmt(row.i_th) + ',' + io::fmt(row.p_th) + ',' + io::fmt(row.ratio) + '\n';
        }
        pts[0].files.push_back(ctx.write("thermal_sweep.csv", tab));
        json sm{{"geometry", io::to_json(g)}};
        if (g.t_th > 20.0) {
            sm["i_th_20c"] = threshold_current(g, 20.0);
            sm["p_th_20c"] = threshold_power(g, 20.0);
        }
        if (gt) {
            const auto gts = detail::values(s.contains("gt_temperatures") ? s.at("gt_temperatures")
                                                                           : json{{"from", 20.0}, {"to", 100.0}, {"count", 81}},
                                            "thermal.gt_temperatures");
            std::string gc = "t_celsius,g_siemens\n";
            for (double t : gts) gc += io::fmt(t) + ',' + io::fmt(conductance(*gt, t)) + '\n';
            pts[0].files.push_back(ctx.write("gt_curve.csv", gc));
            sm["gt_model"] = io::to_json(*gt);
            sm["on_off_95_20"] = conductance(*gt, 95.0) / conductance(*gt, 20.0);
        }
        pts[0].files.push_back(ctx.write("summary.json", sm.dump(2) + "\n"));
        pts[0].summary = sm;
        pts[0].ok = true;
    } catch (const invalid_input& e) {
        pts[0].error = e.what();
        code = exit_numerical;
    }
    write_manifest(ctx, pts, {}, code);
    return code;
}

// -----------------------------------------------------------------------------
// Entry point
// -----------------------------------------------------------------------------

/// Runs one subcommand; returns the process exit code. Config problems are
/// reported on `err` with exit code 2.
inline int run(std::string_view command, const Options& opt, std::ostream& err = std::cerr) {
    try {
        const auto cfg = load_config(opt.config_path, opt.seed);
        const RunContext ctx{opt, cfg, std::string(command)};
        fs::create_directories(opt.out_dir);
        if (command == "simulate") return cmd_simulate(ctx);
        if (command == "montecarlo") return cmd_montecarlo(ctx);
        if (command == "couple") return cmd_couple(ctx);
        if (command == "vco") return cmd_vco(ctx);
        if (command == "extract") return cmd_extract(ctx);
        if (command == "thermal") return cmd_thermal(ctx);
        err << "unknown subcommand '" << command << "'\n";
        return exit_config;
    } catch (const config_error& e) {
        err << "config error: " << e.what() << "\n";
        return exit_config;
    } catch (const invariant_violation& e) {
        err << "config error: " << e.what() << "\n";
        return exit_config;
    } catch (const invalid_input& e) {
        err << "config error: " << e.what() << "\n";
        return exit_config;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return exit_numerical;
    }
}

}  // namespace mott::cli
