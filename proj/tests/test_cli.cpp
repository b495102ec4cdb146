#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <sstream>

#include "mott/experiment.hpp"

using namespace mott;
using Catch::Approx;
using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

const fs::path fixtures = MOTT_FIXTURE_DIR;

struct Scratch {
    fs::path dir;
    explicit Scratch(const std::string& name) : dir(fs::temp_directory_path() / ("mott_cli_" + name)) {
        fs::remove_all(dir);
        fs::create_directories(dir);
    }
    ~Scratch() { fs::remove_all(dir); }

    fs::path config(const json& j, const std::string& file = "config.json") const {
        io::atomic_write(dir / file, j.dump(2));
        return dir / file;
    }
};

json base_config() {
    return {{"units_version", 1},
            {"device", {{"params", {{"v_th", 0.95}, {"v_hl", 0.65}, {"r_i", 40e3}, {"r_m", 10e3}, {"v_oi", 0.8926}, {"v_om", 0.30}}}}},
            {"circuit", {{"c_l", 70e-12}, {"r_l", nullptr}, {"drive", {{"type", "current"}, {"i", 10e-6}}}}}};
}

int run(const std::string& cmd, const fs::path& config, const fs::path& out, std::string* err = nullptr,
        std::optional<std::uint64_t> seed = std::nullopt, std::optional<fs::path> input = std::nullopt) {
    cli::Options o;
    o.config_path = config;
    o.out_dir = out;
    o.seed = seed;
    o.input = input;
    std::ostringstream es;
    const int rc = cli::run(cmd, o, es);
    if (err != nullptr) *err = es.str();
    return rc;
}

json manifest(const fs::path& out) { return json::parse(io::read_file(out / "manifest.json")); }

std::vector<std::vector<std::string>> read_csv(const fs::path& f) {
    std::vector<std::vector<std::string>> rows;
    std::istringstream in(io::read_file(f));
    std::string line;
    while (std::getline(in, line)) {
        std::vector<std::string> cells;
        std::stringstream ls(line);
        std::string c;
        while (std::getline(ls, c, ',')) cells.push_back(c);
        if (!line.empty() && line.back() == ',') cells.emplace_back();
        rows.push_back(cells);
    }
    return rows;
}

}  // namespace

TEST_CASE("single-point simulate writes one waveform and a manifest") {
    Scratch s("single");
    auto j = base_config();
    j["simulate"] = {{"duration", 20e-6}};
    REQUIRE(run("simulate", s.config(j), s.dir / "out") == 0);
    const auto m = manifest(s.dir / "out");
    REQUIRE(m["points"].size() == 1);
    REQUIRE(m["exit_code"] == 0);
    REQUIRE(fs::exists(s.dir / "out" / "point_000" / "waveform.csv"));
    REQUIRE(fs::exists(s.dir / "out" / "point_000" / "events.csv"));
    REQUIRE(m["config"]["simulate"]["duration"] == 20e-6);
}

TEST_CASE("current by temperature sweep enumerates every point") {
    Scratch s("sweep");
    auto j = base_config();
    j["device"] = json::parse(io::read_file(fixtures / "fig4_sweep.json"))["device"];
    j["simulate"] = {{"duration", 10e-6},
                     {"currents", {4e-6, 8e-6, 12e-6, 16e-6, 20e-6}},
                     {"temperatures", {20, 35, 50}},
                     {"outputs", nullptr}};
    REQUIRE(run("simulate", s.config(j), s.dir / "out") == 0);
    const auto m = manifest(s.dir / "out");
    REQUIRE(m["points"].size() == 15);
    for (std::size_t k = 0; k < 15; ++k) {
        for (const auto& f : m["points"][k]["files"]) REQUIRE(fs::exists(s.dir / "out" / f.get<std::string>()));
    }
}

TEST_CASE("temperature sweep fixture summary is non-monotonic at every temperature") {
    Scratch s("fig4");
    REQUIRE(run("simulate", fixtures / "fig4_sweep.json", s.dir / "out") == 0);
    const auto rows = read_csv(s.dir / "out" / "summary.csv");
    std::map<std::string, std::vector<double>> f;
    const auto m = manifest(s.dir / "out");
    const auto tm = io::temperature_model_from_json(m["config"]["device"]);
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& row = rows[r];
        if (row[3] != "1") continue;
        const double fa = std::stod(row[4]);
        // Oracle: the analytic module at the same point.
        const auto p = params_at_temperature(tm, std::stod(row[1]));
        REQUIRE(fa == Approx(period(p, std::stod(row[2]), 70e-12).frequency).epsilon(1e-12));
        f[row[1]].push_back(fa);
    }
    REQUIRE(f.size() == 3);
    for (const auto& [t, v] : f) {
        const auto peak = std::max_element(v.begin(), v.end());
        REQUIRE(peak != v.begin());
        REQUIRE(peak != v.end() - 1);
    }
}

TEST_CASE("zero-noise montecarlo gives a single-bin histogram") {
    Scratch s("mc0");
    auto j = base_config();
    j["noise"] = {{"pink_amplitude", 0.0}, {"v_hl_sigma", 0.0}};
    j["montecarlo"] = {{"margins", {-0.02}}, {"iterations", 200}};
    REQUIRE(run("montecarlo", s.config(j), s.dir / "out") == 0);
    const auto rows = read_csv(s.dir / "out" / "margin_000" / "histogram.csv");
    REQUIRE(rows.size() == 2);
    REQUIRE(rows[1][2] == "200");
    const auto fit = json::parse(io::read_file(s.dir / "out" / "margin_000" / "fit.json"));
    REQUIRE(fit["degenerate"] == true);
    REQUIRE(fit["family"] == "gaussian");
    REQUIRE(fit["censored"] == 0);
}

TEST_CASE("montecarlo seed override is reproducible") {
    Scratch s("mcseed");
    auto j = base_config();
    j["noise"] = {{"seed", 1}};
    j["montecarlo"] = {{"margins", {-0.02, 0.0}}, {"iterations", 200}};
    const auto cfg = s.config(j);
    REQUIRE(run("montecarlo", cfg, s.dir / "a", nullptr, 77) == 0);
    REQUIRE(run("montecarlo", cfg, s.dir / "b", nullptr, 77) == 0);
    REQUIRE(run("montecarlo", cfg, s.dir / "c", nullptr, 78) == 0);
    const auto a = io::read_file(s.dir / "a" / "margin_001" / "escape_run.csv");
    REQUIRE(a == io::read_file(s.dir / "b" / "margin_001" / "escape_run.csv"));
    REQUIRE(a != io::read_file(s.dir / "c" / "margin_001" / "escape_run.csv"));
    REQUIRE(manifest(s.dir / "a")["config"]["noise"]["seed"] == 77);
}

TEST_CASE("manifest config echo reruns to identical outputs") {
    Scratch s("echo");
    auto j = base_config();
    j["noise"] = {{"seed", 3}};
    j["montecarlo"] = {{"margins", {-0.01}}, {"iterations", 300}};
    REQUIRE(run("montecarlo", s.config(j), s.dir / "a", nullptr, 11) == 0);
    const auto echo = manifest(s.dir / "a")["config"];
    REQUIRE(run("montecarlo", s.config(echo, "echo.json"), s.dir / "b") == 0);
    for (const char* f : {"margin_000/escape_run.csv", "margin_000/fit.json", "medians.csv"}) {
        REQUIRE(io::read_file(s.dir / "a" / f) == io::read_file(s.dir / "b" / f));
    }
}

TEST_CASE("extract recovers the parameters of simulate's own output") {
    Scratch s("extract");
    auto j = base_config();
    j["simulate"] = {{"duration", 60e-6}, {"initial", {{"v", 0.7}}}};
    j["extract"] = {{"i_bias", 10e-6}};
    const auto cfg = s.config(j);
    REQUIRE(run("simulate", cfg, s.dir / "sim") == 0);
    REQUIRE(run("extract", cfg, s.dir / "ex", nullptr, std::nullopt, s.dir / "sim" / "point_000" / "waveform.csv") == 0);
    const auto p = json::parse(io::read_file(s.dir / "ex" / "params.json"));
    const auto got = io::params_from_json(p["params"]);
    const auto want = io::params_from_json(j["device"]["params"]);
    for (std::size_t k = 0; k < 6; ++k) {
        INFO(MemristorParams::field_names[k]);
        REQUIRE(got.as_array()[k] == Approx(want.as_array()[k]).epsilon(0.01));
    }
}

TEST_CASE("couple with a huge r_c matches two simulate runs") {
    Scratch s("couple");
    auto j = base_config();
    j["couple"] = {{"duration", 60e-6}, {"r_c", 1e12}, {"settle", 10e-6}};
    REQUIRE(run("couple", s.config(j), s.dir / "c") == 0);
    const auto rows = read_csv(s.dir / "c" / "summary.csv");
    const double fa = std::stod(rows[1][1]);
    const double fb = std::stod(rows[1][2]);

    j.erase("couple");
    j["simulate"] = {{"duration", 60e-6}};
    REQUIRE(run("simulate", s.config(j), s.dir / "s") == 0);
    const auto w = io::waveform_from_csv(io::read_file(s.dir / "s" / "point_000" / "waveform.csv"));
    const auto st = frequency_stats(segment_cycles(slice(w, 10e-6, 60e-6)).cycles);
    REQUIRE(fa == Approx(st.mean).epsilon(1e-6));
    REQUIRE(fb == Approx(st.mean).epsilon(1e-6));
}

TEST_CASE("vco fixture doubles the spike count") {
    Scratch s("vco");
    REQUIRE(run("vco", fixtures / "fig6_vco.json", s.dir / "out") == 0);
    const auto m = manifest(s.dir / "out");
    const auto slow = m["points"][0]["summary"]["spikes_per_burst"];
    const auto fast = m["points"][1]["summary"]["spikes_per_burst"];
    REQUIRE(std::abs(slow[0].get<double>() - 2.0 * fast[0].get<double>()) <= 1.0);
}

TEST_CASE("thermal fixture") {
    Scratch s("thermal");
    REQUIRE(run("thermal", fixtures / "si_thermal.json", s.dir / "out") == 0);
    const auto m = manifest(s.dir / "out");
    const auto sm = m["points"][0]["summary"];
    REQUIRE(sm["i_th_20c"].get<double>() < 30e-6);
    REQUIRE(sm["on_off_95_20"].get<double>() >= 10.0);
    REQUIRE(sm["on_off_95_20"].get<double>() < 100.0);
    const auto rows = read_csv(s.dir / "out" / "thermal_sweep.csv");
    REQUIRE(rows.size() == 62);
}

TEST_CASE("config errors carry the path and exit 2") {
    Scratch s("errors");
    std::string err;

    auto j = base_config();
    j["simulate"] = {{"duration", 1e-5}};
    j.erase("units_version");
    REQUIRE(run("simulate", s.config(j), s.dir / "o", &err) == 2);
    REQUIRE_THAT(err, Catch::Matchers::ContainsSubstring("units_version"));

    j = base_config();
    j["simulate"] = {{"duration", -1.0}};
    REQUIRE(run("simulate", s.config(j), s.dir / "o", &err) == 2);
    REQUIRE_THAT(err, Catch::Matchers::ContainsSubstring("simulate.duration"));

    j = base_config();
    j["device"]["params"]["v_hl"] = 1.2;
    j["simulate"] = {{"duration", 1e-5}};
    REQUIRE(run("simulate", s.config(j), s.dir / "o", &err) == 2);
    REQUIRE_THAT(err, Catch::Matchers::ContainsSubstring("device.params"));

    j = base_config();
    REQUIRE(run("simulate", s.config(j), s.dir / "o", &err) == 2);
    REQUIRE_THAT(err, Catch::Matchers::ContainsSubstring("runnable"));

    j = base_config();
    j["device"] = {{"file", "missing.json"}};
    j["simulate"] = {{"duration", 1e-5}};
    REQUIRE(run("simulate", s.config(j), s.dir / "o", &err) == 2);
    REQUIRE_THAT(err, Catch::Matchers::ContainsSubstring("device.file"));

    io::atomic_write(s.dir / "broken.json", "{ not json");
    REQUIRE(run("simulate", s.dir / "broken.json", s.dir / "o", &err) == 2);
}

TEST_CASE("device file references are resolved relative to the config") {
    Scratch s("devfile");
    auto j = base_config();
    io::atomic_write(s.dir / "dev.json", json::parse(io::read_file(fixtures / "fig4_sweep.json"))["device"].dump());
    j["device"] = {{"file", "dev.json"}};
    j["simulate"] = {{"duration", 10e-6}, {"temperatures", {30}}};
    REQUIRE(run("simulate", s.config(j), s.dir / "o") == 0);
    REQUIRE(manifest(s.dir / "o")["config"]["device"].contains("slopes"));
}

TEST_CASE("failing sweep points give exit 4 without aborting the sweep") {
    Scratch s("partial");
    auto j = base_config();
    j["device"] = json::parse(io::read_file(fixtures / "fig4_sweep.json"))["device"];
    j["simulate"] = {{"duration", 10e-6}, {"temperatures", {25, 60}}};
    REQUIRE(run("simulate", s.config(j), s.dir / "o") == 4);
    const auto m = manifest(s.dir / "o");
    REQUIRE(m["points"][0]["status"] == "ok");
    REQUIRE(m["points"][1]["status"] == "failed");
    REQUIRE(m["points"][1]["error"].get<std::string>().find("60") != std::string::npos);
    REQUIRE(m["exit_code"] == 4);
}

TEST_CASE("jobs do not change the output order") {
    Scratch s("jobs");
    auto j = base_config();
    j["simulate"] = {{"duration", 10e-6}, {"currents", {4e-6, 8e-6, 12e-6, 16e-6}}};
    const auto cfg = s.config(j);
    cli::Options o;
    o.config_path = cfg;
    o.out_dir = s.dir / "a";
    o.jobs = 1;
    std::ostringstream es;
    REQUIRE(cli::run("simulate", o, es) == 0);
    o.out_dir = s.dir / "b";
    o.jobs = 3;
    REQUIRE(cli::run("simulate", o, es) == 0);
    REQUIRE(io::read_file(s.dir / "a" / "summary.csv") == io::read_file(s.dir / "b" / "summary.csv"));
    REQUIRE(io::read_file(s.dir / "a" / "point_003" / "waveform.csv") ==
            io::read_file(s.dir / "b" / "point_003" / "waveform.csv"));
}

TEST_CASE("command line binary") {
    Scratch s("binary");
    const std::string exe = MOTT_CLI_PATH;
    auto sh = [](const std::string& c) {
        const int st = std::system((c + " >/dev/null 2>&1").c_str());
        return WEXITSTATUS(st);
    };
    REQUIRE(sh(exe + " --version") == 0);
    REQUIRE(sh(exe) != 0);
    REQUIRE(sh(exe + " simulate --config " + (s.dir / "nope.json").string()) == 2);
    auto j = base_config();
    j["simulate"] = {{"duration", 10e-6}};
    const auto cfg = s.config(j);
    REQUIRE(sh(exe + " simulate --config " + cfg.string() + " --out " + (s.dir / "o").string() + " --jobs 2") == 0);
    REQUIRE(fs::exists(s.dir / "o" / "manifest.json"));
}
