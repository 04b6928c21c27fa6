#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dysarar/cli.hpp"
#include "dysarar/io.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace dysarar;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path fresh(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "dysarar_test_cli" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("exit code mapping") {
    CHECK(cli::exit_code(ErrorKind::ConfigParse) == cli::kExitConfig);
    CHECK(cli::exit_code(ErrorKind::NonzeroDiagonal) == cli::kExitInput);
    CHECK(cli::exit_code(ErrorKind::RaggedRows) == cli::kExitInput);
    CHECK(cli::exit_code(ErrorKind::SingularOperator) == cli::kExitNumerical);
    CHECK(cli::exit_code(ErrorKind::NotConverged) == cli::kExitConvergence);
}

TEST_CASE("config resolution: presets, overrides, validation") {
    const json c = cli::resolve_config({{"preset", "ssarar"}, {"experiment", {{"replications", 3}}}});
    CHECK(c["command"] == "mc-filtering");
    CHECK(c["experiment"]["replications"] == 3);
    CHECK(c["experiment"]["t_len"] == 2000);  // preset value kept
    CHECK(c["seed"] == 2024);
    for (const auto& name : cli::preset_names()) CHECK_NOTHROW((void)cli::resolve_config({{"preset", name}}));

    std::ostringstream log;
    CHECK(cli::run({{"command", "nope"}}, fresh("bad1"), log).exit_code == cli::kExitConfig);
    CHECK(cli::run({{"preset", "nope"}}, fresh("bad2"), log).exit_code == cli::kExitConfig);
    CHECK(cli::run({{"command", "fit"}, {"seed", -1}}, fresh("bad3"), log).exit_code == cli::kExitConfig);
    CHECK(cli::run({{"command", "fit"}}, fresh("bad4"), log).exit_code == cli::kExitConfig);  // no inputs.y
    CHECK(cli::run({{"command", "fit"}, {"inputs", {{"y", "/nonexistent.csv"}, {"w1", "/nonexistent_w.csv"}}}},
                   fresh("bad5"), log)
              .exit_code == cli::kExitInput);
}

TEST_CASE("validate-w rejects a nonzero diagonal and accepts a valid matrix") {
    const fs::path dir = fresh("validate");
    io::atomic_write(dir / "diag.csv", "0.5,0.5,0\n0.5,0,0.5\n0.5,0.5,0\n");
    io::atomic_write(dir / "ok.csv", "0,0.5,0.5\n0.5,0,0.5\n0.5,0.5,0\n");
    std::ostringstream log;
    const auto bad = cli::run({{"command", "validate-w"}, {"inputs", {{"w", (dir / "diag.csv").string()}}}}, dir / "o1", log);
    CHECK(bad.exit_code == cli::kExitInput);
    CHECK(bad.message.find("NonzeroDiagonal") != std::string::npos);
    CHECK_FALSE(fs::exists(dir / "o1" / "manifest.json"));

    const auto ok = cli::run({{"command", "validate-w"}, {"inputs", {{"w", (dir / "ok.csv").string()}}}}, dir / "o2", log);
    CHECK(ok.exit_code == cli::kExitOk);
    const json rep = json::parse(slurp(dir / "o2" / "w_report.json"));
    CHECK(rep["spectral_radius"].get<double>() == doctest::Approx(1.0));
}

TEST_CASE("simulate, fit and replay are byte-identical") {
    const fs::path dir = fresh("pipeline");
    std::ostringstream log;
    const auto sim = cli::run({{"preset", "simulate-table2"}, {"seed", 5}, {"experiment", {{"t_len", 200}}}},
                              dir / "sim", log);
    REQUIRE(sim.exit_code == cli::kExitOk);
    for (const char* f : {"y.csv", "w1.csv", "w2.csv", "theta.csv", "manifest.json"}) CHECK(fs::exists(dir / "sim" / f));

    const json fit_cfg = {{"command", "fit"},
                          {"inputs",
                           {{"y", (dir / "sim" / "y.csv").string()},
                            {"w1", (dir / "sim" / "w1.csv").string()},
                            {"w2", (dir / "sim" / "w2.csv").string()},
                            {"constant", false}}},
                          {"spec", {{"label", "DySAR-DHo.CHo"}}}};
    const auto fit = cli::run(fit_cfg, dir / "fit", log);
    REQUIRE(fit.exit_code == cli::kExitOk);
    const json f = json::parse(slurp(dir / "fit" / "fit.json"));
    CHECK(f["label"] == "DySAR-DHo.CHo");
    CHECK(f["t_obs"] == 200);
    CHECK(f["parameters"].size() == 6);

    const json manifest = json::parse(slurp(dir / "fit" / "manifest.json"));
    CHECK(manifest["inputs"].size() == 3);
    CHECK(manifest["artifacts"].contains("fit.json"));
    CHECK(manifest["artifacts"]["fit.json"] == io::file_sha256(dir / "fit" / "fit.json"));

    const auto rep = cli::replay(dir / "fit" / "manifest.json", dir / "replay", log);
    CHECK(rep.exit_code == cli::kExitOk);
    CHECK(slurp(dir / "fit" / "fit.json") == slurp(dir / "replay" / "fit.json"));
    CHECK(slurp(dir / "fit" / "filter.csv") == slurp(dir / "replay" / "filter.csv"));

    // a changed input is detected before re-running
    io::atomic_write(dir / "sim" / "y.csv", slurp(dir / "sim" / "y.csv") + "\n");
    CHECK(cli::replay(dir / "fit" / "manifest.json", dir / "replay2", log).exit_code == cli::kExitInput);
}

TEST_CASE("filter with supplied coefficients matches the fit log-likelihood") {
    const fs::path dir = fresh("filter");
    std::ostringstream log;
    REQUIRE(cli::run({{"preset", "simulate-table2"}, {"seed", 9}, {"experiment", {{"t_len", 120}}}}, dir / "sim", log)
                .exit_code == 0);
    json inputs = {{"y", (dir / "sim" / "y.csv").string()},
                   {"w1", (dir / "sim" / "w1.csv").string()},
                   {"w2", (dir / "sim" / "w2.csv").string()},
                   {"constant", false}};
    REQUIRE(cli::run({{"command", "fit"}, {"inputs", inputs}, {"spec", {{"label", "DySARAR-DHo.CHo"}}}}, dir / "fit", log)
                .exit_code == 0);
    inputs["fit"] = (dir / "fit" / "fit.json").string();
    REQUIRE(cli::run({{"command", "filter"}, {"inputs", inputs}, {"spec", {{"label", "DySARAR-DHo.CHo"}}}},
                     dir / "filter", log)
                .exit_code == 0);
    const json fit = json::parse(slurp(dir / "fit" / "fit.json"));
    const json summary = json::parse(slurp(dir / "filter" / "filter_summary.json"));
    CHECK(summary["total_llk"].get<double>() == doctest::Approx(fit["total_llk"].get<double>()).epsilon(1e-12));
    CHECK(slurp(dir / "fit" / "filter.csv") == slurp(dir / "filter" / "filter.csv"));
}
