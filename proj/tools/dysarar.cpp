// Command-line front end. Every run is driven by a JSON config (or a preset);
// subcommand flags only override the command name, seed and output directory.
#include "dysarar/cli.hpp"
#include "dysarar/parallel.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>

namespace {

std::filesystem::path output_dir(const std::string& flag) {
    if (!flag.empty()) return flag;
    if (const char* env = std::getenv("DYSARAR_OUTPUT_DIR"); env != nullptr && *env != '\0') return env;
    return ".";
}

}  // namespace

int main(int argc, char** argv) {
    namespace cli = dysarar::cli;
    CLI::App app{"Dynamic spatial autoregressive panel models: filtering, estimation, experiments, backtests"};
    app.set_version_flag("--version", cli::version());
    app.require_subcommand(1);

    std::string config_path, preset_name, out_flag;
    long long seed = -1;
    int threads = 0;
    app.add_option("--threads", threads, "worker threads (default: OpenMP default)");

    const std::vector<std::string> commands{"validate-w", "simulate",         "filter",  "fit",
                                            "grid",       "mc-filtering",     "mc-finite-sample",
                                            "weights",    "sensitivity",      "backtest"};
    for (const auto& c : commands) {
        CLI::App* sub = app.add_subcommand(c, "run the " + c + " command");
        sub->add_option("-c,--config", config_path, "JSON config file");
        sub->add_option("-p,--preset", preset_name, "named preset; config keys override it");
        sub->add_option("-o,--out", out_flag, "output directory (else $DYSARAR_OUTPUT_DIR, else .)");
        sub->add_option("-s,--seed", seed, "override the config seed");
    }
    CLI::App* rep = app.add_subcommand("replay", "re-run a manifest and compare artifact hashes");
    std::string manifest;
    rep->add_option("manifest", manifest, "manifest.json of an earlier run")->required();
    rep->add_option("-o,--out", out_flag, "output directory for the re-run");
    app.add_subcommand("presets", "list preset names");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : cli::kExitConfig;
    }
    if (threads > 0) dysarar::set_worker_count(threads);

    CLI::App* chosen = app.get_subcommands().front();
    const std::string name = chosen->get_name();
    if (name == "presets") {
        for (const auto& p : cli::preset_names()) std::cout << p << "\n";
        return 0;
    }

    cli::RunResult res;
    if (name == "replay") {
        res = cli::replay(manifest, output_dir(out_flag), std::cerr);
    } else {
        nlohmann::json cfg = nlohmann::json::object();
        if (!config_path.empty()) {
            std::ifstream in(config_path);
            if (!in) {
                std::cerr << "MissingInput: cannot open " << config_path << "\n";
                return cli::kExitInput;
            }
            try {
                cfg = nlohmann::json::parse(in);
            } catch (const nlohmann::json::exception& e) {
                std::cerr << "ConfigParse: " << config_path << ": " << e.what() << "\n";
                return cli::kExitConfig;
            }
        }
        if (!preset_name.empty()) cfg["preset"] = preset_name;
        cfg["command"] = name;
        if (seed >= 0) cfg["seed"] = static_cast<std::uint64_t>(seed);
        res = cli::run(cfg, output_dir(out_flag), std::cerr);
    }
    if (res.exit_code != 0) std::cerr << res.message << "\n";
    for (const auto& a : res.artifacts) std::cout << a << "\n";
    return res.exit_code;
}
