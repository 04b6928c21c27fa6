#pragma once

#include "dysarar/errors.hpp"

#include <json.hpp>

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace dysarar::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitInput = 3;
inline constexpr int kExitNumerical = 4;
inline constexpr int kExitConvergence = 5;

[[nodiscard]] int exit_code(ErrorKind kind) noexcept;

[[nodiscard]] std::vector<std::string> preset_names();
// Throws ConfigParse for an unknown name.
[[nodiscard]] nlohmann::json preset(const std::string& name);

// Applies "preset" (user keys win), checks the command and fills defaults.
[[nodiscard]] nlohmann::json resolve_config(const nlohmann::json& raw);

struct RunResult {
    int exit_code = kExitOk;
    std::vector<std::string> artifacts;  // file names inside the output directory
    std::string message;
};

// Runs one resolved or raw config and writes artifacts plus manifest.json into
// out_dir. Library errors are caught and mapped to exit codes.
[[nodiscard]] RunResult run(const nlohmann::json& config, const std::filesystem::path& out_dir, std::ostream& log);

// Re-runs the config stored in a manifest into out_dir and compares every
// artifact hash. Exit 0 only when all are byte-identical.
[[nodiscard]] RunResult replay(const std::filesystem::path& manifest, const std::filesystem::path& out_dir,
                               std::ostream& log);

[[nodiscard]] std::string version();

}  // namespace dysarar::cli
