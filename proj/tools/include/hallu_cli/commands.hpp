#pragma once

// hallu-audit command implementations.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace hallu::cli {

enum ExitCode : int { kExitOk = 0, kExitValidation = 1, kExitRuntime = 2, kExitTransport = 3 };

struct Invocation {
    std::string command;
    std::filesystem::path config;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> jobs;
    std::optional<std::filesystem::path> out;
    /// judge: "mock" or "live", overriding the config.
    std::optional<std::string> judge_mode;
    /// ensemble: comma-separated query types, overriding the config.
    std::optional<std::string> queries;
};

/// Runs one command; diagnostics go to `log`. Never throws.
int run_command(const Invocation& invocation, std::ostream& log);

/// Parses argv and dispatches to run_command.
int cli_main(int argc, char** argv);

}  // namespace hallu::cli
