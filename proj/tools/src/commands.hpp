#pragma once

// The five subcommands. Each writes its CSV files and a JSON summary into
// CommandOptions::out and returns the process exit code: 0 when every check
// passes, 2 when a check fails. Configuration and I/O problems are thrown
// (ConfigError, IoError, std::invalid_argument) and map to exit code 1.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "config.hpp"

namespace qcl::cli {

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct CommandOptions {
    std::filesystem::path out = ".";
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> traj;
    std::optional<unsigned> threads;
    // Multiplies every check tolerance; 0 turns each check into an exact test.
    double tolerance_scale = 1.0;
};

struct Check {
    enum class Sense { AtMost, AtLeast };
    std::string name;
    // Short label naming the relation being tested.
    std::string anchor;
    double value = 0.0;
    double tolerance = 0.0;
    Sense sense = Sense::AtMost;

    bool pass() const noexcept;
    // Distance to the threshold, positive when the check passes.
    double margin() const noexcept;
};

int exit_code(const std::vector<Check>& checks) noexcept;

int cmd_noise(const RunConfig& cfg, const CommandOptions& opt, std::ostream& log);
int cmd_dynamics(const RunConfig& cfg, const CommandOptions& opt, std::ostream& log);
int cmd_steady(const RunConfig& cfg, const CommandOptions& opt, std::ostream& log);
int cmd_network(const RunConfig& cfg, const CommandOptions& opt, std::ostream& log);
// Built-in parameter sets; needs no configuration file.
int cmd_verify(const CommandOptions& opt, std::ostream& log);

}  // namespace qcl::cli
