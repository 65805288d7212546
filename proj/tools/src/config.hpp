#pragma once

// Run configuration: a flat text file of [section] headers and key = value
// lines. The grammar and defaults are documented in docs/config.md.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <istream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "qcl/engine.hpp"
#include "qcl/spectral.hpp"

namespace qcl::cli {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct BathConfig {
    std::string section;
    BathSpec spec;
    std::vector<std::size_t> oscillators;
    // Sweeps set this bath's temperature to temperature_factor * T.
    double temperature_factor = 1.0;
};

struct NoiseCheckConfig {
    std::size_t n = 65536;
    std::size_t traces = 100;
    std::size_t segment = 16384;
    double tolerance = 0.05;
    std::optional<double> band_lo;
    std::optional<double> band_hi;
    double skew_tol = 0.02;
    double kurt_tol = 0.05;
    std::vector<std::size_t> lags{0, 1, 5};
};

struct SweepConfig {
    std::vector<double> temperatures;
    std::vector<double> lambdas;
};

struct NetworkConfig {
    bool present = false;
    std::optional<Eigen::MatrixXd> mass;
    std::optional<Eigen::MatrixXd> potential;
    std::optional<double> kappa;
};

struct RunConfig {
    OscillatorParams oscillator;
    std::vector<BathConfig> baths;
    SimConfig sim;
    bool seed_given = false;
    // Engine-vs-oracle comparisons use this many equally spaced times after t = 0.
    std::size_t checkpoints = 20;
    double check_sigma = 3.0;
    NoiseCheckConfig noise;
    SweepConfig sweep;
    NetworkConfig network;
    // Normalized "[section]" and "key = value" lines in file order.
    std::vector<std::string> echo;
};

RunConfig parse_config(std::istream& in, const std::string& origin = "<config>");
RunConfig load_config(const std::filesystem::path& path);

// One bath; throws ConfigError if the configuration has several.
const BathConfig& single_bath(const RunConfig& cfg);

}  // namespace qcl::cli
