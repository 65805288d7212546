#include <doctest.h>

#include <sstream>

#include "config.hpp"

using namespace qcl;
using namespace qcl::cli;

namespace {

RunConfig parse(const std::string& text) {
    std::istringstream in(text);
    return parse_config(in, "test.cfg");
}

std::string error_of(const std::string& text) {
    try {
        parse(text);
    } catch (const ConfigError& e) {
        return e.what();
    }
    return {};
}

}  // namespace

TEST_SUITE("config") {
    TEST_CASE("defaults") {
        const RunConfig c = parse("");
        CHECK(c.baths.empty());
        CHECK(c.oscillator.mass == 1.0);
        CHECK(c.oscillator.counter_term);
        CHECK_FALSE(c.seed_given);
        CHECK(c.sim.dt == 0.05);
        CHECK(c.checkpoints == 20);
        CHECK(c.check_sigma == 3.0);
        CHECK(c.noise.lags == std::vector<std::size_t>{0, 1, 5});
        CHECK_THROWS_AS(single_bath(c), ConfigError);
    }

    TEST_CASE("full single-oscillator configuration") {
        const RunConfig c = parse(R"(# comment line
units = nondimensional
[oscillator]
mass = 2   # trailing comment
omega = 0.5
counter_term = false
[bath]
kind = lorentzian
lambda = 0.3
omega0 = 0.5
gamma = 0.1
temperature = 0.1
noise = classical
[simulation]
dt = 0.02
t_final = 10
n_traj = 64
master_seed = 99
sample_every = 5
integrator = convolution
sigma_xx0 = 0.7
check_sigma = 4
checkpoints = 5
[noise]
n = 1024
traces = 3
segment = 256
lags = 0, 2
)");
        CHECK(c.oscillator.mass == 2.0);
        CHECK_FALSE(c.oscillator.counter_term);
        const BathConfig& b = single_bath(c);
        REQUIRE(b.spec.j.as_lorentzian());
        CHECK(b.spec.j.as_lorentzian()->lambda == 0.3);
        CHECK(b.spec.kind == NoiseKind::Classical);
        CHECK(b.oscillators == std::vector<std::size_t>{0});
        CHECK(c.sim.n_traj == 64);
        CHECK(c.sim.master_seed == 99);
        CHECK(c.seed_given);
        CHECK(c.sim.integrator == Integrator::Convolution);
        CHECK(c.sim.initial.sigma_xx == 0.7);
        CHECK(c.check_sigma == 4.0);
        CHECK(c.noise.lags == std::vector<std::size_t>{0, 2});
        CHECK(c.echo.front() == "units = nondimensional");
        CHECK(c.echo[2] == "mass = 2");
    }

    TEST_CASE("numbered baths, sweep range and network matrices") {
        const RunConfig c = parse(R"([network]
mass = 1, 0, 0, 1
potential = 1, -0.1, -0.1, 1
[bath.1]
temperature_factor = 1
oscillators = 1
[bath.0]
kind = ohmic
gamma_damp = 0.1
omega_cutoff = 4
temperature_factor = 10
[sweep]
t_min = 0.1
t_max = 10
points = 3
)");
        REQUIRE(c.baths.size() == 2);
        CHECK(c.baths[0].section == "bath.0");
        CHECK(c.baths[0].temperature_factor == 10.0);
        CHECK(c.baths[1].oscillators == std::vector<std::size_t>{1});
        REQUIRE(c.sweep.temperatures.size() == 3);
        CHECK(c.sweep.temperatures[1] == doctest::Approx(1.0));
        CHECK(c.sweep.temperatures[2] == doctest::Approx(10.0));
        REQUIRE(c.network.mass);
        CHECK((*c.network.potential)(0, 1) == -0.1);
    }

    TEST_CASE("tabulated bath") {
        const RunConfig c = parse("[bath]\nkind = tabulated\ngrid = 0, 1, 2\nvalues = 0, 0.5, 0\n");
        CHECK(single_bath(c).spec.j.describe().find("abulated") != std::string::npos);
    }

    TEST_CASE("errors name the file, line and key") {
        CHECK(error_of("[bath]\nlambda = 0.3\nbogus = 1\n") == "test.cfg:3: [bath] unknown key 'bogus'");
        CHECK(error_of("[bath]\nlambda = 0.3\nlambda = 0.4\n").find(":3:") != std::string::npos);
        CHECK(error_of("[mystery]\n").find("unknown section") != std::string::npos);
        CHECK(error_of("units = si\n").find("nondimensional") != std::string::npos);
        CHECK(error_of("[bath]\nlambda = abc\n").find("finite number") != std::string::npos);
        CHECK(error_of("[bath]\nlambda = -1\n").find("lambda") != std::string::npos);
        CHECK(error_of("[bath]\nkind = fancy\n").find("unknown bath kind") != std::string::npos);
        CHECK(error_of("[bath]\nnoise = loud\n").find("quantum or classical") != std::string::npos);
        CHECK(error_of("[simulation]\nn_traj = -3\n").find("non-negative integer") != std::string::npos);
        CHECK(error_of("[simulation]\ndt = 0.05\nt_final = 1.03\n").find("[simulation]") != std::string::npos);
        CHECK(error_of("[bath.0]\n[bath.2]\n").find("without gaps") != std::string::npos);
        CHECK(error_of("[bath]\n[bath.1]\n").find("cannot be combined") != std::string::npos);
        CHECK(error_of("just text\n").find("key = value") != std::string::npos);
        CHECK(error_of("[bath\n").find("malformed") != std::string::npos);
        CHECK(error_of("[network]\nmass = 1, 0, 0\npotential = 1\n").find("square") != std::string::npos);
        CHECK(error_of("[sweep]\nt_min = 1\n").find("go together") != std::string::npos);
        CHECK(error_of("[noise]\nn = 100\nsegment = 101\n").find("segment") != std::string::npos);
        CHECK(error_of("[oscillator]\ncounter_term = maybe\n").find("true or false") != std::string::npos);
    }

    TEST_CASE("missing file") {
        CHECK_THROWS_AS(load_config("/nonexistent/qcl.cfg"), ConfigError);
    }
}
