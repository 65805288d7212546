#include <doctest.h>

#include <cmath>
#include <limits>
#include <numbers>
#include <vector>
#include <set>
#include <sstream>

#include <Eigen/Core>

#include "qcl/csv.hpp"
#include "qcl/error.hpp"
#include "qcl/parallel.hpp"
#include "qcl/quadrature.hpp"
#include "qcl/rng.hpp"

using namespace qcl;

TEST_SUITE("quadrature") {
    TEST_CASE("finite interval integrals") {
        const auto r = quad::integrate([](double x) { return std::sin(x); }, 0.0, std::numbers::pi, {});
        CHECK(r.value == doctest::Approx(2.0).epsilon(1e-13));
        const auto p = quad::integrate([](double x) { return x * x * x; }, -1.0, 2.0, std::vector<double>{0.5});
        CHECK(p.value == doctest::Approx(3.75).epsilon(1e-13));
    }

    TEST_CASE("semi-infinite integrals") {
        auto e = quad::integrate_semi_infinite([](double x) { return std::exp(-x); }, 0.0, {});
        CHECK(e.value == doctest::Approx(1.0).epsilon(1e-11));
        auto c = quad::integrate_semi_infinite([](double x) { return 1.0 / (1.0 + x * x); }, 0.0, std::vector<double>{1.0, 3.0});
        CHECK(c.value == doctest::Approx(std::numbers::pi / 2).epsilon(1e-11));
    }

    TEST_CASE("narrow resonance resolved with breakpoints") {
        // Lorentzian of width 1e-4 centred at 1: integral over the half line is
        // (1/2 + atan(c/g)/pi) with c = 1, g = 1e-4.
        const double g = 1e-4;
        auto f = [g](double x) { return g / std::numbers::pi / ((x - 1.0) * (x - 1.0) + g * g); };
        auto r = quad::integrate_semi_infinite(f, 0.0, std::vector<double>{1.0 - g, 1.0, 1.0 + g});
        CHECK(r.value == doctest::Approx(0.5 + std::atan(1.0 / g) / std::numbers::pi).epsilon(1e-10));
    }

    TEST_CASE("vector integrand") {
        auto f = [](double x) {
            Eigen::Vector2d v;
            v << std::cos(x), x;
            return v;
        };
        const auto r = quad::integrate(f, 0.0, 1.0, {});
        CHECK(r.value[0] == doctest::Approx(std::sin(1.0)).epsilon(1e-13));
        CHECK(r.value[1] == doctest::Approx(0.5).epsilon(1e-13));
    }

    TEST_CASE("interval budget exhaustion raises NumericalError") {
        quad::Options opt;
        opt.max_intervals = 3;
        CHECK_THROWS_AS(quad::integrate([](double x) { return std::sin(1e4 * x); }, 0.0, 1.0, {}, opt),
                        NumericalError);
    }
}

TEST_SUITE("csv") {
    TEST_CASE("shortest round-trip numbers") {
        CHECK(csv::format_number(0.1) == "0.1");
        CHECK(csv::format_number(0.0) == "0");
        CHECK(csv::format_number(-0.0) == "0");
        CHECK(csv::format_number(1e-300) == "1e-300");
        CHECK(csv::format_number(std::numeric_limits<double>::quiet_NaN()) == "nan");
        CHECK(csv::format_number(-std::numeric_limits<double>::infinity()) == "-inf");
        const double v = 0.1 + 0.2;
        CHECK(std::stod(csv::format_number(v)) == v);
    }

    TEST_CASE("metadata block and rows") {
        std::ostringstream os;
        csv::write_metadata(os, {{"seed", "7"}, {"config", "a = 1\nb = 2"}});
        csv::write_header(os, {"t", "x", "method"});
        csv::write_row(os, {0.5, 2.0}, "quadrature");
        csv::write_row(os, {1.0, 3.0});
        CHECK(os.str() == "# seed: 7\n# config: a = 1\n#   b = 2\nt,x,method\n0.5,2,quadrature\n1,3\n");
    }
}

TEST_SUITE("rng") {
    TEST_CASE("substreams are distinct") {
        std::set<std::uint64_t> seen;
        for (std::uint64_t k = 0; k < 100; ++k) {
            for (std::uint64_t s = 0; s < 4; ++s) seen.insert(derive_seed(42, k, s));
        }
        CHECK(seen.size() == 400);
        CHECK(derive_seed(1, 0) != derive_seed(2, 0));
        CHECK(streams::noise(3) == 6);
        CHECK(streams::initial(3) == 7);
    }

    TEST_CASE("derive_seed is a compile-time function") {
        static_assert(derive_seed(0, 0, 0) == derive_seed(0, 0, 0));
        CHECK(mix64(0) != 0);
    }
}

TEST_SUITE("parallel") {
    TEST_CASE("reduction does not depend on the thread count") {
        auto run = [](unsigned threads) {
            return chunked_reduce(
                10007, 64, threads, [] { return 0.0; },
                [](std::size_t i, double& acc) { acc += 1.0 / (1.0 + static_cast<double>(i) * 0.37); },
                [](double& a, const double& b) { a += b; });
        };
        const double one = run(1);
        CHECK(run(2) == one);
        CHECK(run(5) == one);
    }

    TEST_CASE("lowest failing chunk is rethrown") {
        auto run = [] {
            return chunked_reduce(
                100, 10, 1, [] { return 0; },
                [](std::size_t i, int&) {
                    if (i == 35) throw std::runtime_error("35");
                    if (i == 75) throw std::runtime_error("75");
                },
                [](int&, const int&) {});
        };
        CHECK_THROWS_WITH(run(), "35");
    }

    TEST_CASE("empty range yields a fresh accumulator") {
        const int r = chunked_reduce(
            0, 8, 2, [] { return 5; }, [](std::size_t, int&) {}, [](int&, const int&) {});
        CHECK(r == 5);
    }
}
