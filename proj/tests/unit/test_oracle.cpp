#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "qcl/engine.hpp"
#include "qcl/error.hpp"
#include "qcl/oracle.hpp"

using namespace qcl;

namespace {

constexpr double kPi = std::numbers::pi;

// Matsubara sums written out for m = W = 1 with the counter-term, summed
// directly to N terms plus the leading 1/n^2 tail.
struct MatsubaraOracle {
    double xx, pp;
};

MatsubaraOracle brute_matsubara(double l, double w0, double g, double T) {
    const double wbar2 = 1.0 + l * l / (w0 * w0);
    const long N = 1000000;
    auto g2 = [&](long double nu) {
        const long double k = l * l / (nu * nu + g * nu + w0 * w0);
        return 1.0L / (nu * nu + wbar2 - k);
    };
    long double sx = T * g2(0.0L);
    long double sp = T;
    for (long n = N; n >= 1; --n) {
        const long double nu = 2.0L * kPi * T * n;
        const long double q = g2(nu);
        sx += 2.0L * T * q;
        sp += 2.0L * T * (1.0L - nu * nu * q);
    }
    const long double zeta_tail = 1.0L / N - 0.5L / (static_cast<long double>(N) * N);
    const long double scale = 1.0L / (4.0L * kPi * kPi * T * T);
    sx += 2.0L * T * scale * zeta_tail;
    sp += 2.0L * T * wbar2 * scale * zeta_tail;
    return {static_cast<double>(sx), static_cast<double>(sp)};
}

BathSpec lor_bath(double l, double T, NoiseKind k = NoiseKind::Quantum, double w0 = 0.5, double g = 0.1) {
    return {SpectralDensity::lorentzian(l, w0, g), T, k};
}

struct Frozen {
    double lambda, T, xx, pp;
};

// Steady covariances for m = W = 1, omega0 = 0.5, Gamma = 0.1, quantum noise.
constexpr Frozen kSteady[] = {
    {0.3, 0.1, 0.4654692987, 0.5765994838}, {0.3, 0.3, 0.5266852064, 0.6052114285},
    {0.3, 1.0, 1.081506322, 1.110730015},   {0.3, 3.0, 3.027708082, 3.037678405},
    {0.3, 10.0, 10.00833145, 10.01133064},  {2.0, 0.1, 0.2232131341, 2.049664285},
    {2.0, 0.3, 0.4053270295, 2.05192569},   {2.0, 1.0, 1.066500691, 2.126611155},
    {2.0, 3.0, 3.026941342, 3.457807002},   {2.0, 10.0, 10.00830982, 10.14126139},
};

}  // namespace

TEST_SUITE("oracle") {
    TEST_CASE("pole-residue identities") {
        const OscillatorParams p{1.7, 0.8, true};
        const GFunctions g = g_functions(p, SpectralDensity::lorentzian(0.9, 1.2, 0.4));
        Complex s0{}, s1{};
        for (std::size_t k = 0; k < 4; ++k) {
            s0 += g.residues_g2[k];
            s1 += g.residues_g2[k] * g.poles[k];
        }
        CHECK(std::abs(s0) < 1e-12);
        CHECK(std::abs(s1 - 1.0 / p.mass) < 1e-12);
        CHECK(g.stable());
    }

    TEST_CASE("g-functions start from the free-particle values") {
        const OscillatorParams p{1.3, 1.1, true};
        const GFunctions g = g_functions(p, SpectralDensity::lorentzian(0.5, 0.7, 0.3));
        CHECK(std::abs(g.g2(0.0)) < 1e-14);
        CHECK(g.g1(0.0) == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(std::abs(g.g3(0.0)) < 1e-12);
        const double h = 1e-5;
        CHECK((g.g2(h) - g.g2(-h)) / (2 * h) == doctest::Approx(1.0 / p.mass).epsilon(1e-8));
        CHECK(p.mass * (g.g2(2.0 + h) - g.g2(2.0 - h)) / (2 * h) == doctest::Approx(g.g1(2.0)).epsilon(1e-7));
    }

    TEST_CASE("poles are roots of the characteristic quartic") {
        const OscillatorParams p{1.0, 1.0, true};
        const double l = 0.3, w0 = 0.5, gm = 0.1;
        const GFunctions g = g_functions(p, SpectralDensity::lorentzian(l, w0, gm));
        const double wbar2 = 1.0 + l * l / (w0 * w0);
        CHECK(g.omega_bar_sq == doctest::Approx(wbar2).epsilon(1e-15));
        for (const Complex& s : g.poles) {
            const Complex q = (s * s + wbar2) * (s * s + gm * s + w0 * w0) - l * l;
            CHECK(std::abs(q) < 1e-13);
        }
        CHECK(g.slowest_rate() == doctest::Approx(-std::max({g.poles[0].real(), g.poles[1].real(), g.poles[2].real(),
                                                             g.poles[3].real()})));
    }

    TEST_CASE("random sweep keeps every pole in the left half-plane") {
        std::mt19937_64 rng(77);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        for (int k = 0; k < 100; ++k) {
            const OscillatorParams p{0.5 + 1.5 * u(rng), 0.5 + 1.5 * u(rng), true};
            const GFunctions g =
                g_functions(p, SpectralDensity::lorentzian(0.05 + 2.95 * u(rng), 0.1 + 2.9 * u(rng), 0.01 + 1.99 * u(rng)));
            CHECK(g.stable());
        }
    }

    TEST_CASE("coincident poles are refused") {
        // lambda = 0 and critical damping give a double root of s^2 + G s + w0^2.
        CHECK_THROWS_AS(g_functions(OscillatorParams{}, SpectralDensity::lorentzian(0.0, 0.5, 1.0)), DegeneratePoleError);
        CHECK_THROWS_AS(g_functions(OscillatorParams{}, SpectralDensity::ohmic(0.1, 2.0)), std::invalid_argument);
    }

    TEST_CASE("noise-free embedded trajectory follows g1 and g2") {
        const OscillatorParams p{1.0, 1.0, true};
        const auto j = SpectralDensity::lorentzian(0.3, 0.5, 0.1);
        const GFunctions g = g_functions(p, j);
        const EmbeddedLaw law = build_embedding(p, j);
        SimConfig c;
        c.dt = 0.01;
        c.t_final = 30.0;
        const std::vector<std::vector<double>> f(1, std::vector<double>(half_grid_size(c), 0.0));
        const double x0 = 0.4, p0 = -0.7;
        const Trajectory tr = integrate_embedded(c, law, f, {&x0, 1}, {&p0, 1});
        for (std::size_t k = 0; k < tr.t.size(); k += 500) {
            const double t = tr.t[k];
            // RK4 global error at dt = 0.01 is a few 1e-9 here.
            CHECK(std::abs(tr.x[k] - (g.g1(t) * x0 + g.g2(t) * p0)) < 1e-8);
            CHECK(std::abs(tr.p[k] - (g.g3(t) * x0 + g.g1(t) * p0)) < 1e-8);
        }
        const Means m = mean_evolution(g, {x0, p0}, 30.0);
        CHECK(m.mu_x == doctest::Approx(tr.x.back()).epsilon(1e-8));
        CHECK(m.mu_p == doctest::Approx(tr.p.back()).epsilon(1e-8));
    }

    TEST_CASE("transient covariances") {
        const OscillatorParams p;
        const BathSpec b = lor_bath(0.3, 0.1);
        const GFunctions g = g_functions(p, b.j);
        const MomentState init{0.0, 0.0, 0.5, 0.0, 0.5};
        const MomentState s0 = covariance_evolution(g, b, init, 0.0);
        CHECK(s0.sigma_xx == doctest::Approx(0.5).epsilon(1e-12));
        CHECK(std::abs(s0.sigma_xp) < 1e-12);
        CHECK(s0.uncertainty_product() == doctest::Approx(0.25).epsilon(1e-12));

        struct Row {
            double t, xx, xp, pp;
        };
        for (const Row& r : {Row{5.0, 0.56776426, 0.089088243, 0.48723781}, Row{50.0, 0.53647076, -0.036299417, 0.50727724},
                             Row{100.0, 0.50756924, -0.044787917, 0.54179773}}) {
            const MomentState s = covariance_evolution(g, b, init, r.t);
            CHECK(s.sigma_xx == doctest::Approx(r.xx).epsilon(1e-7));
            CHECK(s.sigma_xp == doctest::Approx(r.xp).epsilon(1e-7));
            CHECK(s.sigma_pp == doctest::Approx(r.pp).epsilon(1e-7));
        }
    }

    TEST_CASE("transient relaxes to the steady state") {
        const OscillatorParams p;
        const BathSpec b = lor_bath(1.0, 0.5, NoiseKind::Quantum, 1.0, 1.0);
        const GFunctions g = g_functions(p, b.j);
        CHECK(g.slowest_rate() == doctest::Approx(0.1049).epsilon(1e-3));
        const MomentState s = covariance_evolution(g, b, {0.0, 0.0, 0.5, 0.0, 0.5}, 50.0);
        const SteadyCovariances ss = steady_covariances_quadrature(p, b);
        CHECK(s.sigma_xx == doctest::Approx(ss.sigma_xx).epsilon(1e-4));
        CHECK(s.sigma_pp == doctest::Approx(ss.sigma_pp).epsilon(1e-4));
        CHECK(std::abs(s.sigma_xp) < 1e-4);
    }

    TEST_CASE("steady covariances: frozen values") {
        const OscillatorParams p;
        for (const Frozen& f : kSteady) {
            CAPTURE(f.lambda);
            CAPTURE(f.T);
            const SteadyCovariances s = steady_covariances_quadrature(p, lor_bath(f.lambda, f.T));
            CHECK(s.sigma_xx == doctest::Approx(f.xx).epsilon(1e-9));
            CHECK(s.sigma_pp == doctest::Approx(f.pp).epsilon(1e-9));
            CHECK(s.sigma_xp == 0.0);
            CHECK(s.method == SteadyMethod::Quadrature);
        }
    }

    TEST_CASE("steady covariances: explicit Matsubara sums") {
        const OscillatorParams p;
        for (double l : {0.3, 2.0}) {
            for (double T : {0.1, 1.0, 10.0}) {
                CAPTURE(l);
                CAPTURE(T);
                const MatsubaraOracle o = brute_matsubara(l, 0.5, 0.1, T);
                const SteadyCovariances q = steady_covariances_quadrature(p, lor_bath(l, T));
                const SteadyCovariances m = steady_covariances_matsubara(p, SpectralDensity::lorentzian(l, 0.5, 0.1), T);
                CHECK(q.sigma_xx == doctest::Approx(o.xx).epsilon(1e-8));
                CHECK(q.sigma_pp == doctest::Approx(o.pp).epsilon(1e-8));
                CHECK(m.sigma_xx == doctest::Approx(o.xx).epsilon(1e-8));
                CHECK(m.sigma_pp == doctest::Approx(o.pp).epsilon(1e-8));
            }
        }
    }

    TEST_CASE("Matsubara series in general units") {
        const OscillatorParams p{2.0, 0.7, true};
        const auto j = SpectralDensity::lorentzian(0.8, 0.9, 0.3);
        const SteadyCovariances q = steady_covariances_quadrature(p, {j, 0.4});
        const SteadyCovariances m = steady_covariances_matsubara(p, j, 0.4);
        CHECK(m.sigma_xx == doctest::Approx(q.sigma_xx).epsilon(1e-7));
        CHECK(m.sigma_pp == doctest::Approx(q.sigma_pp).epsilon(1e-7));
        CHECK_THROWS_AS(steady_covariances_matsubara(p, j, 0.0), std::domain_error);
    }

    TEST_CASE("mean-force route, Lorentzian and Ohmic") {
        const OscillatorParams p;
        for (const SpectralDensity& j : {SpectralDensity::lorentzian(2.0, 0.5, 0.1), SpectralDensity::ohmic(0.3, 4.0)}) {
            for (double T : {0.2, 2.0}) {
                const SteadyCovariances q = steady_covariances_quadrature(p, {j, T});
                const SteadyCovariances mf = mean_force_covariances(p, j, T);
                CHECK(mf.sigma_xx == doctest::Approx(q.sigma_xx).epsilon(1e-6));
                CHECK(mf.sigma_pp == doctest::Approx(q.sigma_pp).epsilon(1e-6));
                CHECK(mf.method == SteadyMethod::MeanForce);
            }
        }
    }

    TEST_CASE("classical noise gives the classical thermal state") {
        const OscillatorParams p;
        for (double l : {0.3, 2.0}) {
            for (double T : {0.1, 1.0, 10.0}) {
                const SteadyCovariances q = steady_covariances_quadrature(p, lor_bath(l, T, NoiseKind::Classical));
                CHECK(q.sigma_xx == doctest::Approx(T).epsilon(1e-8));
                CHECK(q.sigma_pp == doctest::Approx(T).epsilon(1e-8));
            }
        }
        OscillatorParams bare = p;
        bare.counter_term = false;
        const double l = 0.3, w0 = 0.5;
        const SteadyCovariances q = steady_covariances_quadrature(bare, lor_bath(l, 1.0, NoiseKind::Classical));
        CHECK(q.sigma_xx == doctest::Approx(1.0 / (1.0 - l * l / (w0 * w0))).epsilon(1e-8));
        const SteadyCovariances ce = classical_exact_covariances(bare, SpectralDensity::lorentzian(l, w0, 0.1), 1.0);
        CHECK(ce.sigma_xx == doctest::Approx(q.sigma_xx).epsilon(1e-8));
        CHECK(ce.sigma_pp == 1.0);
    }

    TEST_CASE("without counter-term a strong bath has no steady state") {
        const OscillatorParams bare{1.0, 1.0, false};
        CHECK_THROWS_AS(steady_covariances_quadrature(bare, lor_bath(0.6, 1.0)), InstabilityError);
    }

    TEST_CASE("weak coupling approaches the Gibbs state") {
        const OscillatorParams p;
        const SteadyCovariances gb = gibbs_covariances(p, 0.3);
        CHECK(gb.sigma_xx == doctest::Approx(0.5 / std::tanh(1.0 / 0.6)).epsilon(1e-14));
        const SteadyCovariances zero = steady_covariances_quadrature(p, lor_bath(0.0, 0.3));
        CHECK(zero.sigma_xx == doctest::Approx(gb.sigma_xx).epsilon(1e-12));
        CHECK(zero.sigma_pp == doctest::Approx(gb.sigma_pp).epsilon(1e-12));
        const SteadyCovariances weak = steady_covariances_quadrature(p, lor_bath(0.01, 0.3));
        CHECK(weak.sigma_xx == doctest::Approx(gb.sigma_xx).epsilon(1e-3));
        CHECK(gibbs_covariances(p, 0.0).sigma_pp == doctest::Approx(0.5));
    }

    TEST_CASE("Gibbs deviation grows with coupling") {
        const OscillatorParams p;
        auto dev = [&](double l) {
            return std::abs(steady_covariances_quadrature(p, lor_bath(l, 1.0)).sigma_xx - gibbs_covariances(p, 1.0).sigma_xx);
        };
        double prev = 0.0;
        for (double l : {0.3, 0.7, 1.2, 2.0}) {
            const double d = dev(l);
            CHECK(d > prev);
            prev = d;
        }
        CHECK(dev(2.0) >= 5.0 * dev(0.3));
    }

    TEST_CASE("steady state respects the uncertainty relation") {
        std::mt19937_64 rng(3);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        for (int k = 0; k < 25; ++k) {
            const OscillatorParams p{0.5 + u(rng), 0.5 + u(rng), true};
            const BathSpec b = lor_bath(0.1 + 2.0 * u(rng), 0.01 + 2.0 * u(rng), NoiseKind::Quantum, 0.2 + u(rng),
                                        0.05 + u(rng));
            const SteadyCovariances s = steady_covariances_quadrature(p, b);
            CHECK(s.sigma_xx * s.sigma_pp >= 0.25);
        }
    }

    TEST_CASE("steady covariances increase with temperature") {
        const OscillatorParams p;
        double xx = 0.0, pp = 0.0;
        for (double T : {0.0, 0.05, 0.3, 1.0, 4.0}) {
            const SteadyCovariances s = steady_covariances_quadrature(p, lor_bath(2.0, T));
            CHECK(s.sigma_xx > xx);
            CHECK(s.sigma_pp > pp);
            xx = s.sigma_xx;
            pp = s.sigma_pp;
        }
    }

    TEST_CASE("method names") {
        CHECK(std::string(to_string(SteadyMethod::Quadrature)) == "quadrature");
        CHECK(std::string(to_string(SteadyMethod::Matsubara)) == "matsubara");
        CHECK(std::string(to_string(SteadyMethod::MeanForce)) == "mean_force");
        CHECK(std::string(to_string(SteadyMethod::Gibbs)) == "gibbs");
        CHECK(std::string(to_string(SteadyMethod::ClassicalExact)) == "classical_exact");
    }
}
