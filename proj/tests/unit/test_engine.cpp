#include <doctest.h>

#include <cmath>
#include <sstream>

#include "qcl/engine.hpp"
#include "qcl/oracle.hpp"

using namespace qcl;

namespace {

BathSpec weak_bath(double T, NoiseKind k = NoiseKind::Quantum) {
    return {SpectralDensity::lorentzian(0.3, 0.5, 0.1), T, k};
}

SimConfig short_run(std::size_t n_traj, double t_final = 5.0) {
    SimConfig c;
    c.dt = 0.05;
    c.t_final = t_final;
    c.n_traj = n_traj;
    c.master_seed = 17;
    return c;
}

std::array<double, 2> noise_free_end(const EmbeddedLaw& law, double dt) {
    SimConfig c;
    c.dt = dt;
    c.t_final = 10.0;
    const std::vector<std::vector<double>> f(1, std::vector<double>(half_grid_size(c), 0.0));
    const double x0 = 1.0, p0 = 0.0;
    const Trajectory tr = integrate_embedded(c, law, f, {&x0, 1}, {&p0, 1});
    return {tr.x.back(), tr.p.back()};
}

}  // namespace

TEST_SUITE("engine") {
    TEST_CASE("configuration validation") {
        SimConfig c;
        CHECK_NOTHROW(validate(c));
        c.dt = 0.0;
        CHECK_THROWS_AS(validate(c), std::invalid_argument);
        c = SimConfig{};
        c.t_final = 1.03;
        CHECK_THROWS_AS(validate(c), std::invalid_argument);
        c = SimConfig{};
        c.initial.sigma_xx = 0.1;
        c.initial.sigma_xp = 0.5;
        CHECK_THROWS_AS(validate(c), std::invalid_argument);
        c = SimConfig{};
        c.heat_window = 0.0;
        CHECK_THROWS_AS(validate(c), std::invalid_argument);
        c = SimConfig{};
        c.t_final = 0.0;
        CHECK_NOTHROW(validate(c));
    }

    TEST_CASE("embedding of a single oscillator") {
        const OscillatorParams p{2.0, 1.5, true};
        const EmbeddedLaw law = build_embedding(p, SpectralDensity::lorentzian(0.3, 0.5, 0.1));
        CHECK(law.n_osc == 1);
        CHECK(law.minv(0, 0) == 0.5);
        CHECK(law.vbar(0, 0) == doctest::Approx(2.0 * 2.25 + 0.36));
        REQUIRE(law.aux.size() == 1);
        CHECK(law.aux[0].lambda_sq == doctest::Approx(0.09));
        CHECK(law.n_baths() == 1);
        CHECK_THROWS_AS(build_embedding(p, SpectralDensity::ohmic(0.1, 2.0)), std::invalid_argument);
    }

    TEST_CASE("time step too coarse for the fastest mode is refused") {
        SimConfig c = short_run(2);
        c.dt = 1.0;
        c.t_final = 10.0;
        CHECK_THROWS_AS(run_ensemble(c, OscillatorParams{}, weak_bath(0.1)), std::invalid_argument);
    }

    TEST_CASE("noise-free endpoints converge at fourth order") {
        const EmbeddedLaw law = build_embedding(OscillatorParams{}, SpectralDensity::lorentzian(0.3, 0.5, 0.1));
        const auto a = noise_free_end(law, 0.1);
        const auto b = noise_free_end(law, 0.05);
        const auto c = noise_free_end(law, 0.025);
        const double e1 = std::hypot(a[0] - b[0], a[1] - b[1]);
        const double e2 = std::hypot(b[0] - c[0], b[1] - c[1]);
        CHECK(std::log2(e1 / e2) > 3.5);
    }

    TEST_CASE("convolution integrator agrees with the embedding") {
        const OscillatorParams p;
        const auto j = SpectralDensity::lorentzian(0.3, 0.5, 0.1);
        const GFunctions g = g_functions(p, j);
        SimConfig c;
        c.dt = 0.01;
        c.t_final = 20.0;
        const std::vector<double> f(half_grid_size(c), 0.0);
        const Trajectory tr = integrate_convolution(c, p, j, f, 1.0, 0.0);
        CHECK(tr.x.back() == doctest::Approx(g.g1(20.0)).epsilon(1e-3));
        CHECK(tr.p.back() == doctest::Approx(g.g3(20.0)).epsilon(1e-3));
    }

    TEST_CASE("initial-state sampler: deterministic with the requested moments") {
        SimConfig c;
        c.master_seed = 4;
        c.initial = {0.3, -0.2, 0.8, 0.25, 0.6};
        CHECK(sample_initial(c, 7) == sample_initial(c, 7));
        CHECK(sample_initial(c, 7) != sample_initial(c, 8));
        const int n = 100000;
        double mx = 0, mp = 0, sxx = 0, sxp = 0, spp = 0;
        for (int k = 0; k < n; ++k) {
            const auto [x, p] = sample_initial(c, static_cast<std::uint64_t>(k));
            mx += x;
            mp += p;
            sxx += x * x;
            sxp += x * p;
            spp += p * p;
        }
        mx /= n;
        mp /= n;
        CHECK(std::abs(mx - 0.3) < 4 * std::sqrt(0.8 / n));
        CHECK(std::abs(mp + 0.2) < 4 * std::sqrt(0.6 / n));
        CHECK(std::abs(sxx / n - mx * mx - 0.8) < 4 * 0.8 * std::sqrt(2.0 / n));
        CHECK(std::abs(sxp / n - mx * mp - 0.25) < 4 * std::sqrt((0.8 * 0.6 + 0.0625) / n));
        CHECK(std::abs(spp / n - mp * mp - 0.6) < 4 * 0.6 * std::sqrt(2.0 / n));
    }

    TEST_CASE("ensemble moments equal a direct two-pass computation") {
        // Without coupling the oscillator rotates freely; at t = 0 the statistics
        // are those of the sampled initial conditions.
        SimConfig c = short_run(300, 1.0);
        c.initial = {1.0, 0.5, 0.7, 0.1, 0.4};
        c.chunk = 32;
        const BathSpec silent{SpectralDensity::lorentzian(0.0, 0.5, 0.1), 0.1};
        const EnsembleStats s = run_ensemble(c, OscillatorParams{}, silent);
        std::vector<double> xs, ps;
        for (std::size_t k = 0; k < c.n_traj; ++k) {
            const auto [x, p] = sample_initial(c, k);
            xs.push_back(x);
            ps.push_back(p);
        }
        const double n = static_cast<double>(c.n_traj);
        double mx = 0, mp = 0;
        for (std::size_t k = 0; k < xs.size(); ++k) {
            mx += xs[k];
            mp += ps[k];
        }
        mx /= n;
        mp /= n;
        double cxx = 0, cxp = 0, cpp = 0;
        for (std::size_t k = 0; k < xs.size(); ++k) {
            cxx += (xs[k] - mx) * (xs[k] - mx);
            cxp += (xs[k] - mx) * (ps[k] - mp);
            cpp += (ps[k] - mp) * (ps[k] - mp);
        }
        CHECK(s.mu_x[0] == doctest::Approx(mx).epsilon(1e-12));
        CHECK(s.mu_p[0] == doctest::Approx(mp).epsilon(1e-12));
        CHECK(s.sigma_xx[0] == doctest::Approx(cxx / (n - 1)).epsilon(1e-12));
        CHECK(s.sigma_xp[0] == doctest::Approx(cxp / (n - 1)).epsilon(1e-12));
        CHECK(s.sigma_pp[0] == doctest::Approx(cpp / (n - 1)).epsilon(1e-12));
        CHECK(s.se_mu_x[0] == doctest::Approx(std::sqrt(cxx / (n - 1) / n)).epsilon(1e-12));
        // Free rotation by one radian is a linear map of the same sample.
        const std::size_t last = s.t.size() - 1;
        const double co = std::cos(1.0), si = std::sin(1.0);
        CHECK(s.mu_x[last] == doctest::Approx(mx * co + mp * si).epsilon(1e-7));
        CHECK(s.sigma_xx[last] ==
              doctest::Approx((co * co * cxx + 2 * co * si * cxp + si * si * cpp) / (n - 1)).epsilon(1e-7));
    }

    TEST_CASE("statistics do not depend on the thread count") {
        SimConfig c = short_run(100);
        c.chunk = 8;
        c.threads = 1;
        const EnsembleStats a = run_ensemble(c, OscillatorParams{}, weak_bath(0.1));
        c.threads = 4;
        const EnsembleStats b = run_ensemble(c, OscillatorParams{}, weak_bath(0.1));
        CHECK(a.sigma_xx == b.sigma_xx);
        CHECK(a.sigma_xp == b.sigma_xp);
        CHECK(a.se_pp == b.se_pp);
        CHECK(a.heat.qdot == b.heat.qdot);
    }

    TEST_CASE("single trajectory is flagged degenerate") {
        const EnsembleStats s = run_ensemble(short_run(1), OscillatorParams{}, weak_bath(0.1));
        CHECK(s.degenerate);
        CHECK(s.n_traj == 1);
        CHECK(s.sigma_xx[3] == 0.0);
    }

    TEST_CASE("zero duration gives the initial sample only") {
        SimConfig c = short_run(10, 0.0);
        const EnsembleStats s = run_ensemble(c, OscillatorParams{}, weak_bath(0.1));
        CHECK(s.t.size() == 1);
        CHECK(s.t[0] == 0.0);
    }

    TEST_CASE("sampling stride keeps the final step") {
        SimConfig c = short_run(4, 1.0);
        c.sample_every = 7;
        const Trajectory tr = integrate_trajectory(c, OscillatorParams{}, weak_bath(0.1), 0);
        CHECK(tr.t.front() == 0.0);
        CHECK(tr.t.back() == doctest::Approx(1.0));
        CHECK(tr.t.size() == 4);
    }

    TEST_CASE("ensemble heat current equals the per-trajectory computation") {
        SimConfig c = short_run(40, 4.0);
        const OscillatorParams p;
        const BathSpec b = weak_bath(0.5);
        const EnsembleStats s = run_ensemble(c, p, b);
        std::vector<Trajectory> trs;
        for (std::uint64_t k = 0; k < c.n_traj; ++k) trs.push_back(integrate_trajectory(c, p, b, k));
        const HeatCurrent h = heat_current_trace(trs, build_embedding(p, b.j), 0, c.heat_window);
        REQUIRE(h.qdot.size() == s.heat.qdot.size());
        for (std::size_t k = 0; k < h.qdot.size(); k += 10) CHECK(h.qdot[k] == doctest::Approx(s.heat.qdot[k]).epsilon(1e-9));
        CHECK(h.steady == doctest::Approx(s.heat.steady).epsilon(1e-9));
        CHECK(h.steady_se == doctest::Approx(s.heat.steady_se).epsilon(1e-9));
        CHECK(h.window_start == doctest::Approx(3.0));
    }

    TEST_CASE("short ensemble agrees with the exact transient") {
        const OscillatorParams p;
        const BathSpec b{SpectralDensity::lorentzian(1.0, 1.0, 1.0), 0.5};
        SimConfig c = short_run(800, 10.0);
        c.sample_every = 50;
        const EnsembleStats s = run_ensemble(c, p, b);
        const GFunctions g = g_functions(p, b.j);
        for (std::size_t k = 1; k < s.t.size(); ++k) {
            const MomentState o = covariance_evolution(g, b, {0.0, 0.0, 0.5, 0.0, 0.5}, s.t[k]);
            CHECK(std::abs(s.sigma_xx[k] - o.sigma_xx) < 4.5 * s.se_xx[k]);
            CHECK(std::abs(s.sigma_pp[k] - o.sigma_pp) < 4.5 * s.se_pp[k]);
            CHECK(std::abs(s.sigma_xp[k] - o.sigma_xp) < 4.5 * s.se_xp[k]);
        }
    }

    TEST_CASE("convolution integrator handles an Ohmic bath") {
        SimConfig c = short_run(20, 2.0);
        c.integrator = Integrator::Convolution;
        const BathSpec b{SpectralDensity::ohmic(0.1, 3.0), 0.5};
        const EnsembleStats s = run_ensemble(c, OscillatorParams{}, b);
        CHECK(s.t.size() == 41);
        CHECK(std::isfinite(s.sigma_xx.back()));
        CHECK(std::string(to_string(Integrator::Convolution)) == "convolution");
    }

    TEST_CASE("ensemble CSV layout") {
        const EnsembleStats s = run_ensemble(short_run(5, 0.1), OscillatorParams{}, weak_bath(0.1));
        std::ostringstream os;
        write_ensemble_csv(os, s, {});
        std::istringstream in(os.str());
        std::string line;
        std::getline(in, line);
        CHECK(line == "t,mu_x,mu_p,sigma_xx,sigma_xp,sigma_pp,se_xx,se_xp,se_pp");
    }
}
