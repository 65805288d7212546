#include <doctest.h>

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "qcl/spectral.hpp"

using namespace qcl;

namespace {

constexpr double kPi = std::numbers::pi;

// Composite Simpson on [a, b] with n (even) panels.
template <class F>
double simpson(F f, double a, double b, int n) {
    const double h = (b - a) / n;
    double s = f(a) + f(b);
    for (int i = 1; i < n; ++i) s += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
    return s * h / 3.0;
}

double lorentzian_j(double l, double w0, double g, double w) {
    const double d = w0 * w0 - w * w;
    return l * l * g * w / (kPi * (d * d + g * g * w * w));
}

}  // namespace

TEST_SUITE("spectral") {
    TEST_CASE("Lorentzian density and static kernel") {
        const auto j = SpectralDensity::lorentzian(0.3, 0.5, 0.1);
        for (double w : {0.0, 0.1, 0.5, 2.0, 50.0})
            CHECK(eval_spectral_density(j, w) == doctest::Approx(lorentzian_j(0.3, 0.5, 0.1, w)).epsilon(1e-14));
        CHECK(static_kernel(j) == doctest::Approx(0.36).epsilon(1e-14));
        CHECK(spectral_density_over_omega(j, 0.0) == doctest::Approx(0.09 * 0.1 / (kPi * 0.0625)).epsilon(1e-14));
    }

    TEST_CASE("Ohmic static kernel is 2 gamma omega_c / pi") {
        const auto j = SpectralDensity::ohmic(0.2, 3.0);
        CHECK(static_kernel(j) == doctest::Approx(2.0 * 0.2 * 3.0 / kPi).epsilon(1e-10));
        CHECK(eval_spectral_density(j, 1.5) == doctest::Approx(0.2 * 1.5 / kPi * std::exp(-0.5)).epsilon(1e-14));
    }

    TEST_CASE("Lorentzian memory kernel in time, both damping regimes") {
        for (double g : {0.1, 0.8, 3.0}) {
            const auto j = SpectralDensity::lorentzian(0.7, 0.5, g);
            const double w1sq = 0.25 - g * g / 4.0;
            for (double t : {0.0, 0.3, 2.0, 17.0}) {
                double expect;
                if (w1sq > 0) {
                    const double w1 = std::sqrt(w1sq);
                    expect = 0.49 / w1 * std::exp(-g * t / 2) * std::sin(w1 * t);
                } else {
                    const double k = std::sqrt(-w1sq);
                    expect = 0.49 / k * std::exp(-g * t / 2) * std::sinh(k * t);
                }
                CHECK(eval_memory_kernel_time(j, t) == doctest::Approx(expect).epsilon(1e-10).scale(1e-12));
            }
        }
    }

    TEST_CASE("Ohmic memory kernel matches its closed form") {
        const double gam = 0.2, wc = 3.0, a = 1.0 / wc;
        const auto j = SpectralDensity::ohmic(gam, wc);
        for (double t : {0.05, 0.3, 1.0, 4.0, 20.0}) {
            const double expect = 4.0 * gam * a * t / (kPi * std::pow(a * a + t * t, 2));
            CHECK(eval_memory_kernel_time(j, t) == doctest::Approx(expect).epsilon(1e-8).scale(1e-10));
        }
    }

    TEST_CASE("Laplace transform agrees with the transformed time kernel") {
        const double gam = 0.2, wc = 3.0, a = 1.0 / wc;
        const auto j = SpectralDensity::ohmic(gam, wc);
        for (double s : {0.2, 1.0, 5.0}) {
            // u = t/(1+t) maps [0, inf) to [0, 1).
            auto f = [&](double u) {
                if (u >= 1.0) return 0.0;
                const double t = u / (1.0 - u);
                return 4.0 * gam * a * t / (kPi * std::pow(a * a + t * t, 2)) * std::exp(-s * t) / ((1 - u) * (1 - u));
            };
            const double expect = simpson(f, 0.0, 1.0, 200000);
            CHECK(eval_kernel_laplace(j, Complex{s, 0.0}).real() == doctest::Approx(expect).epsilon(1e-7));
        }
        const auto l = SpectralDensity::lorentzian(0.3, 0.5, 0.1);
        const Complex s{0.7, 0.4};
        const Complex expect = 0.09 / (s * s + 0.1 * s + 0.25);
        CHECK(std::abs(eval_kernel_laplace(l, s) - expect) < 1e-14);
    }

    TEST_CASE("generic route reproduces the Lorentzian closed form") {
        // A tabulated copy of the Lorentzian on a fine grid goes through the
        // numerical transform; it must approach the rational K^ as the grid refines.
        const double l = 0.6, w0 = 1.0, g = 0.5;
        Tabulated t;
        for (int i = 0; i <= 40000; ++i) {
            const double w = i * 0.001;
            t.grid.push_back(w);
            t.values.push_back(lorentzian_j(l, w0, g, w));
        }
        const SpectralDensity tab(t);
        const Complex s{0.3, 0.0};
        const Complex exact = l * l / (s * s + g * s + w0 * w0);
        // The tail beyond w = 40 carries about 2 l^2 g / (pi 40) of K^(0.3).
        CHECK(std::abs(eval_kernel_laplace(tab, s) - exact) < 2e-3);
    }

    TEST_CASE("imaginary part sign convention") {
        for (const SpectralDensity& j : {SpectralDensity::lorentzian(0.3, 0.5, 0.1), SpectralDensity::ohmic(0.2, 3.0)}) {
            for (double w : {0.2, 0.5, 1.3}) {
                const double pj = kPi * eval_spectral_density(j, w);
                CHECK(eval_kernel_fourier(j, w).imag() == doctest::Approx(pj).epsilon(1e-8));
                CHECK(eval_kernel_laplace(j, Complex{0.0, w}).imag() == doctest::Approx(-pj).epsilon(1e-8));
            }
        }
    }

    TEST_CASE("principal value equals the real part on the imaginary axis") {
        const double l = 0.3, w0 = 0.5, g = 0.1;
        const auto j = SpectralDensity::lorentzian(l, w0, g);
        for (double w : {0.05, 0.45, 0.5, 0.55, 3.0}) {
            const double d = w0 * w0 - w * w;
            const double expect = l * l * d / (d * d + g * g * w * w);
            CHECK(std::abs(principal_value_kernel(j, w) - expect) < 1e-8 * std::abs(expect) + 1e-12);
        }
    }

    TEST_CASE("noise spectrum limits") {
        CHECK(eval_noise_spectrum(NoiseKind::Classical, 3.0, 0.7) == 1.4);
        CHECK(eval_noise_spectrum(NoiseKind::Quantum, 0.8, 0.0) == 0.8);
        CHECK(eval_noise_spectrum(NoiseKind::Quantum, 1.0, 0.5) == doctest::Approx(1.0 / std::tanh(1.0)).epsilon(1e-15));
        CHECK(eval_noise_spectrum(NoiseKind::Quantum, 0.0, 0.5) == doctest::Approx(1.0).epsilon(1e-15));
        // Quantum spectrum exceeds the classical one and approaches it at high T.
        for (double w : {0.01, 0.3, 2.0}) {
            CHECK(eval_noise_spectrum(NoiseKind::Quantum, w, 1.0) >= eval_noise_spectrum(NoiseKind::Classical, w, 1.0));
            CHECK(eval_noise_spectrum(NoiseKind::Quantum, w, 1e3) ==
                  doctest::Approx(eval_noise_spectrum(NoiseKind::Classical, w, 1e3)).epsilon(1e-6));
        }
        CHECK_THROWS_AS(eval_noise_spectrum(NoiseKind::Quantum, -1.0, 1.0), std::domain_error);
    }

    TEST_CASE("force PSD is pi J / w N") {
        const BathSpec b{SpectralDensity::lorentzian(0.3, 0.5, 0.1), 0.1, NoiseKind::Quantum};
        const double w = 0.45;
        const double expect = kPi * lorentzian_j(0.3, 0.5, 0.1, w) / w * w / std::tanh(w / 0.2);
        CHECK(eval_force_psd(b, w) == doctest::Approx(expect).epsilon(1e-14));
    }

    TEST_CASE("counter-term renormalization") {
        const auto j = SpectralDensity::lorentzian(0.3, 0.5, 0.1);
        OscillatorParams p{2.0, 1.5, true};
        CHECK(renormalized_frequency_sq(p, j) == doctest::Approx(2.25 + 0.36 / 2.0).epsilon(1e-14));
        p.counter_term = false;
        CHECK(renormalized_frequency_sq(p, j) == 2.25);
    }

    TEST_CASE("validation") {
        CHECK_THROWS_AS(SpectralDensity::lorentzian(-0.1, 0.5, 0.1), std::invalid_argument);
        CHECK_THROWS_AS(SpectralDensity::lorentzian(0.1, 0.0, 0.1), std::invalid_argument);
        CHECK_THROWS_AS(SpectralDensity::lorentzian(0.1, 0.5, -1.0), std::invalid_argument);
        CHECK_THROWS_AS(SpectralDensity::ohmic(0.0, 1.0), std::invalid_argument);
        CHECK_THROWS_AS(SpectralDensity(Tabulated{{0.0, 1.0, 0.5}, {0.0, 1.0, 1.0}}), std::invalid_argument);
        CHECK_THROWS_AS(SpectralDensity(Tabulated{{0.0, 1.0}, {0.5, 1.0}}), std::invalid_argument);
        CHECK_THROWS_AS(SpectralDensity(Tabulated{{0.0, 1.0}, {0.0}}), std::invalid_argument);
        CHECK_THROWS_AS(validate(OscillatorParams{0.0, 1.0, true}), std::invalid_argument);
        CHECK_THROWS_AS(validate(BathSpec{SpectralDensity::lorentzian(0.1, 0.5, 0.1), -1.0}), std::invalid_argument);
        CHECK(SpectralDensity::lorentzian(0.0, 0.5, 0.1).is_zero());
        CHECK_FALSE(SpectralDensity::lorentzian(0.2, 0.5, 0.1).is_zero());
    }

    TEST_CASE("tabulated density interpolates linearly and vanishes outside the grid") {
        const SpectralDensity t(Tabulated{{1.0, 2.0, 3.0}, {0.0, 2.0, 0.0}});
        CHECK(eval_spectral_density(t, 1.5) == doctest::Approx(1.0));
        CHECK(eval_spectral_density(t, 0.5) == 0.0);
        CHECK(eval_spectral_density(t, 3.5) == 0.0);
        // 2 int J/w over two triangles, computed piecewise by hand.
        const double expect = 2.0 * (2.0 * (1.0 - std::log(2.0)) + 2.0 * (3.0 * std::log(1.5) - 1.0));
        CHECK(static_kernel(t) == doctest::Approx(expect).epsilon(1e-10));
    }
}
