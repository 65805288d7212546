#pragma once

// Spectral densities, memory kernels, noise spectra and force power
// spectral densities. Units are nondimensional with hbar = k_B = 1; the
// oscillator mass and bare frequency stay explicit parameters.
//
// Conventions:
//   K(tau)      = 2 Theta(tau) int_0^inf J(w) sin(w tau) dw
//   K^(s)       = int_0^inf K(t) exp(-s t) dt        (Laplace transform)
//   P_F(w)      = int dtau <F(t) F(t - tau)> exp(i w tau) = pi J(w)/w N(w, T)
//   <F(t)F(t-tau)> = int_0^inf (J/w) N(w, T) cos(w tau) dw
// J carries the units that make K^(0) = 2 int J/w dw a stiffness, so the
// counter-term shift of the squared frequency is K^(0)/m for any mass.

#include <complex>
#include <string>
#include <variant>
#include <vector>

namespace qcl {

using Complex = std::complex<double>;

struct Lorentzian {
    double lambda = 0.0;       // coupling strength
    double omega0 = 1.0;       // resonance frequency
    double gamma_width = 0.1;  // peak width
};

// J(w) = (gamma_damp w / pi) exp(-w / omega_cutoff)
struct OhmicExpCutoff {
    double gamma_damp = 0.1;
    double omega_cutoff = 10.0;
};

// Piecewise-linear J on a strictly increasing grid; zero outside the grid.
struct Tabulated {
    std::vector<double> grid;
    std::vector<double> values;
};

class SpectralDensity {
public:
    using Variant = std::variant<Lorentzian, OhmicExpCutoff, Tabulated>;

    // Validating constructors; throw std::invalid_argument.
    SpectralDensity(Lorentzian l);
    SpectralDensity(OhmicExpCutoff o);
    SpectralDensity(Tabulated t);

    static SpectralDensity lorentzian(double lambda, double omega0, double gamma_width) {
        return SpectralDensity(Lorentzian{lambda, omega0, gamma_width});
    }
    static SpectralDensity ohmic(double gamma_damp, double omega_cutoff) {
        return SpectralDensity(OhmicExpCutoff{gamma_damp, omega_cutoff});
    }

    const Variant& variant() const noexcept { return v_; }
    const Lorentzian* as_lorentzian() const noexcept { return std::get_if<Lorentzian>(&v_); }
    bool is_zero() const noexcept;

    // Frequencies where J or K^ have structure; used as quadrature breakpoints.
    std::vector<double> features() const;

    std::string describe() const;

private:
    Variant v_;
};

enum class NoiseKind { Quantum, Classical };

struct BathSpec {
    SpectralDensity j;
    double temperature = 0.0;
    NoiseKind kind = NoiseKind::Quantum;

    std::string describe() const;
};

struct OscillatorParams {
    double mass = 1.0;
    double omega = 1.0;
    bool counter_term = true;
};

void validate(const OscillatorParams& p);
void validate(const BathSpec& b);

const char* to_string(NoiseKind k) noexcept;

double eval_spectral_density(const SpectralDensity& j, double omega);

// J(w)/w with the w -> 0 limit taken analytically where available.
double spectral_density_over_omega(const SpectralDensity& j, double omega);

double eval_memory_kernel_time(const SpectralDensity& j, double tau);

// K^(s) for Re(s) >= 0. Lorentzian: lambda^2 / (s^2 + Gamma s + omega0^2).
// Other variants: 2 int J(w) w / (s^2 + w^2) dw, with the principal value and
// the -i pi J(nu) boundary term on the imaginary axis s = i nu.
Complex eval_kernel_laplace(const SpectralDensity& j, Complex s);

// Fourier transform int K(t) exp(i w t) dt = K^(-i w); its imaginary part is
// pi J(w).
Complex eval_kernel_fourier(const SpectralDensity& j, double omega);

// K^(0) = 2 int_0^inf J(w)/w dw.
double static_kernel(const SpectralDensity& j);

// PV int_0^inf 2 xi J(xi) / (xi^2 - w^2) dxi, by symmetric subtraction
// around the pole. Equals Re K^(i w).
double principal_value_kernel(const SpectralDensity& j, double omega);

double renormalized_frequency_sq(const OscillatorParams& p, const SpectralDensity& j);

double eval_noise_spectrum(NoiseKind kind, double omega, double temperature);

double eval_force_psd(const BathSpec& b, double omega);

}  // namespace qcl
