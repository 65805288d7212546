#pragma once

// Exact moments of the damped oscillator without sampling: pole expansion of
// the g-functions for a Lorentzian bath, transient covariances, and the
// steady-state covariances by several independent routes.

#include <array>
#include <string>

#include "qcl/quadrature.hpp"
#include "qcl/spectral.hpp"

namespace qcl {

// g2(t) = sum_k r_k e^{p_k t} is the position response to a momentum kick;
// g1 = m dg2/dt and g3 = m dg1/dt.
struct GFunctions {
    OscillatorParams params;
    Lorentzian bath;
    double omega_bar_sq = 0.0;
    std::array<Complex, 4> poles{};
    std::array<Complex, 4> residues_g2{};

    double g1(double t) const;
    double g2(double t) const;
    double g3(double t) const;

    bool stable() const noexcept;
    // Smallest decay rate -max Re(p_k); sets the relaxation time.
    double slowest_rate() const noexcept;
};

// Poles are roots of m(s^2 + W^2)(s^2 + G s + w0^2) - lambda^2 with W^2 the
// renormalized squared frequency. Throws std::invalid_argument for
// non-Lorentzian input and DegeneratePoleError when two roots coincide
// within 1e-9.
GFunctions g_functions(const OscillatorParams& p, const SpectralDensity& j);

struct MomentState {
    double mu_x = 0.0;
    double mu_p = 0.0;
    double sigma_xx = 0.0;
    double sigma_xp = 0.0;
    double sigma_pp = 0.0;

    double uncertainty_product() const noexcept { return sigma_xx * sigma_pp - sigma_xp * sigma_xp; }
};

struct Means {
    double mu_x = 0.0;
    double mu_p = 0.0;
};

Means mean_evolution(const GFunctions& g, Means mu0, double t);

// Means and covariances at time t from an initial Gaussian state that is
// uncorrelated with the bath. The bath's spectral density must be the one
// the g-functions were built from.
MomentState covariance_evolution(const GFunctions& g, const BathSpec& b, const MomentState& initial,
                                 double t, const quad::Options& opt = {});

enum class SteadyMethod { Quadrature, Matsubara, Gibbs, MeanForce, ClassicalExact };

const char* to_string(SteadyMethod m) noexcept;

struct SteadyCovariances {
    double sigma_xx = 0.0;
    double sigma_xp = 0.0;
    double sigma_pp = 0.0;
    SteadyMethod method = SteadyMethod::Quadrature;
};

// sxx = int (J/w) N |g2^(iw)|^2 dw, spp = m^2 int w^2 (J/w) N |g2^(iw)|^2 dw,
// g2^(s) = 1/(m(s^2 + W^2) - K^(s)). Throws InstabilityError when the
// effective static stiffness m W^2 - K^(0) is not positive.
SteadyCovariances steady_covariances_quadrature(const OscillatorParams& p, const BathSpec& b,
                                                const quad::Options& opt = {});

// Imaginary-frequency series for quantum noise at T > 0, Lorentzian only:
//   sxx = T g2^(0) + 2T sum_n g2^(nu_n)
//   spp = m T + 2 m T sum_n (1 - m nu_n^2 g2^(nu_n)),   nu_n = 2 pi T n.
SteadyCovariances steady_covariances_matsubara(const OscillatorParams& p, const SpectralDensity& j,
                                               double temperature);

// Thermal state of the bare oscillator.
SteadyCovariances gibbs_covariances(const OscillatorParams& p, double temperature);

// Reduced global thermal state through the response function
// chi(w) = 1/(m(W^2 - w^2) - PV(w) - i pi J(w)), with the principal value
// computed numerically for every spectral density:
//   sxx = (1/pi) int N/w Im chi dw,   spp = (m^2/pi) int w N Im chi dw.
SteadyCovariances mean_force_covariances(const OscillatorParams& p, const SpectralDensity& j,
                                         double temperature, const quad::Options& opt = {});

// Classical-noise steady state: sxx = T/(m W_eff^2), spp = m T, with
// m W_eff^2 = m W^2 - K^(0).
SteadyCovariances classical_exact_covariances(const OscillatorParams& p, const SpectralDensity& j,
                                              double temperature);

}  // namespace qcl
