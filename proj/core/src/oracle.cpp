#include "qcl/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include "qcl/error.hpp"

namespace qcl {

namespace {

constexpr double kPi = std::numbers::pi;

const Lorentzian& require_lorentzian(const SpectralDensity& j, const char* who) {
    const auto* l = j.as_lorentzian();
    if (!l) throw std::invalid_argument(std::string(who) + ": requires a Lorentzian spectral density");
    return *l;
}

double coth_or_one(double x) {
    if (x > 20.0) return 1.0;
    return 1.0 / std::tanh(x);
}

// Breakpoints around the resonances of the damped oscillator.
std::vector<double> resonance_points(const OscillatorParams& p, const SpectralDensity& j) {
    std::vector<double> br = j.features();
    br.push_back(std::sqrt(renormalized_frequency_sq(p, j)));
    br.push_back(p.omega);
    if (j.as_lorentzian() && !j.is_zero()) {
        try {
            const GFunctions g = g_functions(p, j);
            for (const Complex& pk : g.poles) {
                const double c = std::abs(pk.imag());
                const double w = std::abs(pk.real());
                for (double f : {-10.0, -3.0, -1.0, 0.0, 1.0, 3.0, 10.0}) {
                    const double x = c + f * w;
                    if (x > 0.0) br.push_back(x);
                }
            }
        } catch (const DegeneratePoleError&) {
            // Confluent poles only lose the extra breakpoints.
        }
    }
    return br;
}

double static_stiffness(const OscillatorParams& p, const SpectralDensity& j) {
    return p.mass * renormalized_frequency_sq(p, j) - static_kernel(j);
}

void require_stable(const OscillatorParams& p, const SpectralDensity& j, const char* who) {
    const double k = static_stiffness(p, j);
    if (!(k > 0.0)) {
        std::ostringstream msg;
        msg << who << ": effective static stiffness " << k << " is not positive; no steady state";
        throw InstabilityError(msg.str());
    }
}

}  // namespace

double GFunctions::g2(double t) const {
    Complex s{0.0, 0.0};
    for (std::size_t k = 0; k < 4; ++k) s += residues_g2[k] * std::exp(poles[k] * t);
    return s.real();
}

double GFunctions::g1(double t) const {
    Complex s{0.0, 0.0};
    for (std::size_t k = 0; k < 4; ++k) s += residues_g2[k] * poles[k] * std::exp(poles[k] * t);
    return params.mass * s.real();
}

double GFunctions::g3(double t) const {
    Complex s{0.0, 0.0};
    for (std::size_t k = 0; k < 4; ++k)
        s += residues_g2[k] * poles[k] * poles[k] * std::exp(poles[k] * t);
    return params.mass * params.mass * s.real();
}

bool GFunctions::stable() const noexcept {
    return std::all_of(poles.begin(), poles.end(), [](const Complex& p) { return p.real() < 0.0; });
}

double GFunctions::slowest_rate() const noexcept {
    double r = std::numeric_limits<double>::infinity();
    for (const auto& p : poles) r = std::min(r, -p.real());
    return r;
}

GFunctions g_functions(const OscillatorParams& p, const SpectralDensity& j) {
    validate(p);
    const Lorentzian& l = require_lorentzian(j, "g_functions");
    GFunctions g;
    g.params = p;
    g.bath = l;
    const double w2 = renormalized_frequency_sq(p, j);
    g.omega_bar_sq = w2;
    const double G = l.gamma_width;
    const double w02 = l.omega0 * l.omega0;
    const double lam2 = l.lambda * l.lambda;

    // Monic quartic s^4 + c3 s^3 + c2 s^2 + c1 s + c0.
    const double c3 = G;
    const double c2 = w02 + w2;
    const double c1 = G * w2;
    const double c0 = w2 * w02 - lam2 / p.mass;
    Eigen::Matrix4d comp = Eigen::Matrix4d::Zero();
    comp(0, 0) = -c3;
    comp(0, 1) = -c2;
    comp(0, 2) = -c1;
    comp(0, 3) = -c0;
    comp(1, 0) = 1.0;
    comp(2, 1) = 1.0;
    comp(3, 2) = 1.0;
    Eigen::EigenSolver<Eigen::Matrix4d> es(comp, false);
    if (es.info() != Eigen::Success) throw NumericalError("g_functions: eigenvalue solver failed", 0.0);

    auto q = [&](Complex s) { return (((s + c3) * s + c2) * s + c1) * s + c0; };
    auto dq = [&](Complex s) { return ((4.0 * s + 3.0 * c3) * s + 2.0 * c2) * s + c1; };
    for (int k = 0; k < 4; ++k) {
        Complex s = es.eigenvalues()[k];
        for (int it = 0; it < 4; ++it) {
            const Complex d = dq(s);
            if (std::abs(d) == 0.0) break;
            const Complex step = q(s) / d;
            s -= step;
            if (std::abs(step) <= 1e-16 * std::max(1.0, std::abs(s))) break;
        }
        g.poles[static_cast<std::size_t>(k)] = s;
    }
    std::sort(g.poles.begin(), g.poles.end(), [](const Complex& a, const Complex& b) {
        if (a.real() != b.real()) return a.real() < b.real();
        return a.imag() < b.imag();
    });

    for (std::size_t a = 0; a < 4; ++a) {
        for (std::size_t b = a + 1; b < 4; ++b) {
            const double sep = std::abs(g.poles[a] - g.poles[b]);
            // A double root is only resolved to about sqrt(eps) by the eigen solver.
            if (sep < 1e-6 * std::max(1.0, std::abs(g.poles[a]))) {
                std::ostringstream msg;
                msg << "g_functions: repeated characteristic roots near " << g.poles[a].real() << "+"
                    << g.poles[a].imag() << "i (separation " << sep << ")";
                throw DegeneratePoleError(msg.str());
            }
        }
    }
    for (std::size_t k = 0; k < 4; ++k) {
        const Complex s = g.poles[k];
        Complex den{p.mass, 0.0};
        for (std::size_t m = 0; m < 4; ++m) {
            if (m != k) den *= s - g.poles[m];
        }
        g.residues_g2[k] = (s * s + G * s + w02) / den;
    }
    return g;
}

Means mean_evolution(const GFunctions& g, Means mu0, double t) {
    if (!(t >= 0.0)) throw std::domain_error("mean_evolution: t must be >= 0");
    if (t == 0.0) return mu0;
    const double g1 = g.g1(t);
    const double g2 = g.g2(t);
    const double g3 = g.g3(t);
    return {g1 * mu0.mu_x + g2 * mu0.mu_p, g3 * mu0.mu_x + g1 * mu0.mu_p};
}

MomentState covariance_evolution(const GFunctions& g, const BathSpec& b, const MomentState& initial,
                                 double t, const quad::Options& opt) {
    if (!(t >= 0.0)) throw std::domain_error("covariance_evolution: t must be >= 0");
    validate(b);
    const Lorentzian& l = require_lorentzian(b.j, "covariance_evolution");
    if (l.lambda != g.bath.lambda || l.omega0 != g.bath.omega0 || l.gamma_width != g.bath.gamma_width)
        throw std::invalid_argument("covariance_evolution: bath does not match the g-functions");
    if (t == 0.0) return initial;

    const Means mu = mean_evolution(g, {initial.mu_x, initial.mu_p}, t);
    const double g1 = g.g1(t);
    const double g2 = g.g2(t);
    const double g3 = g.g3(t);
    const double sxx0 = initial.sigma_xx;
    const double sxp0 = initial.sigma_xp;
    const double spp0 = initial.sigma_pp;
    MomentState out;
    out.mu_x = mu.mu_x;
    out.mu_p = mu.mu_p;
    out.sigma_xx = g1 * g1 * sxx0 + 2.0 * g1 * g2 * sxp0 + g2 * g2 * spp0;
    out.sigma_xp = g1 * g3 * sxx0 + (g1 * g1 + g2 * g3) * sxp0 + g1 * g2 * spp0;
    out.sigma_pp = g3 * g3 * sxx0 + 2.0 * g1 * g3 * sxp0 + g1 * g1 * spp0;
    if (b.j.is_zero()) return out;

    // A_j(t, w) = int_0^t g_j(u) e^{-i w u} du in closed form per pole.
    const double m = g.params.mass;
    std::array<Complex, 4> c1{};
    std::array<Complex, 4> ept{};
    for (std::size_t k = 0; k < 4; ++k) {
        c1[k] = m * g.residues_g2[k] * g.poles[k];
        ept[k] = std::exp(g.poles[k] * t);
    }
    auto integrand = [&](double w) {
        const Complex phase = std::exp(Complex{0.0, -w * t});
        Complex a1{0.0, 0.0};
        Complex a2{0.0, 0.0};
        for (std::size_t k = 0; k < 4; ++k) {
            const Complex z = g.poles[k] - Complex{0.0, w};
            const Complex f = (ept[k] * phase - 1.0) / z;
            a2 += g.residues_g2[k] * f;
            a1 += c1[k] * f;
        }
        const double weight = spectral_density_over_omega(b.j, w) * eval_noise_spectrum(b.kind, w, b.temperature);
        return Eigen::Vector3d(weight * std::norm(a2), weight * (a2 * std::conj(a1)).real(),
                               weight * std::norm(a1));
    };

    std::vector<double> br = resonance_points(g.params, b.j);
    double wmax = 0.0;
    for (double x : br) wmax = std::max(wmax, x);
    const double span = 4.0 * wmax;
    const double period = kPi / t;
    const double stride = period * std::max(1.0, std::ceil(span / period / 4000.0));
    for (double w = stride; w < span; w += stride) br.push_back(w);
    const Eigen::Vector3d inh = quad::integrate_semi_infinite(integrand, 0.0, br, opt).value;
    out.sigma_xx += inh[0];
    out.sigma_xp += inh[1];
    out.sigma_pp += inh[2];
    return out;
}

const char* to_string(SteadyMethod m) noexcept {
    switch (m) {
        case SteadyMethod::Quadrature: return "quadrature";
        case SteadyMethod::Matsubara: return "matsubara";
        case SteadyMethod::Gibbs: return "gibbs";
        case SteadyMethod::MeanForce: return "mean_force";
        case SteadyMethod::ClassicalExact: return "classical_exact";
    }
    return "unknown";
}

SteadyCovariances steady_covariances_quadrature(const OscillatorParams& p, const BathSpec& b,
                                                const quad::Options& opt) {
    validate(p);
    validate(b);
    const double m = p.mass;
    const double w2 = renormalized_frequency_sq(p, b.j);
    SteadyCovariances out;
    out.method = SteadyMethod::Quadrature;
    if (b.j.is_zero()) {
        // Weak-coupling limit: the resonance collapses onto the bare frequency.
        const double w = std::sqrt(w2);
        const double n = eval_noise_spectrum(b.kind, w, b.temperature);
        out.sigma_xx = n / (2.0 * m * w2);
        out.sigma_pp = m * n / 2.0;
        return out;
    }
    require_stable(p, b.j, "steady_covariances_quadrature");
    auto integrand = [&](double w) {
        const Complex den = m * (w2 - w * w) - eval_kernel_laplace(b.j, Complex{0.0, w});
        const double g2sq = 1.0 / std::norm(den);
        const double weight =
            spectral_density_over_omega(b.j, w) * eval_noise_spectrum(b.kind, w, b.temperature) * g2sq;
        return Eigen::Vector2d(weight, m * m * w * w * weight);
    };
    const std::vector<double> br = resonance_points(p, b.j);
    const Eigen::Vector2d r = quad::integrate_semi_infinite(integrand, 0.0, br, opt).value;
    out.sigma_xx = r[0];
    out.sigma_pp = r[1];
    return out;
}

SteadyCovariances steady_covariances_matsubara(const OscillatorParams& p, const SpectralDensity& j,
                                               double temperature) {
    validate(p);
    const Lorentzian& l = require_lorentzian(j, "steady_covariances_matsubara");
    if (!(std::isfinite(temperature) && temperature > 0.0))
        throw std::domain_error("steady_covariances_matsubara: requires T > 0");
    require_stable(p, j, "steady_covariances_matsubara");
    const double m = p.mass;
    const double w2 = renormalized_frequency_sq(p, j);
    const double lam2 = l.lambda * l.lambda;
    const double G = l.gamma_width;
    const double w02 = l.omega0 * l.omega0;
    auto g2hat = [&](double nu) { return 1.0 / (m * (nu * nu + w2) - lam2 / (nu * nu + G * nu + w02)); };

    const double T = temperature;
    const long double head_x = T * g2hat(0.0);
    const long double head_p = m * T;
    long double sum_x = 0.0L;
    long double sum_p = 0.0L;
    constexpr std::size_t kMaxTerms = 200'000'000;
    double last_x = 0.0;
    double last_p = 0.0;
    std::size_t n = 1;
    for (;; ++n) {
        if (n > kMaxTerms) {
            throw NumericalError("steady_covariances_matsubara: series did not converge",
                                 static_cast<double>(2.0L * T * last_x / (head_x + 2.0L * T * sum_x)));
        }
        const double nu = 2.0 * kPi * T * static_cast<double>(n);
        const double gx = g2hat(nu);
        last_x = gx;
        last_p = 1.0 - m * nu * nu * gx;
        sum_x += last_x;
        sum_p += last_p;
        const bool done_x = 2.0L * T * last_x < 1e-12L * (head_x + 2.0L * T * sum_x);
        const bool done_p = 2.0L * m * T * std::abs(last_p) < 1e-12L * (head_p + 2.0L * m * T * sum_p);
        if (done_x && done_p) break;
    }
    // Terms decay as c/n^2; add the Euler-Maclaurin tail of sum_{k>n} 1/k^2.
    const long double nn = static_cast<long double>(n);
    const long double tail = 1.0L / nn - 1.0L / (2.0L * nn * nn) + 1.0L / (6.0L * nn * nn * nn);
    sum_x += last_x * nn * nn * tail;
    sum_p += last_p * nn * nn * tail;

    SteadyCovariances out;
    out.method = SteadyMethod::Matsubara;
    out.sigma_xx = static_cast<double>(head_x + 2.0L * T * sum_x);
    out.sigma_pp = static_cast<double>(head_p + 2.0L * m * T * sum_p);
    return out;
}

SteadyCovariances gibbs_covariances(const OscillatorParams& p, double temperature) {
    validate(p);
    if (!(temperature >= 0.0)) throw std::domain_error("gibbs_covariances: T must be >= 0");
    const double c = temperature == 0.0 ? 1.0 : coth_or_one(p.omega / (2.0 * temperature));
    SteadyCovariances out;
    out.method = SteadyMethod::Gibbs;
    out.sigma_xx = c / (2.0 * p.mass * p.omega);
    out.sigma_pp = p.mass * p.omega * c / 2.0;
    return out;
}

SteadyCovariances mean_force_covariances(const OscillatorParams& p, const SpectralDensity& j,
                                         double temperature, const quad::Options& opt) {
    validate(p);
    if (!(temperature >= 0.0)) throw std::domain_error("mean_force_covariances: T must be >= 0");
    if (j.is_zero()) {
        SteadyCovariances g = gibbs_covariances(p, temperature);
        g.method = SteadyMethod::MeanForce;
        return g;
    }
    require_stable(p, j, "mean_force_covariances");
    const double m = p.mass;
    const double w2 = renormalized_frequency_sq(p, j);
    auto integrand = [&](double w) {
        const double re = m * (w2 - w * w) - principal_value_kernel(j, w);
        const double im = kPi * eval_spectral_density(j, w);
        // Im chi / w without the 0/0 at w = 0.
        const double im_chi_over_w = kPi * spectral_density_over_omega(j, w) / (re * re + im * im);
        const double n = eval_noise_spectrum(NoiseKind::Quantum, w, temperature);
        return Eigen::Vector2d(n * im_chi_over_w / kPi, m * m * w * w * n * im_chi_over_w / kPi);
    };
    const std::vector<double> br = resonance_points(p, j);
    const Eigen::Vector2d r = quad::integrate_semi_infinite(integrand, 0.0, br, opt).value;
    SteadyCovariances out;
    out.method = SteadyMethod::MeanForce;
    out.sigma_xx = r[0];
    out.sigma_pp = r[1];
    return out;
}

SteadyCovariances classical_exact_covariances(const OscillatorParams& p, const SpectralDensity& j,
                                              double temperature) {
    validate(p);
    if (!(temperature >= 0.0)) throw std::domain_error("classical_exact_covariances: T must be >= 0");
    require_stable(p, j, "classical_exact_covariances");
    SteadyCovariances out;
    out.method = SteadyMethod::ClassicalExact;
    out.sigma_xx = temperature / static_stiffness(p, j);
    out.sigma_pp = p.mass * temperature;
    return out;
}

}  // namespace qcl
