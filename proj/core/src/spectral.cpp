#include "qcl/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include <Eigen/Core>

#include "qcl/csv.hpp"
#include "qcl/error.hpp"
#include "qcl/quadrature.hpp"

namespace qcl {

namespace {

constexpr double kPi = std::numbers::pi;

bool positive_finite(double x) { return std::isfinite(x) && x > 0.0; }

template <class... Ts>
struct Overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

double tabulated_eval(const Tabulated& t, double w) {
    if (w < t.grid.front() || w > t.grid.back()) return 0.0;
    const auto it = std::upper_bound(t.grid.begin(), t.grid.end(), w);
    if (it == t.grid.end()) return t.values.back();
    const auto i = static_cast<std::size_t>(it - t.grid.begin());
    const double x0 = t.grid[i - 1];
    const double x1 = t.grid[i];
    const double f = (w - x0) / (x1 - x0);
    return t.values[i - 1] + f * (t.values[i] - t.values[i - 1]);
}

quad::Options tight() {
    quad::Options o;
    o.abs_tol = 1e-15;
    o.rel_tol = 1e-12;
    o.max_intervals = 50000;
    return o;
}

// Integral of f over the support of J, split at J's features and `extra`.
template <class F>
auto integrate_support(const SpectralDensity& j, F&& f, std::vector<double> extra,
                       const quad::Options& opt) {
    std::vector<double> br = j.features();
    br.insert(br.end(), extra.begin(), extra.end());
    if (const auto* t = std::get_if<Tabulated>(&j.variant())) {
        return quad::integrate(f, t->grid.front(), t->grid.back(), br, opt).value;
    }
    return quad::integrate_semi_infinite(f, 0.0, br, opt).value;
}

}  // namespace

SpectralDensity::SpectralDensity(Lorentzian l) : v_(l) {
    if (!(std::isfinite(l.lambda) && l.lambda >= 0.0))
        throw std::invalid_argument("Lorentzian: lambda must be finite and >= 0");
    if (!positive_finite(l.omega0)) throw std::invalid_argument("Lorentzian: omega0 must be > 0");
    if (!positive_finite(l.gamma_width))
        throw std::invalid_argument("Lorentzian: gamma_width must be > 0");
}

SpectralDensity::SpectralDensity(OhmicExpCutoff o) : v_(o) {
    if (!positive_finite(o.gamma_damp)) throw std::invalid_argument("Ohmic: gamma_damp must be > 0");
    if (!positive_finite(o.omega_cutoff))
        throw std::invalid_argument("Ohmic: omega_cutoff must be > 0");
}

SpectralDensity::SpectralDensity(Tabulated t) : v_(std::move(t)) {
    const auto& tab = std::get<Tabulated>(v_);
    if (tab.grid.size() < 2 || tab.grid.size() != tab.values.size())
        throw std::invalid_argument("Tabulated: need >= 2 grid points and matching values");
    if (!(std::isfinite(tab.grid.front()) && tab.grid.front() >= 0.0))
        throw std::invalid_argument("Tabulated: grid must start at a frequency >= 0");
    for (std::size_t i = 0; i < tab.grid.size(); ++i) {
        if (!std::isfinite(tab.grid[i]) || !std::isfinite(tab.values[i]) || tab.values[i] < 0.0)
            throw std::invalid_argument("Tabulated: values must be finite and nonnegative");
        if (i > 0 && !(tab.grid[i] > tab.grid[i - 1]))
            throw std::invalid_argument("Tabulated: grid must be strictly increasing");
    }
    if (tab.grid.front() == 0.0 && tab.values.front() != 0.0)
        throw std::invalid_argument("Tabulated: J(0) must vanish");
}

bool SpectralDensity::is_zero() const noexcept {
    return std::visit(Overloaded{
                          [](const Lorentzian& l) { return l.lambda == 0.0; },
                          [](const OhmicExpCutoff&) { return false; },
                          [](const Tabulated& t) {
                              return std::all_of(t.values.begin(), t.values.end(),
                                                 [](double v) { return v == 0.0; });
                          },
                      },
                      v_);
}

std::vector<double> SpectralDensity::features() const {
    return std::visit(Overloaded{
                          [](const Lorentzian& l) {
                              std::vector<double> f{l.omega0, l.omega0 + l.gamma_width};
                              if (l.omega0 > l.gamma_width) f.push_back(l.omega0 - l.gamma_width);
                              const double w1sq = l.omega0 * l.omega0 - 0.25 * l.gamma_width * l.gamma_width;
                              if (w1sq > 0.0) f.push_back(std::sqrt(w1sq));
                              return f;
                          },
                          [](const OhmicExpCutoff& o) {
                              return std::vector<double>{o.omega_cutoff, 5.0 * o.omega_cutoff};
                          },
                          [](const Tabulated& t) { return t.grid; },
                      },
                      v_);
}

std::string SpectralDensity::describe() const {
    using csv::format_number;
    return std::visit(Overloaded{
                          [](const Lorentzian& l) {
                              return "lorentzian(lambda=" + format_number(l.lambda) + ",omega0=" +
                                     format_number(l.omega0) + ",gamma=" + format_number(l.gamma_width) + ")";
                          },
                          [](const OhmicExpCutoff& o) {
                              return "ohmic(gamma=" + format_number(o.gamma_damp) +
                                     ",omega_cutoff=" + format_number(o.omega_cutoff) + ")";
                          },
                          [](const Tabulated& t) {
                              return "tabulated(points=" + std::to_string(t.grid.size()) + ",range=[" +
                                     format_number(t.grid.front()) + "," + format_number(t.grid.back()) + "])";
                          },
                      },
                      v_);
}

std::string BathSpec::describe() const {
    return j.describe() + ";T=" + csv::format_number(temperature) + ";noise=" + to_string(kind);
}

const char* to_string(NoiseKind k) noexcept {
    return k == NoiseKind::Quantum ? "quantum" : "classical";
}

void validate(const OscillatorParams& p) {
    if (!positive_finite(p.mass)) throw std::invalid_argument("oscillator mass must be > 0");
    if (!positive_finite(p.omega)) throw std::invalid_argument("oscillator frequency must be > 0");
}

void validate(const BathSpec& b) {
    if (!(std::isfinite(b.temperature) && b.temperature >= 0.0))
        throw std::invalid_argument("bath temperature must be finite and >= 0");
}

double eval_spectral_density(const SpectralDensity& j, double omega) {
    if (!(omega >= 0.0)) throw std::domain_error("spectral density: frequency must be >= 0");
    return std::visit(Overloaded{
                          [omega](const Lorentzian& l) {
                              const double d = l.omega0 * l.omega0 - omega * omega;
                              const double gw = l.gamma_width * omega;
                              return l.lambda * l.lambda * gw / (kPi * (d * d + gw * gw));
                          },
                          [omega](const OhmicExpCutoff& o) {
                              return o.gamma_damp * omega / kPi * std::exp(-omega / o.omega_cutoff);
                          },
                          [omega](const Tabulated& t) { return tabulated_eval(t, omega); },
                      },
                      j.variant());
}

double spectral_density_over_omega(const SpectralDensity& j, double omega) {
    if (!(omega >= 0.0)) throw std::domain_error("spectral density: frequency must be >= 0");
    return std::visit(Overloaded{
                          [omega](const Lorentzian& l) {
                              const double d = l.omega0 * l.omega0 - omega * omega;
                              const double g = l.gamma_width;
                              return l.lambda * l.lambda * g / (kPi * (d * d + g * g * omega * omega));
                          },
                          [omega](const OhmicExpCutoff& o) {
                              return o.gamma_damp / kPi * std::exp(-omega / o.omega_cutoff);
                          },
                          [omega](const Tabulated& t) {
                              if (omega > 0.0) return tabulated_eval(t, omega) / omega;
                              if (t.grid.front() > 0.0) return 0.0;
                              return t.values[1] / t.grid[1];
                          },
                      },
                      j.variant());
}

double eval_memory_kernel_time(const SpectralDensity& j, double tau) {
    if (!(tau > 0.0)) return 0.0;
    if (const auto* l = j.as_lorentzian()) {
        const double lam2 = l->lambda * l->lambda;
        const double damp = std::exp(-0.5 * l->gamma_width * tau);
        const double w1sq = l->omega0 * l->omega0 - 0.25 * l->gamma_width * l->gamma_width;
        const double arg2 = w1sq * tau * tau;
        if (std::abs(arg2) < 1e-8) {
            // Critically damped neighbourhood: sin(w1 t)/w1 -> t (1 - w1^2 t^2 / 6).
            return lam2 * damp * tau * (1.0 - arg2 / 6.0 + arg2 * arg2 / 120.0);
        }
        if (w1sq > 0.0) {
            const double w1 = std::sqrt(w1sq);
            return lam2 * damp * std::sin(w1 * tau) / w1;
        }
        const double k = std::sqrt(-w1sq);
        // e^{-G t/2} sinh(k t) with k < G/2; written to avoid overflow.
        return lam2 * 0.5 * (std::exp((k - 0.5 * l->gamma_width) * tau) -
                             std::exp((-k - 0.5 * l->gamma_width) * tau)) /
               k;
    }

    auto integrand = [&j, tau](double w) { return eval_spectral_density(j, w) * std::sin(w * tau); };
    std::vector<double> br;
    double upper = 0.0;
    if (const auto* o = std::get_if<OhmicExpCutoff>(&j.variant())) {
        upper = 45.0 * o->omega_cutoff;
    } else {
        const auto& t = std::get<Tabulated>(j.variant());
        br = t.grid;
        upper = t.grid.back();
    }
    const double period = kPi / tau;
    const double cycles = upper / period;
    const double stride = period * std::max(1.0, std::ceil(cycles / 4000.0));
    for (double w = stride; w < upper; w += stride) br.push_back(w);
    quad::Options opt = tight();
    opt.abs_tol = 1e-14;
    return 2.0 * quad::integrate(integrand, 0.0, upper, br, opt).value;
}

double static_kernel(const SpectralDensity& j) {
    return std::visit(Overloaded{
                          [](const Lorentzian& l) {
                              return l.lambda * l.lambda / (l.omega0 * l.omega0);
                          },
                          [](const OhmicExpCutoff& o) {
                              return 2.0 * o.gamma_damp * o.omega_cutoff / kPi;
                          },
                          [&j](const Tabulated&) {
                              auto f = [&j](double w) { return 2.0 * spectral_density_over_omega(j, w); };
                              return integrate_support(j, f, {}, tight());
                          },
                      },
                      j.variant());
}

double principal_value_kernel(const SpectralDensity& j, double omega) {
    if (!(omega >= 0.0)) throw std::domain_error("principal value: frequency must be >= 0");
    if (omega == 0.0) return static_kernel(j);
    auto f = [&j, omega](double xi) { return 2.0 * xi * eval_spectral_density(j, xi) / (xi + omega); };
    // Fold the inner part about the pole:
    //   PV int_0^{2w} f/(xi - w) = int_0^w [f(w + u) - f(w - u)] / u du,
    // whose integrand is smooth; the cancellation near u = 0 costs ~eps/u, so
    // the absolute target is set well above that floor.
    auto folded = [&f, omega](double u) { return (f(omega + u) - f(omega - u)) / u; };
    auto far = [&f, omega](double xi) { return f(xi) / (xi - omega); };

    std::vector<double> br = j.features();
    const quad::Options opt = tight();
    std::vector<double> fold_br;
    for (double x : br) {
        const double u = std::abs(x - omega);
        if (u > 0.0 && u < omega) fold_br.push_back(u);
    }
    quad::Options inner_opt = opt;
    inner_opt.abs_tol = 1e-13 * std::max(1.0, std::abs(f(omega)));
    const double inner = quad::integrate(folded, 0.0, omega, fold_br, inner_opt).value;
    br.push_back(omega);

    double outer = 0.0;
    if (const auto* t = std::get_if<Tabulated>(&j.variant())) {
        if (t->grid.back() > 2.0 * omega)
            outer = quad::integrate(far, std::max(2.0 * omega, t->grid.front()), t->grid.back(), br, opt)
                        .value;
    } else {
        outer = quad::integrate_semi_infinite(far, 2.0 * omega, br, opt).value;
    }
    return inner + outer;
}

Complex eval_kernel_laplace(const SpectralDensity& j, Complex s) {
    if (!std::isfinite(s.real()) || !std::isfinite(s.imag()))
        throw std::domain_error("kernel Laplace transform: non-finite argument");
    if (s.real() < 0.0) throw std::domain_error("kernel Laplace transform: requires Re(s) >= 0");
    if (const auto* l = j.as_lorentzian()) {
        const Complex d = s * s + l->gamma_width * s + l->omega0 * l->omega0;
        if (std::abs(d) == 0.0) throw SingularityError("kernel Laplace transform: s is a kernel pole");
        return l->lambda * l->lambda / d;
    }
    if (s.real() <= 1e-10 * std::abs(s)) {
        const double nu = s.imag();
        if (nu == 0.0) return {static_kernel(j), 0.0};
        const double a = std::abs(nu);
        const Complex v{principal_value_kernel(j, a), -kPi * eval_spectral_density(j, a)};
        return nu > 0.0 ? v : std::conj(v);
    }
    const Complex s2 = s * s;
    auto f = [&j, s2](double w) {
        const Complex v = 2.0 * eval_spectral_density(j, w) * w / (s2 + w * w);
        return Eigen::Vector2d(v.real(), v.imag());
    };
    const Eigen::Vector2d r = integrate_support(j, f, {std::abs(s)}, tight());
    return {r[0], r[1]};
}

Complex eval_kernel_fourier(const SpectralDensity& j, double omega) {
    return eval_kernel_laplace(j, Complex{0.0, -omega});
}

double renormalized_frequency_sq(const OscillatorParams& p, const SpectralDensity& j) {
    validate(p);
    const double w2 = p.omega * p.omega;
    if (!p.counter_term) return w2;
    return w2 + static_kernel(j) / p.mass;
}

double eval_noise_spectrum(NoiseKind kind, double omega, double temperature) {
    if (!(omega >= 0.0)) throw std::domain_error("noise spectrum: frequency must be >= 0");
    if (!(temperature >= 0.0)) throw std::domain_error("noise spectrum: temperature must be >= 0");
    if (kind == NoiseKind::Classical) return 2.0 * temperature;
    if (temperature == 0.0) return omega;
    const double x = omega / (2.0 * temperature);
    if (x < 1e-4) return 2.0 * temperature * (1.0 + x * x / 3.0 - x * x * x * x / 45.0);
    if (x > 20.0) return omega;
    return omega / std::tanh(x);
}

double eval_force_psd(const BathSpec& b, double omega) {
    if (!(omega >= 0.0)) throw std::domain_error("force PSD: frequency must be >= 0");
    return kPi * spectral_density_over_omega(b.j, omega) *
           eval_noise_spectrum(b.kind, omega, b.temperature);
}

}  // namespace qcl
