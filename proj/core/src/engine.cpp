#include "qcl/engine.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <tuple>

#include <Eigen/Eigenvalues>

#include "qcl/parallel.hpp"
#include "qcl/rng.hpp"

namespace qcl {

namespace {

constexpr double kPi = std::numbers::pi;

std::size_t step_count(const SimConfig& cfg) {
    return static_cast<std::size_t>(std::llround(cfg.t_final / cfg.dt));
}

// Step indices at which samples are recorded.
std::vector<std::size_t> sample_steps(const SimConfig& cfg) {
    const std::size_t n = step_count(cfg);
    std::vector<std::size_t> out;
    for (std::size_t k = 0; k <= n; k += cfg.sample_every) out.push_back(k);
    if (out.back() != n) out.push_back(n);
    return out;
}

void check_resolution(double dt, double max_freq) {
    const double limit = 0.1 * 2.0 * kPi / max_freq;
    if (dt > limit) {
        std::ostringstream msg;
        msg << "dt=" << dt << " does not resolve the fastest frequency " << max_freq
            << "; use dt <= " << limit;
        throw std::invalid_argument(msg.str());
    }
}

// Which oscillators each bath drives, and how momenta map to velocities.
struct HeatMap {
    Eigen::MatrixXd minv;
    std::vector<std::vector<std::size_t>> osc_of_bath;
};

HeatMap heat_map(const EmbeddedLaw& law) {
    HeatMap h;
    h.minv = law.minv;
    h.osc_of_bath.resize(law.n_baths());
    for (const auto& a : law.aux) h.osc_of_bath[a.bath].push_back(a.osc);
    return h;
}

// (F + u) . dx/dt summed over the oscillators of `bath` at sample k.
double heat_sample(const Trajectory& tr, const HeatMap& h, std::size_t bath, std::size_t k) {
    const std::size_t n = tr.n_osc;
    double q = 0.0;
    for (std::size_t i : h.osc_of_bath[bath]) {
        double v = 0.0;
        for (std::size_t c = 0; c < n; ++c) v += h.minv(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) * tr.p[k * n + c];
        q += (tr.force[k * n + i] + tr.u[k * n + i]) * v;
    }
    return q;
}

// Bivariate power sums sum A^i B^j for i + j <= 4.
constexpr std::array<std::array<int, 2>, 15> kPowers = {{{0, 0}, {1, 0}, {0, 1}, {2, 0}, {1, 1},
                                                         {0, 2}, {3, 0}, {2, 1}, {1, 2}, {0, 3},
                                                         {4, 0}, {3, 1}, {2, 2}, {1, 3}, {0, 4}}};

constexpr int power_slot(int i, int j) {
    for (int s = 0; s < 15; ++s) {
        if (kPowers[static_cast<std::size_t>(s)][0] == i && kPowers[static_cast<std::size_t>(s)][1] == j) return s;
    }
    return -1;
}

constexpr double binom(int n, int k) {
    double r = 1.0;
    for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
    return r;
}

std::size_t pair_index(std::size_t a, std::size_t b, std::size_t dim) {
    return a * dim - a * (a + 1) / 2 + (b - a - 1);
}

struct Accumulator {
    std::size_t ns = 0;
    std::size_t dim = 0;
    std::size_t npairs = 0;
    std::size_t nb = 0;
    std::vector<double> sums;
    std::vector<double> heat_sum;
    std::vector<double> heat_sq;
    std::vector<double> window_sum;
    std::vector<double> window_cross;
    std::size_t count = 0;

    Accumulator(std::size_t n_samples, std::size_t n_osc, std::size_t n_baths)
        : ns(n_samples), dim(2 * n_osc), npairs(dim * (dim - 1) / 2), nb(n_baths),
          sums(ns * npairs * 15, 0.0), heat_sum(ns * nb, 0.0), heat_sq(ns * nb, 0.0),
          window_sum(nb, 0.0), window_cross(nb * nb, 0.0) {}

    void add(const Trajectory& tr, const std::vector<double>& shift, const HeatMap& h, double window_start) {
        const std::size_t n = tr.n_osc;
        std::vector<double> c(dim);
        std::vector<std::array<double, 5>> pw(dim);
        for (std::size_t k = 0; k < ns; ++k) {
            for (std::size_t i = 0; i < n; ++i) {
                c[i] = tr.x[k * n + i] - shift[k * dim + i];
                c[n + i] = tr.p[k * n + i] - shift[k * dim + n + i];
            }
            for (std::size_t a = 0; a < dim; ++a) {
                pw[a][0] = 1.0;
                for (int e = 1; e < 5; ++e) pw[a][static_cast<std::size_t>(e)] = pw[a][static_cast<std::size_t>(e - 1)] * c[a];
            }
            double* row = sums.data() + k * npairs * 15;
            for (std::size_t a = 0; a < dim; ++a) {
                for (std::size_t b = a + 1; b < dim; ++b) {
                    double* s = row + pair_index(a, b, dim) * 15;
                    for (std::size_t q = 0; q < 15; ++q)
                        s[q] += pw[a][static_cast<std::size_t>(kPowers[q][0])] * pw[b][static_cast<std::size_t>(kPowers[q][1])];
                }
            }
        }
        std::vector<double> wavg(nb, 0.0);
        for (std::size_t b = 0; b < nb; ++b) {
            std::size_t in_window = 0;
            for (std::size_t k = 0; k < ns; ++k) {
                const double q = heat_sample(tr, h, b, k);
                heat_sum[k * nb + b] += q;
                heat_sq[k * nb + b] += q * q;
                if (tr.t[k] >= window_start) {
                    wavg[b] += q;
                    ++in_window;
                }
            }
            if (in_window > 0) wavg[b] /= static_cast<double>(in_window);
        }
        for (std::size_t a = 0; a < nb; ++a) {
            window_sum[a] += wavg[a];
            for (std::size_t b = 0; b < nb; ++b) window_cross[a * nb + b] += wavg[a] * wavg[b];
        }
        ++count;
    }

    void merge(const Accumulator& o) {
        for (std::size_t i = 0; i < sums.size(); ++i) sums[i] += o.sums[i];
        for (std::size_t i = 0; i < heat_sum.size(); ++i) {
            heat_sum[i] += o.heat_sum[i];
            heat_sq[i] += o.heat_sq[i];
        }
        for (std::size_t i = 0; i < nb; ++i) window_sum[i] += o.window_sum[i];
        for (std::size_t i = 0; i < window_cross.size(); ++i) window_cross[i] += o.window_cross[i];
        count += o.count;
    }
};

// Central moments mu_ij (i + j <= 4) of a pair from shifted power sums.
std::array<double, 15> central_moments(const double* s, double count, double& mean_a, double& mean_b) {
    std::array<double, 15> raw{};
    for (std::size_t q = 0; q < 15; ++q) raw[q] = s[q] / count;
    mean_a = raw[static_cast<std::size_t>(power_slot(1, 0))];
    mean_b = raw[static_cast<std::size_t>(power_slot(0, 1))];
    std::array<double, 15> mu{};
    for (std::size_t q = 0; q < 15; ++q) {
        const int i = kPowers[q][0];
        const int j = kPowers[q][1];
        double acc = 0.0;
        for (int k = 0; k <= i; ++k) {
            for (int l = 0; l <= j; ++l) {
                acc += binom(i, k) * binom(j, l) * raw[static_cast<std::size_t>(power_slot(k, l))] *
                       std::pow(-mean_a, i - k) * std::pow(-mean_b, j - l);
            }
        }
        mu[q] = acc;
    }
    return mu;
}

double mu_at(const std::array<double, 15>& mu, int i, int j) { return mu[static_cast<std::size_t>(power_slot(i, j))]; }

PhaseSpaceStats finalize(const Accumulator& acc, const std::vector<double>& shift, std::vector<double> times,
                         double window_start) {
    PhaseSpaceStats out;
    const std::size_t dim = acc.dim;
    const std::size_t n = dim / 2;
    const double N = static_cast<double>(acc.count);
    const double unbias = acc.count > 1 ? N / (N - 1.0) : 0.0;
    out.n_osc = n;
    out.n_traj = acc.count;
    out.degenerate = acc.count < 2;
    out.t = std::move(times);
    const auto d = static_cast<Eigen::Index>(dim);
    for (std::size_t k = 0; k < acc.ns; ++k) {
        Eigen::VectorXd mean(d), se_mean(d);
        Eigen::MatrixXd cov(d, d), se_cov(d, d);
        Eigen::VectorXd unc(static_cast<Eigen::Index>(n)), se_unc(static_cast<Eigen::Index>(n));
        const double* row = acc.sums.data() + k * acc.npairs * 15;
        for (std::size_t a = 0; a < dim; ++a) {
            for (std::size_t b = a + 1; b < dim; ++b) {
                double ma = 0.0;
                double mb = 0.0;
                const auto mu = central_moments(row + pair_index(a, b, dim) * 15, N, ma, mb);
                const auto ia = static_cast<Eigen::Index>(a);
                const auto ib = static_cast<Eigen::Index>(b);
                cov(ia, ib) = cov(ib, ia) = unbias * mu_at(mu, 1, 1);
                se_cov(ia, ib) = se_cov(ib, ia) = std::sqrt(std::max(0.0, mu_at(mu, 2, 2) - mu_at(mu, 1, 1) * mu_at(mu, 1, 1)) / N);
                // Marginals from the first pair that contains each coordinate.
                if (b == a + 1) {
                    mean(ia) = shift[k * dim + a] + ma;
                    cov(ia, ia) = unbias * mu_at(mu, 2, 0);
                    se_mean(ia) = std::sqrt(unbias * mu_at(mu, 2, 0) / N);
                    se_cov(ia, ia) = std::sqrt(std::max(0.0, mu_at(mu, 4, 0) - mu_at(mu, 2, 0) * mu_at(mu, 2, 0)) / N);
                    if (b == dim - 1) {
                        mean(ib) = shift[k * dim + b] + mb;
                        cov(ib, ib) = unbias * mu_at(mu, 0, 2);
                        se_mean(ib) = std::sqrt(unbias * mu_at(mu, 0, 2) / N);
                        se_cov(ib, ib) = std::sqrt(std::max(0.0, mu_at(mu, 0, 4) - mu_at(mu, 0, 2) * mu_at(mu, 0, 2)) / N);
                    }
                }
                if (b == a + n) {
                    // Uncertainty product of oscillator a via the delta method.
                    const double sxx = unbias * mu_at(mu, 2, 0);
                    const double spp = unbias * mu_at(mu, 0, 2);
                    const double sxp = unbias * mu_at(mu, 1, 1);
                    const double m20 = mu_at(mu, 2, 0), m02 = mu_at(mu, 0, 2), m11 = mu_at(mu, 1, 1);
                    const double v_xx = mu_at(mu, 4, 0) - m20 * m20;
                    const double v_pp = mu_at(mu, 0, 4) - m02 * m02;
                    const double v_xp = mu_at(mu, 2, 2) - m11 * m11;
                    const double c_xx_pp = mu_at(mu, 2, 2) - m20 * m02;
                    const double c_xx_xp = mu_at(mu, 3, 1) - m20 * m11;
                    const double c_pp_xp = mu_at(mu, 1, 3) - m02 * m11;
                    const double gx = spp, gp = sxx, gc = -2.0 * sxp;
                    const double var = gx * gx * v_xx + gp * gp * v_pp + gc * gc * v_xp + 2.0 * gx * gp * c_xx_pp +
                                       2.0 * gx * gc * c_xx_xp + 2.0 * gp * gc * c_pp_xp;
                    unc(ia) = sxx * spp - sxp * sxp;
                    se_unc(ia) = std::sqrt(std::max(0.0, var) / N);
                }
            }
        }
        out.mean.push_back(std::move(mean));
        out.se_mean.push_back(std::move(se_mean));
        out.cov.push_back(std::move(cov));
        out.se_cov.push_back(std::move(se_cov));
        out.uncertainty.push_back(std::move(unc));
        out.se_uncertainty.push_back(std::move(se_unc));
    }

    const std::size_t nb = acc.nb;
    out.heat.resize(nb);
    out.steady_heat_cov = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(nb), static_cast<Eigen::Index>(nb));
    for (std::size_t b = 0; b < nb; ++b) {
        HeatCurrent& h = out.heat[b];
        h.window_start = window_start;
        h.qdot.resize(acc.ns);
        h.se.resize(acc.ns);
        for (std::size_t k = 0; k < acc.ns; ++k) {
            const double m = acc.heat_sum[k * nb + b] / N;
            const double var = acc.count > 1 ? std::max(0.0, acc.heat_sq[k * nb + b] - N * m * m) / (N - 1.0) : 0.0;
            h.qdot[k] = m;
            h.se[k] = std::sqrt(var / N);
        }
        h.steady = acc.window_sum[b] / N;
    }
    for (std::size_t a = 0; a < nb; ++a) {
        for (std::size_t b = 0; b < nb; ++b) {
            const double ma = acc.window_sum[a] / N;
            const double mb = acc.window_sum[b] / N;
            const double c = acc.count > 1 ? (acc.window_cross[a * nb + b] - N * ma * mb) / (N - 1.0) / N : 0.0;
            out.steady_heat_cov(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = c;
        }
        out.heat[a].steady_se = std::sqrt(std::max(0.0, out.steady_heat_cov(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(a))));
    }
    return out;
}

template <class MakeTrajectory>
PhaseSpaceStats run_generic(const SimConfig& cfg, std::size_t n_osc, const HeatMap& h, MakeTrajectory make) {
    const std::vector<std::size_t> steps = sample_steps(cfg);
    const std::size_t ns = steps.size();
    const std::size_t dim = 2 * n_osc;
    const double window_start = cfg.t_final * (1.0 - cfg.heat_window);

    // Shift the power sums by trajectory 0 to keep them well conditioned.
    const Trajectory first = make(0);
    std::vector<double> shift(ns * dim);
    for (std::size_t k = 0; k < ns; ++k) {
        for (std::size_t i = 0; i < n_osc; ++i) {
            shift[k * dim + i] = first.x[k * n_osc + i];
            shift[k * dim + n_osc + i] = first.p[k * n_osc + i];
        }
    }
    const unsigned threads = cfg.threads == 0 ? default_thread_count() : cfg.threads;
    const std::size_t nb = h.osc_of_bath.size();
    Accumulator acc = chunked_reduce(
        cfg.n_traj, cfg.chunk, threads, [&] { return Accumulator(ns, n_osc, nb); },
        [&](std::size_t i, Accumulator& a) {
            if (i == 0) {
                a.add(first, shift, h, window_start);
            } else {
                a.add(make(i), shift, h, window_start);
            }
        },
        [](Accumulator& a, const Accumulator& b) { a.merge(b); });
    return finalize(acc, shift, first.t, window_start);
}

EnsembleStats to_single(const PhaseSpaceStats& s) {
    EnsembleStats e;
    e.t = s.t;
    e.n_traj = s.n_traj;
    e.degenerate = s.degenerate;
    for (std::size_t k = 0; k < s.t.size(); ++k) {
        e.mu_x.push_back(s.mean[k](0));
        e.mu_p.push_back(s.mean[k](1));
        e.se_mu_x.push_back(s.se_mean[k](0));
        e.se_mu_p.push_back(s.se_mean[k](1));
        e.sigma_xx.push_back(s.cov[k](0, 0));
        e.sigma_xp.push_back(s.cov[k](0, 1));
        e.sigma_pp.push_back(s.cov[k](1, 1));
        e.se_xx.push_back(s.se_cov[k](0, 0));
        e.se_xp.push_back(s.se_cov[k](0, 1));
        e.se_pp.push_back(s.se_cov[k](1, 1));
        e.uncertainty.push_back(s.uncertainty[k](0));
        e.se_uncertainty.push_back(s.se_uncertainty[k](0));
    }
    if (!s.heat.empty()) e.heat = s.heat.front();
    return e;
}

}  // namespace

const char* to_string(Integrator i) noexcept {
    return i == Integrator::Embedded ? "embedded" : "convolution";
}

void validate(const SimConfig& cfg) {
    if (!(std::isfinite(cfg.dt) && cfg.dt > 0.0)) throw std::invalid_argument("simulation: dt must be > 0");
    if (!(std::isfinite(cfg.t_final) && cfg.t_final >= 0.0))
        throw std::invalid_argument("simulation: t_final must be >= 0");
    if (cfg.t_final > 0.0 && cfg.t_final < cfg.dt)
        throw std::invalid_argument("simulation: t_final must be 0 or at least dt");
    const double steps = cfg.t_final / cfg.dt;
    if (std::abs(steps - std::round(steps)) > 1e-9 * std::max(1.0, steps))
        throw std::invalid_argument("simulation: t_final must be a whole number of steps");
    if (cfg.n_traj < 1) throw std::invalid_argument("simulation: n_traj must be >= 1");
    if (cfg.sample_every < 1) throw std::invalid_argument("simulation: sample_every must be >= 1");
    if (!(cfg.heat_window > 0.0 && cfg.heat_window <= 1.0))
        throw std::invalid_argument("simulation: heat_window must lie in (0, 1]");
    if (cfg.chunk < 1) throw std::invalid_argument("simulation: chunk must be >= 1");
    const auto& in = cfg.initial;
    if (!(std::isfinite(in.mu_x) && std::isfinite(in.mu_p) && std::isfinite(in.sigma_xx) &&
          std::isfinite(in.sigma_xp) && std::isfinite(in.sigma_pp)))
        throw std::invalid_argument("simulation: initial state must be finite");
    const double det = in.sigma_xx * in.sigma_pp - in.sigma_xp * in.sigma_xp;
    const double scale = std::max({1e-300, in.sigma_xx * in.sigma_pp, in.sigma_xp * in.sigma_xp});
    if (in.sigma_xx < 0.0 || in.sigma_pp < 0.0 || det < -1e-12 * scale)
        throw std::invalid_argument("simulation: initial covariance must be positive semidefinite");
}

std::size_t EmbeddedLaw::n_baths() const noexcept {
    std::size_t nb = 0;
    for (const auto& a : aux) nb = std::max(nb, a.bath + 1);
    return nb;
}

double EmbeddedLaw::max_frequency() const {
    double w2 = 0.0;
    Eigen::EigenSolver<Eigen::MatrixXd> es(minv * vbar, false);
    for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) w2 = std::max(w2, std::abs(es.eigenvalues()[i]));
    for (const auto& a : aux) w2 = std::max(w2, a.omega0_sq);
    return std::sqrt(w2);
}

EmbeddedLaw build_embedding(const OscillatorParams& p, const SpectralDensity& j) {
    validate(p);
    const auto* l = j.as_lorentzian();
    if (!l) throw std::invalid_argument("build_embedding: requires a Lorentzian spectral density");
    EmbeddedLaw law;
    law.n_osc = 1;
    law.minv = Eigen::MatrixXd::Constant(1, 1, 1.0 / p.mass);
    const double shift = p.counter_term ? static_kernel(j) : 0.0;
    law.vbar = Eigen::MatrixXd::Constant(1, 1, p.mass * p.omega * p.omega + shift);
    law.aux.push_back({0, 0, l->lambda * l->lambda, l->omega0 * l->omega0, l->gamma_width});
    return law;
}

std::size_t half_grid_size(const SimConfig& cfg) { return 2 * step_count(cfg) + 1; }

Trajectory integrate_embedded(const SimConfig& cfg, const EmbeddedLaw& law,
                              std::span<const std::vector<double>> forces, std::span<const double> x0,
                              std::span<const double> p0) {
    validate(cfg);
    const std::size_t n = law.n_osc;
    const std::size_t na = law.aux.size();
    const std::size_t nsteps = step_count(cfg);
    if (forces.size() != na) throw std::invalid_argument("integrate_embedded: one force per auxiliary required");
    for (const auto& f : forces) {
        if (f.size() < 2 * nsteps + 1) throw std::invalid_argument("integrate_embedded: force trace too short");
    }
    if (x0.size() != n || p0.size() != n) throw std::invalid_argument("integrate_embedded: initial state size");
    check_resolution(cfg.dt, law.max_frequency());

    std::vector<std::ptrdiff_t> aux_of(n, -1);
    for (std::size_t a = 0; a < na; ++a) aux_of[law.aux[a].osc] = static_cast<std::ptrdiff_t>(a);

    const std::size_t dim = 2 * n + 2 * na;
    std::vector<double> y(dim, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        y[i] = x0[i];
        y[n + i] = p0[i];
    }
    auto rhs = [&](const std::vector<double>& s, std::size_t half_index, std::vector<double>& dy) {
        for (std::size_t i = 0; i < n; ++i) {
            double v = 0.0;
            double f = 0.0;
            for (std::size_t c = 0; c < n; ++c) {
                v += law.minv(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) * s[n + c];
                f -= law.vbar(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) * s[c];
            }
            dy[i] = v;
            dy[n + i] = f;
        }
        for (std::size_t a = 0; a < na; ++a) {
            const auto& ax = law.aux[a];
            const double u = s[2 * n + a];
            const double w = s[2 * n + na + a];
            dy[n + ax.osc] += u + forces[a][half_index];
            dy[2 * n + a] = w;
            dy[2 * n + na + a] = -ax.gamma * w - ax.omega0_sq * u + ax.lambda_sq * s[ax.osc];
        }
    };

    const std::vector<std::size_t> steps = sample_steps(cfg);
    Trajectory tr;
    tr.n_osc = n;
    tr.t.reserve(steps.size());
    tr.x.reserve(steps.size() * n);
    tr.p.reserve(steps.size() * n);
    tr.force.reserve(steps.size() * n);
    tr.u.reserve(steps.size() * n);
    auto record = [&](std::size_t step) {
        tr.t.push_back(static_cast<double>(step) * cfg.dt);
        for (std::size_t i = 0; i < n; ++i) {
            tr.x.push_back(y[i]);
            tr.p.push_back(y[n + i]);
            const std::ptrdiff_t a = aux_of[i];
            tr.force.push_back(a < 0 ? 0.0 : forces[static_cast<std::size_t>(a)][2 * step]);
            tr.u.push_back(a < 0 ? 0.0 : y[2 * n + static_cast<std::size_t>(a)]);
        }
    };

    std::vector<double> k1(dim), k2(dim), k3(dim), k4(dim), tmp(dim);
    const double h = cfg.dt;
    std::size_t next_sample = 0;
    for (std::size_t step = 0;; ++step) {
        if (next_sample < steps.size() && steps[next_sample] == step) {
            record(step);
            ++next_sample;
        }
        if (step == nsteps) break;
        rhs(y, 2 * step, k1);
        for (std::size_t i = 0; i < dim; ++i) tmp[i] = y[i] + 0.5 * h * k1[i];
        rhs(tmp, 2 * step + 1, k2);
        for (std::size_t i = 0; i < dim; ++i) tmp[i] = y[i] + 0.5 * h * k2[i];
        rhs(tmp, 2 * step + 1, k3);
        for (std::size_t i = 0; i < dim; ++i) tmp[i] = y[i] + h * k3[i];
        rhs(tmp, 2 * step + 2, k4);
        for (std::size_t i = 0; i < dim; ++i) y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    return tr;
}

Trajectory integrate_convolution(const SimConfig& cfg, const OscillatorParams& p, const SpectralDensity& j,
                                 std::span<const double> force, double x0, double p0) {
    validate(cfg);
    validate(p);
    const std::size_t nsteps = step_count(cfg);
    if (force.size() < 2 * nsteps + 1) throw std::invalid_argument("integrate_convolution: force trace too short");
    const double m = p.mass;
    const double w2 = renormalized_frequency_sq(p, j);
    double wmax = std::sqrt(w2);
    if (const auto* l = j.as_lorentzian()) wmax = std::max(wmax, l->omega0);
    check_resolution(cfg.dt, wmax);

    const double h = cfg.dt;
    std::vector<double> kern(nsteps + 1);
    for (std::size_t k = 0; k <= nsteps; ++k) kern[k] = eval_memory_kernel_time(j, static_cast<double>(k) * h);
    std::vector<double> xs;
    xs.reserve(nsteps + 1);
    xs.push_back(x0);
    // Trapezoid sum; the x_n endpoint drops out because K(0) = 0.
    auto memory = [&](std::size_t step) {
        if (step == 0) return 0.0;
        double acc = 0.5 * kern[step] * xs[0];
        for (std::size_t i = 1; i < step; ++i) acc += kern[step - i] * xs[i];
        return h * acc;
    };

    const std::vector<std::size_t> steps = sample_steps(cfg);
    Trajectory tr;
    tr.n_osc = 1;
    double x = x0;
    double mom = p0;
    double u = 0.0;
    double f = -m * w2 * x + u + force[0];
    std::size_t next_sample = 0;
    for (std::size_t step = 0;; ++step) {
        if (next_sample < steps.size() && steps[next_sample] == step) {
            tr.t.push_back(static_cast<double>(step) * h);
            tr.x.push_back(x);
            tr.p.push_back(mom);
            tr.force.push_back(force[2 * step]);
            tr.u.push_back(u);
            ++next_sample;
        }
        if (step == nsteps) break;
        x += h * mom / m + 0.5 * h * h * f / m;
        xs.push_back(x);
        u = memory(step + 1);
        const double f_next = -m * w2 * x + u + force[2 * step + 2];
        mom += 0.5 * h * (f + f_next);
        f = f_next;
    }
    return tr;
}

std::pair<double, double> sample_initial(const SimConfig& cfg, std::uint64_t traj_index, std::size_t osc) {
    std::mt19937_64 gen(derive_seed(cfg.master_seed, traj_index, streams::initial(osc)));
    std::normal_distribution<double> normal(0.0, 1.0);
    const double z1 = normal(gen);
    const double z2 = normal(gen);
    const auto& in = cfg.initial;
    const double l11 = std::sqrt(std::max(0.0, in.sigma_xx));
    const double l21 = l11 > 0.0 ? in.sigma_xp / l11 : 0.0;
    const double l22 = std::sqrt(std::max(0.0, in.sigma_pp - l21 * l21));
    return {in.mu_x + l11 * z1, in.mu_p + l21 * z1 + l22 * z2};
}

Trajectory integrate_trajectory(const SimConfig& cfg, const OscillatorParams& p, const BathSpec& b,
                                std::uint64_t traj_index) {
    validate(cfg);
    const std::size_t nh = half_grid_size(cfg);
    const NoiseSynthesizer synth(b, 0.5 * cfg.dt, std::max<std::size_t>(nh, 2), cfg.synthesis);
    std::vector<double> f(synth.size());
    synth.generate_into(derive_seed(cfg.master_seed, traj_index, streams::noise(0)), f);
    const auto [x0, p0] = sample_initial(cfg, traj_index, 0);
    Trajectory tr;
    if (cfg.integrator == Integrator::Convolution) {
        tr = integrate_convolution(cfg, p, b.j, f, x0, p0);
    } else {
        const EmbeddedLaw law = build_embedding(p, b.j);
        const std::vector<std::vector<double>> forces{std::move(f)};
        const std::array<double, 1> xs{x0};
        const std::array<double, 1> ps{p0};
        tr = integrate_embedded(cfg, law, forces, xs, ps);
    }
    tr.traj_index = traj_index;
    return tr;
}

PhaseSpaceStats run_embedded_ensemble(const SimConfig& cfg, const EmbeddedLaw& law, std::span<const BathSpec> baths) {
    validate(cfg);
    if (cfg.integrator != Integrator::Embedded)
        throw std::invalid_argument("run_embedded_ensemble: requires the embedded integrator");
    if (baths.size() < law.n_baths()) throw std::invalid_argument("run_embedded_ensemble: missing bath specs");
    check_resolution(cfg.dt, law.max_frequency());
    const std::size_t nh = half_grid_size(cfg);
    std::vector<std::optional<NoiseSynthesizer>> synth(baths.size());
    for (const auto& a : law.aux) {
        if (!synth[a.bath]) synth[a.bath].emplace(baths[a.bath], 0.5 * cfg.dt, std::max<std::size_t>(nh, 2), cfg.synthesis);
    }
    const std::size_t n = law.n_osc;
    auto make = [&](std::size_t k) {
        std::vector<std::vector<double>> forces(law.aux.size());
        for (std::size_t a = 0; a < law.aux.size(); ++a) {
            const auto& s = *synth[law.aux[a].bath];
            forces[a].resize(s.size());
            s.generate_into(derive_seed(cfg.master_seed, k, streams::noise(law.aux[a].osc)), forces[a]);
        }
        std::vector<double> x0(n), p0(n);
        for (std::size_t i = 0; i < n; ++i) std::tie(x0[i], p0[i]) = sample_initial(cfg, k, i);
        Trajectory tr = integrate_embedded(cfg, law, forces, x0, p0);
        tr.traj_index = k;
        return tr;
    };
    return run_generic(cfg, n, heat_map(law), make);
}

EnsembleStats run_ensemble(const SimConfig& cfg, const OscillatorParams& p, const BathSpec& b) {
    validate(cfg);
    validate(p);
    validate(b);
    if (cfg.integrator == Integrator::Embedded) {
        const EmbeddedLaw law = build_embedding(p, b.j);
        const std::array<BathSpec, 1> baths{b};
        return to_single(run_embedded_ensemble(cfg, law, baths));
    }
    const std::size_t nh = half_grid_size(cfg);
    const NoiseSynthesizer synth(b, 0.5 * cfg.dt, std::max<std::size_t>(nh, 2), cfg.synthesis);
    HeatMap h;
    h.minv = Eigen::MatrixXd::Constant(1, 1, 1.0 / p.mass);
    h.osc_of_bath = {{0}};
    auto make = [&](std::size_t k) {
        std::vector<double> f(synth.size());
        synth.generate_into(derive_seed(cfg.master_seed, k, streams::noise(0)), f);
        const auto [x0, p0] = sample_initial(cfg, k, 0);
        Trajectory tr = integrate_convolution(cfg, p, b.j, f, x0, p0);
        tr.traj_index = k;
        return tr;
    };
    return to_single(run_generic(cfg, 1, h, make));
}

HeatCurrent heat_current_trace(std::span<const Trajectory> trajs, const EmbeddedLaw& law, std::size_t bath,
                               double window_fraction) {
    if (trajs.empty()) throw std::invalid_argument("heat_current_trace: no trajectories");
    if (bath >= law.n_baths()) throw std::invalid_argument("heat_current_trace: bath index out of range");
    if (!(window_fraction > 0.0 && window_fraction <= 1.0))
        throw std::invalid_argument("heat_current_trace: window fraction must lie in (0, 1]");
    const std::size_t ns = trajs.front().t.size();
    for (const auto& tr : trajs) {
        if (tr.t.size() != ns || tr.n_osc != law.n_osc)
            throw std::invalid_argument("heat_current_trace: trajectories must share their sample grid");
    }
    const double t_end = trajs.front().t.back();
    const double window_start = t_end * (1.0 - window_fraction);
    const HeatMap h = heat_map(law);
    const double N = static_cast<double>(trajs.size());
    HeatCurrent out;
    out.window_start = window_start;
    out.qdot.assign(ns, 0.0);
    out.se.assign(ns, 0.0);
    std::vector<double> sq(ns, 0.0);
    double wsum = 0.0;
    double wsq = 0.0;
    for (const auto& tr : trajs) {
        double avg = 0.0;
        std::size_t count = 0;
        for (std::size_t k = 0; k < ns; ++k) {
            const double q = heat_sample(tr, h, bath, k);
            out.qdot[k] += q;
            sq[k] += q * q;
            if (tr.t[k] >= window_start) {
                avg += q;
                ++count;
            }
        }
        avg /= static_cast<double>(std::max<std::size_t>(count, 1));
        wsum += avg;
        wsq += avg * avg;
    }
    for (std::size_t k = 0; k < ns; ++k) {
        const double m = out.qdot[k] / N;
        out.qdot[k] = m;
        out.se[k] = trajs.size() > 1 ? std::sqrt(std::max(0.0, sq[k] - N * m * m) / (N - 1.0) / N) : 0.0;
    }
    out.steady = wsum / N;
    out.steady_se = trajs.size() > 1 ? std::sqrt(std::max(0.0, wsq - N * out.steady * out.steady) / (N - 1.0) / N) : 0.0;
    return out;
}

void write_ensemble_csv(std::ostream& os, const EnsembleStats& s, const csv::Metadata& meta) {
    csv::write_metadata(os, meta);
    csv::write_header(os, {"t", "mu_x", "mu_p", "sigma_xx", "sigma_xp", "sigma_pp", "se_xx", "se_xp", "se_pp"});
    for (std::size_t k = 0; k < s.t.size(); ++k) {
        csv::write_row(os, {s.t[k], s.mu_x[k], s.mu_p[k], s.sigma_xx[k], s.sigma_xp[k], s.sigma_pp[k], s.se_xx[k],
                            s.se_xp[k], s.se_pp[k]});
    }
}

}  // namespace qcl
