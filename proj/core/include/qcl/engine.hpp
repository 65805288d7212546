#pragma once

// Quasiclassical Langevin trajectories driven by synthesized colored noise.
//
// The default integrator replaces each Lorentzian memory integral
// u(t) = int_0^t K(t - s) x(s) ds by the auxiliary oscillator
//   u'' + Gamma u' + omega0^2 u = lambda^2 x,   u(0) = u'(0) = 0,
// and advances (x, p, u, u') with classic RK4. The force is synthesized on
// the half-step grid, so every RK4 stage sees an exact sample. The
// convolution integrator keeps the memory sum explicitly and accepts any
// spectral density; it exists as a cross-check.

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "qcl/noise.hpp"
#include "qcl/spectral.hpp"

namespace qcl {

enum class Integrator { Embedded, Convolution };

const char* to_string(Integrator i) noexcept;

// Per-oscillator Gaussian initial state, independent of the bath.
struct InitialState {
    double mu_x = 0.0;
    double mu_p = 0.0;
    double sigma_xx = 0.5;
    double sigma_xp = 0.0;
    double sigma_pp = 0.5;
};

struct SimConfig {
    double dt = 0.05;
    double t_final = 100.0;
    std::size_t n_traj = 1000;
    std::uint64_t master_seed = 0;
    InitialState initial;
    Integrator integrator = Integrator::Embedded;
    // Record every sample_every steps; the final step is always recorded.
    std::size_t sample_every = 1;
    // Heat currents are averaged over the last heat_window fraction of the run.
    double heat_window = 0.25;
    // 0 selects default_thread_count().
    unsigned threads = 0;
    // Trajectories per reduction chunk; fixes the summation tree.
    std::size_t chunk = 256;
    SynthesisOptions synthesis{4};
};

// Throws std::invalid_argument. t_final = 0 is accepted and yields the
// initial sample only.
void validate(const SimConfig& cfg);

// Linear network in embedded form:
//   x' = M^{-1} p,  p' = -Vbar x + U + F,
//   u_a'' + Gamma_a u_a' + omega0_a^2 u_a = lambda_a^2 x_{osc(a)},
// with U_i = u_a for the auxiliary a attached to oscillator i.
struct EmbeddedLaw {
    struct Aux {
        std::size_t osc = 0;
        std::size_t bath = 0;
        double lambda_sq = 0.0;
        double omega0_sq = 0.0;
        double gamma = 0.0;
    };
    std::size_t n_osc = 1;
    Eigen::MatrixXd minv;
    Eigen::MatrixXd vbar;
    std::vector<Aux> aux;

    std::size_t n_baths() const noexcept;
    // Largest natural frequency of the bare network and of the auxiliaries.
    double max_frequency() const;
};

// Single oscillator with one Lorentzian bath. Throws std::invalid_argument
// for other spectral densities.
EmbeddedLaw build_embedding(const OscillatorParams& p, const SpectralDensity& j);

// Samples of one realization; per-oscillator arrays are row-major
// [sample][oscillator]. `u` holds the memory term acting on each oscillator.
struct Trajectory {
    std::size_t n_osc = 1;
    std::vector<double> t;
    std::vector<double> x;
    std::vector<double> p;
    std::vector<double> force;
    std::vector<double> u;
    std::uint64_t traj_index = 0;
};

// Number of half-step force samples a run of `cfg` consumes (2 N + 1).
std::size_t half_grid_size(const SimConfig& cfg);

// Integrates with prescribed forces: forces[a] drives the oscillator of
// auxiliary a and holds half_grid_size(cfg) samples at t = k dt / 2.
Trajectory integrate_embedded(const SimConfig& cfg, const EmbeddedLaw& law,
                              std::span<const std::vector<double>> forces, std::span<const double> x0,
                              std::span<const double> p0);

// Memory-sum integrator for one oscillator (velocity Verlet, trapezoid
// memory sum). force holds half_grid_size(cfg) samples; only whole steps are used.
Trajectory integrate_convolution(const SimConfig& cfg, const OscillatorParams& p,
                                 const SpectralDensity& j, std::span<const double> force, double x0,
                                 double p0);

// Draws (x0, p0) for oscillator `osc` of trajectory `traj_index`.
std::pair<double, double> sample_initial(const SimConfig& cfg, std::uint64_t traj_index,
                                         std::size_t osc = 0);

// One stochastic trajectory of the single-oscillator problem. Noise and
// initial condition come from substreams of cfg.master_seed.
Trajectory integrate_trajectory(const SimConfig& cfg, const OscillatorParams& p, const BathSpec& b,
                                std::uint64_t traj_index);

struct HeatCurrent {
    std::vector<double> qdot;
    std::vector<double> se;
    // Mean over trajectories of each trajectory's window average.
    double steady = 0.0;
    double steady_se = 0.0;
    double window_start = 0.0;
};

// General moment series for an n-oscillator run; coordinates are ordered
// (x_0..x_{n-1}, p_0..p_{n-1}).
struct PhaseSpaceStats {
    std::size_t n_osc = 1;
    std::size_t n_traj = 0;
    bool degenerate = false;
    std::vector<double> t;
    std::vector<Eigen::VectorXd> mean;
    std::vector<Eigen::VectorXd> se_mean;
    std::vector<Eigen::MatrixXd> cov;
    std::vector<Eigen::MatrixXd> se_cov;
    // Per oscillator: sxx spp - sxp^2 and its delta-method standard error.
    std::vector<Eigen::VectorXd> uncertainty;
    std::vector<Eigen::VectorXd> se_uncertainty;
    std::vector<HeatCurrent> heat;
    // Covariance of the steady heat estimates across baths (already / n_traj).
    Eigen::MatrixXd steady_heat_cov;
};

struct EnsembleStats {
    std::vector<double> t;
    std::vector<double> mu_x, mu_p;
    std::vector<double> sigma_xx, sigma_xp, sigma_pp;
    std::vector<double> se_mu_x, se_mu_p;
    std::vector<double> se_xx, se_xp, se_pp;
    std::vector<double> uncertainty, se_uncertainty;
    HeatCurrent heat;
    std::size_t n_traj = 0;
    // Set when n_traj = 1: covariances are zero and standard errors undefined.
    bool degenerate = false;
};

// Runs cfg.n_traj independent trajectories of the embedded network. Each
// auxiliary a draws noise from baths[aux.bath] with seed
// derive_seed(master, k, streams::noise(aux.osc)).
PhaseSpaceStats run_embedded_ensemble(const SimConfig& cfg, const EmbeddedLaw& law,
                                      std::span<const BathSpec> baths);

EnsembleStats run_ensemble(const SimConfig& cfg, const OscillatorParams& p, const BathSpec& b);

// Ensemble heat current from bath `bath` of `law` over stored trajectories:
// the mean of (F + u) . dx/dt over the attached oscillators.
HeatCurrent heat_current_trace(std::span<const Trajectory> trajs, const EmbeddedLaw& law,
                               std::size_t bath, double window_fraction);

// Columns t,mu_x,mu_p,sigma_xx,sigma_xp,sigma_pp,se_xx,se_xp,se_pp.
void write_ensemble_csv(std::ostream& os, const EnsembleStats& s, const csv::Metadata& meta);

}  // namespace qcl
