#pragma once

// Harmonic networks H = P^T M^{-1} P / 2 + X^T V X / 2 with independent
// baths attached to disjoint oscillator subsets. Phase-space vector z = (X, P)
// obeys z' = -Omega z + int K(t - s) z(s) ds + F with
//   Omega = [[0, -M^{-1}], [Vbar, 0]],   K = [[0, 0], [sum_a K_a Pi_a, 0]].

#include <cstddef>
#include <vector>

#include <Eigen/Core>

#include "qcl/engine.hpp"
#include "qcl/quadrature.hpp"
#include "qcl/spectral.hpp"

namespace qcl {

struct Attachment {
    std::vector<std::size_t> oscillators;
    BathSpec bath;
};

struct NetworkSpec {
    Eigen::MatrixXd mass;
    Eigen::MatrixXd potential;
    std::vector<Attachment> attachments;
    bool counter_term = true;
};

class Network {
public:
    const NetworkSpec& spec() const noexcept { return spec_; }
    std::size_t size() const noexcept { return static_cast<std::size_t>(spec_.mass.rows()); }
    std::size_t n_baths() const noexcept { return spec_.attachments.size(); }
    const Eigen::MatrixXd& minv() const noexcept { return minv_; }
    const Eigen::MatrixXd& vbar() const noexcept { return vbar_; }
    // Counter-term shift applied to each oscillator of attachment a.
    double counter_shift(std::size_t a) const { return shift_.at(a); }
    // Projector Pi_a as a 0/1 diagonal.
    Eigen::MatrixXd projector(std::size_t a) const;

    // (s I + Omega - K^(s))^{-1}, a 2n x 2n complex matrix.
    Eigen::MatrixXcd resolvent(Complex s) const;
    // Noise spectral matrix: pi J_a/w N_a on the momentum rows of attachment a.
    Eigen::MatrixXd force_psd(double omega) const;

    // Markovian embedding; requires Lorentzian baths.
    EmbeddedLaw embedding() const;
    // Eigenvalues of the embedded drift matrix; for n = 1 these are the
    // g-function poles. Requires Lorentzian baths.
    std::vector<Complex> poles() const;

private:
    friend Network build_network(const NetworkSpec& spec);
    NetworkSpec spec_;
    Eigen::MatrixXd minv_;
    Eigen::MatrixXd vbar_;
    std::vector<double> shift_;
};

// Validates symmetry, positivity, disjoint attachments and static stability
// (Vbar - sum_a K_a^(0) Pi_a positive definite). Throws std::invalid_argument
// or InstabilityError.
Network build_network(const NetworkSpec& spec);

// n = 1 network equivalent to a single oscillator with one bath.
NetworkSpec single_oscillator_network(const OscillatorParams& p, const BathSpec& b);

// Two oscillators joined by a spring -kappa, each with its own bath:
// V = [[m W^2, -kappa], [-kappa, m W^2]], M = m I.
NetworkSpec two_oscillator_chain(const OscillatorParams& p, double kappa, const BathSpec& left,
                                 const BathSpec& right);

struct NetworkSteadyState {
    Eigen::MatrixXd c_xx;
    Eigen::MatrixXd c_xp;
    Eigen::MatrixXd c_pp;
    std::vector<double> heat_currents;
};

// C = (1/pi) int_0^inf Re[G(iw) P(w) G(iw)^H] dw; fills the covariance blocks
// and the open-systems currents.
NetworkSteadyState network_steady_covariances(const Network& net, const quad::Options& opt = {});

// Q_a = tr[Pi_a Vbar C_xp M^{-1}]; positive means heat flowing into the network.
std::vector<double> heat_currents_opensystems(const Network& net, const NetworkSteadyState& steady);

// Stochastic ensemble; heat[a] of the result belongs to attachment a.
PhaseSpaceStats run_network_ensemble(const Network& net, const SimConfig& cfg);

}  // namespace qcl
