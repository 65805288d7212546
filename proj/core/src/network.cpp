#include "qcl/network.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/LU>

#include "qcl/error.hpp"

namespace qcl {

namespace {

constexpr double kPi = std::numbers::pi;

bool symmetric(const Eigen::MatrixXd& a) {
    return (a - a.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * std::max(1.0, a.cwiseAbs().maxCoeff());
}

bool positive_definite(const Eigen::MatrixXd& a) {
    Eigen::LLT<Eigen::MatrixXd> llt(a);
    return llt.info() == Eigen::Success;
}

Eigen::Index idx(std::size_t i) { return static_cast<Eigen::Index>(i); }

}  // namespace

Network build_network(const NetworkSpec& spec) {
    const Eigen::Index n = spec.mass.rows();
    if (n < 1 || spec.mass.cols() != n || spec.potential.rows() != n || spec.potential.cols() != n)
        throw std::invalid_argument("network: mass and potential must be square and of equal size");
    if (!spec.mass.allFinite() || !spec.potential.allFinite())
        throw std::invalid_argument("network: matrices must be finite");
    if (!symmetric(spec.mass) || !symmetric(spec.potential))
        throw std::invalid_argument("network: mass and potential matrices must be symmetric");
    if (!positive_definite(spec.mass)) throw std::invalid_argument("network: mass matrix must be positive definite");
    if (spec.attachments.empty()) throw std::invalid_argument("network: at least one bath attachment required");

    std::vector<int> owner(static_cast<std::size_t>(n), -1);
    for (std::size_t a = 0; a < spec.attachments.size(); ++a) {
        const auto& att = spec.attachments[a];
        validate(att.bath);
        if (att.oscillators.empty()) throw std::invalid_argument("network: attachment without oscillators");
        for (std::size_t i : att.oscillators) {
            if (i >= static_cast<std::size_t>(n)) throw std::invalid_argument("network: attachment index out of range");
            if (owner[i] >= 0) {
                std::ostringstream msg;
                msg << "network: oscillator " << i << " is attached to more than one bath";
                throw std::invalid_argument(msg.str());
            }
            owner[i] = static_cast<int>(a);
        }
    }

    Network net;
    net.spec_ = spec;
    net.minv_ = spec.mass.inverse();
    net.vbar_ = spec.potential;
    Eigen::MatrixXd stat = spec.potential;
    for (const auto& att : spec.attachments) {
        const double k0 = static_kernel(att.bath.j);
        const double shift = spec.counter_term ? k0 : 0.0;
        net.shift_.push_back(shift);
        for (std::size_t i : att.oscillators) {
            net.vbar_(idx(i), idx(i)) += shift;
            stat(idx(i), idx(i)) += shift - k0;
        }
    }
    if (!positive_definite(net.vbar_))
        throw InstabilityError("network: renormalized potential is not positive definite");
    if (!positive_definite(stat))
        throw InstabilityError("network: effective static potential is not positive definite; no steady state");
    return net;
}

Eigen::MatrixXd Network::projector(std::size_t a) const {
    const std::size_t n = size();
    Eigen::MatrixXd p = Eigen::MatrixXd::Zero(idx(n), idx(n));
    for (std::size_t i : spec_.attachments.at(a).oscillators) p(idx(i), idx(i)) = 1.0;
    return p;
}

Eigen::MatrixXcd Network::resolvent(Complex s) const {
    const Eigen::Index n = idx(size());
    Eigen::MatrixXcd a = Eigen::MatrixXcd::Zero(2 * n, 2 * n);
    for (Eigen::Index i = 0; i < 2 * n; ++i) a(i, i) = s;
    a.block(0, n, n, n) = -minv_.cast<Complex>();
    a.block(n, 0, n, n) = vbar_.cast<Complex>();
    for (const auto& att : spec_.attachments) {
        const Complex k = eval_kernel_laplace(att.bath.j, s);
        for (std::size_t i : att.oscillators) a(n + idx(i), idx(i)) -= k;
    }
    Eigen::PartialPivLU<Eigen::MatrixXcd> lu(a);
    const double rc = lu.rcond();
    if (!(rc > 1e-14)) {
        std::ostringstream msg;
        msg << "network: near-singular resolvent at s=" << s.real() << "+" << s.imag() << "i (rcond " << rc << ")";
        throw SingularityError(msg.str());
    }
    return lu.inverse();
}

Eigen::MatrixXd Network::force_psd(double omega) const {
    const Eigen::Index n = idx(size());
    Eigen::MatrixXd p = Eigen::MatrixXd::Zero(2 * n, 2 * n);
    for (const auto& att : spec_.attachments) {
        const double v = eval_force_psd(att.bath, omega);
        for (std::size_t i : att.oscillators) p(n + idx(i), n + idx(i)) = v;
    }
    return p;
}

EmbeddedLaw Network::embedding() const {
    EmbeddedLaw law;
    law.n_osc = size();
    law.minv = minv_;
    law.vbar = vbar_;
    for (std::size_t a = 0; a < spec_.attachments.size(); ++a) {
        const auto& att = spec_.attachments[a];
        const auto* l = att.bath.j.as_lorentzian();
        if (!l) throw std::invalid_argument("network: stochastic runs require Lorentzian baths");
        for (std::size_t i : att.oscillators)
            law.aux.push_back({i, a, l->lambda * l->lambda, l->omega0 * l->omega0, l->gamma_width});
    }
    std::stable_sort(law.aux.begin(), law.aux.end(),
                     [](const EmbeddedLaw::Aux& x, const EmbeddedLaw::Aux& y) { return x.osc < y.osc; });
    return law;
}

std::vector<Complex> Network::poles() const {
    const EmbeddedLaw law = embedding();
    const std::size_t n = law.n_osc;
    const std::size_t na = law.aux.size();
    const Eigen::Index dim = idx(2 * n + 2 * na);
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(dim, dim);
    const Eigen::Index nn = idx(n);
    a.block(0, nn, nn, nn) = law.minv;
    a.block(nn, 0, nn, nn) = -law.vbar;
    for (std::size_t k = 0; k < na; ++k) {
        const auto& ax = law.aux[k];
        const Eigen::Index u = idx(2 * n + k);
        const Eigen::Index v = idx(2 * n + na + k);
        a(nn + idx(ax.osc), u) = 1.0;
        a(u, v) = 1.0;
        a(v, v) = -ax.gamma;
        a(v, u) = -ax.omega0_sq;
        a(v, idx(ax.osc)) = ax.lambda_sq;
    }
    Eigen::EigenSolver<Eigen::MatrixXd> es(a, false);
    std::vector<Complex> out(es.eigenvalues().data(), es.eigenvalues().data() + es.eigenvalues().size());
    std::sort(out.begin(), out.end(), [](const Complex& x, const Complex& y) {
        if (x.real() != y.real()) return x.real() < y.real();
        return x.imag() < y.imag();
    });
    return out;
}

NetworkSpec single_oscillator_network(const OscillatorParams& p, const BathSpec& b) {
    validate(p);
    NetworkSpec s;
    s.mass = Eigen::MatrixXd::Constant(1, 1, p.mass);
    s.potential = Eigen::MatrixXd::Constant(1, 1, p.mass * p.omega * p.omega);
    s.attachments.push_back({{0}, b});
    s.counter_term = p.counter_term;
    return s;
}

NetworkSpec two_oscillator_chain(const OscillatorParams& p, double kappa, const BathSpec& left,
                                 const BathSpec& right) {
    validate(p);
    if (!std::isfinite(kappa)) throw std::invalid_argument("network: coupling must be finite");
    NetworkSpec s;
    s.mass = p.mass * Eigen::MatrixXd::Identity(2, 2);
    const double k = p.mass * p.omega * p.omega;
    s.potential.resize(2, 2);
    s.potential << k, -kappa, -kappa, k;
    s.attachments.push_back({{0}, left});
    s.attachments.push_back({{1}, right});
    s.counter_term = p.counter_term;
    return s;
}

NetworkSteadyState network_steady_covariances(const Network& net, const quad::Options& opt) {
    const std::size_t n = net.size();
    const Eigen::Index d = idx(2 * n);

    std::vector<double> br;
    for (const auto& att : net.spec().attachments) {
        const auto f = att.bath.j.features();
        br.insert(br.end(), f.begin(), f.end());
    }
    Eigen::EigenSolver<Eigen::MatrixXd> modes(net.minv() * net.vbar(), false);
    for (Eigen::Index i = 0; i < modes.eigenvalues().size(); ++i)
        br.push_back(std::sqrt(std::abs(modes.eigenvalues()[i])));
    bool lorentzian = true;
    for (const auto& att : net.spec().attachments) lorentzian = lorentzian && att.bath.j.as_lorentzian();
    if (lorentzian) {
        for (const Complex& pk : net.poles()) {
            const double c = std::abs(pk.imag());
            const double w = std::abs(pk.real());
            for (double f : {-10.0, -3.0, -1.0, 0.0, 1.0, 3.0, 10.0}) {
                if (c + f * w > 0.0) br.push_back(c + f * w);
            }
        }
    }

    auto integrand = [&](double w) {
        const Eigen::MatrixXcd g = net.resolvent(Complex{0.0, w});
        const Eigen::MatrixXd p = net.force_psd(w);
        Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(d, d);
        for (Eigen::Index j = 0; j < d; ++j) {
            if (p(j, j) == 0.0) continue;
            const Eigen::VectorXcd col = g.col(j);
            acc += p(j, j) * (col * col.adjoint()).real();
        }
        return Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(acc.data(), d * d));
    };
    const Eigen::VectorXd flat = quad::integrate_semi_infinite(integrand, 0.0, br, opt).value;
    const Eigen::MatrixXd c = Eigen::Map<const Eigen::MatrixXd>(flat.data(), d, d) / kPi;

    NetworkSteadyState out;
    const Eigen::Index nn = idx(n);
    out.c_xx = c.block(0, 0, nn, nn);
    out.c_xp = c.block(0, nn, nn, nn);
    out.c_pp = c.block(nn, nn, nn, nn);
    out.c_xx = 0.5 * (out.c_xx + out.c_xx.transpose()).eval();
    out.c_pp = 0.5 * (out.c_pp + out.c_pp.transpose()).eval();
    out.heat_currents = heat_currents_opensystems(net, out);
    return out;
}

std::vector<double> heat_currents_opensystems(const Network& net, const NetworkSteadyState& steady) {
    std::vector<double> q;
    for (std::size_t a = 0; a < net.n_baths(); ++a)
        q.push_back((net.projector(a) * net.vbar() * steady.c_xp * net.minv()).trace());
    return q;
}

PhaseSpaceStats run_network_ensemble(const Network& net, const SimConfig& cfg) {
    std::vector<BathSpec> baths;
    for (const auto& att : net.spec().attachments) baths.push_back(att.bath);
    return run_embedded_ensemble(cfg, net.embedding(), baths);
}

}  // namespace qcl
