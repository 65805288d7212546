#include "commands.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <limits>
#include <random>
#include <sstream>

#include <json.hpp>

#include "qcl/csv.hpp"
#include "qcl/error.hpp"
#include "qcl/network.hpp"
#include "qcl/noise.hpp"
#include "qcl/oracle.hpp"
#include "qcl/parallel.hpp"
#include "qcl/rng.hpp"

#ifndef QCL_VERSION
#define QCL_VERSION "unknown"
#endif

namespace qcl::cli {

using Json = nlohmann::ordered_json;

bool Check::pass() const noexcept {
    if (std::isnan(value)) return false;
    return sense == Sense::AtMost ? value <= tolerance : value >= tolerance;
}

double Check::margin() const noexcept { return sense == Sense::AtMost ? tolerance - value : value - tolerance; }

int exit_code(const std::vector<Check>& checks) noexcept {
    return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.pass(); }) ? 0 : 2;
}

namespace {

constexpr double kHbarSqOver4 = 0.25;

struct Context {
    std::string command;
    SimConfig sim;
    std::uint64_t seed = 0;
    unsigned threads = 1;
    double scale = 1.0;
    csv::Metadata meta;
    std::filesystem::path out;
};

std::string join_lines(const std::vector<std::string>& lines) {
    std::string s;
    for (const auto& l : lines) {
        if (!s.empty()) s += '\n';
        s += l;
    }
    return s;
}

Context prepare(const std::string& command, const RunConfig* cfg, const CommandOptions& opt,
                std::optional<std::uint64_t> fallback_seed = std::nullopt) {
    Context ctx;
    ctx.command = command;
    ctx.out = opt.out;
    ctx.scale = opt.tolerance_scale;
    if (!(opt.tolerance_scale >= 0.0) || !std::isfinite(opt.tolerance_scale))
        throw std::invalid_argument("tolerance scale must be finite and non-negative");
    if (cfg) ctx.sim = cfg->sim;
    std::string source;
    if (opt.seed) {
        ctx.seed = *opt.seed;
        source = "command line";
    } else if (cfg && cfg->seed_given) {
        ctx.seed = cfg->sim.master_seed;
        source = "config";
    } else if (fallback_seed) {
        ctx.seed = *fallback_seed;
        source = "built-in default";
    } else {
        std::random_device rd;
        ctx.seed = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
        source = "drawn";
    }
    ctx.sim.master_seed = ctx.seed;
    if (opt.traj) ctx.sim.n_traj = *opt.traj;
    ctx.threads = opt.threads ? std::max(1u, *opt.threads) : default_thread_count();
    ctx.sim.threads = ctx.threads;
    ctx.meta = {{"command", command},
                {"version", QCL_VERSION},
                {"seed", std::to_string(ctx.seed)},
                {"seed_source", source},
                {"n_traj", std::to_string(ctx.sim.n_traj)}};
    if (cfg) ctx.meta.emplace_back("config", join_lines(cfg->echo));
    return ctx;
}

std::ofstream open_out(const Context& ctx, const std::string& name) {
    std::error_code ec;
    std::filesystem::create_directories(ctx.out, ec);
    if (ec) throw IoError("cannot create output directory '" + ctx.out.string() + "': " + ec.message());
    const auto path = ctx.out / name;
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
    return os;
}

void finish(std::ofstream& os, const Context& ctx, const std::string& name) {
    os.flush();
    if (!os) throw IoError("write to '" + (ctx.out / name).string() + "' failed");
}

template <class Writer>
void write_file(const Context& ctx, const std::string& name, Writer&& w) {
    std::ofstream os = open_out(ctx, name);
    w(os);
    finish(os, ctx, name);
}

Json number(double v) {
    if (std::isfinite(v)) return v;
    return std::isnan(v) ? Json("nan") : Json(v > 0 ? "inf" : "-inf");
}

int report(const Context& ctx, const std::string& file, std::vector<Check> checks, Json details,
           std::ostream& log) {
    for (auto& c : checks) c.tolerance *= ctx.scale;
    Json j;
    j["command"] = ctx.command;
    j["version"] = QCL_VERSION;
    j["seed"] = ctx.seed;
    j["passed"] = exit_code(checks) == 0;
    Json arr = Json::array();
    for (const auto& c : checks) {
        Json e;
        e["name"] = c.name;
        e["anchor"] = c.anchor;
        e["value"] = number(c.value);
        e["tolerance"] = number(c.tolerance);
        e["sense"] = c.sense == Check::Sense::AtMost ? "at_most" : "at_least";
        e["pass"] = c.pass();
        e["margin"] = number(c.margin());
        arr.push_back(std::move(e));
        log << (c.pass() ? "PASS " : "FAIL ") << c.name << ": " << csv::format_number(c.value)
            << (c.sense == Check::Sense::AtMost ? " <= " : " >= ") << csv::format_number(c.tolerance) << '\n';
    }
    j["checks"] = std::move(arr);
    j["details"] = std::move(details);
    write_file(ctx, file, [&](std::ostream& os) { os << j.dump(2) << '\n'; });
    return exit_code(checks);
}

double z_score(double estimate, double target, double se) {
    const double d = estimate - target;
    if (d == 0.0) return 0.0;
    return se > 0.0 ? std::abs(d) / se : std::numeric_limits<double>::infinity();
}

double rel_diff(double a, double b) {
    if (a == b) return 0.0;
    return std::abs(a - b) / std::max(std::abs(b), std::numeric_limits<double>::min());
}

double rel_diff(const SteadyCovariances& a, const SteadyCovariances& b) {
    return std::max(rel_diff(a.sigma_xx, b.sigma_xx), rel_diff(a.sigma_pp, b.sigma_pp));
}

std::string tag(double v) { return csv::format_number(v); }

}  // namespace

// ---------------------------------------------------------------- noise

int cmd_noise(const RunConfig& cfg, const CommandOptions& opt, std::ostream& log) {
    Context ctx = prepare("noise", &cfg, opt);
    const BathSpec& b = single_bath(cfg).spec;
    const NoiseCheckConfig& nc = cfg.noise;
    const double dt = ctx.sim.dt;
    const double nyquist = std::numbers::pi / dt;

    NoiseSynthesizer synth(b, dt, nc.n, ctx.sim.synthesis);
    for (const auto& w : synth.warnings()) log << "warning: " << w << '\n';
    std::vector<NoiseTrace> traces(nc.traces);
    parallel_for(nc.traces, ctx.threads,
                 [&](std::size_t k) { traces[k] = synth.generate(derive_seed(ctx.seed, k, streams::noise(0))); });

    const PsdEstimate est = estimate_psd(traces, {nc.segment});
    double lo = 0.0;
    double hi = nyquist;
    if (const auto* l = b.j.as_lorentzian()) {
        lo = l->omega0 - 3.0 * l->gamma_width;
        hi = l->omega0 + 3.0 * l->gamma_width;
    } else {
        const auto f = b.j.features();
        hi = 3.0 * *std::max_element(f.begin(), f.end());
    }
    lo = std::max(0.0, nc.band_lo.value_or(lo));
    hi = std::min(nyquist, nc.band_hi.value_or(hi));
    const BandComparison band = compare_bands(est, b, lo, hi, hi - lo).front();

    const std::size_t max_lag =
        std::min(nc.n - 1, std::max<std::size_t>(400, *std::max_element(nc.lags.begin(), nc.lags.end())));
    std::vector<std::vector<double>> per_trace(traces.size());
    parallel_for(traces.size(), ctx.threads, [&](std::size_t k) {
        auto c = autocorrelation(traces[k], max_lag);
        const double n = static_cast<double>(nc.n);
        for (std::size_t lag = 0; lag <= max_lag; ++lag) c[lag] *= n / (n - static_cast<double>(lag));
        per_trace[k] = std::move(c);
    });
    std::vector<double> c_mean(max_lag + 1, 0.0), c_se(max_lag + 1, 0.0), c_target(max_lag + 1, 0.0);
    const double nt = static_cast<double>(traces.size());
    for (std::size_t lag = 0; lag <= max_lag; ++lag) {
        double s = 0.0;
        for (const auto& c : per_trace) s += c[lag];
        const double m = s / nt;
        double v = 0.0;
        for (const auto& c : per_trace) v += (c[lag] - m) * (c[lag] - m);
        c_mean[lag] = m;
        c_se[lag] = traces.size() > 1 ? std::sqrt(v / (nt - 1.0) / nt) : 0.0;
    }
    parallel_for(max_lag + 1, ctx.threads,
                 [&](std::size_t lag) { c_target[lag] = force_autocorrelation(b, static_cast<double>(lag) * dt); });

    const GaussianityStats g = gaussianity_stats(traces);

    write_file(ctx, "trace.csv", [&](std::ostream& os) { write_trace_csv(os, traces.front(), ctx.meta); });
    write_file(ctx, "psd.csv", [&](std::ostream& os) { write_psd_csv(os, est, b, ctx.meta); });
    write_file(ctx, "autocorr.csv", [&](std::ostream& os) {
        csv::write_metadata(os, ctx.meta);
        csv::write_header(os, {"lag", "tau", "c_est", "se", "c_target"});
        for (std::size_t lag = 0; lag <= max_lag; ++lag)
            csv::write_row(os, {static_cast<double>(lag), static_cast<double>(lag) * dt, c_mean[lag], c_se[lag],
                                c_target[lag]});
    });

    std::vector<Check> checks;
    checks.push_back({"psd band average", "force PSD equals pi J/w N over the band", band.rel_dev(), nc.tolerance});
    for (std::size_t lag : nc.lags) {
        checks.push_back({"autocorrelation lag " + std::to_string(lag), "force autocorrelation equals its quadrature",
                          z_score(c_mean[lag], c_target[lag], c_se[lag]), cfg.check_sigma});
    }
    checks.push_back({"skewness", "synthesized force is Gaussian", std::abs(g.skewness), nc.skew_tol});
    checks.push_back({"excess kurtosis", "synthesized force is Gaussian", std::abs(g.excess_kurtosis), nc.kurt_tol});

    Json d;
    d["band"] = {{"lo", lo}, {"hi", hi}, {"estimate", band.estimate}, {"target", band.target}, {"se", band.se},
                 {"bins", band.bins}};
    d["segments"] = est.n_segments;
    d["samples"] = g.count;
    d["variance"] = g.variance;
    d["line_variance"] = synth.line_variance();
    d["target_variance"] = c_target.front();
    Json w = Json::array();
    for (const auto& s : synth.warnings()) w.push_back(s);
    d["warnings"] = std::move(w);
    return report(ctx, "noise_summary.json", std::move(checks), std::move(d), log);
}

// ---------------------------------------------------------------- dynamics

namespace {

std::vector<std::size_t> checkpoint_rows(const std::vector<double>& t, double t_final, std::size_t n) {
    std::vector<std::size_t> rows;
    for (std::size_t k = 0; k <= n; ++k) {
        const double tc = n == 0 ? 0.0 : t_final * static_cast<double>(k) / static_cast<double>(n);
        const auto it = std::lower_bound(t.begin(), t.end(), tc);
        std::size_t i = static_cast<std::size_t>(it - t.begin());
        if (i == t.size() || (i > 0 && tc - t[i - 1] < t[i] - tc)) --i;
        if (rows.empty() || rows.back() != i) rows.push_back(i);
    }
    return rows;
}

}  // namespace

int cmd_dynamics(const RunConfig& cfg, const CommandOptions& opt, std::ostream& log) {
    Context ctx = prepare("dynamics", &cfg, opt);
    const BathConfig& bc = single_bath(cfg);
    std::optional<GFunctions> g;
    if (bc.spec.j.as_lorentzian()) {
        g = g_functions(cfg.oscillator, bc.spec.j);
    } else {
        log << "note: no analytic oracle for " << bc.spec.j.describe() << "; oracle columns are nan\n";
    }
    const MomentState init{ctx.sim.initial.mu_x, ctx.sim.initial.mu_p, ctx.sim.initial.sigma_xx,
                           ctx.sim.initial.sigma_xp, ctx.sim.initial.sigma_pp};

    std::vector<Check> checks;
    Json d;
    for (NoiseKind kind : {NoiseKind::Quantum, NoiseKind::Classical}) {
        BathSpec bk = bc.spec;
        bk.kind = kind;
        const std::string name = to_string(kind);
        const EnsembleStats s = run_ensemble(ctx.sim, cfg.oscillator, bk);
        const std::size_t ns = s.t.size();
        const double nan = std::numeric_limits<double>::quiet_NaN();
        std::vector<MomentState> oracle(ns, MomentState{nan, nan, nan, nan, nan});
        if (g) parallel_for(ns, ctx.threads, [&](std::size_t k) { oracle[k] = covariance_evolution(*g, bk, init, s.t[k]); });

        csv::Metadata meta = ctx.meta;
        meta.emplace_back("noise", name);
        write_file(ctx, "dynamics_" + name + ".csv", [&](std::ostream& os) {
            csv::write_metadata(os, meta);
            csv::write_header(os, {"t", "mu_x", "mu_p", "sigma_xx", "sigma_xp", "sigma_pp", "se_mu_x", "se_mu_p",
                                   "se_xx", "se_xp", "se_pp", "uncertainty", "se_uncertainty", "oracle_mu_x",
                                   "oracle_mu_p", "oracle_sigma_xx", "oracle_sigma_xp", "oracle_sigma_pp",
                                   "oracle_uncertainty", "hbar2_over_4"});
            for (std::size_t k = 0; k < ns; ++k) {
                const MomentState& o = oracle[k];
                csv::write_row(os, {s.t[k], s.mu_x[k], s.mu_p[k], s.sigma_xx[k], s.sigma_xp[k], s.sigma_pp[k],
                                    s.se_mu_x[k], s.se_mu_p[k], s.se_xx[k], s.se_xp[k], s.se_pp[k], s.uncertainty[k],
                                    s.se_uncertainty[k], o.mu_x, o.mu_p, o.sigma_xx, o.sigma_xp, o.sigma_pp,
                                    o.uncertainty_product(), kHbarSqOver4});
            }
        });

        const auto rows = checkpoint_rows(s.t, ctx.sim.t_final, cfg.checkpoints);
        double zxx = 0.0, zxp = 0.0, zpp = 0.0, below = -std::numeric_limits<double>::infinity();
        for (std::size_t k : rows) {
            zxx = std::max(zxx, z_score(s.sigma_xx[k], oracle[k].sigma_xx, s.se_xx[k]));
            zxp = std::max(zxp, z_score(s.sigma_xp[k], oracle[k].sigma_xp, s.se_xp[k]));
            zpp = std::max(zpp, z_score(s.sigma_pp[k], oracle[k].sigma_pp, s.se_pp[k]));
            const double gap = kHbarSqOver4 - s.uncertainty[k];
            below = std::max(below, s.se_uncertainty[k] > 0.0 ? gap / s.se_uncertainty[k]
                                                              : (gap > 0.0 ? std::numeric_limits<double>::infinity()
                                                                           : -std::numeric_limits<double>::infinity()));
        }
        if (g && !s.degenerate) {
            const std::string anchor = "ensemble covariance matches the exact transient";
            checks.push_back({name + " sigma_xx vs oracle (max |z|)", anchor, zxx, cfg.check_sigma});
            checks.push_back({name + " sigma_xp vs oracle (max |z|)", anchor, zxp, cfg.check_sigma});
            checks.push_back({name + " sigma_pp vs oracle (max |z|)", anchor, zpp, cfg.check_sigma});
        }
        if (kind == NoiseKind::Quantum && !s.degenerate) {
            checks.push_back({"quantum uncertainty product >= hbar^2/4 (max deficit in SE)",
                              "quantum noise respects the uncertainty relation", below, cfg.check_sigma});
        }
        const auto [mn, mx] = std::minmax_element(s.uncertainty.begin(), s.uncertainty.end());
        d[name] = {{"rows", ns},
                   {"checkpoints", rows.size()},
                   {"min_uncertainty", number(*mn)},
                   {"max_uncertainty", number(*mx)},
                   {"final_uncertainty", number(s.uncertainty.back())}};
    }
    return report(ctx, "dynamics_summary.json", std::move(checks), std::move(d), log);
}

// ---------------------------------------------------------------- steady

int cmd_steady(const RunConfig& cfg, const CommandOptions& opt, std::ostream& log) {
    Context ctx = prepare("steady", &cfg, opt, std::uint64_t{0});
    // Deterministic command: no seed is consumed.
    ctx.meta.erase(ctx.meta.begin() + 2, ctx.meta.begin() + 5);
    const BathConfig& bc = single_bath(cfg);
    const auto* lor = bc.spec.j.as_lorentzian();
    const OscillatorParams& osc = cfg.oscillator;
    const NoiseKind kind = bc.spec.kind;

    std::vector<std::pair<std::string, SpectralDensity>> densities;
    if (lor && !cfg.sweep.lambdas.empty()) {
        for (double lam : cfg.sweep.lambdas)
            densities.emplace_back("steady_lambda_" + tag(lam) + ".csv",
                                   SpectralDensity::lorentzian(lam, lor->omega0, lor->gamma_width));
    } else {
        if (!cfg.sweep.lambdas.empty()) log << "note: lambda sweep ignored for " << bc.spec.j.describe() << '\n';
        densities.emplace_back("steady.csv", bc.spec.j);
    }
    const std::vector<double> temps =
        cfg.sweep.temperatures.empty() ? std::vector<double>{bc.spec.temperature} : cfg.sweep.temperatures;

    struct Dev {
        double lambda, t, xx, xx_g, pp, pp_g;
    };
    std::vector<Dev> devs;
    double worst_mats = 0.0, worst_mf = 0.0, worst_ce = 0.0;
    bool any_mats = false, any_mf = false;
    for (const auto& [file, j] : densities) {
        struct Row {
            double t;
            SteadyCovariances c;
        };
        std::vector<Row> rows;
        for (double T : temps) {
            const BathSpec bt{j, T, kind};
            const SteadyCovariances q = steady_covariances_quadrature(osc, bt);
            rows.push_back({T, q});
            if (kind == NoiseKind::Quantum) {
                if (lor && T > 0.0) {
                    const auto m = steady_covariances_matsubara(osc, j, T);
                    rows.push_back({T, m});
                    worst_mats = std::max(worst_mats, rel_diff(m, q));
                    any_mats = true;
                }
                if (T > 0.0) {
                    const auto mf = mean_force_covariances(osc, j, T);
                    rows.push_back({T, mf});
                    worst_mf = std::max(worst_mf, rel_diff(mf, q));
                    any_mf = true;
                }
                const auto gb = gibbs_covariances(osc, T);
                rows.push_back({T, gb});
                devs.push_back({j.as_lorentzian() ? j.as_lorentzian()->lambda : std::numeric_limits<double>::quiet_NaN(),
                                T, q.sigma_xx, gb.sigma_xx, q.sigma_pp, gb.sigma_pp});
            } else {
                const auto ce = classical_exact_covariances(osc, j, T);
                rows.push_back({T, ce});
                worst_ce = std::max(worst_ce, rel_diff(q, ce));
            }
        }
        write_file(ctx, file, [&](std::ostream& os) {
            csv::Metadata meta = ctx.meta;
            meta.emplace_back("spectral_density", j.describe());
            meta.emplace_back("noise", to_string(kind));
            csv::write_metadata(os, meta);
            csv::write_header(os, {"T", "sigma_xx", "sigma_pp", "method"});
            for (const auto& r : rows) csv::write_row(os, {r.t, r.c.sigma_xx, r.c.sigma_pp}, to_string(r.c.method));
        });
    }
    if (kind == NoiseKind::Quantum) {
        write_file(ctx, "gibbs_deviation.csv", [&](std::ostream& os) {
            csv::write_metadata(os, ctx.meta);
            csv::write_header(os, {"lambda", "T", "sigma_xx", "sigma_xx_gibbs", "dev_xx", "sigma_pp", "sigma_pp_gibbs",
                                   "dev_pp"});
            for (const auto& v : devs)
                csv::write_row(os, {v.lambda, v.t, v.xx, v.xx_g, v.xx - v.xx_g, v.pp, v.pp_g, v.pp - v.pp_g});
        });
    }

    std::vector<Check> checks;
    if (any_mats)
        checks.push_back({"matsubara vs quadrature (max rel)", "imaginary-frequency series equals real-frequency quadrature",
                          worst_mats, 1e-6});
    if (any_mf)
        checks.push_back({"mean-force vs quadrature (max rel)", "steady state equals the reduced global thermal state",
                          worst_mf, 1e-5});
    if (kind == NoiseKind::Classical)
        checks.push_back({"classical quadrature vs exact thermal state (max rel)",
                          "classical noise yields the classical thermal state", worst_ce, 1e-8});
    Json d;
    d["temperatures"] = temps.size();
    d["densities"] = densities.size();
    return report(ctx, "steady_summary.json", std::move(checks), std::move(d), log);
}

// ---------------------------------------------------------------- network

namespace {

NetworkSpec network_spec(const RunConfig& cfg, const std::vector<BathSpec>& baths) {
    NetworkSpec spec;
    const auto& n = cfg.network;
    if (n.mass) {
        spec.mass = *n.mass;
        spec.potential = *n.potential;
    } else if (n.kappa) {
        if (baths.size() != 2) throw ConfigError("[network] kappa builds a two-oscillator chain and needs two baths");
        spec = two_oscillator_chain(cfg.oscillator, *n.kappa, baths[0], baths[1]);
    } else {
        std::size_t size = 0;
        for (const auto& b : cfg.baths) {
            for (std::size_t i : b.oscillators) size = std::max(size, i + 1);
        }
        if (size != 1) throw ConfigError("[network] needs mass/potential matrices or kappa for more than one oscillator");
        spec = single_oscillator_network(cfg.oscillator, baths[0]);
    }
    spec.counter_term = cfg.oscillator.counter_term;
    spec.attachments.clear();
    for (std::size_t a = 0; a < baths.size(); ++a) spec.attachments.push_back({cfg.baths[a].oscillators, baths[a]});
    return spec;
}

}  // namespace

int cmd_network(const RunConfig& cfg, const CommandOptions& opt, std::ostream& log) {
    Context ctx = prepare("network", &cfg, opt);
    if (cfg.baths.empty()) throw ConfigError("network needs at least one bath section");
    const std::size_t nb = cfg.baths.size();
    const bool sweep = !cfg.sweep.temperatures.empty();
    std::vector<double> temps = cfg.sweep.temperatures;
    if (!sweep) {
        double tmin = std::numeric_limits<double>::infinity();
        for (const auto& b : cfg.baths) tmin = std::min(tmin, b.spec.temperature);
        temps = {tmin};
    }
    std::size_t hot = 0;
    for (std::size_t a = 1; a < nb; ++a) {
        const auto key = [&](std::size_t i) { return sweep ? cfg.baths[i].temperature_factor : cfg.baths[i].spec.temperature; };
        if (key(a) > key(hot)) hot = a;
    }
    const std::size_t cold = nb == 2 ? 1 - hot : hot;
    bool lorentzian = true;
    for (const auto& b : cfg.baths) lorentzian = lorentzian && b.spec.j.as_lorentzian();
    const bool stochastic = ctx.sim.n_traj > 0 && lorentzian;
    if (!lorentzian) log << "note: stochastic runs need Lorentzian baths; only open-systems currents are computed\n";

    struct Row {
        double t;
        std::vector<double> q, se;
        const char* method;
    };
    std::vector<Row> rows;
    std::vector<Check> checks;
    Json d = Json::array();
    for (std::size_t i = 0; i < temps.size(); ++i) {
        const double T = temps[i];
        std::vector<BathSpec> baths;
        for (const auto& b : cfg.baths) {
            BathSpec s = b.spec;
            if (sweep) s.temperature = b.temperature_factor * T;
            baths.push_back(s);
        }
        const Network net = build_network(network_spec(cfg, baths));
        const NetworkSteadyState st = network_steady_covariances(net);
        rows.push_back({T, st.heat_currents, std::vector<double>(nb, 0.0), "open_systems"});
        const std::string at = "T=" + tag(T) + " ";
        double qmax = 0.0, qsum = 0.0;
        for (double q : st.heat_currents) {
            qmax = std::max(qmax, std::abs(q));
            qsum += q;
        }
        checks.push_back({at + "open-systems energy balance", "currents into the network sum to zero", std::abs(qsum),
                          1e-6 * qmax + 1e-15});
        if (nb == 2 && baths[hot].temperature > baths[cold].temperature)
            checks.push_back({at + "open-systems hot current", "heat flows from the hot bath into the network",
                              st.heat_currents[hot], 0.0, Check::Sense::AtLeast});
        Json di{{"T", T}, {"open_systems", st.heat_currents}};
        if (stochastic) {
            SimConfig sim = ctx.sim;
            sim.master_seed = derive_seed(ctx.seed, i);
            const PhaseSpaceStats ps = run_network_ensemble(net, sim);
            Row r{T, {}, {}, "stochastic"};
            for (const auto& h : ps.heat) {
                r.q.push_back(h.steady);
                r.se.push_back(h.steady_se);
            }
            double ssum = 0.0;
            for (std::size_t a = 0; a < nb; ++a) {
                ssum += r.q[a];
                checks.push_back({at + "bath " + std::to_string(a) + " stochastic vs open-systems (|z|)",
                                  "stochastic heat current matches the trace formula",
                                  z_score(r.q[a], st.heat_currents[a], r.se[a]), cfg.check_sigma});
            }
            const double se_sum = std::sqrt(std::max(0.0, ps.steady_heat_cov.sum()));
            checks.push_back({at + "stochastic energy balance", "currents into the network sum to zero",
                              std::abs(ssum), std::max(cfg.check_sigma * se_sum, 1e-3 * std::abs(st.heat_currents[hot]))});
            rows.push_back(r);
            di["stochastic"] = r.q;
            di["stochastic_se"] = r.se;
            di["window_start"] = ps.heat.front().window_start;
            write_file(ctx, "heat_T" + tag(T) + ".csv", [&](std::ostream& os) {
                csv::write_metadata(os, ctx.meta);
                std::vector<std::string> cols{"t"};
                for (std::size_t a = 0; a < nb; ++a) {
                    cols.push_back("Qdot_" + std::to_string(a));
                    cols.push_back("se_" + std::to_string(a));
                }
                csv::write_header(os, cols);
                std::vector<double> v(1 + 2 * nb);
                for (std::size_t k = 0; k < ps.t.size(); ++k) {
                    v[0] = ps.t[k];
                    for (std::size_t a = 0; a < nb; ++a) {
                        v[1 + 2 * a] = ps.heat[a].qdot[k];
                        v[2 + 2 * a] = ps.heat[a].se[k];
                    }
                    csv::write_row(os, v);
                }
            });
        }
        d.push_back(std::move(di));
    }

    write_file(ctx, "heat_currents.csv", [&](std::ostream& os) {
        csv::Metadata meta = ctx.meta;
        if (nb == 2) meta.emplace_back("hot_bath", std::to_string(hot));
        csv::write_metadata(os, meta);
        std::vector<std::string> cols{"T"};
        if (nb == 2) {
            cols.insert(cols.end(), {"Qdot_H", "Qdot_C", "se_H", "se_C"});
        } else {
            for (std::size_t a = 0; a < nb; ++a) cols.push_back("Qdot_" + std::to_string(a));
            for (std::size_t a = 0; a < nb; ++a) cols.push_back("se_" + std::to_string(a));
        }
        cols.push_back("method");
        csv::write_header(os, cols);
        for (const auto& r : rows) {
            os << csv::format_number(r.t);
            if (nb == 2) {
                for (double v : {r.q[hot], r.q[cold], r.se[hot], r.se[cold]}) os << ',' << csv::format_number(v);
            } else {
                for (double v : r.q) os << ',' << csv::format_number(v);
                for (double v : r.se) os << ',' << csv::format_number(v);
            }
            os << ',' << r.method << '\n';
        }
    });
    Json details;
    details["temperatures"] = std::move(d);
    return report(ctx, "network_summary.json", std::move(checks), std::move(details), log);
}

// ---------------------------------------------------------------- verify

namespace {

BathSpec weak_bath(double T, NoiseKind kind = NoiseKind::Quantum) {
    return {SpectralDensity::lorentzian(0.3, 0.5, 0.1), T, kind};
}

void verify_steady(std::vector<Check>& checks, Json& d) {
    const OscillatorParams osc;
    double mats = 0.0, mf = 0.0;
    for (double lam : {0.3, 2.0}) {
        const auto j = SpectralDensity::lorentzian(lam, 0.5, 0.1);
        for (double T : {0.1, 1.0, 10.0}) {
            const auto q = steady_covariances_quadrature(osc, {j, T});
            mats = std::max(mats, rel_diff(steady_covariances_matsubara(osc, j, T), q));
            mf = std::max(mf, rel_diff(mean_force_covariances(osc, j, T), q));
        }
    }
    checks.push_back({"steady: matsubara vs quadrature", "imaginary-frequency series equals real-frequency quadrature",
                      mats, 1e-6});
    checks.push_back({"steady: mean-force vs quadrature", "steady state equals the reduced global thermal state", mf,
                      1e-5});

    double ce_on = 0.0;
    for (double lam : {0.3, 2.0}) {
        const auto j = SpectralDensity::lorentzian(lam, 0.5, 0.1);
        const auto q = steady_covariances_quadrature(osc, {j, 1.0, NoiseKind::Classical});
        ce_on = std::max(ce_on, std::max(rel_diff(q.sigma_xx, 1.0), rel_diff(q.sigma_pp, 1.0)));
    }
    checks.push_back({"classical exactness, counter-term on", "classical noise yields the classical thermal state",
                      ce_on, 1e-8});
    OscillatorParams bare;
    bare.counter_term = false;
    const auto q = steady_covariances_quadrature(bare, weak_bath(1.0, NoiseKind::Classical));
    const double w2 = 1.0 - 0.3 * 0.3 / 0.25;
    checks.push_back({"classical exactness, counter-term off",
                      "without counter-term the thermal state has the shifted frequency",
                      std::max(rel_diff(q.sigma_xx, 1.0 / w2), rel_diff(q.sigma_pp, 1.0)), 1e-8});

    auto dev = [&](double lam) {
        const auto s = steady_covariances_quadrature(osc, {SpectralDensity::lorentzian(lam, 0.5, 0.1), 1.0});
        return std::abs(s.sigma_xx - gibbs_covariances(osc, 1.0).sigma_xx);
    };
    const double ratio = dev(2.0) / dev(0.3);
    d["gibbs_ratio"] = ratio;
    checks.push_back({"gibbs deviation grows with coupling", "stronger coupling deviates further from the Gibbs state",
                      ratio, 5.0, Check::Sense::AtLeast});
}

void verify_poles(std::vector<Check>& checks, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double worst_sum = 0.0, worst_first = 0.0;
    int unstable = 0;
    for (int k = 0; k < 100; ++k) {
        OscillatorParams p;
        p.mass = 0.5 + 1.5 * u(rng);
        p.omega = 0.5 + 1.5 * u(rng);
        const double lam = 0.05 + 2.95 * u(rng);
        const double w0 = 0.1 + 2.9 * u(rng);
        const double gam = 0.01 + 1.99 * u(rng);
        const GFunctions g = g_functions(p, SpectralDensity::lorentzian(lam, w0, gam));
        Complex s0{}, s1{};
        for (std::size_t i = 0; i < 4; ++i) {
            s0 += g.residues_g2[i];
            s1 += g.residues_g2[i] * g.poles[i];
        }
        worst_sum = std::max(worst_sum, std::abs(s0));
        worst_first = std::max(worst_first, std::abs(s1 - 1.0 / p.mass));
        if (!g.stable()) ++unstable;
    }
    checks.push_back({"residues sum to zero", "g2 starts at zero", worst_sum, 1e-12});
    checks.push_back({"first residue moment equals 1/m", "g2 has unit initial slope in momentum", worst_first, 1e-12});
    checks.push_back({"random sweep: unstable pole sets", "all poles lie in the left half-plane",
                      static_cast<double>(unstable), 0.0});
}

void verify_engine(std::vector<Check>& checks, Json& d, std::uint64_t seed, std::size_t n_traj, unsigned threads) {
    const OscillatorParams osc;
    SimConfig sim;
    sim.dt = 0.05;
    sim.t_final = 20.0;
    sim.n_traj = n_traj;
    sim.master_seed = seed;
    sim.sample_every = 20;
    sim.threads = threads;
    const MomentState init{0.0, 0.0, 0.5, 0.0, 0.5};
    for (NoiseKind kind : {NoiseKind::Quantum, NoiseKind::Classical}) {
        const BathSpec b = weak_bath(0.1, kind);
        const GFunctions g = g_functions(osc, b.j);
        const EnsembleStats s = run_ensemble(sim, osc, b);
        double z = 0.0;
        for (std::size_t k : checkpoint_rows(s.t, sim.t_final, 4)) {
            const MomentState o = covariance_evolution(g, b, init, s.t[k]);
            z = std::max({z, z_score(s.sigma_xx[k], o.sigma_xx, s.se_xx[k]),
                          z_score(s.sigma_xp[k], o.sigma_xp, s.se_xp[k]), z_score(s.sigma_pp[k], o.sigma_pp, s.se_pp[k])});
        }
        checks.push_back({std::string("engine vs oracle, ") + to_string(kind) + " noise (max |z|)",
                          "ensemble covariance matches the exact transient", z, 4.0});
    }

    // Thread count must not change a single bit of the reduction.
    SimConfig small = sim;
    small.n_traj = 64;
    small.t_final = 5.0;
    small.chunk = 16;
    small.threads = 1;
    const EnsembleStats a = run_ensemble(small, osc, weak_bath(0.1));
    small.threads = 3;
    const EnsembleStats b = run_ensemble(small, osc, weak_bath(0.1));
    double diff = 0.0;
    for (std::size_t k = 0; k < a.t.size(); ++k)
        diff = std::max({diff, std::abs(a.sigma_xx[k] - b.sigma_xx[k]), std::abs(a.sigma_pp[k] - b.sigma_pp[k]),
                         std::abs(a.sigma_xp[k] - b.sigma_xp[k])});
    checks.push_back({"determinism across thread counts", "same seed gives identical statistics", diff, 0.0});

    // Noise-free endpoints under dt halving.
    const EmbeddedLaw law = build_embedding(osc, weak_bath(0.1).j);
    std::vector<std::array<double, 2>> ends;
    for (double dt : {0.1, 0.05, 0.025}) {
        SimConfig c;
        c.dt = dt;
        c.t_final = 10.0;
        const std::vector<std::vector<double>> f(1, std::vector<double>(half_grid_size(c), 0.0));
        const double x0 = 1.0, p0 = 0.0;
        const Trajectory tr = integrate_embedded(c, law, f, {&x0, 1}, {&p0, 1});
        ends.push_back({tr.x.back(), tr.p.back()});
    }
    const double e1 = std::hypot(ends[0][0] - ends[1][0], ends[0][1] - ends[1][1]);
    const double e2 = std::hypot(ends[1][0] - ends[2][0], ends[1][1] - ends[2][1]);
    const double order = std::log2(e1 / e2);
    d["dt_halving_order"] = number(order);
    checks.push_back({"dt-halving convergence order", "integrator converges at order two or better", order, 2.0,
                      Check::Sense::AtLeast});
}

void verify_network(std::vector<Check>& checks) {
    const OscillatorParams osc;
    const BathSpec b = weak_bath(0.3);
    const Network one = build_network(single_oscillator_network(osc, b));
    const NetworkSteadyState st = network_steady_covariances(one);
    const SteadyCovariances q = steady_covariances_quadrature(osc, b);
    checks.push_back({"n=1 network covariances vs scalar quadrature", "a one-oscillator network is the single oscillator",
                      std::max(rel_diff(st.c_xx(0, 0), q.sigma_xx), rel_diff(st.c_pp(0, 0), q.sigma_pp)), 1e-7});
    checks.push_back({"n=1 network heat current", "a single bath in equilibrium carries no current",
                      std::abs(st.heat_currents[0]), 1e-10});

    const auto net_poles = one.poles();
    const auto g = g_functions(osc, b.j);
    double pd = 0.0;
    for (std::size_t i = 0; i < 4; ++i) pd = std::max(pd, std::abs(net_poles[i] - g.poles[i]));
    checks.push_back({"n=1 network poles vs g-function poles", "a one-oscillator network is the single oscillator", pd,
                      1e-8});

    BathSpec h = b;
    h.j = SpectralDensity::lorentzian(0.3, 0.5, 0.8);
    h.temperature = 1.0;
    const Network chain = build_network(two_oscillator_chain(osc, 0.1, h, h));
    const auto eq = network_steady_covariances(chain).heat_currents;
    checks.push_back({"equal-temperature chain currents", "no current flows between baths at equal temperature",
                      std::max(std::abs(eq[0]), std::abs(eq[1])), 1e-10});
}

void verify_noise(std::vector<Check>& checks, Json& d, std::uint64_t seed, unsigned threads) {
    const BathSpec b = weak_bath(0.1);
    const double dt = 0.2;
    const std::size_t n = 1u << 15;
    NoiseSynthesizer synth(b, dt, n);
    std::vector<NoiseTrace> traces(100);
    parallel_for(traces.size(), threads,
                 [&](std::size_t k) { traces[k] = synth.generate(derive_seed(seed, k, streams::noise(0))); });
    const PsdEstimate est = estimate_psd(traces, {8192});
    const BandComparison band = compare_bands(est, b, 0.2, 0.8, 0.6).front();
    d["noise_segments"] = est.n_segments;
    checks.push_back({"noise PSD band average", "force PSD equals pi J/w N over the band", band.rel_dev(), 0.05});
}

}  // namespace

int cmd_verify(const CommandOptions& opt, std::ostream& log) {
    Context ctx = prepare("verify", nullptr, opt, std::uint64_t{20240601});
    const std::size_t n_traj = opt.traj.value_or(400);
    std::vector<Check> checks;
    Json d;
    verify_steady(checks, d);
    verify_poles(checks, ctx.seed);
    verify_network(checks);
    verify_noise(checks, d, ctx.seed, ctx.threads);
    verify_engine(checks, d, ctx.seed, n_traj, ctx.threads);
    return report(ctx, "verify_report.json", std::move(checks), std::move(d), log);
}

}  // namespace qcl::cli
