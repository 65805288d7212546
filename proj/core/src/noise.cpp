#include "qcl/noise.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <mutex>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>

#include <fftw3.h>

#include "qcl/quadrature.hpp"

namespace qcl {

namespace {

constexpr double kPi = std::numbers::pi;

// FFTW planning is not thread-safe; execution on distinct arrays is.
std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}

struct FftwFree {
    void operator()(void* p) const noexcept { fftw_free(p); }
};
using RealBuffer = std::unique_ptr<double, FftwFree>;
using ComplexBuffer = std::unique_ptr<fftw_complex, FftwFree>;

RealBuffer alloc_real(std::size_t n) {
    auto* p = fftw_alloc_real(n);
    if (!p) throw std::bad_alloc();
    return RealBuffer(p);
}
ComplexBuffer alloc_complex(std::size_t n) {
    auto* p = fftw_alloc_complex(n);
    if (!p) throw std::bad_alloc();
    return ComplexBuffer(p);
}

std::size_t next_pow2(std::size_t n) {
    std::size_t p = 1;
    while (p < n) p <<= 1;
    return p;
}

}  // namespace

struct NoiseSynthesizer::Impl {
    double dt = 0.0;
    std::size_t n = 0;
    std::size_t len = 0;
    std::vector<double> amplitude;  // per bin k = 0..len/2
    bool silent = true;
    double variance = 0.0;
    std::vector<std::string> warnings;
    std::string psd_id;
    fftw_plan plan = nullptr;

    ~Impl() {
        if (plan) {
            std::lock_guard lock(planner_mutex());
            fftw_destroy_plan(plan);
        }
    }
};

NoiseSynthesizer::NoiseSynthesizer(const BathSpec& b, double dt, std::size_t n, SynthesisOptions opt)
    : impl_(std::make_unique<Impl>()) {
    validate(b);
    if (!(std::isfinite(dt) && dt > 0.0)) throw std::invalid_argument("noise synthesis: dt must be > 0");
    if (n < 2) throw std::invalid_argument("noise synthesis: need n >= 2");
    if (opt.padding < 1) throw std::invalid_argument("noise synthesis: padding must be >= 1");
    auto& s = *impl_;
    s.dt = dt;
    s.n = n;
    s.len = std::max<std::size_t>(next_pow2(n * opt.padding), 2);
    s.psd_id = b.describe();

    const std::size_t half = s.len / 2;
    const double dw = 2.0 * kPi / (static_cast<double>(s.len) * dt);
    const double ld = static_cast<double>(s.len);
    s.amplitude.assign(half + 1, 0.0);
    double power = 0.0;
    for (std::size_t k = 1; k <= half; ++k) {
        const double w = dw * static_cast<double>(k);
        const double psd = eval_force_psd(b, w);
        if (!std::isfinite(psd) || psd < 0.0) {
            std::ostringstream msg;
            msg << "noise synthesis: target PSD not finite at omega=" << w;
            throw std::domain_error(msg.str());
        }
        const bool nyquist = k == half;
        s.amplitude[k] = std::sqrt(ld * psd / ((nyquist ? 1.0 : 2.0) * dt));
        power += nyquist ? 0.5 * psd : psd;
        if (psd > 0.0) s.silent = false;
    }
    s.variance = power * dw / kPi;

    const double nyq = kPi / dt;
    if (const auto* l = b.j.as_lorentzian(); l && l->lambda > 0.0) {
        if (dw > 0.25 * l->gamma_width) {
            std::ostringstream msg;
            msg << "frequency spacing " << dw << " does not resolve the spectral peak of width "
                << l->gamma_width << "; increase n";
            s.warnings.push_back(msg.str());
        }
        if (l->omega0 + 3.0 * l->gamma_width > nyq) {
            std::ostringstream msg;
            msg << "spectral peak near " << l->omega0 << " lies above the Nyquist frequency " << nyq
                << "; decrease dt";
            s.warnings.push_back(msg.str());
        }
    } else if (const auto* o = std::get_if<OhmicExpCutoff>(&b.j.variant())) {
        if (nyq < 10.0 * o->omega_cutoff) {
            std::ostringstream msg;
            msg << "Nyquist frequency " << nyq << " truncates the cutoff tail at " << o->omega_cutoff
                << "; decrease dt";
            s.warnings.push_back(msg.str());
        }
    }

    if (!s.silent) {
        auto in = alloc_complex(half + 1);
        auto out = alloc_real(s.len);
        std::lock_guard lock(planner_mutex());
        s.plan = fftw_plan_dft_c2r_1d(static_cast<int>(s.len), in.get(), out.get(), FFTW_ESTIMATE);
        if (!s.plan) throw std::runtime_error("noise synthesis: FFT planning failed");
    }
}

NoiseSynthesizer::~NoiseSynthesizer() = default;
NoiseSynthesizer::NoiseSynthesizer(NoiseSynthesizer&&) noexcept = default;
NoiseSynthesizer& NoiseSynthesizer::operator=(NoiseSynthesizer&&) noexcept = default;

std::size_t NoiseSynthesizer::size() const noexcept { return impl_->n; }
std::size_t NoiseSynthesizer::padded_size() const noexcept { return impl_->len; }
double NoiseSynthesizer::dt() const noexcept { return impl_->dt; }
bool NoiseSynthesizer::is_silent() const noexcept { return impl_->silent; }
const std::vector<std::string>& NoiseSynthesizer::warnings() const noexcept { return impl_->warnings; }
double NoiseSynthesizer::line_variance() const noexcept { return impl_->variance; }

void NoiseSynthesizer::generate_into(std::uint64_t seed, std::span<double> out) const {
    const auto& s = *impl_;
    if (out.size() != s.n) throw std::invalid_argument("noise synthesis: output span has wrong length");
    if (s.silent) {
        std::fill(out.begin(), out.end(), 0.0);
        return;
    }
    const std::size_t half = s.len / 2;
    auto spec = alloc_complex(half + 1);
    auto time = alloc_real(s.len);
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    fftw_complex* x = spec.get();
    x[0][0] = 0.0;
    x[0][1] = 0.0;
    for (std::size_t k = 1; k < half; ++k) {
        const double a = normal(gen);
        const double c = normal(gen);
        x[k][0] = s.amplitude[k] * a;
        x[k][1] = s.amplitude[k] * c;
    }
    x[half][0] = s.amplitude[half] * normal(gen);
    x[half][1] = 0.0;
    fftw_execute_dft_c2r(s.plan, x, time.get());
    const double scale = 1.0 / static_cast<double>(s.len);
    const double* t = time.get();
    for (std::size_t j = 0; j < s.n; ++j) out[j] = t[j] * scale;
}

NoiseTrace NoiseSynthesizer::generate(std::uint64_t seed) const {
    NoiseTrace tr;
    tr.dt = impl_->dt;
    tr.seed = seed;
    tr.psd_id = impl_->psd_id;
    tr.samples.resize(impl_->n);
    generate_into(seed, tr.samples);
    return tr;
}

NoiseTrace synthesize_trace(const BathSpec& b, double dt, std::size_t n, std::uint64_t seed,
                            SynthesisOptions opt) {
    return NoiseSynthesizer(b, dt, n, opt).generate(seed);
}

PsdEstimate estimate_psd(std::span<const NoiseTrace> traces, PsdOptions opt) {
    if (traces.empty()) throw std::invalid_argument("estimate_psd: no traces");
    const double dt = traces.front().dt;
    const std::size_t n = traces.front().samples.size();
    for (const auto& tr : traces) {
        if (tr.dt != dt || tr.samples.size() != n)
            throw std::invalid_argument("estimate_psd: traces must share dt and length");
    }
    if (!(dt > 0.0)) throw std::invalid_argument("estimate_psd: dt must be > 0");
    std::size_t len = opt.segment_length == 0 ? n - (n % 2) : opt.segment_length;
    if (len < 2 || len % 2 != 0 || len > n)
        throw std::invalid_argument("estimate_psd: segment length must be even and within the trace");

    const std::size_t half = len / 2;
    std::vector<double> window(len);
    double wsum2 = 0.0;
    for (std::size_t j = 0; j < len; ++j) {
        window[j] = 0.5 * (1.0 - std::cos(2.0 * kPi * static_cast<double>(j) / static_cast<double>(len)));
        wsum2 += window[j] * window[j];
    }
    const double norm = dt / wsum2;

    auto in = alloc_real(len);
    auto out = alloc_complex(half + 1);
    fftw_plan plan;
    {
        std::lock_guard lock(planner_mutex());
        plan = fftw_plan_dft_r2c_1d(static_cast<int>(len), in.get(), out.get(), FFTW_ESTIMATE);
    }
    if (!plan) throw std::runtime_error("estimate_psd: FFT planning failed");

    PsdEstimate est;
    est.freq_grid.resize(half + 1);
    for (std::size_t k = 0; k <= half; ++k)
        est.freq_grid[k] = 2.0 * kPi * static_cast<double>(k) / (static_cast<double>(len) * dt);
    std::vector<double> mean(half + 1, 0.0);
    std::vector<double> m2(half + 1, 0.0);
    std::size_t count = 0;
    const std::size_t per_trace = n / len;
    for (const auto& tr : traces) {
        for (std::size_t seg = 0; seg < per_trace; ++seg) {
            const double* src = tr.samples.data() + seg * len;
            double* buf = in.get();
            for (std::size_t j = 0; j < len; ++j) buf[j] = src[j] * window[j];
            fftw_execute(plan);
            ++count;
            const fftw_complex* y = out.get();
            for (std::size_t k = 0; k <= half; ++k) {
                const double p = norm * (y[k][0] * y[k][0] + y[k][1] * y[k][1]);
                const double d = p - mean[k];
                mean[k] += d / static_cast<double>(count);
                m2[k] += d * (p - mean[k]);
            }
        }
    }
    {
        std::lock_guard lock(planner_mutex());
        fftw_destroy_plan(plan);
    }
    est.n_segments = count;
    est.psd_values = std::move(mean);
    est.psd_se.assign(half + 1, 0.0);
    if (count > 1) {
        const double c = static_cast<double>(count);
        for (std::size_t k = 0; k <= half; ++k) est.psd_se[k] = std::sqrt(m2[k] / (c - 1.0) / c);
    }
    return est;
}

std::vector<double> autocorrelation(const NoiseTrace& trace, std::size_t max_lag) {
    const std::size_t n = trace.samples.size();
    if (n == 0 || max_lag >= n) throw std::out_of_range("autocorrelation: max_lag must be < n");
    std::vector<double> c(max_lag + 1, 0.0);
    const double* f = trace.samples.data();
    for (std::size_t k = 0; k <= max_lag; ++k) {
        double acc = 0.0;
        for (std::size_t j = 0; j + k < n; ++j) acc += f[j] * f[j + k];
        c[k] = acc / static_cast<double>(n);
    }
    return c;
}

GaussianityStats gaussianity_stats(std::span<const NoiseTrace> traces) {
    GaussianityStats g;
    long double sum = 0.0L;
    for (const auto& tr : traces) {
        for (double v : tr.samples) sum += v;
        g.count += tr.samples.size();
    }
    if (g.count == 0) return g;
    const long double mean = sum / static_cast<long double>(g.count);
    long double s2 = 0.0L;
    long double s3 = 0.0L;
    long double s4 = 0.0L;
    for (const auto& tr : traces) {
        for (double v : tr.samples) {
            const long double d = v - mean;
            const long double d2 = d * d;
            s2 += d2;
            s3 += d2 * d;
            s4 += d2 * d2;
        }
    }
    const long double c = static_cast<long double>(g.count);
    g.mean = static_cast<double>(mean);
    const long double m2 = s2 / c;
    g.variance = static_cast<double>(m2);
    if (m2 > 0.0L) {
        g.defined = true;
        g.skewness = static_cast<double>((s3 / c) / std::pow(m2, 1.5L));
        g.excess_kurtosis = static_cast<double>((s4 / c) / (m2 * m2) - 3.0L);
    }
    return g;
}

double BandComparison::rel_dev() const noexcept {
    if (target == 0.0) return estimate == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
    return std::abs(estimate / target - 1.0);
}

std::vector<BandComparison> compare_bands(const PsdEstimate& est, const BathSpec& b, double lo, double hi,
                                          double band_width) {
    if (!(hi > lo) || !(band_width > 0.0)) throw std::invalid_argument("compare_bands: empty band");
    std::vector<BandComparison> out;
    const std::size_t nb = static_cast<std::size_t>(std::ceil((hi - lo) / band_width - 1e-9));
    for (std::size_t i = 0; i < nb; ++i) {
        BandComparison c;
        c.lo = lo + static_cast<double>(i) * band_width;
        c.hi = std::min(hi, c.lo + band_width);
        double var = 0.0;
        for (std::size_t k = 0; k < est.freq_grid.size(); ++k) {
            const double w = est.freq_grid[k];
            if (w < c.lo || w >= c.hi) continue;
            c.estimate += est.psd_values[k];
            c.target += eval_force_psd(b, w);
            var += est.psd_se[k] * est.psd_se[k];
            ++c.bins;
        }
        if (c.bins == 0) throw std::invalid_argument("compare_bands: band narrower than the frequency grid");
        const double n = static_cast<double>(c.bins);
        c.estimate /= n;
        c.target /= n;
        c.se = std::sqrt(var) / n;
        out.push_back(c);
    }
    return out;
}

double force_autocorrelation(const BathSpec& b, double tau) {
    validate(b);
    if (b.j.is_zero()) return 0.0;
    tau = std::abs(tau);
    auto weight = [&b](double w) {
        return spectral_density_over_omega(b.j, w) * eval_noise_spectrum(b.kind, w, b.temperature);
    };
    std::vector<double> br = b.j.features();
    quad::Options opt;
    opt.abs_tol = 1e-13;
    opt.rel_tol = 1e-10;
    opt.max_intervals = 100000;
    const auto* tab = std::get_if<Tabulated>(&b.j.variant());
    const double variance = tab ? quad::integrate(weight, tab->grid.front(), tab->grid.back(), br, opt).value
                                : quad::integrate_semi_infinite(weight, 0.0, br, opt).value;
    if (tau == 0.0) return variance;

    // Finite range up to W, then the tail by repeated integration by parts,
    //   int_W^inf g cos(w tau) = -g sin/tau - g' cos/tau^2 + g'' sin/tau^3,
    // valid once g varies little over one period (W tau >> |g/g'|).
    opt.abs_tol = 1e-11 * std::abs(variance);
    double top = 1.0;
    for (double x : br) top = std::max(top, x);
    const double period = kPi / tau;
    double hi = std::max(40.0 * top, 30.0 / tau);
    const double stride = period * std::max(1.0, std::ceil(hi / period / 4000.0));
    for (double w = stride; w < hi; w += stride) br.push_back(w);
    auto osc = [&](double w) { return weight(w) * std::cos(w * tau); };
    if (tab) return quad::integrate(osc, tab->grid.front(), tab->grid.back(), br, opt).value;
    hi = std::ceil(hi / stride) * stride;
    const double body = quad::integrate(osc, 0.0, hi, br, opt).value;
    const double h = 1e-3 * hi;
    const double g0 = weight(hi);
    const double gp = weight(hi + h);
    const double gm = weight(hi - h);
    const double d1 = (gp - gm) / (2.0 * h);
    const double d2 = (gp - 2.0 * g0 + gm) / (h * h);
    const double s = std::sin(hi * tau);
    const double c = std::cos(hi * tau);
    return body - g0 * s / tau - d1 * c / (tau * tau) + d2 * s / (tau * tau * tau);
}

void write_trace_csv(std::ostream& os, const NoiseTrace& trace, const csv::Metadata& meta) {
    csv::write_metadata(os, meta);
    csv::write_header(os, {"t", "F"});
    for (std::size_t j = 0; j < trace.samples.size(); ++j)
        csv::write_row(os, {static_cast<double>(j) * trace.dt, trace.samples[j]});
}

void write_psd_csv(std::ostream& os, const PsdEstimate& est, const BathSpec& b,
                   const csv::Metadata& meta) {
    csv::write_metadata(os, meta);
    csv::write_header(os, {"omega", "P_F", "P_target"});
    for (std::size_t k = 0; k < est.freq_grid.size(); ++k)
        csv::write_row(os, {est.freq_grid[k], est.psd_values[k], eval_force_psd(b, est.freq_grid[k])});
}

}  // namespace qcl
