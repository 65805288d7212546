#pragma once

// Stationary Gaussian force synthesis by spectral shaping and inverse FFT,
// plus the estimators used to check it: segment-averaged periodogram,
// biased autocorrelation and pooled moment statistics.

#include <cstddef>
#include <cstdint>
#include <memory>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "qcl/csv.hpp"
#include "qcl/spectral.hpp"

namespace qcl {

struct NoiseTrace {
    double dt = 0.0;
    std::vector<double> samples;
    std::uint64_t seed = 0;
    std::string psd_id;
};

struct SynthesisOptions {
    // Generated length is at least padding * n, rounded up to a power of two;
    // only the first n samples are returned.
    std::size_t padding = 2;
};

// Reusable generator for one (bath, dt, n). Bin amplitudes and the FFT plan
// are built once; generate() is const and safe to call concurrently.
class NoiseSynthesizer {
public:
    NoiseSynthesizer(const BathSpec& b, double dt, std::size_t n, SynthesisOptions opt = {});
    ~NoiseSynthesizer();
    NoiseSynthesizer(NoiseSynthesizer&&) noexcept;
    NoiseSynthesizer& operator=(NoiseSynthesizer&&) noexcept;
    NoiseSynthesizer(const NoiseSynthesizer&) = delete;
    NoiseSynthesizer& operator=(const NoiseSynthesizer&) = delete;

    NoiseTrace generate(std::uint64_t seed) const;
    // out.size() must equal size().
    void generate_into(std::uint64_t seed, std::span<double> out) const;

    std::size_t size() const noexcept;
    std::size_t padded_size() const noexcept;
    double dt() const noexcept;
    bool is_silent() const noexcept;
    // Resolution and aliasing diagnostics; empty when the grid resolves the PSD.
    const std::vector<std::string>& warnings() const noexcept;
    // Variance implied by the synthesized line spectrum.
    double line_variance() const noexcept;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

NoiseTrace synthesize_trace(const BathSpec& b, double dt, std::size_t n, std::uint64_t seed,
                            SynthesisOptions opt = {});

struct PsdEstimate {
    std::vector<double> freq_grid;
    std::vector<double> psd_values;
    // Standard error of each bin from the scatter across segments; zero when
    // only one segment is available.
    std::vector<double> psd_se;
    std::size_t n_segments = 0;
};

struct PsdOptions {
    // Even segment length; 0 uses each whole trace (rounded down to even).
    std::size_t segment_length = 0;
};

// Hann-windowed, non-overlapping segment average of
//   P(w_k) = dt |sum_j w_j x_j e^{-i w_k j dt}|^2 / sum_j w_j^2,
// w_k = 2 pi k / (L dt), k = 0..L/2. A white trace of variance s^2 gives dt s^2,
// and (1/pi) int_0^{pi/dt} P dw recovers the variance.
PsdEstimate estimate_psd(std::span<const NoiseTrace> traces, PsdOptions opt = {});

// c(k) = sum_{j < n-k} F_j F_{j+k} / n for k = 0..max_lag.
std::vector<double> autocorrelation(const NoiseTrace& trace, std::size_t max_lag);

struct GaussianityStats {
    std::size_t count = 0;
    double mean = 0.0;
    double variance = 0.0;
    double skewness = 0.0;
    double excess_kurtosis = 0.0;
    // False when the pooled variance vanishes; skewness and kurtosis are then 0.
    bool defined = false;
};

GaussianityStats gaussianity_stats(std::span<const NoiseTrace> traces);

// Target autocorrelation <F(t) F(t - tau)> = int_0^inf (J/w) N cos(w tau) dw.
double force_autocorrelation(const BathSpec& b, double tau);

// Mean estimate against mean target over [lo, hi), one entry per band.
struct BandComparison {
    double lo = 0.0;
    double hi = 0.0;
    double estimate = 0.0;
    double target = 0.0;
    double se = 0.0;
    std::size_t bins = 0;
    // |estimate / target - 1|; 0 when both vanish.
    double rel_dev() const noexcept;
};

std::vector<BandComparison> compare_bands(const PsdEstimate& est, const BathSpec& b, double lo, double hi,
                                          double band_width);

// Columns t,F.
void write_trace_csv(std::ostream& os, const NoiseTrace& trace, const csv::Metadata& meta);
// Columns omega,P_F,P_target; target evaluated from the bath per bin.
void write_psd_csv(std::ostream& os, const PsdEstimate& est, const BathSpec& b,
                   const csv::Metadata& meta);

}  // namespace qcl
