#pragma once

// Globally adaptive Gauss-Kronrod (7/15) quadrature with forced breakpoints
// and a tangent map for semi-infinite ranges. Integrands may return a double
// or an Eigen column vector; vector integrands share nodes and are converged
// in the max norm.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <queue>
#include <sstream>
#include <span>
#include <type_traits>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "qcl/error.hpp"

namespace qcl::quad {

struct Options {
    double abs_tol = 1e-13;
    double rel_tol = 1e-10;
    std::size_t max_intervals = 20000;
};

template <class T>
struct Result {
    T value;
    double error = 0.0;
    std::size_t evaluations = 0;
    std::size_t intervals = 0;
};

namespace detail {

inline constexpr std::array<double, 8> kXgk = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
inline constexpr std::array<double, 8> kWgk = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
inline constexpr std::array<double, 4> kWg = {
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

template <class T>
double magnitude(const T& v) {
    if constexpr (std::is_arithmetic_v<T>) {
        return std::abs(v);
    } else {
        return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff();
    }
}

template <class T>
struct Panel {
    double a;
    double b;
    T value;
    double error;
};

// One 15-point Kronrod panel with the QUADPACK error heuristic.
template <class F, class T>
Panel<T> gk15(F& f, double a, double b) {
    const double centre = 0.5 * (a + b);
    const double half = 0.5 * (b - a);
    const T fc = f(centre);
    T kronrod = fc * kWgk[7];
    T gauss = fc * kWg[3];
    std::array<T, 7> lo;
    std::array<T, 7> hi;
    for (std::size_t j = 0; j < 7; ++j) {
        const double dx = half * kXgk[j];
        lo[j] = f(centre - dx);
        hi[j] = f(centre + dx);
        kronrod = kronrod + (lo[j] + hi[j]) * kWgk[j];
        if (j % 2 == 1) gauss = gauss + (lo[j] + hi[j]) * kWg[j / 2];
    }
    const T mean = kronrod * 0.5;
    double resasc = kWgk[7] * magnitude(T(fc - mean));
    double resabs = kWgk[7] * magnitude(fc);
    for (std::size_t j = 0; j < 7; ++j) {
        resasc += kWgk[j] * (magnitude(T(lo[j] - mean)) + magnitude(T(hi[j] - mean)));
        resabs += kWgk[j] * (magnitude(lo[j]) + magnitude(hi[j]));
    }
    const double scale = std::abs(half);
    resasc *= scale;
    resabs *= scale;
    double err = magnitude(T((kronrod - gauss) * half));
    if (resasc != 0.0 && err != 0.0) {
        err = resasc * std::min(1.0, std::pow(200.0 * err / resasc, 1.5));
    }
    const double round = 50.0 * std::numeric_limits<double>::epsilon() * resabs;
    if (round > err) err = round;
    return {a, b, T(kronrod * half), err};
}

// Breakpoints strictly inside (a, b), sorted and de-duplicated.
inline std::vector<double> interior_points(double a, double b, std::span<const double> breaks) {
    std::vector<double> pts;
    const double tiny = 1e-12 * std::max({1.0, std::abs(a), std::abs(b)});
    for (double x : breaks) {
        if (std::isfinite(x) && x > a + tiny && x < b - tiny) pts.push_back(x);
    }
    std::sort(pts.begin(), pts.end());
    pts.erase(std::unique(pts.begin(), pts.end(),
                          [tiny](double l, double r) { return std::abs(l - r) <= tiny; }),
              pts.end());
    return pts;
}

template <class F, class T>
Result<T> adapt(F& f, const std::vector<std::pair<double, double>>& pieces, const Options& opt) {
    using PanelT = Panel<T>;
    std::vector<PanelT> panels;
    panels.reserve(std::max<std::size_t>(pieces.size() * 4, 64));
    auto worse = [&panels](std::size_t l, std::size_t r) { return panels[l].error < panels[r].error; };
    std::priority_queue<std::size_t, std::vector<std::size_t>, decltype(worse)> queue(worse);

    Result<T> out{};
    for (const auto& [a, b] : pieces) {
        panels.push_back(gk15<F, T>(f, a, b));
        queue.push(panels.size() - 1);
    }
    out.evaluations = 15 * pieces.size();

    auto totals = [&panels](T& value, double& error) {
        value = panels.front().value;
        error = panels.front().error;
        for (std::size_t i = 1; i < panels.size(); ++i) {
            value = value + panels[i].value;
            error += panels[i].error;
        }
    };

    T value = panels.front().value;
    double error = 0.0;
    totals(value, error);
    std::size_t since_resum = 0;
    while (true) {
        const double target = std::max(opt.abs_tol, opt.rel_tol * magnitude(value));
        if (error <= target) break;
        if (queue.empty() || panels.size() >= opt.max_intervals) {
            totals(value, error);
            if (error <= std::max(opt.abs_tol, opt.rel_tol * magnitude(value))) break;
            std::ostringstream msg;
            msg << "adaptive quadrature did not converge: estimated error " << error
                << " exceeds target " << target << " after " << panels.size() << " panels";
            throw NumericalError(msg.str(), error);
        }
        const std::size_t worst = queue.top();
        queue.pop();
        const PanelT old = panels[worst];
        const double mid = 0.5 * (old.a + old.b);
        if (!(mid > old.a && mid < old.b)) {
            // Panel at floating-point resolution; keep it as is.
            continue;
        }
        PanelT left = gk15<F, T>(f, old.a, mid);
        PanelT right = gk15<F, T>(f, mid, old.b);
        out.evaluations += 30;
        value = value - old.value + left.value + right.value;
        error = error - old.error + left.error + right.error;
        panels[worst] = std::move(left);
        panels.push_back(std::move(right));
        queue.push(worst);
        queue.push(panels.size() - 1);
        if (++since_resum == 256) {
            totals(value, error);
            since_resum = 0;
        }
    }
    totals(value, error);
    out.value = value;
    out.error = error;
    out.intervals = panels.size();
    return out;
}

}  // namespace detail

// Integral of f over [a, b], with forced subdivision at `breaks`.
template <class F>
auto integrate(F&& f, double a, double b, std::span<const double> breaks = {},
               const Options& opt = {}) {
    using T = std::decay_t<decltype(f(a))>;
    std::vector<std::pair<double, double>> pieces;
    const double sign = b < a ? -1.0 : 1.0;
    const double lo = std::min(a, b);
    const double hi = std::max(a, b);
    double left = lo;
    for (double x : detail::interior_points(lo, hi, breaks)) {
        pieces.emplace_back(left, x);
        left = x;
    }
    pieces.emplace_back(left, hi);
    auto& fn = f;
    Result<T> r = detail::adapt<decltype(fn), T>(fn, pieces, opt);
    r.value = r.value * sign;
    return r;
}

// Integral of f over [a, inf). The finite part up to the last breakpoint is
// integrated directly; the remaining tail uses x = c + s tan(theta).
template <class F>
auto integrate_semi_infinite(F&& f, double a, std::span<const double> breaks = {},
                             const Options& opt = {}) {
    using T = std::decay_t<decltype(f(a))>;
    const std::vector<double> pts =
        detail::interior_points(a, std::numeric_limits<double>::max(), breaks);
    const double tail_start = pts.empty() ? a : pts.back();
    const double scale = std::max(1.0, std::abs(tail_start));

    // Pieces in a common variable: [a, tail_start] in x, then theta in
    // [0, pi/2) shifted past tail_start so a single queue serves both.
    const double shift = tail_start;
    auto g = [&](double y) -> T {
        if (y <= shift) return f(y);
        const double theta = y - shift;
        const double t = std::tan(theta);
        const double c = std::cos(theta);
        return f(tail_start + scale * t) * (scale / (c * c));
    };
    std::vector<std::pair<double, double>> pieces;
    double left = a;
    for (double x : pts) {
        pieces.emplace_back(left, x);
        left = x;
    }
    pieces.emplace_back(shift, shift + 0.5 * std::numbers::pi);
    return detail::adapt<decltype(g), T>(g, pieces, opt);
}

}  // namespace qcl::quad
