#include "config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace qcl::cli {

namespace {

struct Entry {
    std::string key;
    std::string value;
    std::size_t line = 0;
    bool used = false;
};

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

class Section {
public:
    Section(std::string name, std::string origin, std::size_t line)
        : name_(std::move(name)), origin_(std::move(origin)), line_(line) {}

    const std::string& name() const noexcept { return name_; }

    void add(std::string key, std::string value, std::size_t line) {
        for (const auto& e : entries_) {
            if (e.key == key) fail(line, "duplicate key '" + key + "'");
        }
        entries_.push_back({std::move(key), std::move(value), line});
    }

    Entry* find(const std::string& key) {
        for (auto& e : entries_) {
            if (e.key == key) {
                e.used = true;
                return &e;
            }
        }
        return nullptr;
    }

    [[noreturn]] void fail(std::size_t line, const std::string& what) const {
        std::ostringstream msg;
        msg << origin_ << ":" << line << ": [" << name_ << "] " << what;
        throw ConfigError(msg.str());
    }

    double to_double(const Entry& e, const std::string& text) const {
        double v = 0.0;
        const char* b = text.data();
        const char* end = b + text.size();
        auto [p, ec] = std::from_chars(b, end, v);
        if (ec != std::errc{} || p != end || !std::isfinite(v))
            fail(e.line, "'" + e.key + "' expects a finite number, got '" + text + "'");
        return v;
    }

    std::uint64_t to_uint(const Entry& e, const std::string& text) const {
        std::uint64_t v = 0;
        const char* b = text.data();
        const char* end = b + text.size();
        auto [p, ec] = std::from_chars(b, end, v);
        if (ec != std::errc{} || p != end)
            fail(e.line, "'" + e.key + "' expects a non-negative integer, got '" + text + "'");
        return v;
    }

    std::vector<std::string> split(const Entry& e) const {
        std::vector<std::string> out;
        std::stringstream ss(e.value);
        std::string item;
        while (std::getline(ss, item, ',')) {
            item = trim(item);
            if (item.empty()) fail(e.line, "'" + e.key + "' has an empty list element");
            out.push_back(item);
        }
        if (out.empty()) fail(e.line, "'" + e.key + "' expects a non-empty list");
        return out;
    }

    std::optional<double> number(const std::string& key) {
        Entry* e = find(key);
        if (!e) return std::nullopt;
        return to_double(*e, e->value);
    }

    std::optional<std::uint64_t> integer(const std::string& key) {
        Entry* e = find(key);
        if (!e) return std::nullopt;
        return to_uint(*e, e->value);
    }

    std::optional<bool> boolean(const std::string& key) {
        Entry* e = find(key);
        if (!e) return std::nullopt;
        if (e->value == "true" || e->value == "on" || e->value == "1") return true;
        if (e->value == "false" || e->value == "off" || e->value == "0") return false;
        fail(e->line, "'" + key + "' expects true or false, got '" + e->value + "'");
    }

    std::optional<std::string> word(const std::string& key) {
        Entry* e = find(key);
        if (!e) return std::nullopt;
        return e->value;
    }

    std::optional<std::vector<double>> numbers(const std::string& key) {
        Entry* e = find(key);
        if (!e) return std::nullopt;
        std::vector<double> out;
        for (const auto& s : split(*e)) out.push_back(to_double(*e, s));
        return out;
    }

    std::optional<std::vector<std::uint64_t>> integers(const std::string& key) {
        Entry* e = find(key);
        if (!e) return std::nullopt;
        std::vector<std::uint64_t> out;
        for (const auto& s : split(*e)) out.push_back(to_uint(*e, s));
        return out;
    }

    std::size_t line_of(const std::string& key) const {
        for (const auto& e : entries_) {
            if (e.key == key) return e.line;
        }
        return line_;
    }

    std::size_t header_line() const noexcept { return line_; }

    void reject_unused() const {
        for (const auto& e : entries_) {
            if (!e.used) fail(e.line, "unknown key '" + e.key + "'");
        }
    }

private:
    std::string name_;
    std::string origin_;
    std::size_t line_;
    std::vector<Entry> entries_;
};

template <class T>
void set_if(T& dst, const std::optional<T>& v) {
    if (v) dst = *v;
}

void positive(Section& s, const std::string& key, double v) {
    if (!(v > 0.0)) s.fail(s.line_of(key), "'" + key + "' must be positive");
}

Eigen::MatrixXd square_matrix(Section& s, const std::string& key, const std::vector<double>& flat) {
    const auto n = static_cast<Eigen::Index>(std::llround(std::sqrt(static_cast<double>(flat.size()))));
    if (static_cast<std::size_t>(n * n) != flat.size())
        s.fail(s.line_of(key), "'" + key + "' must list a square matrix in row-major order");
    Eigen::MatrixXd m(n, n);
    for (Eigen::Index r = 0; r < n; ++r) {
        for (Eigen::Index c = 0; c < n; ++c) m(r, c) = flat[static_cast<std::size_t>(r * n + c)];
    }
    return m;
}

BathConfig parse_bath(Section& s, std::size_t position) {
    const std::string kind = s.word("kind").value_or("lorentzian");
    auto build = [&]() -> SpectralDensity {
        try {
            if (kind == "lorentzian") {
                Lorentzian l;
                set_if(l.lambda, s.number("lambda"));
                set_if(l.omega0, s.number("omega0"));
                set_if(l.gamma_width, s.number("gamma"));
                return SpectralDensity(l);
            }
            if (kind == "ohmic") {
                OhmicExpCutoff o;
                set_if(o.gamma_damp, s.number("gamma_damp"));
                set_if(o.omega_cutoff, s.number("omega_cutoff"));
                return SpectralDensity(o);
            }
            if (kind == "tabulated") {
                Tabulated t;
                auto g = s.numbers("grid");
                auto v = s.numbers("values");
                if (!g || !v) s.fail(s.header_line(), "tabulated bath needs 'grid' and 'values'");
                t.grid = *g;
                t.values = *v;
                return SpectralDensity(std::move(t));
            }
        } catch (const std::invalid_argument& e) {
            s.fail(s.header_line(), e.what());
        }
        s.fail(s.line_of("kind"), "unknown bath kind '" + kind + "'");
    };
    BathConfig b{s.name(), BathSpec{build()}, {position}, 1.0};
    set_if(b.spec.temperature, s.number("temperature"));
    if (b.spec.temperature < 0.0) s.fail(s.line_of("temperature"), "'temperature' must be non-negative");
    if (auto n = s.word("noise")) {
        if (*n == "quantum")
            b.spec.kind = NoiseKind::Quantum;
        else if (*n == "classical")
            b.spec.kind = NoiseKind::Classical;
        else
            s.fail(s.line_of("noise"), "'noise' must be quantum or classical");
    }
    if (auto o = s.integers("oscillators")) {
        b.oscillators.assign(o->begin(), o->end());
    }
    set_if(b.temperature_factor, s.number("temperature_factor"));
    if (!(b.temperature_factor > 0.0)) s.fail(s.line_of("temperature_factor"), "'temperature_factor' must be positive");
    s.reject_unused();
    return b;
}

void parse_simulation(Section& s, RunConfig& cfg) {
    SimConfig& sim = cfg.sim;
    set_if(sim.dt, s.number("dt"));
    set_if(sim.t_final, s.number("t_final"));
    if (auto v = s.integer("n_traj")) sim.n_traj = *v;
    if (auto v = s.integer("master_seed")) {
        sim.master_seed = *v;
        cfg.seed_given = true;
    }
    if (auto v = s.integer("sample_every")) sim.sample_every = *v;
    set_if(sim.heat_window, s.number("heat_window"));
    if (auto v = s.integer("chunk")) sim.chunk = *v;
    if (auto v = s.integer("padding")) sim.synthesis.padding = *v;
    if (auto v = s.word("integrator")) {
        if (*v == "embedded")
            sim.integrator = Integrator::Embedded;
        else if (*v == "convolution")
            sim.integrator = Integrator::Convolution;
        else
            s.fail(s.line_of("integrator"), "'integrator' must be embedded or convolution");
    }
    set_if(sim.initial.mu_x, s.number("mu_x0"));
    set_if(sim.initial.mu_p, s.number("mu_p0"));
    set_if(sim.initial.sigma_xx, s.number("sigma_xx0"));
    set_if(sim.initial.sigma_xp, s.number("sigma_xp0"));
    set_if(sim.initial.sigma_pp, s.number("sigma_pp0"));
    if (auto v = s.integer("checkpoints")) cfg.checkpoints = *v;
    set_if(cfg.check_sigma, s.number("check_sigma"));
    positive(s, "check_sigma", cfg.check_sigma);
    s.reject_unused();
    try {
        validate(sim);
    } catch (const std::invalid_argument& e) {
        s.fail(s.header_line(), e.what());
    }
}

void parse_noise(Section& s, NoiseCheckConfig& n) {
    if (auto v = s.integer("n")) n.n = *v;
    if (auto v = s.integer("traces")) n.traces = *v;
    if (auto v = s.integer("segment")) n.segment = *v;
    set_if(n.tolerance, s.number("tolerance"));
    if (auto v = s.number("band_lo")) n.band_lo = *v;
    if (auto v = s.number("band_hi")) n.band_hi = *v;
    set_if(n.skew_tol, s.number("skew_tol"));
    set_if(n.kurt_tol, s.number("kurt_tol"));
    if (auto v = s.integers("lags")) n.lags.assign(v->begin(), v->end());
    s.reject_unused();
    if (n.n < 2) s.fail(s.line_of("n"), "'n' must be at least 2");
    if (n.traces < 1) s.fail(s.line_of("traces"), "'traces' must be at least 1");
    if (n.segment % 2 != 0 || n.segment > n.n) s.fail(s.line_of("segment"), "'segment' must be even and at most n");
    if (n.band_lo && n.band_hi && !(*n.band_hi > *n.band_lo))
        s.fail(s.line_of("band_hi"), "'band_hi' must exceed 'band_lo'");
    for (std::size_t lag : n.lags) {
        if (lag >= n.n) s.fail(s.line_of("lags"), "lag exceeds trace length");
    }
}

void parse_sweep(Section& s, SweepConfig& w) {
    if (auto v = s.numbers("temperatures")) w.temperatures = *v;
    const auto lo = s.number("t_min");
    const auto hi = s.number("t_max");
    const auto pts = s.integer("points");
    if (lo || hi || pts) {
        if (!w.temperatures.empty()) s.fail(s.line_of("t_min"), "give either 'temperatures' or a t_min/t_max/points range");
        if (!lo || !hi || !pts) s.fail(s.header_line(), "'t_min', 't_max' and 'points' go together");
        if (!(*lo > 0.0) || !(*hi >= *lo) || *pts < 1) s.fail(s.line_of("t_min"), "temperature range must satisfy 0 < t_min <= t_max, points >= 1");
        // Logarithmic spacing, endpoints included.
        for (std::uint64_t i = 0; i < *pts; ++i) {
            const double f = *pts == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(*pts - 1);
            w.temperatures.push_back(*lo * std::pow(*hi / *lo, f));
        }
    }
    if (auto v = s.numbers("lambdas")) w.lambdas = *v;
    s.reject_unused();
    for (double t : w.temperatures) {
        if (!(t >= 0.0)) s.fail(s.line_of("temperatures"), "temperatures must be non-negative");
    }
}

void parse_network(Section& s, NetworkConfig& n) {
    n.present = true;
    if (auto v = s.numbers("mass")) n.mass = square_matrix(s, "mass", *v);
    if (auto v = s.numbers("potential")) n.potential = square_matrix(s, "potential", *v);
    if (auto v = s.number("kappa")) n.kappa = *v;
    s.reject_unused();
    if (n.mass.has_value() != n.potential.has_value())
        s.fail(s.header_line(), "'mass' and 'potential' go together");
    if (n.mass && n.kappa) s.fail(s.line_of("kappa"), "'kappa' conflicts with explicit matrices");
    if (n.mass && n.mass->rows() != n.potential->rows())
        s.fail(s.line_of("potential"), "'mass' and 'potential' differ in size");
}

}  // namespace

RunConfig parse_config(std::istream& in, const std::string& origin) {
    RunConfig cfg;
    Section global("global", origin, 0);
    std::vector<Section> sections;
    std::string raw;
    std::size_t line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        const auto hash = raw.find('#');
        const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') global.fail(line_no, "malformed section header '" + line + "'");
            const std::string name = trim(line.substr(1, line.size() - 2));
            for (const auto& s : sections) {
                if (s.name() == name) global.fail(line_no, "duplicate section [" + name + "]");
            }
            sections.emplace_back(name, origin, line_no);
            cfg.echo.push_back("[" + name + "]");
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) global.fail(line_no, "expected 'key = value', got '" + line + "'");
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (key.empty() || value.empty()) global.fail(line_no, "expected 'key = value', got '" + line + "'");
        cfg.echo.push_back(key + " = " + value);
        (sections.empty() ? global : sections.back()).add(std::move(key), std::move(value), line_no);
    }

    if (auto u = global.word("units")) {
        if (*u != "nondimensional") global.fail(global.line_of("units"), "only 'units = nondimensional' is supported");
    }
    global.reject_unused();

    std::map<std::size_t, BathConfig> numbered;
    bool plain_bath = false;
    for (auto& s : sections) {
        const std::string& name = s.name();
        if (name == "oscillator") {
            set_if(cfg.oscillator.mass, s.number("mass"));
            set_if(cfg.oscillator.omega, s.number("omega"));
            set_if(cfg.oscillator.counter_term, s.boolean("counter_term"));
            s.reject_unused();
            try {
                validate(cfg.oscillator);
            } catch (const std::invalid_argument& e) {
                s.fail(s.header_line(), e.what());
            }
        } else if (name == "bath") {
            plain_bath = true;
            numbered.emplace(0, parse_bath(s, 0));
        } else if (name.rfind("bath.", 0) == 0) {
            std::size_t idx = 0;
            const std::string tail = name.substr(5);
            auto [p, ec] = std::from_chars(tail.data(), tail.data() + tail.size(), idx);
            if (ec != std::errc{} || p != tail.data() + tail.size() || tail.empty())
                s.fail(s.header_line(), "bath sections are named [bath] or [bath.N]");
            numbered.emplace(idx, parse_bath(s, idx));
        } else if (name == "simulation") {
            parse_simulation(s, cfg);
        } else if (name == "noise") {
            parse_noise(s, cfg.noise);
        } else if (name == "sweep") {
            parse_sweep(s, cfg.sweep);
        } else if (name == "network") {
            parse_network(s, cfg.network);
        } else {
            s.fail(s.header_line(), "unknown section");
        }
    }
    if (plain_bath && numbered.size() > 1)
        throw ConfigError(origin + ": [bath] cannot be combined with [bath.N] sections");
    std::size_t expect = 0;
    for (auto& [idx, b] : numbered) {
        if (idx != expect++) throw ConfigError(origin + ": bath sections must be numbered 0, 1, 2, ... without gaps");
        cfg.baths.push_back(std::move(b));
    }
    return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
    return parse_config(in, path.string());
}

const BathConfig& single_bath(const RunConfig& cfg) {
    if (cfg.baths.size() != 1)
        throw ConfigError("this command needs exactly one bath section, found " + std::to_string(cfg.baths.size()));
    return cfg.baths.front();
}

}  // namespace qcl::cli
