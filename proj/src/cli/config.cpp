#include "kinlim/cli/config.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "kinlim/fft.hpp"

namespace kinlim::cli {

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream in(s);
    while (std::getline(in, cur, sep)) out.push_back(trim(cur));
    return out;
}

std::vector<std::string> words(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream in(s);
    std::string w;
    while (in >> w) out.push_back(w);
    return out;
}

struct Ctx {
    int line = 0;
    std::string key;
    [[noreturn]] void fail(const std::string& what) const {
        throw ConfigError("config line " + std::to_string(line) + ", key '" + key + "': " + what, line, key);
    }
};

double plain_number(const std::string& s, const Ctx& c) {
    double x = 0.0;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), x);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size()) c.fail("not a number: '" + s + "'");
    return x;
}

// Reals accept an optional pi factor: "3", "4pi", "2*pi", "pi/0.3", "2pi/0.3".
double real(const std::string& raw, const Ctx& c) {
    std::string s = trim(raw);
    if (s.empty()) c.fail("empty value");
    std::string den;
    if (const auto slash = s.find('/'); slash != std::string::npos) {
        den = trim(s.substr(slash + 1));
        s = trim(s.substr(0, slash));
    }
    double v = 0.0;
    if (const auto p = s.find("pi"); p != std::string::npos && p + 2 == s.size()) {
        std::string f = trim(s.substr(0, p));
        if (!f.empty() && f.back() == '*') f = trim(f.substr(0, f.size() - 1));
        v = (f.empty() ? 1.0 : plain_number(f, c)) * pi;
    } else {
        v = plain_number(s, c);
    }
    if (!den.empty()) {
        const double d = plain_number(den, c);
        if (d == 0.0) c.fail("division by zero");
        v /= d;
    }
    if (!std::isfinite(v)) c.fail("value is not finite");
    return v;
}

int integer(const std::string& s, const Ctx& c) {
    int x = 0;
    const auto t = trim(s);
    const auto r = std::from_chars(t.data(), t.data() + t.size(), x);
    if (r.ec != std::errc() || r.ptr != t.data() + t.size()) c.fail("not an integer: '" + t + "'");
    return x;
}

bool boolean(const std::string& s, const Ctx& c) {
    if (s == "true" || s == "yes" || s == "1") return true;
    if (s == "false" || s == "no" || s == "0") return false;
    c.fail("not a boolean: '" + s + "'");
}

std::vector<double> real_list(const std::string& s, const Ctx& c) {
    std::vector<double> out;
    for (const auto& w : split(s, ',')) out.push_back(real(w, c));
    if (out.empty()) c.fail("empty list");
    return out;
}

template <class E>
E enum_value(const std::string& s, const std::vector<std::pair<const char*, E>>& names, const Ctx& c) {
    std::string opts;
    for (const auto& [n, v] : names) {
        if (s == n) return v;
        opts += std::string(opts.empty() ? "" : ", ") + n;
    }
    c.fail("unknown value '" + s + "' (expected one of: " + opts + ")");
}

const std::vector<std::pair<const char*, Model>> model_names = {{"vm", Model::vm}, {"vp", Model::vp}, {"vd", Model::vd}};
const std::vector<std::pair<const char*, EquilibriumKind>> eq_names = {
    {"maxwellian", EquilibriumKind::maxwellian},
    {"two_stream", EquilibriumKind::two_stream},
    {"bump_on_tail", EquilibriumKind::bump_on_tail},
    {"anisotropic_product", EquilibriumKind::anisotropic_product}};
const std::vector<std::pair<const char*, ModeShape>> shape_names = {{"density", ModeShape::density},
                                                                    {"current1", ModeShape::current1},
                                                                    {"current2", ModeShape::current2},
                                                                    {"stress", ModeShape::stress}};
const std::vector<std::pair<const char*, VInterp>> interp_names = {{"cubic_spline", VInterp::cubic_spline},
                                                                   {"spectral", VInterp::spectral}};
const std::vector<std::pair<const char*, ExperimentKind>> kind_names = {
    {"run", ExperimentKind::run},
    {"penrose_scan", ExperimentKind::penrose_scan},
    {"landau", ExperimentKind::landau},
    {"two_stream_timing", ExperimentKind::two_stream_timing},
    {"weibel", ExperimentKind::weibel},
    {"conv_vm_vp", ExperimentKind::conv_vm_vp},
    {"hierarchy_check", ExperimentKind::hierarchy_check},
    {"scaling_check", ExperimentKind::scaling_check}};

template <class E>
const char* name_of(E v, const std::vector<std::pair<const char*, E>>& names) {
    for (const auto& [n, x] : names)
        if (x == v) return n;
    return "?";
}

using Setter = std::function<void(ExperimentSpec&, const std::string&, const Ctx&)>;

struct KeyDef {
    Setter set;
    bool repeatable = false;
};

std::map<std::string, KeyDef> key_table() {
    std::map<std::string, KeyDef> t;
    auto R = [&](const char* k, auto f) { t[k] = {f, false}; };
    // [experiment]
    R("experiment.kind", [](ExperimentSpec& s, const std::string& v, const Ctx& c) {
        if (v.rfind("conv_vm_vd", 0) == 0) {
            s.kind = ExperimentKind::conv_vm_vd;
            const std::string n = v.substr(10);
            s.vd_order = n.empty() ? 1 : integer(n, c);
            if (s.vd_order < 1) c.fail("Darwin order must be >= 1");
            return;
        }
        s.kind = enum_value(v, kind_names, c);
    });
    R("experiment.seed", [](ExperimentSpec& s, const std::string& v, const Ctx& c) {
        const int x = integer(v, c);
        if (x < 0) c.fail("seed must be nonnegative");
        s.seed = static_cast<unsigned>(x);
    });
    R("experiment.eps_values", [](ExperimentSpec& s, const std::string& v, const Ctx& c) { s.eps_values = real_list(v, c); });
    R("experiment.dt_values", [](ExperimentSpec& s, const std::string& v, const Ctx& c) { s.dt_values = real_list(v, c); });
    R("experiment.resolutions", [](ExperimentSpec& s, const std::string& v, const Ctx& c) {
        s.resolutions.clear();
        for (const auto& w : split(v, ',')) s.resolutions.push_back(integer(w, c));
        if (s.resolutions.empty()) c.fail("empty list");
    });
    R("experiment.lambdas", [](ExperimentSpec& s, const std::string& v, const Ctx& c) {
        s.lambdas = real_list(v, c);
        for (double l : s.lambdas)
            if (!(l > 0.0)) c.fail("scaling factors must be positive");
    });
    R("experiment.threshold", [](ExperimentSpec& s, const std::string& v, const Ctx& c) { s.threshold = real(v, c); });
    R("experiment.delta_rule", [](ExperimentSpec& s, const std::string& v, const Ctx& c) {
        if (v == "fixed") s.delta_eps2 = false;
        else if (v == "eps2") s.delta_eps2 = true;
        else c.fail("unknown value '" + v + "' (expected fixed or eps2)");
    });
    R("experiment.fit_window", [](ExperimentSpec& s, const std::string& v, const Ctx& c) {
        const auto w = real_list(v, c);
        if (w.size() != 2 || !(w[1] > w[0]) || w[0] < 0.0) c.fail("expected 't0, t1' with 0 <= t0 < t1");
        s.fit_t0 = w[0];
        s.fit_t1 = w[1];
    });
    R("experiment.error_hn", [](ExperimentSpec& s, const std::string& v, const Ctx& c) {
        s.error_hn = integer(v, c);
        if (s.error_hn < 0 || s.error_hn > 4) c.fail("Sobolev order must be in 0..4");
    });
    // [run]
    R("run.model", [](ExperimentSpec& s, const std::string& v, const Ctx& c) { s.base.model = enum_value(v, model_names, c); });
    R("run.darwin_order", [](ExperimentSpec& s, const std::string& v, const Ctx& c) { s.base.darwin_order = integer(v, c); });
    R("run.eps", [](ExperimentSpec& s, const std::string& v, const Ctx& c) { s.base.eps = real(v, c); });
    R("run.delta", [](ExperimentSpec& s, const std::string& v, const Ctx& c) { s.base.delta = real(v, c); });
    R("run.T", [](ExperimentSpec& s, const std::string& v, const Ctx& c) { s.base.T_final = real(v, c); });
    R("run.dt", [](ExperimentSpec& s, const std::string& v, const Ctx& c) { s.base.dt = real(v, c); });
    R("run.prepared_order", [](ExperimentSpec& s, const std::string& v, const Ctx& c) { s.base.prepared_order = integer(v, c); });
    R("run.output_every", [](ExperimentSpec& s, const std::string& v, const Ctx& c) { s.base.output_every = integer(v, c); });
    R("run.snapshot_every", [](ExperimentSpec& s, const std::string& v, const Ctx& c) { s.base.snapshot_every = integer(v, c); });
    R("run.v_interp", [](ExperimentSpec& s, const std::string& v, const Ctx& c) { s.base.v_interp = enum_value(v, interp_names, c); });
    R("run.substeps", [](ExperimentSpec& s, const std::string& v, const Ctx& c) { s.base.substeps = integer(v, c); });
    R("run.mass_fix", [](ExperimentSpec& s, const std::string& v, const Ctx& c) { s.base.mass_fix = boolean(v, c); });
    // [grid]
    R("grid.nx", [](ExperimentSpec& s, const std::string& v, const Ctx& c) { s.base.grid.nx = integer(v, c); });
    R("grid.L", [](ExperimentSpec& s, const std::string& v, const Ctx& c) { s.base.grid.L = real(v, c); });
    R("grid.dim_v", [](ExperimentSpec& s, const std::string& v, const Ctx& c) { s.base.grid.dim_v = integer(v, c); });
    R("grid.nv", [](ExperimentSpec& s, const std::string& v, const Ctx& c) { s.base.grid.nv = integer(v, c); });
    R("grid.vmax", [](ExperimentSpec& s, const std::string& v, const Ctx& c) { s.base.grid.vmax = real(v, c); });
    // [equilibrium]
    R("equilibrium.kind", [](ExperimentSpec& s, const std::string& v, const Ctx& c) { s.base.equilibrium.kind = enum_value(v, eq_names, c); });
    R("equilibrium.sigma", [](ExperimentSpec& s, const std::string& v, const Ctx& c) { s.base.equilibrium.sigma = real(v, c); });
    R("equilibrium.u", [](ExperimentSpec& s, const std::string& v, const Ctx& c) { s.base.equilibrium.u = real(v, c); });
    R("equilibrium.bump_density", [](ExperimentSpec& s, const std::string& v, const Ctx& c) { s.base.equilibrium.bump_density = real(v, c); });
    R("equilibrium.bump_velocity", [](ExperimentSpec& s, const std::string& v, const Ctx& c) { s.base.equilibrium.bump_velocity = real(v, c); });
    R("equilibrium.bump_sigma", [](ExperimentSpec& s, const std::string& v, const Ctx& c) { s.base.equilibrium.bump_sigma = real(v, c); });
    R("equilibrium.sigmas", [](ExperimentSpec& s, const std::string& v, const Ctx& c) { s.base.equilibrium.sigmas = real_list(v, c); });
    // [perturbation]
    t["perturbation.mode"] = {[](ExperimentSpec& s, const std::string& v, const Ctx& c) {
                                  const auto w = words(v);
                                  if (w.size() != 4) c.fail("expected 'k amplitude phase shape'");
                                  s.base.perturbation.f.push_back(
                                      {integer(w[0], c), real(w[1], c), real(w[2], c), enum_value(w[3], shape_names, c)});
                              },
                              true};
    t["perturbation.field"] = {[](ExperimentSpec& s, const std::string& v, const Ctx& c) {
                                   const auto w = words(v);
                                   if (w.size() != 3) c.fail("expected 'k e2 b3'");
                                   s.base.perturbation.fields.push_back({integer(w[0], c), real(w[1], c), real(w[2], c)});
                               },
                               true};
    t["perturbation.e1"] = {[](ExperimentSpec& s, const std::string& v, const Ctx& c) {
                                const auto w = words(v);
                                if (w.size() != 3) c.fail("expected 'k amplitude phase'");
                                s.e1.push_back({integer(w[0], c), real(w[1], c), real(w[2], c)});
                            },
                            true};
    R("perturbation.random_modes", [](ExperimentSpec& s, const std::string& v, const Ctx& c) {
        s.random_modes = integer(v, c);
        if (s.random_modes < 0) c.fail("must be nonnegative");
    });
    R("perturbation.random_amplitude", [](ExperimentSpec& s, const std::string& v, const Ctx& c) { s.random_amplitude = real(v, c); });
    // [penrose]
    R("penrose.gamma_min", [](ExperimentSpec& s, const std::string& v, const Ctx& c) { s.penrose.gamma_min = real(v, c); });
    R("penrose.gamma_max", [](ExperimentSpec& s, const std::string& v, const Ctx& c) { s.penrose.gamma_max = real(v, c); });
    R("penrose.n_gamma", [](ExperimentSpec& s, const std::string& v, const Ctx& c) { s.penrose.n_gamma = integer(v, c); });
    R("penrose.tau_max", [](ExperimentSpec& s, const std::string& v, const Ctx& c) { s.penrose.tau_max = real(v, c); });
    R("penrose.n_tau", [](ExperimentSpec& s, const std::string& v, const Ctx& c) { s.penrose.n_tau = integer(v, c); });
    R("penrose.k_max", [](ExperimentSpec& s, const std::string& v, const Ctx& c) { s.penrose.k_max = integer(v, c); });
    R("penrose.eps", [](ExperimentSpec& s, const std::string& v, const Ctx& c) { s.penrose.eps = real(v, c); });
    return t;
}

std::string fmt_real(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

std::string join(const std::vector<double>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + fmt_real(v[i]);
    return s;
}

// d_x E_1 = rho(f_0) - <rho(f_0)> for the specified E_1 modes.
void check_gauss(const ExperimentSpec& s, int line) {
    const auto& g = s.base.grid;
    Equilibrium eq(s.base.equilibrium, g.dim_v, g.nv, g.vmax);
    RunConfig rc = s.base;
    rc.perturbation = resolved_perturbation(s);
    const DistField f0 = initial_perturbation(rc, eq);
    Field rho = velocity_moment(f0, 0.0, 0, 0);
    const double m = spatial_mean(rho);
    for (double& x : rho) x -= m;
    Field e1(g.nx, 0.0);
    for (const auto& e : s.e1) {
        if (e.k < 1 || e.k >= g.nx / 2) throw ConfigError("config line " + std::to_string(line) +
                                                               ", key 'perturbation.e1': mode out of range",
                                                           line, "perturbation.e1");
        for (int i = 0; i < g.nx; ++i) e1[i] += e.amplitude * std::cos(g.kappa(e.k) * g.x(i) + e.phase);
    }
    const Field de = spectral_derivative(e1, g.L, 1);
    Field r(g.nx);
    for (int i = 0; i < g.nx; ++i) r[i] = de[i] - rho[i];
    const double res = l2_norm(r, g.L), scale = std::max(l2_norm(rho, g.L), l2_norm(de, g.L));
    if (res > 1e-8 * std::max(scale, 1e-300)) {
        char buf[200];
        std::snprintf(buf, sizeof buf,
                      "config line %d, key 'perturbation.e1': Gauss law d_x E_1 = rho(f_0) - <rho> violated "
                      "(||d_x E_1 - rho||_2 = %.3e, ||rho||_2 = %.3e)",
                      line, res, l2_norm(rho, g.L));
        throw ConfigError(buf, line, "perturbation.e1");
    }
}

}  // namespace

std::string kind_name(ExperimentKind k, int darwin_order) {
    if (k == ExperimentKind::conv_vm_vd) return "conv_vm_vd" + std::to_string(darwin_order);
    return name_of(k, kind_names);
}

void ExperimentSpec::validate() const {
    auto need_eps = [&](bool positive) {
        if (eps_values.empty()) throw Error("experiment: eps_values must be nonempty for " + kind_name(kind, vd_order));
        for (double e : eps_values)
            if (positive ? !(e > 0.0) : e < 0.0) throw Error("experiment: eps_values must be strictly positive");
    };
    for (double d : dt_values)
        if (!(d > 0.0)) throw Error("experiment: dt_values must be positive");
    for (int n : resolutions)
        if (n < 8 || (n & (n - 1))) throw Error("experiment: resolutions must be powers of two >= 8");
    switch (kind) {
        case ExperimentKind::conv_vm_vp:
        case ExperimentKind::conv_vm_vd:
        case ExperimentKind::two_stream_timing:
        case ExperimentKind::hierarchy_check:
            need_eps(true);
            if (eps_values.size() < 2) throw Error("experiment: a slope fit needs at least two eps values");
            break;
        case ExperimentKind::scaling_check:
            need_eps(true);
            break;
        default:
            break;
    }
    if (kind == ExperimentKind::conv_vm_vd && base.grid.dim_v != 2)
        throw Error("experiment: conv_vm_vd needs the 1D2V geometry");
    if (kind == ExperimentKind::hierarchy_check && base.grid.dim_v != 2)
        throw Error("experiment: hierarchy_check needs the 1D2V geometry");
    if (kind == ExperimentKind::two_stream_timing && !(threshold > 0.0))
        throw Error("experiment: threshold must be positive");
    if (kind == ExperimentKind::penrose_scan) {
        const auto& p = penrose;
        if (!(p.gamma_min > 0.0) || !(p.gamma_max > p.gamma_min) || p.n_gamma < 2 || !(p.tau_max > 0.0) ||
            p.n_tau < 2 || p.k_max < 1 || p.eps < 0.0)
            throw Error("experiment: invalid penrose scan ranges");
    }
    if (random_modes > 0 && random_amplitude == 0.0)
        throw Error("experiment: random_modes given without random_amplitude");
    if (kind != ExperimentKind::penrose_scan) base.validate();
}

Perturbation resolved_perturbation(const ExperimentSpec& spec) {
    Perturbation p = spec.base.perturbation;
    if (spec.random_modes > 0) {
        std::mt19937_64 rng(spec.seed);
        std::uniform_real_distribution<double> ph(0.0, 2.0 * pi);
        const int kmax = std::max(1, spec.base.grid.nx / 4);
        for (int i = 0; i < spec.random_modes; ++i)
            p.f.push_back({1 + i % kmax, spec.random_amplitude, ph(rng), ModeShape::density});
    }
    return p;
}

ExperimentSpec parse_config_text(std::string_view text, const std::string& origin) {
    static const auto table = key_table();
    static const std::set<std::string> sections = {"experiment", "run", "grid", "equilibrium", "perturbation", "penrose"};
    ExperimentSpec spec;
    std::string section;
    std::set<std::string> seen;
    std::map<std::string, int> first_line;
    std::istringstream in{std::string(text)};
    std::string raw;
    Ctx c;
    while (std::getline(in, raw)) {
        ++c.line;
        c.key.clear();
        std::string s = raw;
        if (const auto h = s.find_first_of("#;"); h != std::string::npos) s = s.substr(0, h);
        s = trim(s);
        if (s.empty()) continue;
        if (s.front() == '[') {
            if (s.back() != ']') c.fail("malformed section header '" + s + "'");
            section = trim(s.substr(1, s.size() - 2));
            c.key = section;
            if (!sections.count(section)) c.fail("unknown section [" + section + "]");
            continue;
        }
        const auto eq = s.find('=');
        if (eq == std::string::npos) c.fail("expected 'key = value', got '" + s + "'");
        const std::string key = trim(s.substr(0, eq)), value = trim(s.substr(eq + 1));
        if (section.empty()) {
            c.key = key;
            c.fail("key outside of any section");
        }
        c.key = section + "." + key;
        const auto it = table.find(c.key);
        if (it == table.end()) c.fail("unknown key");
        if (value.empty()) c.fail("empty value");
        if (!it->second.repeatable && !seen.insert(c.key).second) c.fail("duplicate key");
        first_line.emplace(c.key, c.line);
        it->second.set(spec, value, c);
    }
    try {
        spec.validate();
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        // Point at the first key whose name appears as a word in the message.
        const std::string msg = e.what();
        auto is_word = [](char ch) { return std::isalnum(static_cast<unsigned char>(ch)) || ch == '_'; };
        for (const auto& [key, line] : first_line) {
            const std::string leaf = key.substr(key.find('.') + 1);
            for (auto pos = msg.find(leaf); pos != std::string::npos; pos = msg.find(leaf, pos + 1)) {
                const auto end = pos + leaf.size();
                if ((pos == 0 || !is_word(msg[pos - 1])) && (end == msg.size() || !is_word(msg[end])))
                    throw ConfigError("config line " + std::to_string(line) + ", key '" + key + "': " + msg, line, key);
            }
        }
        throw ConfigError(origin.empty() ? msg : origin + ": " + msg, 0, {});
    }
    if (!spec.e1.empty()) check_gauss(spec, first_line["perturbation.e1"]);
    return spec;
}

ExperimentSpec parse_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open config file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    try {
        return parse_config_text(ss.str(), {});
    } catch (const ConfigError& e) {
        throw ConfigError(path.string() + ": " + e.what(), e.line, e.key);
    }
}

std::vector<std::pair<std::string, std::string>> config_entries(const ExperimentSpec& s) {
    std::vector<std::pair<std::string, std::string>> e;
    auto add = [&](const std::string& k, const std::string& v) { e.emplace_back(k, v); };
    const auto& b = s.base;
    add("experiment.kind", kind_name(s.kind, s.vd_order));
    add("experiment.seed", std::to_string(s.seed));
    if (!s.eps_values.empty()) add("experiment.eps_values", join(s.eps_values));
    if (!s.dt_values.empty()) add("experiment.dt_values", join(s.dt_values));
    if (!s.resolutions.empty()) {
        std::string r;
        for (std::size_t i = 0; i < s.resolutions.size(); ++i) r += (i ? ", " : "") + std::to_string(s.resolutions[i]);
        add("experiment.resolutions", r);
    }
    add("experiment.lambdas", join(s.lambdas));
    add("experiment.threshold", fmt_real(s.threshold));
    add("experiment.delta_rule", s.delta_eps2 ? "eps2" : "fixed");
    if (s.fit_t1 > s.fit_t0) add("experiment.fit_window", fmt_real(s.fit_t0) + ", " + fmt_real(s.fit_t1));
    add("experiment.error_hn", std::to_string(s.error_hn));
    add("run.model", name_of(b.model, model_names));
    add("run.darwin_order", std::to_string(b.darwin_order));
    add("run.eps", fmt_real(b.eps));
    add("run.delta", fmt_real(b.delta));
    add("run.T", fmt_real(b.T_final));
    add("run.dt", fmt_real(b.dt));
    add("run.prepared_order", std::to_string(b.prepared_order));
    add("run.output_every", std::to_string(b.output_every));
    add("run.snapshot_every", std::to_string(b.snapshot_every));
    add("run.v_interp", name_of(b.v_interp, interp_names));
    add("run.substeps", std::to_string(b.substeps));
    add("run.mass_fix", b.mass_fix ? "true" : "false");
    add("grid.nx", std::to_string(b.grid.nx));
    add("grid.L", fmt_real(b.grid.L));
    add("grid.dim_v", std::to_string(b.grid.dim_v));
    add("grid.nv", std::to_string(b.grid.nv));
    add("grid.vmax", fmt_real(b.grid.vmax));
    const auto& q = b.equilibrium;
    add("equilibrium.kind", name_of(q.kind, eq_names));
    add("equilibrium.sigma", fmt_real(q.sigma));
    add("equilibrium.u", fmt_real(q.u));
    add("equilibrium.bump_density", fmt_real(q.bump_density));
    add("equilibrium.bump_velocity", fmt_real(q.bump_velocity));
    add("equilibrium.bump_sigma", fmt_real(q.bump_sigma));
    if (!q.sigmas.empty()) add("equilibrium.sigmas", join(q.sigmas));
    for (const auto& m : b.perturbation.f)
        add("perturbation.mode", std::to_string(m.k) + " " + fmt_real(m.amplitude) + " " + fmt_real(m.phase) + " " +
                                     name_of(m.shape, shape_names));
    for (const auto& m : b.perturbation.fields)
        add("perturbation.field", std::to_string(m.k) + " " + fmt_real(m.e2) + " " + fmt_real(m.b3));
    for (const auto& m : s.e1)
        add("perturbation.e1", std::to_string(m.k) + " " + fmt_real(m.amplitude) + " " + fmt_real(m.phase));
    add("perturbation.random_modes", std::to_string(s.random_modes));
    add("perturbation.random_amplitude", fmt_real(s.random_amplitude));
    const auto& p = s.penrose;
    add("penrose.gamma_min", fmt_real(p.gamma_min));
    add("penrose.gamma_max", fmt_real(p.gamma_max));
    add("penrose.n_gamma", std::to_string(p.n_gamma));
    add("penrose.tau_max", fmt_real(p.tau_max));
    add("penrose.n_tau", std::to_string(p.n_tau));
    add("penrose.k_max", std::to_string(p.k_max));
    add("penrose.eps", fmt_real(p.eps));
    return e;
}

std::string canonical_config(const ExperimentSpec& spec) {
    std::string out, section;
    for (const auto& [k, v] : config_entries(spec)) {
        const auto dot = k.find('.');
        const std::string sec = k.substr(0, dot);
        if (sec != section) {
            out += (out.empty() ? "[" : "\n[") + sec + "]\n";
            section = sec;
        }
        out += k.substr(dot + 1) + " = " + v + "\n";
    }
    return out;
}

}  // namespace kinlim::cli
