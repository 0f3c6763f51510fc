#include "kinlim/cli/experiments.hpp"

#include <array>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <map>
#include <mutex>
#include <thread>

#include <boost/math/distributions/students_t.hpp>

#include "kinlim/linear_response.hpp"
#include "kinlim/penrose.hpp"

namespace kinlim::cli {

std::string num(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

void Table::add(std::vector<std::string> row) {
    if (row.size() != columns.size()) throw Error("table " + name + ": row width does not match the header");
    rows.push_back(std::move(row));
}

int Table::column(const std::string& c) const {
    for (std::size_t i = 0; i < columns.size(); ++i)
        if (columns[i] == c) return static_cast<int>(i);
    throw Error("table " + name + ": no column " + c);
}

LineFit linear_fit(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 2) throw Error("linear_fit: need at least two paired samples");
    LineFit f;
    f.n = static_cast<int>(x.size());
    double mx = 0.0, my = 0.0;
    for (int i = 0; i < f.n; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= f.n;
    my /= f.n;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (int i = 0; i < f.n; ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (!(sxx > 0.0)) throw Error("linear_fit: abscissae are all equal");
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    f.r2 = syy > 0.0 ? sxy * sxy / (sxx * syy) : 1.0;
    if (f.n > 2) {
        const double sse = std::max(syy - f.slope * sxy, 0.0);
        f.slope_se = std::sqrt(sse / (f.n - 2) / sxx);
        const double tq = boost::math::quantile(boost::math::students_t(f.n - 2), 0.975);
        f.ci_low = f.slope - tq * f.slope_se;
        f.ci_high = f.slope + tq * f.slope_se;
    } else {
        f.slope_se = std::numeric_limits<double>::quiet_NaN();
        f.ci_low = f.ci_high = f.slope_se;
    }
    return f;
}

LineFit loglog_fit(std::span<const double> x, std::span<const double> y) {
    std::vector<double> lx, ly;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!(x[i] > 0.0) || !(y[i] > 0.0)) throw Error("loglog_fit: samples must be positive");
        lx.push_back(std::log(x[i]));
        ly.push_back(std::log(y[i]));
    }
    return linear_fit(lx, ly);
}

void parallel_for(int n, int threads, const std::function<void(int)>& job) {
    const int workers = std::max(1, std::min(threads, n));
    if (workers == 1) {
        for (int i = 0; i < n; ++i) job(i);
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr err;
    std::mutex m;
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (int i; (i = next++) < n;) {
                try {
                    job(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(m);
                    if (!err) err = std::current_exception();
                }
            }
        });
    for (auto& t : pool) t.join();
    if (err) std::rethrow_exception(err);
}

namespace {

double sq_norm(const Field& u, double L, int hn) {
    const double n = hn == 0 ? l2_norm(u, L) : hn_norm(u, L, hn);
    return n * n;
}

Field minus(const Field* a, const Field* b, std::size_t n) {
    Field d(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) d[i] = (a ? (*a)[i] : 0.0) - (b ? (*b)[i] : 0.0);
    return d;
}

double trapezoid_sqrt(std::span<const double> t, const std::vector<double>& v) {
    double s = 0.0;
    for (std::size_t i = 1; i < t.size(); ++i) s += 0.5 * (t[i] - t[i - 1]) * (v[i] + v[i - 1]);
    return std::sqrt(s);
}

}  // namespace

double field_error(const RunResult& a, const RunResult& b, double L, int hn) {
    if (a.hist_t.size() != b.hist_t.size() || a.hist_t.empty()) throw Error("field_error: histories differ in length");
    std::vector<double> v(a.hist_t.size());
    for (std::size_t n = 0; n < v.size(); ++n) {
        if (std::abs(a.hist_t[n] - b.hist_t[n]) > 1e-9 * (1.0 + std::abs(a.hist_t[n])))
            throw Error("field_error: histories have different time stamps");
        const auto& Ea = a.E_hist[n];
        const auto& Eb = b.E_hist[n];
        const std::size_t nx = Ea.c.empty() ? a.B_hist[n].size() : Ea.c[0].size();
        double s = 0.0;
        for (int d = 0; d < std::max(Ea.dim(), Eb.dim()); ++d)
            s += sq_norm(minus(d < Ea.dim() ? &Ea.c[d] : nullptr, d < Eb.dim() ? &Eb.c[d] : nullptr, nx), L, hn);
        const Field* Ba = a.B_hist.size() > n && !a.B_hist[n].empty() ? &a.B_hist[n] : nullptr;
        const Field* Bb = b.B_hist.size() > n && !b.B_hist[n].empty() ? &b.B_hist[n] : nullptr;
        if (Ba || Bb) s += sq_norm(minus(Ba, Bb, nx), L, hn);
        v[n] = s;
    }
    return trapezoid_sqrt(a.hist_t, v);
}

double history_error(std::span<const double> t, const std::vector<Field>& a, const std::vector<Field>& b, double L,
                     int hn) {
    if (a.size() != t.size() || b.size() != t.size()) throw Error("history_error: histories differ in length");
    std::vector<double> v(t.size());
    for (std::size_t n = 0; n < t.size(); ++n) v[n] = sq_norm(minus(&a[n], &b[n], a[n].size()), L, hn);
    return trapezoid_sqrt(t, v);
}

double crossing_time(std::span<const double> t, std::span<const double> u, double level) {
    for (std::size_t i = 1; i < u.size(); ++i) {
        if (u[i] > level && u[i - 1] <= level) {
            if (u[i - 1] > 0.0)
                return t[i - 1] + (t[i] - t[i - 1]) * (std::log(level) - std::log(u[i - 1])) /
                                      (std::log(u[i]) - std::log(u[i - 1]));
            return t[i - 1] + (t[i] - t[i - 1]) * (level - u[i - 1]) / (u[i] - u[i - 1]);
        }
    }
    return std::numeric_limits<double>::quiet_NaN();
}

namespace {

constexpr double nan_v = std::numeric_limits<double>::quiet_NaN();

struct Point {
    double eps, dt;
    int nx;
    std::string label() const {
        char buf[96];
        std::snprintf(buf, sizeof buf, "eps=%g dt=%g nx=%d", eps, dt, nx);
        return buf;
    }
};

std::vector<Point> sweep_points(const ExperimentSpec& s) {
    const auto eps = s.eps_values.empty() ? std::vector<double>{s.base.eps} : s.eps_values;
    const auto dts = s.dt_values.empty() ? std::vector<double>{s.base.dt} : s.dt_values;
    const auto nxs = s.resolutions.empty() ? std::vector<int>{s.base.grid.nx} : s.resolutions;
    std::vector<Point> pts;
    for (int nx : nxs)
        for (double dt : dts)
            for (double e : eps) pts.push_back({e, dt, nx});
    return pts;
}

RunConfig point_config(const ExperimentSpec& s, const Point& p) {
    RunConfig c = s.base;
    c.perturbation = resolved_perturbation(s);
    c.eps = p.eps;
    c.dt = p.dt;
    c.grid.nx = p.nx;
    return c;
}

// Runs job per point; a throwing point is recorded and the sweep continues.
void run_points(const std::vector<Point>& pts, int threads, ExperimentReport& rep,
                const std::function<void(int)>& job) {
    rep.points.assign(pts.size(), {});
    parallel_for(static_cast<int>(pts.size()), threads, [&](int i) {
        rep.points[i].label = pts[i].label();
        try {
            job(i);
        } catch (const std::exception& e) {
            rep.points[i].ok = false;
            rep.points[i].error = e.what();
        }
    });
}

double e_total(const EMState& em, double L) {
    double s = 0.0;
    for (const auto& c : em.E().c) s += std::pow(l2_norm(c, L), 2);
    return std::sqrt(s);
}

void add_fit(ExperimentReport& rep, Table& fits, const std::string& group, const std::string& quantity,
             const std::vector<double>& x, const std::vector<double>& y, bool loglog) {
    if (x.size() < 2) {
        rep.summary.emplace_back("fit " + quantity + " " + group, "too few successful points");
        return;
    }
    try {
        const auto f = loglog ? loglog_fit(x, y) : linear_fit(x, y);
        fits.add({group, quantity, num(f.slope), num(f.intercept), num(f.ci_low), num(f.ci_high), num(f.r2),
                  std::to_string(f.n)});
        char buf[160];
        std::snprintf(buf, sizeof buf, "%.4f (95%% CI [%.4f, %.4f], R^2 %.5f, n %d)", f.slope, f.ci_low, f.ci_high,
                      f.r2, f.n);
        rep.summary.emplace_back("slope " + quantity + (group.empty() ? "" : " " + group), buf);
    } catch (const Error& e) {
        rep.summary.emplace_back("fit " + quantity + " " + group, e.what());
    }
}

Table fit_table() {
    return {"fits", {"group", "quantity", "slope", "intercept", "ci_low", "ci_high", "r2", "n"}, {}};
}

std::string group_of(const Point& p) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "dt=%g nx=%d", p.dt, p.nx);
    return buf;
}

// ---- single run -----------------------------------------------------------

ExperimentReport exp_run(const ExperimentSpec& s) {
    ExperimentReport rep;
    RunConfig c = s.base;
    c.perturbation = resolved_perturbation(s);
    if (!s.out_dir.empty()) c.out_dir = s.out_dir / "snapshots";
    const auto r = run_model(c);
    const auto& d = r.diag;
    Table t{"diagnostics",
            {"t", "charge", "continuity", "energy", "field_energy", "e_norm", "b_norm", "field_hn", "e1_re", "e1_im",
             "bootstrap", "mean_jg", "gauge", "gauss", "boundary"},
            {}};
    for (std::size_t i = 0; i < d.t.size(); ++i)
        t.add({num(d.t[i]), num(d.charge[i]), num(d.continuity[i]), num(d.energy[i]), num(d.field_energy[i]),
               num(d.e_norm[i]), num(d.b_norm[i]), num(d.field_hn[i]), num(d.e1_mode[i].real()),
               num(d.e1_mode[i].imag()), num(d.bootstrap[i]), num(d.mean_jg[i]), num(d.gauge[i]), num(d.gauss[i]),
               num(d.boundary[i])});
    rep.tables.push_back(std::move(t));
    rep.plots.push_back({"energy", "Energy", "t", "W", false, false, {{"diagnostics", "t", "energy", "W"}}});
    rep.plots.push_back({"fields", "Field norms", "t", "L2 norm", false, true,
                         {{"diagnostics", "t", "e_norm", "|E|"}, {"diagnostics", "t", "b_norm", "|B|"}}});
    rep.summary.emplace_back("model", to_string(c.model));
    rep.summary.emplace_back("steps", std::to_string(c.steps()));
    rep.summary.emplace_back("aborted", r.aborted ? "yes: " + r.message : "no");
    rep.summary.emplace_back("velocity leak", r.leak ? "yes" : "no");
    if (!d.t.empty()) {
        double dw = 0.0, gmax = 0.0, gauge = 0.0;
        for (std::size_t i = 0; i < d.t.size(); ++i) {
            dw = std::max(dw, std::abs(d.energy[i] - d.energy[0]));
            gmax = std::max(gmax, d.gauss[i]);
            gauge = std::max(gauge, d.gauge[i]);
        }
        rep.summary.emplace_back("charge drift", num(d.charge.back() - d.charge.front()));
        rep.summary.emplace_back("max energy drift", num(dw));
        rep.summary.emplace_back("max Gauss residual", num(gmax));
        rep.summary.emplace_back("max gauge residual", num(gauge));
    }
    rep.points.push_back({"run", !r.aborted, r.message});
    return rep;
}

// ---- Penrose scan ---------------------------------------------------------

ExperimentReport exp_penrose(const ExperimentSpec& s, int threads) {
    ExperimentReport rep;
    const auto& g = s.base.grid;
    const auto& p = s.penrose;
    Equilibrium eq(s.base.equilibrium, g.dim_v, g.nv, g.vmax);
    PenroseSymbol ps;
    ps.eq = &eq;
    ps.eps = p.eps;
    ps.box_length = g.L;
    std::vector<double> gam(p.n_gamma), tau(p.n_tau);
    for (int i = 0; i < p.n_gamma; ++i) gam[i] = p.gamma_min + i * (p.gamma_max - p.gamma_min) / (p.n_gamma - 1);
    for (int i = 0; i < p.n_tau; ++i) tau[i] = -p.tau_max + 2.0 * p.tau_max * i / (p.n_tau - 1);
    std::vector<std::vector<int>> ks;
    for (int k = 1; k <= p.k_max; ++k) {
        std::vector<int> kv(g.dim_v, 0);
        kv[0] = k;
        ks.push_back(kv);
    }
    const auto report = stability_margin(ps, ks, gam, tau);

    std::vector<std::vector<cplx>> samples(ks.size());
    rep.points.assign(ks.size(), {});
    parallel_for(static_cast<int>(ks.size()), threads, [&](int i) {
        PenroseSymbol local = ps;
        local.cache = make_penrose_cache();
        rep.points[i].label = "k=" + std::to_string(ks[i][0]);
        for (double ga : gam)
            for (double ta : tau) samples[i].push_back(symbol(local, ga, ta, ks[i]));
    });
    Table sym{"symbol", {"k", "kappa", "gamma", "tau", "re", "im", "abs"}, {}};
    for (std::size_t i = 0; i < ks.size(); ++i) {
        std::size_t n = 0;
        for (double ga : gam)
            for (double ta : tau) {
                const cplx z = samples[i][n++];
                sym.add({std::to_string(ks[i][0]), num(ps.kappa(ks[i])), num(ga), num(ta), num(z.real()),
                         num(z.imag()), num(std::abs(z))});
            }
    }
    Table roots{"roots", {"k", "omega_re", "omega_im", "residual"}, {}};
    for (const auto& r : report.roots)
        roots.add({std::to_string(r.k.empty() ? 0 : r.k[0]), num(r.omega.real()), num(r.omega.imag()),
                   num(r.residual)});
    Table wind{"winding", {"k", "zeros"}, {}};
    for (std::size_t i = 0; i < ks.size() && i < report.winding.size(); ++i)
        wind.add({std::to_string(ks[i][0]), std::to_string(report.winding[i])});

    PlotSpec plot{"symbol_gamma_min", "|symbol| at the smallest gamma", "tau", "|symbol|", false, true, {}};
    for (const auto& k : ks)
        plot.series.push_back({"symbol", "tau", "abs", "k=" + std::to_string(k[0]), "gamma", num(gam[0])});
    rep.plots.push_back(std::move(plot));

    std::string text = "classification: " + std::string(to_string(report.classification)) + "\n";
    text += "margin: " + num(report.margin) + "\n";
    text += "k_worst: " + std::to_string(report.k_worst.empty() ? 0 : report.k_worst[0]) + "\n";
    for (const auto& r : report.roots)
        text += "root k=" + std::to_string(r.k.empty() ? 0 : r.k[0]) + " omega=" + num(r.omega.real()) + " " +
                num(r.omega.imag()) + "i residual=" + num(r.residual) + "\n";
    rep.texts.emplace_back("stability_report.txt", text);
    rep.summary.emplace_back("classification", to_string(report.classification));
    rep.summary.emplace_back("margin", num(report.margin));
    rep.summary.emplace_back("unstable roots", std::to_string(report.roots.size()));
    rep.tables.push_back(std::move(sym));
    rep.tables.push_back(std::move(roots));
    rep.tables.push_back(std::move(wind));
    return rep;
}

// ---- Landau damping -------------------------------------------------------

ExperimentReport exp_landau(const ExperimentSpec& s) {
    ExperimentReport rep;
    RunConfig c = s.base;
    c.perturbation = resolved_perturbation(s);
    if (c.perturbation.f.empty()) throw Error("landau: needs a perturbation mode");
    const int k = c.perturbation.f.front().k;
    const auto r = run_model(c);
    const double t0 = s.fit_t1 > s.fit_t0 ? s.fit_t0 : 0.1 * c.T_final;
    const double t1 = s.fit_t1 > s.fit_t0 ? s.fit_t1 : 0.9 * c.T_final;
    std::vector<double> u;
    for (auto z : r.diag.e1_mode) u.push_back(std::abs(z));
    const double rate_sim = envelope_rate(r.diag.t, u, t0, t1);

    const auto& g = c.grid;
    Equilibrium eq(c.equilibrium, g.dim_v, g.nv, g.vmax);
    const double eps_kin = c.model == Model::vp ? 0.0 : c.eps;
    PenroseSymbol ps;
    ps.eq = &eq;
    ps.eps = eps_kin;
    ps.box_length = g.L;
    std::vector<int> kv(g.dim_v, 0);
    kv[0] = k;
    const auto roots = dispersion_roots(ps, kv);
    const double rate_root = roots.empty() ? nan_v : roots.front().growth();

    const double vdt = std::min(c.dt, 0.02);
    const auto f0 = initial_perturbation(c, eq);
    const auto vp = make_volterra_problem(eq, eps_kin, f0, k, vdt, c.T_final);
    const auto rho = volterra_solve(vp);
    std::vector<double> tv(rho.size()), rv(rho.size());
    for (std::size_t i = 0; i < rho.size(); ++i) {
        tv[i] = i * vdt;
        rv[i] = std::abs(rho[i]);
    }
    const double rate_volterra = envelope_rate(tv, rv, t0, t1);

    Table field{"field", {"t", "e1_re", "e1_im", "e1_abs"}, {}};
    for (std::size_t i = 0; i < r.diag.t.size(); ++i)
        field.add({num(r.diag.t[i]), num(r.diag.e1_mode[i].real()), num(r.diag.e1_mode[i].imag()), num(u[i])});
    Table vt{"volterra", {"t", "rho_re", "rho_im", "rho_abs"}, {}};
    for (std::size_t i = 0; i < rho.size(); ++i)
        vt.add({num(tv[i]), num(rho[i].real()), num(rho[i].imag()), num(rv[i])});
    Table rates{"rates", {"method", "rate", "rel_diff_to_root"}, {}};
    auto rel = [&](double x) { return std::abs(x - rate_root) / std::abs(rate_root); };
    rates.add({"dispersion_root", num(rate_root), "0"});
    rates.add({"simulation", num(rate_sim), num(rel(rate_sim))});
    rates.add({"volterra", num(rate_volterra), num(rel(rate_volterra))});
    rep.tables.push_back(std::move(field));
    rep.tables.push_back(std::move(vt));
    rep.tables.push_back(std::move(rates));
    rep.plots.push_back({"landau", "Damped field mode", "t", "|E_1 mode|", false, true,
                         {{"field", "t", "e1_abs", "simulation"}}});
    rep.summary.emplace_back("rate (dispersion root)", num(rate_root));
    rep.summary.emplace_back("rate (simulation)", num(rate_sim));
    rep.summary.emplace_back("rate (Volterra)", num(rate_volterra));
    rep.summary.emplace_back("simulation vs root", num(rel(rate_sim)));
    rep.summary.emplace_back("simulation vs Volterra", num(std::abs(rate_sim - rate_volterra) / std::abs(rate_volterra)));
    rep.points.push_back({"landau", !r.aborted, r.message});
    return rep;
}

// ---- instability timing ---------------------------------------------------

ExperimentReport exp_timing(const ExperimentSpec& s, int threads) {
    ExperimentReport rep;
    const auto pts = sweep_points(s);
    std::vector<double> tstar(pts.size(), nan_v), delta(pts.size(), nan_v);
    std::vector<std::vector<std::array<double, 2>>> series(pts.size());
    run_points(pts, threads, rep, [&](int i) {
        RunConfig c = point_config(s, pts[i]);
        if (s.delta_eps2) c.delta = c.eps * c.eps;
        delta[i] = c.delta;
        std::vector<double> t, u;
        const auto r = run_model(c, [&](double time, const DistField&, const EMState& em) {
            t.push_back(time);
            u.push_back(c.delta * e_total(em, c.grid.L));
        });
        for (std::size_t n = 0; n < t.size(); ++n) series[i].push_back({t[n], u[n]});
        tstar[i] = crossing_time(t, u, s.threshold);
        if (r.aborted) throw Error("run aborted: " + r.message);
    });
    Table tab{"timing", {"eps", "dt", "nx", "delta", "log_inv_eps", "t_star"}, {}};
    Table ser{"field_growth", {"eps", "t", "delta_e_norm"}, {}};
    std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> groups;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const double x = std::log(1.0 / pts[i].eps);
        tab.add({num(pts[i].eps), num(pts[i].dt), std::to_string(pts[i].nx), num(delta[i]), num(x), num(tstar[i])});
        for (const auto& [t, u] : series[i]) ser.add({num(pts[i].eps), num(t), num(u)});
        if (rep.points[i].ok && std::isfinite(tstar[i])) {
            groups[group_of(pts[i])].first.push_back(x);
            groups[group_of(pts[i])].second.push_back(tstar[i]);
        }
        if (rep.points[i].ok && !std::isfinite(tstar[i])) {
            rep.points[i].ok = false;
            rep.points[i].error = "threshold never crossed";
        }
    }
    Table fits = fit_table();
    for (const auto& [grp, xy] : groups) add_fit(rep, fits, grp, "t_star vs log(1/eps)", xy.first, xy.second, false);
    PlotSpec plot{"timing", "Threshold crossing time", "log(1/eps)", "t*", false, false,
                  {{"timing", "log_inv_eps", "t_star", "t*"}}};
    rep.plots.push_back(plot);
    PlotSpec growth{"growth", "delta |E|_2", "t", "delta |E|_2", false, true, {}};
    for (const auto& p : pts) {
        if (!growth.series.empty() && growth.series.back().filter_value == num(p.eps)) continue;
        growth.series.push_back({"field_growth", "t", "delta_e_norm", "eps=" + num(p.eps), "eps", num(p.eps), true});
    }
    rep.plots.push_back(growth);
    rep.tables.push_back(std::move(tab));
    rep.tables.push_back(std::move(ser));
    rep.tables.push_back(std::move(fits));
    return rep;
}

// ---- Weibel ---------------------------------------------------------------

ExperimentReport exp_weibel(const ExperimentSpec& s) {
    ExperimentReport rep;
    RunConfig c = s.base;
    c.perturbation = resolved_perturbation(s);
    if (c.model == Model::vp) throw Error("weibel: VP carries no magnetic field");
    const auto r = run_model(c);
    Table t{"magnetic", {"t", "b_norm", "e_norm"}, {}};
    std::vector<double> tt, lb;
    const double t0 = s.fit_t1 > s.fit_t0 ? s.fit_t0 : 0.2 * c.T_final;
    const double t1 = s.fit_t1 > s.fit_t0 ? s.fit_t1 : 0.6 * c.T_final;
    for (std::size_t i = 0; i < r.diag.t.size(); ++i) {
        t.add({num(r.diag.t[i]), num(r.diag.b_norm[i]), num(r.diag.e_norm[i])});
        if (r.diag.t[i] >= t0 && r.diag.t[i] <= t1 && r.diag.b_norm[i] > 0.0) {
            tt.push_back(r.diag.t[i]);
            lb.push_back(std::log(r.diag.b_norm[i]));
        }
    }
    Table fits = fit_table();
    add_fit(rep, fits, "", "log |B| vs t", tt, lb, false);
    rep.tables.push_back(std::move(t));
    rep.tables.push_back(std::move(fits));
    rep.plots.push_back({"weibel", "Magnetic field growth", "t", "|B|_2", false, true,
                         {{"magnetic", "t", "b_norm", "|B|"}}});
    rep.points.push_back({"weibel", !r.aborted, r.message});
    return rep;
}

// ---- model convergence ----------------------------------------------------

ExperimentReport exp_convergence(const ExperimentSpec& s, int threads) {
    ExperimentReport rep;
    const bool darwin = s.kind == ExperimentKind::conv_vm_vd;
    const auto pts = sweep_points(s);
    std::vector<double> ef(pts.size(), nan_v), er(pts.size(), nan_v);
    run_points(pts, threads, rep, [&](int i) {
        RunConfig a = point_config(s, pts[i]);
        a.model = Model::vm;
        a.record_fields = true;
        RunConfig b = a;
        b.model = darwin ? Model::vd : Model::vp;
        b.darwin_order = s.vd_order;
        b.prepared_order = 0;
        b.perturbation.fields.clear();
        std::vector<Field> ra, rb;
        const auto ja = run_model(a, [&](double, const DistField& f, const EMState&) {
            ra.push_back(velocity_moment(f, 0.0, 0, 0));
        });
        const auto jb = run_model(b, [&](double, const DistField& f, const EMState&) {
            rb.push_back(velocity_moment(f, 0.0, 0, 0));
        });
        if (ja.aborted || jb.aborted) throw Error("run aborted: " + ja.message + jb.message);
        ef[i] = field_error(ja, jb, a.grid.L, s.error_hn);
        er[i] = history_error(ja.hist_t, ra, rb, a.grid.L, s.error_hn);
    });
    const std::string ref = darwin ? "VD" + std::to_string(s.vd_order) : "VP";
    Table tab{"errors", {"eps", "dt", "nx", "reference", "err_fields", "err_rho"}, {}};
    std::map<std::string, std::array<std::vector<double>, 3>> groups;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        tab.add({num(pts[i].eps), num(pts[i].dt), std::to_string(pts[i].nx), ref, num(ef[i]), num(er[i])});
        if (!rep.points[i].ok) continue;
        auto& g = groups[group_of(pts[i])];
        g[0].push_back(pts[i].eps);
        g[1].push_back(ef[i]);
        g[2].push_back(er[i]);
    }
    Table fits = fit_table();
    for (const auto& [grp, v] : groups) {
        add_fit(rep, fits, grp, "err_fields", v[0], v[1], true);
        add_fit(rep, fits, grp, "err_rho", v[0], v[2], true);
    }
    rep.plots.push_back({"convergence", "VM against " + ref, "eps", "L2(0,T) error", true, true,
                         {{"errors", "eps", "err_fields", "(E, B)"}, {"errors", "eps", "err_rho", "rho"}}});
    rep.tables.push_back(std::move(tab));
    rep.tables.push_back(std::move(fits));
    return rep;
}

// ---- Darwin hierarchy -----------------------------------------------------

ExperimentReport exp_hierarchy(const ExperimentSpec& s, int threads) {
    ExperimentReport rep;
    const auto pts = sweep_points(s);
    const int N = std::max(1, s.base.darwin_order);
    std::vector<std::vector<double>> norms(pts.size());
    std::vector<std::array<double, 3>> base(pts.size(), {nan_v, nan_v, nan_v});
    run_points(pts, threads, rep, [&](int i) {
        RunConfig c = point_config(s, pts[i]);
        const auto& g = c.grid;
        Equilibrium eq(c.equilibrium, g.dim_v, g.nv, g.vmax);
        const DistField gdist = initial_perturbation(c, eq);
        const auto h = build_hierarchy(eq, c.eps, N, g);
        const auto A = darwin_potentials(h, deposit_moments(gdist, c.eps, 2 * N - 1));
        for (const auto& a : A) norms[i].push_back(l2_norm(a.c[1], g.L));
        double s11 = 0.0, d1 = 0.0, s22 = N >= 2 ? 0.0 : nan_v;
        for (int n = 1; n < h.modes(); ++n) {
            s11 = std::max(s11, std::abs(h.op_Skj[1][1][n] + 1.0));
            d1 = std::max(d1, std::abs(h.delta_eps_k[1][n] + h.d_eps(n)));
            if (N >= 2) s22 = std::max(s22, std::abs(h.op_Skj[2][2][n] - 1.0));
        }
        base[i] = {s11, d1, s22};
    });
    Table tab{"potentials", {"eps", "j", "norm"}, {}};
    Table bc{"base_cases", {"eps", "S11_plus_id", "Delta1_minus_Delta_eps", "S22_minus_id"}, {}};
    std::vector<double> eps;
    std::vector<std::vector<double>> by_j(N);
    for (std::size_t i = 0; i < pts.size(); ++i) {
        for (std::size_t j = 0; j < norms[i].size(); ++j)
            tab.add({num(pts[i].eps), std::to_string(j + 1), num(norms[i][j])});
        bc.add({num(pts[i].eps), num(base[i][0]), num(base[i][1]), num(base[i][2])});
        if (!rep.points[i].ok) continue;
        eps.push_back(pts[i].eps);
        for (int j = 0; j < N; ++j) by_j[j].push_back(norms[i][j]);
    }
    Table fits = fit_table();
    for (int j = 0; j < N; ++j) add_fit(rep, fits, "", "|A_" + std::to_string(j + 1) + "|", eps, by_j[j], true);
    PlotSpec plot{"hierarchy", "Hierarchy potentials", "eps", "|A_j|_2", true, true, {}};
    for (int j = 1; j <= N; ++j)
        plot.series.push_back({"potentials", "eps", "norm", "j=" + std::to_string(j), "j", std::to_string(j)});
    rep.plots.push_back(std::move(plot));
    rep.tables.push_back(std::move(tab));
    rep.tables.push_back(std::move(bc));
    rep.tables.push_back(std::move(fits));
    return rep;
}

// ---- scaling --------------------------------------------------------------

ExperimentReport exp_scaling(const ExperimentSpec& s, int threads) {
    ExperimentReport rep;
    const auto pts = sweep_points(s);
    struct Row {
        double lambda;
        std::string transform;
        SystemResidual res;
        double roundtrip;
    };
    std::vector<SystemResidual> native(pts.size());
    std::vector<std::vector<Row>> rows(pts.size());
    run_points(pts, threads, rep, [&](int i) {
        RunConfig c = point_config(s, pts[i]);
        c.output_every = 1;
        Equilibrium eq(c.equilibrium, c.grid.dim_v, c.grid.nv, c.grid.vmax);
        std::vector<FullState> last;
        const auto r = run_model(c, [&](double t, const DistField& f, const EMState& em) {
            if (last.size() == 3) last.erase(last.begin());
            last.push_back(to_full_state(f, em, eq, c.delta, t));
        });
        if (r.aborted) throw Error("run aborted: " + r.message);
        if (last.size() < 3) throw Error("scaling_check: needs at least two steps");
        native[i] = system_residual(last[0], last[1], last[2]);
        using Tr = FullState (*)(const FullState&, double);
        const std::pair<const char*, Tr> trs[] = {{"velocity", rescale_velocity}, {"spacetime", rescale_spacetime}};
        for (double lam : s.lambdas)
            for (const auto& [name, tr] : trs) {
                Row row{lam, name, system_residual(tr(last[0], lam), tr(last[1], lam), tr(last[2], lam)), 0.0};
                const auto back = tr(tr(last[1], lam), 1.0 / lam);
                double err = 0.0, ref = 0.0;
                for (std::size_t k = 0; k < back.f.values.size(); ++k) {
                    err = std::max(err, std::abs(back.f.values[k] - last[1].f.values[k]));
                    ref = std::max(ref, std::abs(last[1].f.values[k]));
                }
                row.roundtrip = err / ref;
                rows[i].push_back(row);
            }
    });
    Table tab{"scaling",
              {"eps", "lambda", "transform", "vlasov", "gauss", "faraday", "ampere", "native_max", "ratio",
               "roundtrip"},
              {}};
    double worst = 0.0, worst_rt = 0.0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        tab.add({num(pts[i].eps), "1", "native", num(native[i].vlasov), num(native[i].gauss), num(native[i].faraday),
                 num(native[i].ampere), num(native[i].max()), "1", "0"});
        for (const auto& r : rows[i]) {
            const double ratio = r.res.max() / native[i].max();
            worst = std::max(worst, ratio);
            worst_rt = std::max(worst_rt, r.roundtrip);
            tab.add({num(pts[i].eps), num(r.lambda), r.transform, num(r.res.vlasov), num(r.res.gauss),
                     num(r.res.faraday), num(r.res.ampere), num(native[i].max()), num(ratio), num(r.roundtrip)});
        }
    }
    rep.summary.emplace_back("largest residual ratio to native", num(worst));
    rep.summary.emplace_back("largest round-trip error", num(worst_rt));
    rep.tables.push_back(std::move(tab));
    return rep;
}

}  // namespace

ExperimentReport run_experiment(const ExperimentSpec& spec, int threads) {
    spec.validate();
    if (threads < 1) throw Error("run_experiment: threads must be >= 1");
    ExperimentReport rep;
    switch (spec.kind) {
        case ExperimentKind::run: rep = exp_run(spec); break;
        case ExperimentKind::penrose_scan: rep = exp_penrose(spec, threads); break;
        case ExperimentKind::landau: rep = exp_landau(spec); break;
        case ExperimentKind::two_stream_timing: rep = exp_timing(spec, threads); break;
        case ExperimentKind::weibel: rep = exp_weibel(spec); break;
        case ExperimentKind::conv_vm_vp:
        case ExperimentKind::conv_vm_vd: rep = exp_convergence(spec, threads); break;
        case ExperimentKind::hierarchy_check: rep = exp_hierarchy(spec, threads); break;
        case ExperimentKind::scaling_check: rep = exp_scaling(spec, threads); break;
    }
    rep.kind = kind_name(spec.kind, spec.vd_order);
    return rep;
}

}  // namespace kinlim::cli
