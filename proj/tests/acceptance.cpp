// Acceptance gate. Each criterion is evaluated at its stated tolerance and
// prints one PASS/FAIL line; indented lines carry the measured values.
//   acceptance                 all criteria
//   acceptance --criterion N   only criterion N; exit status 0 iff it passes

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstring>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "kinlim/cli/experiments.hpp"
#include "kinlim/linear_response.hpp"
#include "kinlim/penrose.hpp"
#include "kinlim/solvers.hpp"

using namespace kinlim;
using namespace kinlim::cli;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

void info(const char* fmt, ...) __attribute__((format(printf, 1, 2)));
void info(const char* fmt, ...) {
    std::printf("    ");
    va_list ap;
    va_start(ap, fmt);
    std::vprintf(fmt, ap);
    va_end(ap);
    std::printf("\n");
    std::fflush(stdout);
}

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...) {
    char buf[512];
    va_list ap;
    va_start(ap, f);
    std::vsnprintf(buf, sizeof buf, f, ap);
    va_end(ap);
    return buf;
}

using Clock = std::chrono::steady_clock;
double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

// ---- 1. Penrose classification --------------------------------------------

Outcome c1() {
    const auto t0 = Clock::now();
    Equilibrium m(EquilibriumDescriptor{}, 1, 256, 10.0);
    PenroseSymbol ps;
    ps.eq = &m;
    std::vector<double> gam = {1e-3}, tau;
    for (int i = 1; i <= 20; ++i) gam.push_back(0.1 * i);
    for (int i = -40; i <= 40; ++i) tau.push_back(0.25 * i);
    std::vector<std::vector<int>> ks;
    for (int k = 1; k <= 8; ++k) ks.push_back({k});
    const auto mrep = stability_margin(ps, ks, gam, tau);
    info("maxwellian: margin %.4f on gamma in [1e-3, 2], |tau| <= 10, k = 1..8; classification %s", mrep.margin,
         to_string(mrep.classification));
    const bool max_ok = mrep.margin > 0.1 && mrep.classification == Stability::stable;

    EquilibriumDescriptor ts;
    ts.kind = EquilibriumKind::two_stream;
    ts.u = 2.4;
    ts.sigma = 1.0;
    Equilibrium e(ts, 1, 512, 14.0);
    PenroseSymbol pt;
    pt.eq = &e;
    pt.box_length = 2 * pi;  // integer mode 1 is wavenumber 1
    const auto trep = stability_margin(pt, {{1}}, gam, tau);
    bool certified = false;
    for (const auto& r : trep.roots) certified |= r.growth() > 0.0 && r.residual < 1e-8;
    info("two-stream u=2.4, sigma=1, k=1: classification %s, zeros in the probed rectangle %d, margin %.4f",
         to_string(trep.classification), trep.winding.empty() ? -1 : trep.winding[0], trep.margin);
    const int k1[1] = {1};
    const auto roots = dispersion_roots(pt, k1);
    if (!roots.empty()) info("two-stream k=1: least damped root omega = %.6f%+.6fi", roots[0].omega.real(), roots[0].growth());
    PenroseSymbol pl = pt;
    pl.box_length = 2 * pi / 0.3;
    const auto lrep = stability_margin(pl, {{1}}, gam, tau);
    if (!lrep.roots.empty())
        info("two-stream k=0.3 (for reference): %s, growth rate %.4f", to_string(lrep.classification),
             lrep.roots[0].growth());
    const double el = since(t0);
    info("runtime %.1f s (limit 30 s)", el);
    const bool ts_ok = trep.classification == Stability::unstable && certified;
    return {max_ok && ts_ok && el < 30.0,
            fmt("maxwellian stable (margin %.3f > 0.1): %s; two-stream k=1 unstable with certified root: %s",
                mrep.margin, max_ok ? "yes" : "no", ts_ok ? "yes" : "no")};
}

// ---- 2. Landau damping ----------------------------------------------------

Outcome c2() {
    const auto t0 = Clock::now();
    RunConfig c;
    c.model = Model::vp;
    c.eps = 0.0;
    c.delta = 1e-4;
    c.T_final = 30.0;
    c.dt = 0.1;
    c.grid = {64, 4 * pi, 1, 256, 8.0};
    c.perturbation.f = {{1, 1.0, 0.0, ModeShape::density}};
    const auto r = vp_run(c);
    std::vector<double> u;
    for (auto z : r.diag.e1_mode) u.push_back(std::abs(z));
    const double rate_sim = envelope_rate(r.diag.t, u, 2.0, 28.0);

    Equilibrium eq(c.equilibrium, 1, c.grid.nv, c.grid.vmax);
    PenroseSymbol ps;
    ps.eq = &eq;
    ps.box_length = c.grid.L;
    const int k1[1] = {1};
    const double rate_root = dispersion_roots(ps, k1).at(0).growth();

    const double vdt = 0.02;
    const auto vp = make_volterra_problem(eq, 0.0, initial_perturbation(c, eq), 1, vdt, c.T_final);
    const auto rho = volterra_solve(vp);
    std::vector<double> tv(rho.size()), rv(rho.size());
    for (std::size_t i = 0; i < rho.size(); ++i) {
        tv[i] = i * vdt;
        rv[i] = std::abs(rho[i]);
    }
    const double rate_volt = envelope_rate(tv, rv, 2.0, 28.0);
    const double el = since(t0);
    const double d_root = std::abs(rate_sim - rate_root) / std::abs(rate_root);
    const double d_volt = std::abs(rate_sim - rate_volt) / std::abs(rate_volt);
    info("field damping rate %.5f, dispersion root %.5f, Volterra %.5f", rate_sim, rate_root, rate_volt);
    info("runtime %.1f s (limit 120 s)", el);
    return {d_root < 0.05 && d_volt < 0.03 && el < 120.0,
            fmt("rate vs dispersion_roots %.2f%% (< 5%%), vs volterra_solve %.2f%% (< 3%%)", 100 * d_root,
                100 * d_volt)};
}

// ---- 3, 4. model convergence ----------------------------------------------

RunConfig conv_config(double eps) {
    RunConfig c;
    c.eps = eps;
    c.delta = 1e-3;
    c.T_final = 5.0;
    c.dt = 0.05;
    c.record_fields = true;
    c.grid = {16, 2 * pi, 2, 32, 7.0};
    c.perturbation.f = {{1, 0.2, 0.0, ModeShape::density}, {1, 0.2, 0.5, ModeShape::current2}};
    return c;
}

Outcome convergence(bool darwin, double target, double tol, double limit) {
    const auto t0 = Clock::now();
    const std::vector<double> eps = {0.2, 0.1, 0.05, 0.025};
    std::vector<double> err;
    for (double e : eps) {
        RunConfig a = conv_config(e);
        a.model = Model::vm;
        if (darwin) {
            a.perturbation.f.push_back({1, 0.2, 1.0, ModeShape::stress});
            a.prepared_order = 6;
        }
        RunConfig b = a;
        b.model = darwin ? Model::vd : Model::vp;
        b.darwin_order = 1;
        b.prepared_order = 0;
        const auto ra = run_model(a), rb = run_model(b);
        err.push_back(field_error(ra, rb, a.grid.L));
        info("eps %.4f  ||(E,B)_VM - %s||_L2(0,5;L2) = %.4e", e, darwin ? "(E,B)_VD1" : "(E,0)_VP", err.back());
    }
    const auto f = loglog_fit(eps, err);
    const double el = since(t0);
    info("least-squares slope %.4f, 95%% CI [%.3f, %.3f]; runtime %.1f s (limit %.0f s)", f.slope, f.ci_low,
         f.ci_high, el, limit);
    return {std::abs(f.slope - target) <= tol && el < limit,
            fmt("log-log slope %.3f (target %.1f +- %.2f)", f.slope, target, tol)};
}

Outcome c3() { return convergence(false, 1.0, 0.15, 15 * 60.0); }
Outcome c4() { return convergence(true, 3.0, 0.3, 20 * 60.0); }

// ---- 5, 6. Darwin hierarchy -----------------------------------------------

RunConfig hierarchy_config(double eps) {
    RunConfig c;
    c.eps = eps;
    c.grid = {16, 2 * pi, 2, 64, 9.0};
    c.perturbation.f = {{1, 0.3, 0.0, ModeShape::current2},
                        {1, 0.3, 0.4, ModeShape::stress},
                        {2, 0.1, 1.1, ModeShape::current2},
                        {2, 0.1, 0.2, ModeShape::density}};
    return c;
}

Outcome c5() {
    const auto t0 = Clock::now();
    const std::vector<double> eps = {0.2, 0.1, 0.05, 0.025};
    std::vector<std::vector<double>> norms(3);
    for (double e : eps) {
        const auto c = hierarchy_config(e);
        Equilibrium eq(c.equilibrium, 2, c.grid.nv, c.grid.vmax);
        // g is frozen: the same smooth phase-space function for every eps.
        const DistField g = initial_perturbation(c, eq);
        const auto h = build_hierarchy(eq, e, 3, c.grid);
        const auto A = darwin_potentials(h, deposit_moments(g, e, 5));
        for (int j = 0; j < 3; ++j) norms[j].push_back(l2_norm(A[j].c[1], c.grid.L));
        info("eps %.4f  |A_1| %.4e  |A_2| %.4e  |A_3| %.4e", e, norms[0].back(), norms[1].back(), norms[2].back());
    }
    bool ok = true;
    std::string d;
    for (int j = 1; j <= 3; ++j) {
        const double s = loglog_fit(eps, norms[j - 1]).slope;
        ok &= std::abs(s - (2 * j + 1)) <= 0.1;
        d += fmt("%sj=%d slope %.3f (target %d)", j > 1 ? ", " : "", j, s, 2 * j + 1);
    }
    info("runtime %.2f s (limit 60 s)", since(t0));
    return {ok && since(t0) < 60.0, d};
}

Outcome c6() {
    double s11 = 0.0, d1 = 0.0, s22 = 0.0;
    for (double e : {0.2, 0.1, 0.05, 0.025}) {
        const auto c = hierarchy_config(e);
        Equilibrium eq(c.equilibrium, 2, c.grid.nv, c.grid.vmax);
        const auto h = build_hierarchy(eq, e, 3, c.grid);
        const double lam = moment_constants(eq, e).lambda;
        double w22 = 0.0;
        for (int n = 1; n < h.modes(); ++n) {
            const double kap = h.kappa(n);
            s11 = std::max(s11, std::abs(h.op_Skj[1][1][n] - (-1.0)));
            // Delta_eps = Delta - eps^2 lambda, built here independently of the hierarchy.
            const double delta_eps = -(kap * kap + e * e * lam);
            d1 = std::max(d1, std::abs(h.delta_eps_k[1][n] - delta_eps) / std::abs(delta_eps));
            w22 = std::max(w22, std::abs(h.op_Skj[2][2][n] - 1.0));
        }
        s22 = std::max(s22, w22);
        info("eps %.4f  max_k |S_{2,2} - Id| = %.3e", e, w22);
    }
    const double tol = 4 * std::numeric_limits<double>::epsilon();
    info("max |S_{1,1} + Id| = %.3e, max rel |Delta_{eps,1} - Delta_eps| = %.3e, max |S_{2,2} - Id| = %.3e", s11, d1,
         s22);
    return {s11 <= tol && d1 <= tol && s22 <= tol,
            fmt("S11 = -Id: %s; Delta_eps1 = Delta_eps: %s; S22 = Id: %s (tolerance %.1e)", s11 <= tol ? "yes" : "no",
                d1 <= tol ? "yes" : "no", s22 <= tol ? "yes" : "no", tol)};
}

// ---- 7. conservation ------------------------------------------------------

struct ConsRun {
    double charge = 0.0, energy = 0.0, cont = 0.0, gauge = 0.0, gauss = 0.0;
    int steps = 0;
};

ConsRun conservation_run(double dt) {
    RunConfig c;
    c.model = Model::vm;
    c.eps = 0.3;
    c.delta = 0.2;
    c.T_final = 100.0;
    c.dt = dt;
    c.grid = {16, 4 * pi, 2, 32, 7.0};
    c.perturbation.f = {{1, 0.1, 0.0, ModeShape::density}, {1, 0.1, 0.3, ModeShape::current2}};
    const auto r = vm_run(c);
    if (r.aborted) throw Error("conservation run aborted: " + r.message);
    const auto& d = r.diag;
    ConsRun o;
    o.steps = c.steps();
    double c2 = 0.0;
    int nc = 0;
    for (std::size_t i = 0; i < d.t.size(); ++i) {
        o.charge = std::max(o.charge, std::abs(d.charge[i] - d.charge[0]));
        o.energy = std::max(o.energy, std::abs(d.energy[i] - d.energy[0]));
        o.gauge = std::max(o.gauge, d.gauge[i]);
        o.gauss = std::max(o.gauss, d.gauss[i]);
        if (std::isfinite(d.continuity[i])) {
            c2 += d.continuity[i] * d.continuity[i];
            ++nc;
        }
    }
    o.cont = std::sqrt(c2 / nc);
    return o;
}

Outcome c7() {
    const auto a = conservation_run(0.1), b = conservation_run(0.05);
    for (const auto* r : {&a, &b})
        info("%d steps: charge drift %.2e, energy drift %.4e, continuity rms %.4e, gauge %.2e, Gauss %.2e", r->steps,
             r->charge, r->energy, r->cont, r->gauge, r->gauss);
    const double ratio = a.energy / b.energy, order = std::log2(a.cont / b.cont);
    const double charge = std::max(a.charge, b.charge), gauge = std::max(a.gauge, b.gauge),
                 gauss = std::max(a.gauss, b.gauss);
    const bool ok = charge <= 1e-12 && std::abs(ratio - 4.0) <= 0.5 && order >= 2.0 && gauge < 1e-12 && gauss < 1e-10;
    return {ok, fmt("charge %.1e (1e-12), energy ratio %.3f (4 +- 0.5), continuity order %.3f (>= 2), gauge %.1e "
                    "(1e-12), Gauss %.1e (1e-10)",
                    charge, ratio, order, gauge, gauss)};
}

// ---- 8. Laplace duality ---------------------------------------------------

// Simpson's rule on [0, 30] with 20000 panels; the Gaussian kernel decays far earlier.
cplx laplace_of_kernel(const Equilibrium& eq, int k, cplx z) {
    const int n = 20000;
    const double smax = 30.0, h = smax / n;
    const int kk[1] = {k};
    cplx acc = 0.0;
    for (int i = 0; i <= n; ++i) {
        const double w = (i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0);
        acc += w * volterra_kernel(eq, 0.0, kk, i * h) * std::exp(-z * (i * h));
    }
    return acc * h / 3.0;
}

Outcome c8() {
    Equilibrium m(EquilibriumDescriptor{}, 1, 256, 10.0);
    PenroseSymbol ps;
    ps.eq = &m;
    std::mt19937 rng(20261016);
    std::uniform_real_distribution<double> g(0.2, 2.0), t(-4.0, 4.0);
    std::uniform_int_distribution<int> kd(1, 3);
    double worst = 0.0;
    for (int r = 0; r < 10; ++r) {
        const int k = kd(rng);
        const int kk[1] = {k};
        const double gam = g(rng), tau = t(rng);
        const double d = std::abs(laplace_of_kernel(m, k, {gam, tau}) - (symbol(ps, gam, tau, kk) - 1.0));
        info("gamma %.3f tau %+.3f k %d  |L[K] - (symbol - 1)| = %.2e", gam, tau, k, d);
        worst = std::max(worst, d);
    }
    return {worst < 1e-6, fmt("largest deviation %.2e (< 1e-6)", worst)};
}

// ---- 9. instability timing ------------------------------------------------

Outcome c9() {
    const auto t0 = Clock::now();
    const double level = 0.1;
    std::vector<double> x, y;
    for (double eps : {0.1, 0.05, 0.025, 0.0125}) {
        RunConfig c;
        c.model = Model::vm;
        c.eps = eps;
        c.delta = eps * eps;
        c.T_final = 60.0;
        c.dt = 0.1;
        c.grid = {16, 2 * pi / 0.3, 2, 64, 9.0};
        c.equilibrium.kind = EquilibriumKind::two_stream;
        c.equilibrium.u = 2.4;
        c.perturbation.f = {{1, 0.01, 0.0, ModeShape::density}};
        std::vector<double> t, u;
        vm_run(c, [&](double time, const DistField&, const EMState& em) {
            double s = 0.0;
            for (const auto& comp : em.E().c) s += std::pow(l2_norm(comp, c.grid.L), 2);
            t.push_back(time);
            u.push_back(c.delta * std::sqrt(s));
        });
        const double ts = crossing_time(t, u, level);
        info("eps %.4f  delta %.2e  t* = %.3f", eps, c.delta, ts);
        x.push_back(std::log(1.0 / eps));
        y.push_back(ts);
    }
    for (double v : y)
        if (!std::isfinite(v)) return {false, "threshold not crossed for some eps"};
    const auto f = linear_fit(x, y);
    const double el = since(t0);
    info("t* = %.3f + %.3f log(1/eps); runtime %.1f s (limit 1200 s)", f.intercept, f.slope, el);
    return {f.r2 > 0.98 && el < 1200.0, fmt("R^2 %.5f (> 0.98), slope %.3f", f.r2, f.slope)};
}

// ---- 10. scaling invariance ----------------------------------------------

Outcome c10() {
    RunConfig c;
    c.model = Model::vm;
    c.eps = 1.0;  // c = 1
    c.delta = 0.2;
    c.T_final = 0.04;
    c.dt = 0.02;
    c.grid = {16, 2 * pi, 2, 48, 8.0};
    c.perturbation.f = {{1, 0.1, 0.0, ModeShape::density}, {1, 0.1, 0.3, ModeShape::current2}};
    Equilibrium eq(c.equilibrium, 2, c.grid.nv, c.grid.vmax);
    std::vector<FullState> s;
    vm_run(c, [&](double t, const DistField& f, const EMState& em) { s.push_back(to_full_state(f, em, eq, c.delta, t)); });
    const auto native = system_residual(s[0], s[1], s[2]);
    info("native residual (c = 1): vlasov %.3e gauss %.3e faraday %.3e ampere %.3e", native.vlasov, native.gauss,
         native.faraday, native.ampere);
    bool ok = true;
    double worst = 0.0, worst_rt = 0.0;
    using Tr = FullState (*)(const FullState&, double);
    const std::pair<const char*, Tr> trs[] = {{"velocity", rescale_velocity}, {"space-time", rescale_spacetime}};
    for (double lam : {0.5, 2.0})
        for (const auto& [name, tr] : trs) {
            const auto r = system_residual(tr(s[0], lam), tr(s[1], lam), tr(s[2], lam));
            const double ratio = r.max() / native.max();
            worst = std::max(worst, ratio);
            ok &= ratio < 10.0;
            const auto back = tr(tr(s[1], lam), 1.0 / lam);
            double err = 0.0, ref = 0.0;
            for (std::size_t i = 0; i < back.f.values.size(); ++i) {
                err = std::max(err, std::abs(back.f.values[i] - s[1].f.values[i]));
                ref = std::max(ref, std::abs(s[1].f.values[i]));
            }
            worst_rt = std::max(worst_rt, err / ref);
            info("%s lambda %.1f: c = 1/%.1f residual %.3e (ratio %.3f), round trip %.1e", name, lam,
                 1.0 / tr(s[1], lam).eps, r.max(), ratio, err / ref);
        }
    // Both maps relabel grid points exactly, so the round trip is exact up to rounding.
    ok &= worst_rt < 1e-12;
    return {ok, fmt("worst residual ratio %.3f (< 10), worst round-trip error %.1e", worst, worst_rt)};
}

// ---- 11. well-prepared residuals ------------------------------------------

Outcome c11() {
    const std::vector<double> eps = {0.1, 0.05, 0.025, 0.0125};
    std::vector<double> r4, r6, r8;
    for (double e : eps) {
        RunConfig c;
        c.model = Model::vm;
        c.eps = e;
        c.delta = 1e-3;
        c.grid = {16, 2 * pi, 2, 32, 7.0};
        c.perturbation.f = {{1, 0.1, 0.0, ModeShape::density},
                            {1, 0.1, 0.3, ModeShape::current2},
                            {1, 0.1, 0.7, ModeShape::stress}};
        r4.push_back(prepared_residuals(c, well_prepared_init(c, 4)).r4());
        r6.push_back(prepared_residuals(c, well_prepared_init(c, 6)).r6());
        r8.push_back(prepared_residuals(c, well_prepared_init(c, 8)).r8());
        info("eps %.4f  r4 %.4e  r6 %.4e  r8 %.4e", e, r4.back(), r6.back(), r8.back());
    }
    const double s4 = loglog_fit(eps, r4).slope, s6 = loglog_fit(eps, r6).slope, s8 = loglog_fit(eps, r8).slope;
    for (std::size_t i = 0; i + 1 < eps.size(); ++i)
        info("local slopes %.4f..%.4f: p=4 %.3f  p=6 %.3f  p=8 %.3f", eps[i + 1], eps[i], std::log2(r4[i] / r4[i + 1]),
             std::log2(r6[i] / r6[i + 1]), std::log2(r8[i] / r8[i + 1]));
    return {s4 >= 1.0 && s6 >= 2.0 && s8 >= 3.0,
            fmt("slopes p=4 %.3f (>= 1), p=6 %.3f (>= 2), p=8 %.3f (>= 3)", s4, s6, s8)};
}

// ---- 12. relativistic Penrose symbol --------------------------------------

Outcome c12() {
    Equilibrium m(EquilibriumDescriptor{}, 1, 512, 12.0);
    PenroseSymbol ps;
    ps.eq = &m;
    ps.box_length = 4 * pi;
    const int k[1] = {1};
    const std::vector<double> eps = {0.2, 0.1, 0.05, 0.025};
    bool ok = true;
    std::string d;
    const std::pair<double, double> points[] = {{0.3, 1.2}, {1.0, -0.5}, {0.05, 2.0}};
    for (const auto& [g, t] : points) {
        std::vector<double> diff;
        for (double e : eps) {
            PenroseSymbol pe = ps;
            pe.eps = e;
            diff.push_back(std::abs(symbol(pe, g, t, k) - symbol(ps, g, t, k)));
        }
        const double s = loglog_fit(eps, diff).slope;
        info("gamma %.2f tau %.2f: |symbol_eps - symbol_0| = %.3e .. %.3e, slope %.4f", g, t, diff.front(),
             diff.back(), s);
        ok &= std::abs(s - 2.0) <= 0.2;
        d += fmt("%s%.3f", d.empty() ? "slopes " : ", ", s);
    }
    return {ok, d + " (2 +- 0.2)"};
}

const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
    {"Penrose classification", c1},
    {"linear Landau damping", c2},
    {"VM -> VP order", c3},
    {"VM -> VD(1) order", c4},
    {"hierarchy sizes", c5},
    {"hierarchy base cases", c6},
    {"conservation suite", c7},
    {"kernel/symbol Laplace duality", c8},
    {"instability timing", c9},
    {"scaling invariance", c10},
    {"well-prepared residual slopes", c11},
    {"relativistic Penrose perturbation", c12},
};

bool evaluate(int n) {
    const auto& [name, fn] = criteria[n - 1];
    std::printf("[criterion %d] %s\n", n, name);
    std::fflush(stdout);
    Outcome o;
    try {
        o = fn();
    } catch (const std::exception& e) {
        o = {false, std::string("error: ") + e.what()};
    }
    std::printf("CRITERION %d %s: %s\n", n, o.pass ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
    return o.pass;
}

}  // namespace

int main(int argc, char** argv) {
    std::vector<int> which;
    for (int i = 1; i < argc; ++i) {
        if (std::strcmp(argv[i], "--criterion") == 0 && i + 1 < argc) {
            which.push_back(std::atoi(argv[++i]));
        } else {
            std::fprintf(stderr, "usage: acceptance [--criterion N]...\n");
            return 2;
        }
    }
    if (which.empty())
        for (int n = 1; n <= static_cast<int>(criteria.size()); ++n) which.push_back(n);
    bool all = true;
    for (int n : which) {
        if (n < 1 || n > static_cast<int>(criteria.size())) {
            std::fprintf(stderr, "no criterion %d\n", n);
            return 2;
        }
        all &= evaluate(n);
    }
    return all ? 0 : 1;
}
