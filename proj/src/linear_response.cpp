#include "kinlim/linear_response.hpp"

#include <cmath>
#include <fstream>

#include "kinlim/fft.hpp"

namespace kinlim {

cplx volterra_kernel(const Equilibrium& eq, double eps, std::span<const int> k, double tau, double box_length) {
    if (tau < 0.0) throw Error("volterra_kernel: tau must be nonnegative");
    PenroseSymbol ps;
    ps.eq = &eq;
    ps.eps = eps;
    ps.box_length = box_length;
    return penrose_kernel(ps, tau, k);
}

std::vector<cplx> free_streaming_source(const DistField& f0, int k, double eps, double dt, int steps) {
    const auto& g = f0.grid;
    if (k <= 0 || k > g.nx / 2) throw Error("free_streaming_source: mode out of range");
    const auto vg = g.velocity();
    const int nvt = vg.size();
    std::vector<cplx> fk(nvt);
    Field col(g.nx);
    for (int iv = 0; iv < nvt; ++iv) {
        for (int ix = 0; ix < g.nx; ++ix) col[ix] = f0.slice(ix)[iv];
        fk[iv] = rfft(col)[k] * vg.cell_volume();
    }
    std::vector<double> vh(nvt);
    double v[3], w[3];
    for (int iv = 0; iv < nvt; ++iv) {
        vg.coords(iv, v);
        rel_velocity({v, static_cast<std::size_t>(vg.dim)}, eps, {w, static_cast<std::size_t>(vg.dim)});
        vh[iv] = g.kappa(k) * w[0];
    }
    std::vector<cplx> S(steps + 1);
    for (int n = 0; n <= steps; ++n) {
        cplx acc = 0.0;
        for (int iv = 0; iv < nvt; ++iv) acc += fk[iv] * std::polar(1.0, -n * dt * vh[iv]);
        S[n] = acc;
    }
    return S;
}

VolterraProblem make_volterra_problem(const Equilibrium& eq, double eps, const DistField& f0, int k, double dt,
                                      double T) {
    if (!(dt > 0.0) || !(T > 0.0)) throw Error("make_volterra_problem: dt and T must be positive");
    VolterraProblem p;
    p.k = {k};
    p.dt = dt;
    p.T = T;
    const int steps = static_cast<int>(std::lround(T / dt));
    PenroseSymbol ps;
    ps.eq = &eq;
    ps.eps = eps;
    ps.box_length = f0.grid.L;
    p.kernel.resize(steps + 1);
    for (int n = 0; n <= steps; ++n) p.kernel[n] = penrose_kernel(ps, n * dt, p.k);
    p.source = free_streaming_source(f0, k, eps, dt, steps);
    return p;
}

std::vector<cplx> volterra_solve(const VolterraProblem& p) {
    if (!(p.dt > 0.0)) throw Error("volterra_solve: dt must be positive");
    const int n = p.steps();
    if (static_cast<int>(p.source.size()) != n + 1) throw Error("volterra_solve: kernel and source lengths differ");
    std::vector<cplx> rho(n + 1);
    const double h = p.dt;
    rho[0] = p.source[0];
    for (int m = 1; m <= n; ++m) {
        cplx acc = 0.5 * p.kernel[m] * rho[0];
        for (int j = 1; j < m; ++j) acc += p.kernel[m - j] * rho[j];
        rho[m] = (p.source[m] - h * acc) / (1.0 + 0.5 * h * p.kernel[0]);
    }
    return rho;
}

double volterra_residual(const VolterraProblem& p, std::span<const cplx> rho) {
    double r = 0.0;
    for (int m = 0; m <= p.steps(); ++m) {
        cplx acc = 0.0;
        if (m > 0) {
            acc = 0.5 * (p.kernel[m] * rho[0] + p.kernel[0] * rho[m]);
            for (int j = 1; j < m; ++j) acc += p.kernel[m - j] * rho[j];
        }
        r = std::max(r, std::abs(rho[m] + p.dt * acc - p.source[m]));
    }
    return r;
}

RateFit extract_rate(std::span<const double> t, std::span<const cplx> series, double t0, double t1) {
    if (t.size() != series.size()) throw Error("extract_rate: length mismatch");
    std::vector<double> ts, la, ph;
    double prev = 0.0;
    bool first = true;
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (t[i] < t0 || t[i] > t1) continue;
        if (series[i] == 0.0) throw Error("extract_rate: series vanishes inside the window");
        double a = std::arg(series[i]);
        if (!first) a += 2.0 * pi * std::round((prev - a) / (2.0 * pi));
        prev = a;
        first = false;
        ts.push_back(t[i]);
        la.push_back(std::log(std::abs(series[i])));
        ph.push_back(a);
    }
    const std::size_t n = ts.size();
    if (n < 3) throw Error("extract_rate: fewer than 3 samples in the window");
    double mt = 0.0, ml = 0.0, mp = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mt += ts[i];
        ml += la[i];
        mp += ph[i];
    }
    mt /= n;
    ml /= n;
    mp /= n;
    double stt = 0.0, stl = 0.0, stp = 0.0, vl = 0.0, vp = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        stt += (ts[i] - mt) * (ts[i] - mt);
        stl += (ts[i] - mt) * (la[i] - ml);
        stp += (ts[i] - mt) * (ph[i] - mp);
        vl += (la[i] - ml) * (la[i] - ml);
        vp += (ph[i] - mp) * (ph[i] - mp);
    }
    if (vl + vp < 1e-24 * n) throw Error("extract_rate: degenerate fit, the series is constant on the window");
    RateFit fit;
    fit.rate = cplx(stl / stt, stp / stt);
    double rss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double el = la[i] - ml - fit.rate.real() * (ts[i] - mt);
        const double ep = ph[i] - mp - fit.rate.imag() * (ts[i] - mt);
        rss += el * el + ep * ep;
    }
    fit.rms = std::sqrt(rss / n);
    return fit;
}

double envelope_rate(std::span<const double> t, std::span<const double> u, double t0, double t1) {
    if (t.size() != u.size()) throw Error("envelope_rate: length mismatch");
    std::vector<double> ts, ls;
    for (std::size_t i = 1; i + 1 < t.size(); ++i) {
        if (t[i] < t0 || t[i] > t1) continue;
        const double a = std::abs(u[i - 1]), b = std::abs(u[i]), c = std::abs(u[i + 1]);
        if (b > a && b >= c && b > 0.0) {
            // Parabolic refinement of the peak position and height.
            const double den = a - 2.0 * b + c;
            const double off = den != 0.0 ? 0.5 * (a - c) / den : 0.0;
            ts.push_back(t[i] + off * (t[i + 1] - t[i]));
            ls.push_back(std::log(b - 0.25 * (a - c) * off));
        }
    }
    if (ts.size() < 2) throw Error("envelope_rate: fewer than 2 peaks in the window");
    double mt = 0.0, ml = 0.0;
    for (std::size_t i = 0; i < ts.size(); ++i) {
        mt += ts[i];
        ml += ls[i];
    }
    mt /= ts.size();
    ml /= ts.size();
    double stt = 0.0, stl = 0.0;
    for (std::size_t i = 0; i < ts.size(); ++i) {
        stt += (ts[i] - mt) * (ts[i] - mt);
        stl += (ts[i] - mt) * (ls[i] - ml);
    }
    return stl / stt;
}

void write_series_csv(const std::filesystem::path& path, double dt, std::span<const cplx> rho) {
    std::ofstream os(path);
    if (!os) throw Error("write_series_csv: cannot open " + path.string());
    os.precision(17);
    os << "t,re,im\n";
    for (std::size_t n = 0; n < rho.size(); ++n) os << n * dt << ',' << rho[n].real() << ',' << rho[n].imag() << '\n';
}

}  // namespace kinlim
