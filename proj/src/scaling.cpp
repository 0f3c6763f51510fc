#include <cmath>

#include "kinlim/fft.hpp"
#include "kinlim/solvers.hpp"

namespace kinlim {

FullState to_full_state(const DistField& f, const EMState& em, const Equilibrium& eq, double delta, double t) {
    if (f.role != FieldRole::perturbation) throw Error("to_full_state: expects a perturbation-role field");
    FullState s;
    s.f = f;
    s.f.role = FieldRole::full;
    const int nvt = f.grid.nv_total();
    for (int ix = 0; ix < f.grid.nx; ++ix) {
        double* p = s.f.slice(ix);
        for (int iv = 0; iv < nvt; ++iv) p[iv] = eq.values()[iv] + delta * p[iv];
    }
    s.E = em.E();
    for (auto& c : s.E.c)
        for (double& x : c) x *= delta;
    s.B = em.B();
    for (double& x : s.B) x *= delta;
    s.eps = em.eps;
    s.t = t;
    return s;
}

namespace {

void check_lambda(double lambda) {
    if (!(lambda > 0.0) || !std::isfinite(lambda)) throw Error("rescale: lambda must be positive and finite");
}

// Relabels the grid and multiplies the samples; no resampling is involved
// because x and v are stretched by exact factors.
FullState relabel(const FullState& s, double lambda, double f_power, double field_power, double t_power,
                  double x_power) {
    check_lambda(lambda);
    if (s.f.role != FieldRole::full) throw Error("rescale: expects a full-role state");
    FullState o = s;
    const int d = s.f.grid.dim_v;
    o.f.grid.vmax = s.f.grid.vmax / lambda;
    o.f.grid.L = s.f.grid.L * std::pow(lambda, x_power);
    o.f.grid.validate();
    const double ff = std::pow(lambda, d + f_power);
    for (double& x : o.f.values) x *= ff;
    const double fe = std::pow(lambda, field_power);
    for (auto& c : o.E.c)
        for (double& x : c) x *= fe;
    for (double& x : o.B) x *= fe;
    o.eps = s.eps * lambda;
    o.t = s.t * std::pow(lambda, t_power);
    return o;
}

double l2(const std::vector<double>& u, double w) {
    double s = 0.0;
    for (double x : u) s += x * x;
    return std::sqrt(s * w);
}

double ratio(double num, double den) { return den > 0.0 ? num / den : num; }

// Fourth-order centred difference along velocity axis `axis`, zero outside the box.
std::vector<double> v_derivative(const DistField& f, int axis) {
    const auto& g = f.grid;
    const int n = g.nv, nvt = g.nv_total(), dim = g.dim_v;
    const double h = g.velocity().h();
    std::vector<double> out(f.values.size(), 0.0);
    const int stride = (dim == 2 && axis == 0) ? n : 1;
    for (int ix = 0; ix < g.nx; ++ix) {
        const double* s = f.slice(ix);
        double* o = out.data() + static_cast<std::size_t>(ix) * nvt;
        for (int iv = 0; iv < nvt; ++iv) {
            const int i = (dim == 2 && axis == 0) ? iv / n : iv % n;
            auto at = [&](int off) {
                const int j = i + off;
                return (j < 0 || j >= n) ? 0.0 : s[iv + off * stride];
            };
            o[iv] = (8.0 * (at(1) - at(-1)) - (at(2) - at(-2))) / (12.0 * h);
        }
    }
    return out;
}

}  // namespace

FullState rescale_velocity(const FullState& s, double lambda) { return relabel(s, lambda, -2.0, -2.0, 1.0, 0.0); }

FullState rescale_spacetime(const FullState& s, double lambda) {
    return relabel(s, lambda, -6.0, -4.0, 3.0, 2.0);
}

double SystemResidual::max() const { return std::max(std::max(vlasov, gauss), std::max(faraday, ampere)); }

SystemResidual system_residual(const FullState& prev, const FullState& mid, const FullState& next) {
    const auto& g = mid.f.grid;
    for (const auto* s : {&prev, &next}) {
        const auto& h = s->f.grid;
        if (h.nx != g.nx || h.nv != g.nv || h.dim_v != g.dim_v || h.L != g.L || h.vmax != g.vmax || s->eps != mid.eps)
            throw Error("system_residual: snapshots must share grid and eps");
    }
    const double ht = mid.t - prev.t;
    if (!(ht > 0.0) || std::abs((next.t - mid.t) - ht) > 1e-9 * ht)
        throw Error("system_residual: snapshots must be equally spaced in time");
    const double eps = mid.eps;
    const int nx = g.nx, nvt = g.nv_total(), dim = g.dim_v;
    const auto vg = g.velocity();
    const double w = g.dx() * vg.cell_volume();

    std::vector<double> dtf(mid.f.values.size()), tx(mid.f.values.size()), tv(mid.f.values.size(), 0.0);
    for (std::size_t i = 0; i < dtf.size(); ++i) dtf[i] = (next.f.values[i] - prev.f.values[i]) / (2 * ht);
    std::vector<double> dv[2];
    for (int a = 0; a < dim; ++a) dv[a] = v_derivative(mid.f, a);
    double v[2], vh[2];
    Field col(nx);
    for (int iv = 0; iv < nvt; ++iv) {
        vg.coords(iv, v);
        rel_velocity({v, static_cast<std::size_t>(dim)}, eps, {vh, static_cast<std::size_t>(dim)});
        for (int ix = 0; ix < nx; ++ix) col[ix] = mid.f.values[static_cast<std::size_t>(ix) * nvt + iv];
        const Field dx = spectral_derivative(col, g.L, 1);
        for (int ix = 0; ix < nx; ++ix) {
            const std::size_t k = static_cast<std::size_t>(ix) * nvt + iv;
            tx[k] = vh[0] * dx[ix];
            double F1 = mid.E.c[0][ix], F2 = 0.0;
            if (dim == 2) {
                F1 += eps * vh[1] * mid.B[ix];
                F2 = mid.E.c[1][ix] - eps * vh[0] * mid.B[ix];
            }
            tv[k] = F1 * dv[0][k] + (dim == 2 ? F2 * dv[1][k] : 0.0);
        }
    }
    std::vector<double> res(dtf.size());
    for (std::size_t i = 0; i < res.size(); ++i) res[i] = dtf[i] + tx[i] + tv[i];
    SystemResidual r;
    r.vlasov = ratio(l2(res, w), l2(dtf, w) + l2(tx, w) + l2(tv, w));

    auto moment = [&](const FullState& s, int p, int q) { return velocity_moment(s.f, eps, p, q); };
    const Field rho = moment(mid, 0, 0);
    const double rbar = spatial_mean(rho);
    const Field e1x = spectral_derivative(mid.E.c[0], g.L, 1);
    Field gres(nx), rfl(nx);
    for (int i = 0; i < nx; ++i) {
        rfl[i] = rho[i] - rbar;
        gres[i] = e1x[i] - rfl[i];
    }
    r.gauss = ratio(l2(gres, g.dx()), l2(rfl, g.dx()));

    const Field j1 = moment(mid, 1, 0);
    Field a1(nx), t1(nx), s1(nx);
    for (int i = 0; i < nx; ++i) {
        t1[i] = -eps * (next.E.c[0][i] - prev.E.c[0][i]) / (2 * ht);
        s1[i] = eps * j1[i];
        a1[i] = t1[i] - s1[i];
    }
    double num = l2(a1, g.dx()) * l2(a1, g.dx()), den = l2(t1, g.dx()) + l2(s1, g.dx());
    if (dim == 2) {
        const Field j2 = moment(mid, 0, 1);
        const Field bx = spectral_derivative(mid.B, g.L, 1);
        const Field e2x = spectral_derivative(mid.E.c[1], g.L, 1);
        Field a2(nx), t2(nx), s2(nx), fr(nx), ft(nx);
        for (int i = 0; i < nx; ++i) {
            t2[i] = -eps * (next.E.c[1][i] - prev.E.c[1][i]) / (2 * ht);
            s2[i] = eps * j2[i];
            a2[i] = t2[i] - bx[i] - s2[i];
            ft[i] = eps * (next.B[i] - prev.B[i]) / (2 * ht);
            fr[i] = ft[i] + e2x[i];
        }
        num += l2(a2, g.dx()) * l2(a2, g.dx());
        den += l2(t2, g.dx()) + l2(bx, g.dx()) + l2(s2, g.dx());
        r.faraday = ratio(l2(fr, g.dx()), l2(ft, g.dx()) + l2(e2x, g.dx()));
    }
    r.ampere = ratio(std::sqrt(num), den);
    return r;
}

}  // namespace kinlim
