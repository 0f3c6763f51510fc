#include "kinlim/penrose.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <tuple>

#include "kinlim/faddeeva.hpp"

namespace kinlim {

namespace {

struct Sampled {
    double ds = 0.0;
    std::vector<cplx> weighted;  // Simpson weight times K(s_i)
};

using CacheKey = std::tuple<const Equilibrium*, double, double, int, double, std::vector<int>>;

}  // namespace

struct PenroseKernelCache {
    std::mutex mutex;
    std::map<CacheKey, std::shared_ptr<const Sampled>> kernels;
};

std::shared_ptr<PenroseKernelCache> make_penrose_cache() { return std::make_shared<PenroseKernelCache>(); }

const char* to_string(Stability s) {
    switch (s) {
        case Stability::stable: return "stable";
        case Stability::unstable: return "unstable";
        case Stability::marginal: return "marginal";
    }
    return "?";
}

double PenroseSymbol::kappa(std::span<const int> k) const {
    double n2 = 0.0;
    for (int c : k) n2 += double(c) * c;
    return 2.0 * pi * std::sqrt(n2) / box_length;
}

namespace {

void check(const PenroseSymbol& ps, std::span<const int> k) {
    if (!ps.eq) throw Error("penrose: symbol has no equilibrium");
    if (ps.eps < 0.0) throw Error("penrose: eps must be nonnegative");
    if (static_cast<int>(k.size()) > ps.eq->dim_v()) throw Error("penrose: wavevector has more components than d_v");
    bool nz = false;
    for (int c : k) nz = nz || c != 0;
    if (!nz) throw Error("penrose: k = 0 is excluded");
}

std::vector<double> unit(std::span<const int> k, int dim) {
    std::vector<double> u(dim, 0.0);
    double n = 0.0;
    for (int c : k) n += double(c) * c;
    n = std::sqrt(n);
    for (std::size_t d = 0; d < k.size(); ++d) u[d] = k[d] / n;
    return u;
}

// 1D marginal of mu along khat as a Gaussian mixture.
Profile1D marginal(const Equilibrium& eq, const std::vector<double>& khat) {
    if (eq.descriptor().null_profile) return {};
    Profile1D out{{1.0, 0.0, 0.0}};
    for (int d = 0; d < eq.dim_v(); ++d) {
        const auto& f = eq.factors()[d];
        if (khat[d] == 0.0) {
            double mass = 0.0;
            for (const auto& c : f) mass += c.weight;
            for (auto& o : out) o.weight *= mass;
            continue;
        }
        Profile1D next;
        for (const auto& o : out)
            for (const auto& c : f)
                next.push_back({o.weight * c.weight, o.center + khat[d] * c.center,
                                std::sqrt(o.sigma * o.sigma + khat[d] * khat[d] * c.sigma * c.sigma)});
        out = std::move(next);
    }
    return out;
}

double auto_s_max(const PenroseSymbol& ps, std::span<const int> k) {
    if (ps.s_max > 0.0) return ps.s_max;
    const auto m = marginal(*ps.eq, unit(k, ps.eq->dim_v()));
    double smin = 1e300;
    for (const auto& c : m) smin = std::min(smin, c.sigma);
    if (m.empty()) smin = 1.0;
    // |mu~(kappa s)| < 1e-14 beyond this point.
    return std::sqrt(2.0 * std::log(1e14)) / (smin * ps.kappa(k));
}

// Laplace transform of s mu~(kappa s) for one component and its z-derivative.
void component_laplace(const GaussianComponent& c, double kappa, cplx z, cplx& J, cplx& dJ) {
    const double a = 0.5 * c.sigma * c.sigma * kappa * kappa;
    const cplx b = z + cplx(0.0, kappa * c.center);
    const double sa = std::sqrt(a);
    const cplx I0 = std::sqrt(pi) / (2.0 * sa) * faddeeva_w(cplx(0.0, 1.0) * b / (2.0 * sa));
    J = c.weight * (1.0 - b * I0) / (2.0 * a);
    dJ = c.weight * (-I0 + b * (1.0 - b * I0) / (2.0 * a)) / (2.0 * a);
}

cplx relativistic_kernel(double kappa, double s, const std::vector<double>& gw, const std::vector<double>& ph) {
    cplx acc = 0.0;
    for (std::size_t i = 0; i < gw.size(); ++i) acc += gw[i] * std::polar(1.0, -s * ph[i]);
    return cplx(0.0, -1.0 / kappa) * acc;
}

// khat.grad mu dV and kappa khat.vhat on the equilibrium grid.
void kernel_tables(const PenroseSymbol& ps, const std::vector<double>& khat, double kappa, std::vector<double>& gw,
                   std::vector<double>& ph) {
    const auto& g = ps.eq->v_grid();
    gw.clear();
    ph.clear();
    double v[3], gr[3];
    for (int i = 0; i < g.size(); ++i) {
        g.coords(i, v);
        ps.eq->gradient(v, gr);
        double dot = 0.0, vk = 0.0, v2 = 0.0;
        for (int d = 0; d < g.dim; ++d) {
            dot += khat[d] * gr[d];
            vk += khat[d] * v[d];
            v2 += v[d] * v[d];
        }
        if (dot == 0.0) continue;
        gw.push_back(dot * g.cell_volume());
        ph.push_back(kappa * vk / std::sqrt(1.0 + ps.eps * ps.eps * v2));
    }
}

std::shared_ptr<const Sampled> sampled_kernel(const PenroseSymbol& ps, std::span<const int> k) {
    if (!ps.cache) throw Error("penrose: symbol has no kernel cache");
    const double s_max = auto_s_max(ps, k);
    CacheKey key{ps.eq, ps.eps, s_max, ps.n_s, ps.box_length, std::vector<int>(k.begin(), k.end())};
    std::lock_guard<std::mutex> lock(ps.cache->mutex);
    auto it = ps.cache->kernels.find(key);
    if (it != ps.cache->kernels.end()) return it->second;
    if (ps.n_s < 2 || ps.n_s % 2) throw Error("penrose: n_s must be even and >= 2");
    const auto khat = unit(k, ps.eq->dim_v());
    const double kappa = ps.kappa(k);
    std::vector<double> gw, ph;
    kernel_tables(ps, khat, kappa, gw, ph);
    auto out = std::make_shared<Sampled>();
    out->ds = s_max / ps.n_s;
    out->weighted.resize(ps.n_s + 1);
    for (int i = 0; i <= ps.n_s; ++i) {
        const double w = (i == 0 || i == ps.n_s) ? 1.0 : (i % 2 ? 4.0 : 2.0);
        out->weighted[i] = w * out->ds / 3.0 * relativistic_kernel(kappa, i * out->ds, gw, ph);
    }
    ps.cache->kernels.emplace(std::move(key), out);
    return out;
}

}  // namespace

cplx penrose_kernel(const PenroseSymbol& ps, double tau, std::span<const int> k) {
    check(ps, k);
    const auto khat = unit(k, ps.eq->dim_v());
    const double kappa = ps.kappa(k);
    if (ps.eps == 0.0) {
        cplx r = 0.0;
        for (const auto& c : marginal(*ps.eq, khat))
            r += c.weight * std::exp(cplx(-0.5 * c.sigma * c.sigma * kappa * kappa * tau * tau, -kappa * tau * c.center));
        return tau * r;
    }
    std::vector<double> gw, ph;
    kernel_tables(ps, khat, kappa, gw, ph);
    return relativistic_kernel(kappa, tau, gw, ph);
}

cplx dispersion(const PenroseSymbol& ps, cplx z, std::span<const int> k) {
    check(ps, k);
    if (ps.eps == 0.0) {
        const double kappa = ps.kappa(k);
        cplx sum = 1.0, J, dJ;
        for (const auto& c : marginal(*ps.eq, unit(k, ps.eq->dim_v()))) {
            component_laplace(c, kappa, z, J, dJ);
            sum += J;
        }
        return sum;
    }
    const auto K = sampled_kernel(ps, k);
    cplx sum = 0.0;
    const cplx step = std::exp(-z * K->ds);
    cplx e = 1.0;
    for (std::size_t i = 0; i < K->weighted.size(); ++i) {
        sum += e * K->weighted[i];
        e *= step;
    }
    return 1.0 + sum;
}

cplx dispersion_derivative(const PenroseSymbol& ps, cplx z, std::span<const int> k) {
    check(ps, k);
    if (ps.eps == 0.0) {
        const double kappa = ps.kappa(k);
        cplx sum = 0.0, J, dJ;
        for (const auto& c : marginal(*ps.eq, unit(k, ps.eq->dim_v()))) {
            component_laplace(c, kappa, z, J, dJ);
            sum += dJ;
        }
        return sum;
    }
    const auto K = sampled_kernel(ps, k);
    cplx sum = 0.0;
    const cplx step = std::exp(-z * K->ds);
    cplx e = 1.0;
    for (std::size_t i = 0; i < K->weighted.size(); ++i) {
        sum -= static_cast<double>(i) * K->ds * e * K->weighted[i];
        e *= step;
    }
    return sum;
}

cplx symbol(const PenroseSymbol& ps, double gamma, double tau, std::span<const int> k) {
    if (!(gamma > 0.0)) throw Error("penrose: gamma must be positive");
    return dispersion(ps, cplx(gamma, tau), k);
}

namespace {

// Change of arg D along the segment a -> b, subdividing until each piece turns by < 0.3 rad.
double arg_change(const PenroseSymbol& ps, std::span<const int> k, cplx a, cplx b, cplx Da, cplx Db, int depth) {
    const double d = std::arg(Db / Da);
    if (std::abs(d) < 0.3 || depth > 24) {
        if (depth > 24) throw Error("penrose: winding contour passes too close to a zero");
        return d;
    }
    const cplx m = 0.5 * (a + b);
    const cplx Dm = dispersion(ps, m, k);
    return arg_change(ps, k, a, m, Da, Dm, depth + 1) + arg_change(ps, k, m, b, Dm, Db, depth + 1);
}

std::vector<DispersionRoot> refine_from(const PenroseSymbol& ps, std::span<const int> k,
                                        const std::vector<cplx>& seeds) {
    std::vector<DispersionRoot> roots;
    for (cplx z : seeds) {
        bool ok = false;
        for (int it = 0; it < 60; ++it) {
            const cplx D = dispersion(ps, z, k);
            if (std::abs(D) < 1e-12) {
                ok = true;
                break;
            }
            const cplx dD = dispersion_derivative(ps, z, k);
            if (dD == 0.0) break;
            cplx step = D / dD;
            if (std::abs(step) > 0.5) step *= 0.5 / std::abs(step);
            z -= step;
            if (std::abs(step) < 1e-14 * std::max(1.0, std::abs(z))) {
                ok = std::abs(dispersion(ps, z, k)) < 1e-8;
                break;
            }
        }
        if (!ok) continue;
        const double res = std::abs(dispersion(ps, z, k));
        if (res >= 1e-8) continue;
        const cplx omega = cplx(0.0, 1.0) * z;
        bool dup = false;
        for (const auto& r : roots) dup = dup || std::abs(r.omega - omega) < 1e-6;
        if (!dup) roots.push_back({std::vector<int>(k.begin(), k.end()), omega, res});
    }
    std::sort(roots.begin(), roots.end(),
              [](const DispersionRoot& a, const DispersionRoot& b) { return a.growth() > b.growth(); });
    return roots;
}

// Local minima of |D| on a grid over [g0, g1] x [-t, t], as Newton seeds.
std::vector<cplx> grid_minima(const PenroseSymbol& ps, std::span<const int> k, double g0, double g1, double t,
                              double h) {
    const int ng = std::max(3, static_cast<int>(std::ceil((g1 - g0) / h)) + 1);
    const int nt = std::max(3, static_cast<int>(std::ceil(2 * t / h)) + 1);
    std::vector<double> a(static_cast<std::size_t>(ng) * nt);
    auto z = [&](int i, int j) { return cplx(g0 + (g1 - g0) * i / (ng - 1), -t + 2 * t * j / (nt - 1)); };
    for (int i = 0; i < ng; ++i)
        for (int j = 0; j < nt; ++j) a[i * nt + j] = std::abs(dispersion(ps, z(i, j), k));
    std::vector<std::pair<double, cplx>> seeds;
    for (int i = 0; i < ng; ++i)
        for (int j = 0; j < nt; ++j) {
            const double v = a[i * nt + j];
            bool minimum = true;
            for (int di = -1; di <= 1 && minimum; ++di)
                for (int dj = -1; dj <= 1; ++dj) {
                    const int ii = i + di, jj = j + dj;
                    if ((di || dj) && ii >= 0 && ii < ng && jj >= 0 && jj < nt && a[ii * nt + jj] < v) {
                        minimum = false;
                        break;
                    }
                }
            if (minimum) seeds.push_back({v, z(i, j)});
        }
    std::sort(seeds.begin(), seeds.end(), [](const auto& x, const auto& y) { return x.first < y.first; });
    std::vector<cplx> out;
    for (const auto& s : seeds) out.push_back(s.second);
    return out;
}

}  // namespace

int winding_number(const PenroseSymbol& ps, std::span<const int> k, double gamma_min, double gamma_max,
                   double tau_max) {
    check(ps, k);
    if (!(gamma_max > gamma_min) || !(tau_max > 0.0)) throw Error("penrose: empty winding rectangle");
    const cplx corners[4] = {{gamma_min, -tau_max}, {gamma_max, -tau_max}, {gamma_max, tau_max}, {gamma_min, tau_max}};
    double total = 0.0;
    for (int s = 0; s < 4; ++s) {
        const cplx a = corners[s], b = corners[(s + 1) % 4];
        const int pieces = 64;
        cplx za = a, Da = dispersion(ps, a, k);
        for (int p = 1; p <= pieces; ++p) {
            const cplx zb = a + (b - a) * (double(p) / pieces);
            const cplx Db = dispersion(ps, zb, k);
            total += arg_change(ps, k, za, zb, Da, Db, 0);
            za = zb;
            Da = Db;
        }
    }
    return static_cast<int>(std::lround(total / (2.0 * pi)));
}

StabilityReport stability_margin(const PenroseSymbol& ps, const std::vector<std::vector<int>>& k_set,
                                 std::span<const double> gamma_grid, std::span<const double> tau_grid,
                                 double tol_margin) {
    if (k_set.empty() || gamma_grid.empty() || tau_grid.empty()) throw Error("stability_margin: empty grid");
    for (double g : gamma_grid)
        if (!(g > 0.0)) throw Error("stability_margin: gamma grid must be strictly positive");
    const double gmin = *std::min_element(gamma_grid.begin(), gamma_grid.end());
    const double gmax = std::max(*std::max_element(gamma_grid.begin(), gamma_grid.end()), gmin + 1.0);
    double tmax = 0.0;
    for (double t : tau_grid) tmax = std::max(tmax, std::abs(t));
    if (tmax == 0.0) tmax = 1.0;

    StabilityReport rep;
    rep.margin = 1e300;
    for (const auto& k : k_set) {
        for (double g : gamma_grid)
            for (double t : tau_grid) {
                const double m = std::abs(symbol(ps, g, t, k));
                if (m < rep.margin) {
                    rep.margin = m;
                    rep.k_worst = k;
                }
            }
        const int w = winding_number(ps, k, gmin, gmax, tmax);
        rep.winding.push_back(w);
        if (w > 0) {
            const double h = std::min(0.05, 0.25 * (gmax - gmin));
            for (auto& r : refine_from(ps, k, grid_minima(ps, k, gmin, gmax, tmax, h)))
                if (r.growth() > gmin) rep.roots.push_back(r);
        }
    }
    bool any = false;
    for (int w : rep.winding) any = any || w > 0;
    if (any) rep.classification = Stability::unstable;
    else if (rep.margin < tol_margin) rep.classification = Stability::marginal;
    else rep.classification = Stability::stable;
    return rep;
}

std::vector<DispersionRoot> dispersion_roots(const PenroseSymbol& ps, std::span<const int> k, double tau_max) {
    check(ps, k);
    const double g0 = ps.eps == 0.0 ? -1.5 : -0.3;
    return refine_from(ps, k, grid_minima(ps, k, g0, 2.0, tau_max, 0.1));
}

}  // namespace kinlim
