#include "kinlim/phase_space.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "kinlim/fft.hpp"

namespace kinlim {

void PhaseGrid::validate() const {
    if (nx < 8 || (nx & (nx - 1)) != 0) throw Error("phase grid: nx must be a power of two >= 8");
    if (nv < 8) throw Error("phase grid: nv must be >= 8");
    if (dim_v < 1 || dim_v > 2) throw Error("phase grid: dim_v must be 1 or 2");
    if (!(L > 0.0) || !(vmax > 0.0)) throw Error("phase grid: L and vmax must be positive");
}

void rel_velocity(std::span<const double> v, double eps, std::span<double> out) {
    double v2 = 0.0;
    for (double c : v) v2 += c * c;
    const double ig = 1.0 / std::sqrt(1.0 + eps * eps * v2);
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] * ig;
}

namespace {

// vhat components of every velocity node, [iv][d].
std::vector<double> vhat_table(const VelocityGrid& g, double eps) {
    std::vector<double> t(static_cast<std::size_t>(g.size()) * g.dim);
    double v[3];
    for (int i = 0; i < g.size(); ++i) {
        g.coords(i, v);
        rel_velocity({v, static_cast<std::size_t>(g.dim)}, eps, {&t[i * g.dim], static_cast<std::size_t>(g.dim)});
    }
    return t;
}

}  // namespace

const Field& MomentSet::tensor(std::span<const int> indices) const {
    const int ell = static_cast<int>(indices.size());
    if (ell > max_ell) throw Error("MomentSet::tensor: order exceeds max_ell");
    if (dim_v == 1) return m[ell][ell];
    int ones = 0;
    for (int i : indices) {
        if (i < 0 || i >= dim_v) throw Error("MomentSet::tensor: index out of range");
        ones += (i == 0);
    }
    return m[ell][ones];
}

MomentSet deposit_moments(const DistField& f, double eps, int max_ell) {
    if (max_ell < 1) throw Error("deposit_moments: max_ell must be >= 1");
    const auto& g = f.grid;
    const auto vg = g.velocity();
    const int nvt = vg.size();
    const int dim = g.dim_v;
    const auto vh = vhat_table(vg, eps);
    const double w = vg.cell_volume();

    MomentSet ms;
    ms.dim_v = dim;
    ms.max_ell = max_ell;
    ms.m.resize(max_ell + 1);
    for (int ell = 0; ell <= max_ell; ++ell)
        ms.m[ell].assign(dim == 1 ? ell + 1 : ell + 1, Field(g.nx, 0.0));

    // Powers of vhat_1, vhat_2 per node, reused across x.
    std::vector<double> p1(static_cast<std::size_t>(nvt) * (max_ell + 1));
    std::vector<double> p2(static_cast<std::size_t>(nvt) * (max_ell + 1), 1.0);
    for (int iv = 0; iv < nvt; ++iv) {
        double a = 1.0, b = 1.0;
        for (int e = 0; e <= max_ell; ++e) {
            p1[iv * (max_ell + 1) + e] = a;
            p2[iv * (max_ell + 1) + e] = b;
            a *= vh[iv * dim];
            if (dim == 2) b *= vh[iv * dim + 1];
        }
    }
    for (int ix = 0; ix < g.nx; ++ix) {
        const double* s = f.slice(ix);
        for (int ell = 0; ell <= max_ell; ++ell) {
            const int ncomp = ell + 1;
            for (int a = 0; a < ncomp; ++a) {
                if (dim == 1 && a != ell) continue;
                const int b = ell - a;
                double acc = 0.0;
                for (int iv = 0; iv < nvt; ++iv)
                    acc += s[iv] * p1[iv * (max_ell + 1) + a] * p2[iv * (max_ell + 1) + b];
                ms.m[ell][a][ix] = acc * w;
            }
        }
    }
    ms.rho = ms.m[0][0];
    ms.j = VecField(dim, g.nx);
    ms.j.c[0] = ms.m[1][1];
    if (dim == 2) ms.j.c[1] = ms.m[1][0];
    ms.means.resize(max_ell + 1);
    for (int ell = 0; ell <= max_ell; ++ell)
        for (const auto& comp : ms.m[ell]) ms.means[ell].push_back(spatial_mean(comp));
    return ms;
}

Field velocity_moment(const DistField& f, double eps, int p, int q) {
    const auto& g = f.grid;
    if (g.dim_v == 1 && q != 0) throw Error("velocity_moment: q must be 0 in 1D1V");
    const auto vg = g.velocity();
    const int nvt = vg.size();
    const int dim = g.dim_v;
    const auto vh = vhat_table(vg, eps);
    std::vector<double> wgt(nvt);
    for (int iv = 0; iv < nvt; ++iv) {
        double r = std::pow(vh[iv * dim], p);
        if (dim == 2) r *= std::pow(vh[iv * dim + 1], q);
        wgt[iv] = r * vg.cell_volume();
    }
    Field out(g.nx, 0.0);
    for (int ix = 0; ix < g.nx; ++ix) {
        const double* s = f.slice(ix);
        double acc = 0.0;
        for (int iv = 0; iv < nvt; ++iv) acc += s[iv] * wgt[iv];
        out[ix] = acc;
    }
    return out;
}

namespace {

DistField shift(const DistField& f, const VecField& A, double eps, const Equilibrium& eq, double sign) {
    if (f.role != FieldRole::perturbation) throw Error("shift_to_g: requires a perturbation-role field");
    const auto& g = f.grid;
    if (A.dim() != g.dim_v) throw Error("shift_to_g: A must have d_v components");
    const auto vg = g.velocity();
    const int nvt = vg.size();
    const int dim = g.dim_v;
    std::vector<double> grad(static_cast<std::size_t>(nvt) * dim);
    double v[3];
    for (int iv = 0; iv < nvt; ++iv) {
        vg.coords(iv, v);
        eq.gradient(v, &grad[iv * dim]);
    }
    DistField out = f;
    for (int ix = 0; ix < g.nx; ++ix) {
        double* s = out.slice(ix);
        for (int iv = 0; iv < nvt; ++iv) {
            double dot = 0.0;
            for (int d = 0; d < dim; ++d) dot += A.c[d][ix] * grad[iv * dim + d];
            s[iv] += sign * eps * dot;
        }
    }
    return out;
}

}  // namespace

DistField shift_to_g(const DistField& f, const VecField& A, double eps, const Equilibrium& eq) {
    return shift(f, A, eps, eq, -1.0);
}

DistField unshift_from_g(const DistField& g, const VecField& A, double eps, const Equilibrium& eq) {
    return shift(g, A, eps, eq, 1.0);
}

double spatial_mean(const Field& u) {
    double s = 0.0;
    for (double x : u) s += x;
    return u.empty() ? 0.0 : s / static_cast<double>(u.size());
}

double l2_norm(const Field& u, double L) {
    double s = 0.0;
    for (double x : u) s += x * x;
    return std::sqrt(s * L / static_cast<double>(u.size()));
}

double hn_norm(const Field& u, double L, int n) {
    const int nx = static_cast<int>(u.size());
    const auto uh = rfft(u);
    double s = 0.0;
    for (int k = 0; k <= nx / 2; ++k) {
        const double kap = 2.0 * pi * k / L;
        double w = 0.0, p = 1.0;
        for (int o = 0; o <= n; ++o) {
            w += p;
            p *= kap * kap;
        }
        const double mult = (k == 0 || (nx % 2 == 0 && k == nx / 2)) ? 1.0 : 2.0;
        s += mult * w * std::norm(uh[k]);
    }
    return std::sqrt(s * L);
}

double bootstrap_integrand(const MomentSet& m, double L, int n) {
    double s = 0.0;
    auto fluct = [](const Field& u) {
        Field r(u);
        const double mean = spatial_mean(u);
        for (auto& x : r) x -= mean;
        return r;
    };
    s += std::pow(hn_norm(m.rho, L, n), 2);
    for (const auto& c : m.j.c) s += std::pow(hn_norm(c, L, n), 2);
    for (int ell = 2; ell <= m.max_ell; ++ell)
        for (int a = 0; a <= ell; ++a) {
            if (m.dim_v == 1 && a != ell) continue;
            s += std::pow(hn_norm(fluct(m.m[ell][a]), L, n), 2);
        }
    return s;
}

std::vector<double> bootstrap_norm(std::span<const double> integrand, double dt) {
    std::vector<double> out(integrand.size(), 0.0);
    double acc = 0.0;
    for (std::size_t i = 1; i < integrand.size(); ++i) {
        acc += 0.5 * dt * (std::max(integrand[i - 1], 0.0) + std::max(integrand[i], 0.0));
        out[i] = std::sqrt(acc);
    }
    return out;
}

double weighted_sobolev_norm(const DistField& f, int n, double k) {
    if (n < 0 || n > 2) throw Error("weighted_sobolev_norm: n must be 0, 1 or 2");
    const auto& g = f.grid;
    const auto vg = g.velocity();
    const int nvt = vg.size();
    const int dim = g.dim_v;
    const double h = vg.h();
    std::vector<double> weight(nvt);
    double v[3];
    for (int iv = 0; iv < nvt; ++iv) {
        vg.coords(iv, v);
        double v2 = 0.0;
        for (int d = 0; d < dim; ++d) v2 += v[d] * v[d];
        weight[iv] = std::pow(1.0 + v2, 0.5 * k);
    }
    auto at = [&](const std::vector<double>& a, int ix, int iv) { return a[static_cast<std::size_t>(ix) * nvt + iv]; };
    auto norm2 = [&](const std::vector<double>& a) {
        double s = 0.0;
        for (int ix = 0; ix < g.nx; ++ix)
            for (int iv = 0; iv < nvt; ++iv) s += std::pow(weight[iv] * at(a, ix, iv), 2);
        return s * g.dx() * vg.cell_volume();
    };
    auto dx = [&](const std::vector<double>& a) {
        std::vector<double> out(a.size());
        Field col(g.nx);
        for (int iv = 0; iv < nvt; ++iv) {
            for (int ix = 0; ix < g.nx; ++ix) col[ix] = at(a, ix, iv);
            const Field d = spectral_derivative(col, g.L, 1);
            for (int ix = 0; ix < g.nx; ++ix) out[static_cast<std::size_t>(ix) * nvt + iv] = d[ix];
        }
        return out;
    };
    auto dv = [&](const std::vector<double>& a, int d) {
        std::vector<double> out(a.size(), 0.0);
        int stride = 1;
        for (int e = dim - 1; e > d; --e) stride *= vg.n;
        for (int ix = 0; ix < g.nx; ++ix)
            for (int iv = 0; iv < nvt; ++iv) {
                const int i = (iv / stride) % vg.n;
                const double up = i + 1 < vg.n ? at(a, ix, iv + stride) : 0.0;
                const double dn = i > 0 ? at(a, ix, iv - stride) : 0.0;
                out[static_cast<std::size_t>(ix) * nvt + iv] = (up - dn) / (2.0 * h);
            }
        return out;
    };
    // Enumerate derivative multi-indices by repeated application.
    std::vector<std::vector<double>> level{f.values};
    double s = norm2(f.values);
    for (int o = 1; o <= n; ++o) {
        std::vector<std::vector<double>> next;
        for (const auto& a : level) {
            next.push_back(dx(a));
            for (int d = 0; d < dim; ++d) next.push_back(dv(a, d));
        }
        for (const auto& a : next) s += norm2(a);
        level = std::move(next);
    }
    return std::sqrt(s);
}

namespace {

constexpr char snapshot_magic[8] = {'K', 'L', 'S', 'N', 'A', 'P', '0', '1'};

}  // namespace

void write_snapshot(const std::filesystem::path& path, const DistField& f, double time, double eps,
                    double delta) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("write_snapshot: cannot open " + path.string());
    const auto& g = f.grid;
    const std::int32_t ints[4] = {g.nx, g.dim_v, g.nv, f.role == FieldRole::full ? 1 : 0};
    const double reals[5] = {g.L, g.vmax, time, eps, delta};
    os.write(snapshot_magic, sizeof snapshot_magic);
    os.write(reinterpret_cast<const char*>(ints), sizeof ints);
    os.write(reinterpret_cast<const char*>(reals), sizeof reals);
    os.write(reinterpret_cast<const char*>(f.values.data()),
             static_cast<std::streamsize>(f.values.size() * sizeof(double)));
    if (!os) throw Error("write_snapshot: write failed for " + path.string());
}

DistField read_snapshot(const std::filesystem::path& path, SnapshotHeader* header) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error("read_snapshot: cannot open " + path.string());
    char magic[8];
    std::int32_t ints[4];
    double reals[5];
    is.read(magic, sizeof magic);
    if (std::memcmp(magic, snapshot_magic, sizeof magic) != 0) throw Error("read_snapshot: bad magic in " + path.string());
    is.read(reinterpret_cast<char*>(ints), sizeof ints);
    is.read(reinterpret_cast<char*>(reals), sizeof reals);
    PhaseGrid g{ints[0], reals[0], ints[1], ints[2], reals[1]};
    g.validate();
    DistField f(g, ints[3] == 1 ? FieldRole::full : FieldRole::perturbation);
    is.read(reinterpret_cast<char*>(f.values.data()), static_cast<std::streamsize>(f.values.size() * sizeof(double)));
    if (!is) throw Error("read_snapshot: truncated file " + path.string());
    if (header) *header = {g, f.role, reals[2], reals[3], reals[4]};
    return f;
}

void write_moments_csv(const std::filesystem::path& path, const MomentSet& m, const PhaseGrid& g) {
    std::ofstream os(path);
    if (!os) throw Error("write_moments_csv: cannot open " + path.string());
    os.precision(17);
    os << "x,rho";
    for (int d = 0; d < m.dim_v; ++d) os << ",j" << d + 1;
    os << '\n';
    for (int ix = 0; ix < g.nx; ++ix) {
        os << g.x(ix) << ',' << m.rho[ix];
        for (int d = 0; d < m.dim_v; ++d) os << ',' << m.j.c[d][ix];
        os << '\n';
    }
}

}  // namespace kinlim
