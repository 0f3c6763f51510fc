#include "kinlim/equilibria.hpp"

#include <cmath>

namespace kinlim {

namespace {

constexpr double inv_sqrt_2pi = 0.39894228040143267794;

Profile1D centred(double sigma) { return {{1.0, 0.0, sigma}}; }

std::vector<Profile1D> build_factors(const EquilibriumDescriptor& d, int dim) {
    if (d.sigma <= 0.0) throw Error("equilibrium: sigma must be positive");
    std::vector<Profile1D> f(dim, centred(d.sigma));
    switch (d.kind) {
    case EquilibriumKind::maxwellian:
        break;
    case EquilibriumKind::two_stream:
        f[0] = {{0.5, d.u, d.sigma}, {0.5, -d.u, d.sigma}};
        break;
    case EquilibriumKind::bump_on_tail: {
        const double nb = d.bump_density;
        if (nb <= 0.0 || nb >= 1.0 || d.bump_sigma <= 0.0)
            throw Error("equilibrium: bump_on_tail needs 0 < bump_density < 1 and bump_sigma > 0");
        // Bulk drift cancels the bump momentum.
        const double ub = d.bump_velocity;
        f[0] = {{1.0 - nb, -nb * ub / (1.0 - nb), d.sigma}, {nb, ub, d.bump_sigma}};
        break;
    }
    case EquilibriumKind::anisotropic_product:
        if (static_cast<int>(d.sigmas.size()) != dim)
            throw Error("equilibrium: anisotropic_product needs one sigma per velocity dimension");
        for (int i = 0; i < dim; ++i) {
            if (d.sigmas[i] <= 0.0) throw Error("equilibrium: sigmas must be positive");
            f[i] = centred(d.sigmas[i]);
        }
        break;
    }
    return f;
}

double gauss(const GaussianComponent& c, double s) {
    const double z = (s - c.center) / c.sigma;
    return c.weight * inv_sqrt_2pi / c.sigma * std::exp(-0.5 * z * z);
}

}  // namespace

int VelocityGrid::size() const {
    int s = 1;
    for (int d = 0; d < dim; ++d) s *= n;
    return s;
}

double VelocityGrid::cell_volume() const { return std::pow(h(), dim); }

void VelocityGrid::coords(int idx, double* v) const {
    for (int d = dim - 1; d >= 0; --d) {
        v[d] = node(idx % n);
        idx /= n;
    }
}

Equilibrium::Equilibrium(EquilibriumDescriptor desc, int dim_v, int n_v, double v_max)
    : desc_(std::move(desc)), grid_{dim_v, n_v, v_max} {
    if (dim_v < 1 || dim_v > 3) throw Error("equilibrium: dim_v must be 1, 2 or 3");
    if (n_v < 8 || v_max <= 0.0) throw Error("equilibrium: need n_v >= 8 and v_max > 0");
    factors_ = build_factors(desc_, dim_v);
    values_.resize(grid_.size());
    double v[3];
    for (int i = 0; i < grid_.size(); ++i) {
        grid_.coords(i, v);
        values_[i] = (*this)(v);
    }
}

bool Equilibrium::radial() const {
    if (desc_.null_profile) return true;
    for (const auto& p : factors_)
        if (p.size() != 1 || p[0].center != 0.0 || p[0].sigma != factors_[0][0].sigma) return false;
    return true;
}

bool Equilibrium::even() const {
    if (desc_.null_profile) return true;
    for (const auto& p : factors_) {
        double m = 0.0;
        for (const auto& c : p) m += c.weight * c.center;
        if (std::abs(m) > 0.0) return false;
        // Symmetric pairs are the only even mixtures built here.
        for (const auto& c : p) {
            bool mirrored = false;
            for (const auto& o : p)
                if (o.center == -c.center && o.sigma == c.sigma && o.weight == c.weight) mirrored = true;
            if (!mirrored) return false;
        }
    }
    return true;
}

double Equilibrium::factor(int d, double s) const {
    double r = 0.0;
    for (const auto& c : factors_[d]) r += gauss(c, s);
    return r;
}

double Equilibrium::factor_derivative(int d, double s) const {
    double r = 0.0;
    for (const auto& c : factors_[d]) r -= gauss(c, s) * (s - c.center) / (c.sigma * c.sigma);
    return r;
}

cplx Equilibrium::factor_transform(int d, double xi) const {
    if (desc_.null_profile) return 0.0;
    cplx r = 0.0;
    for (const auto& c : factors_[d])
        r += c.weight * std::exp(cplx(-0.5 * c.sigma * c.sigma * xi * xi, -xi * c.center));
    return r;
}

double Equilibrium::operator()(const double* v) const {
    if (desc_.null_profile) return 0.0;
    double r = 1.0;
    for (int d = 0; d < dim_v(); ++d) r *= factor(d, v[d]);
    return r;
}

void Equilibrium::gradient(const double* v, double* g) const {
    const int dim = dim_v();
    if (desc_.null_profile) {
        for (int d = 0; d < dim; ++d) g[d] = 0.0;
        return;
    }
    double val[3], der[3];
    for (int d = 0; d < dim; ++d) {
        val[d] = factor(d, v[d]);
        der[d] = factor_derivative(d, v[d]);
    }
    for (int d = 0; d < dim; ++d) {
        double r = der[d];
        for (int e = 0; e < dim; ++e)
            if (e != d) r *= val[e];
        g[d] = r;
    }
}

double eval_mu(const Equilibrium& eq, std::span<const double> v) {
    if (static_cast<int>(v.size()) != eq.dim_v()) throw Error("eval_mu: dimension mismatch");
    return eq(v.data());
}

cplx fourier_mu(const Equilibrium& eq, std::span<const double> xi) {
    if (static_cast<int>(xi.size()) != eq.dim_v()) throw Error("fourier_mu: dimension mismatch");
    cplx r = 1.0;
    for (int d = 0; d < eq.dim_v(); ++d) r *= eq.factor_transform(d, xi[d]) / (2.0 * pi);
    return r;
}

MomentConstants moment_constants(const Equilibrium& eq, double eps) {
    if (eps < 0.0) throw Error("moment_constants: eps must be nonnegative");
    const auto& g = eq.v_grid();
    const int dim = g.dim;
    MomentConstants mc;
    mc.eps = eps;
    mc.dim = dim;
    mc.lambda_matrix.assign(dim * dim, 0.0);
    mc.phi_matrix.assign(dim * dim, 0.0);
    const double e2 = eps * eps;
    const double w = g.cell_volume();
    double lt = 0.0;
    double v[3];
    for (int i = 0; i < g.size(); ++i) {
        g.coords(i, v);
        double v2 = 0.0;
        for (int d = 0; d < dim; ++d) v2 += v[d] * v[d];
        const double gam = std::sqrt(1.0 + e2 * v2);
        const double mu = eq.values()[i] * w;
        lt += mu / gam;
        const double c3 = mu / (gam * gam * gam);
        for (int a = 0; a < dim; ++a)
            for (int b = 0; b < dim; ++b) mc.phi_matrix[a * dim + b] += v[a] * v[b] * c3;
    }
    mc.lambda_tilde = lt;
    for (int a = 0; a < dim; ++a)
        for (int b = 0; b < dim; ++b)
            mc.lambda_matrix[a * dim + b] = (a == b ? lt : 0.0) - e2 * mc.phi_matrix[a * dim + b];
    const int t = dim >= 2 ? 1 : 0;
    mc.lambda = mc.lambda_matrix[t * dim + t];
    return mc;
}

}  // namespace kinlim
