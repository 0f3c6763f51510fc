#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "kinlim/common.hpp"
#include "kinlim/equilibria.hpp"

namespace kinlim {

// One periodic space dimension of length L times a velocity grid.
struct PhaseGrid {
    int nx = 32;
    double L = 1.0;
    int dim_v = 1;
    int nv = 64;
    double vmax = 8.0;

    VelocityGrid velocity() const { return {dim_v, nv, vmax}; }
    int nv_total() const { return velocity().size(); }
    std::size_t size() const { return static_cast<std::size_t>(nx) * nv_total(); }
    double dx() const { return L / nx; }
    double x(int i) const { return i * dx(); }
    // Physical wavenumber of Fourier mode n.
    double kappa(int n) const { return 2.0 * pi * n / L; }
    void validate() const;
};

enum class FieldRole { full, perturbation };

// values[ix * nv_total + iv]
struct DistField {
    PhaseGrid grid;
    std::vector<double> values;
    FieldRole role = FieldRole::perturbation;

    DistField() = default;
    DistField(const PhaseGrid& g, FieldRole r) : grid(g), values(g.size(), 0.0), role(r) {}

    double* slice(int ix) { return values.data() + static_cast<std::size_t>(ix) * grid.nv_total(); }
    const double* slice(int ix) const { return values.data() + static_cast<std::size_t>(ix) * grid.nv_total(); }
};

// Vector field sampled on the x grid, one Field per velocity dimension.
struct VecField {
    std::vector<Field> c;
    VecField() = default;
    VecField(int dim, int nx) : c(dim, Field(nx, 0.0)) {}
    int dim() const { return static_cast<int>(c.size()); }
};

// Velocity moments on the x grid. Tensors m_ell are stored compressed: in
// d_v = 2, component a holds int vhat_1^a vhat_2^(ell-a) f dv.
struct MomentSet {
    int dim_v = 1;
    int max_ell = 1;
    Field rho;
    VecField j;
    std::vector<std::vector<Field>> m;  // m[ell][a]; ell = 0 and 1 mirror rho and j
    std::vector<std::vector<double>> means;

    // Full-tensor access: entry m_ell with the given indices in {0, .., d_v-1}.
    const Field& tensor(std::span<const int> indices) const;
    const Field& component(int ell, int power1) const { return m[ell][power1]; }
};

// vhat = v / sqrt(1 + eps^2 |v|^2), written to out (same length as v).
void rel_velocity(std::span<const double> v, double eps, std::span<double> out);

MomentSet deposit_moments(const DistField& f, double eps, int max_ell);

// int vhat_1^p vhat_2^q f dv on the x grid (q must be 0 when d_v = 1).
Field velocity_moment(const DistField& f, double eps, int p, int q);

// g = f - eps A . grad mu. A has d_v components.
DistField shift_to_g(const DistField& f, const VecField& A, double eps, const Equilibrium& eq);
DistField unshift_from_g(const DistField& g, const VecField& A, double eps, const Equilibrium& eq);

// Spatial mean over the periodic box.
double spatial_mean(const Field& u);
// sqrt(int |u|^2 dx) over the box.
double l2_norm(const Field& u, double L);
// H^n_x norm with spectral derivatives.
double hn_norm(const Field& u, double L, int n);

// Instantaneous integrand of the bootstrap norm: squared H^n norms of rho,
// j and the fluctuating parts of m_ell for 2 <= ell <= max_ell.
double bootstrap_integrand(const MomentSet& m, double L, int n);

// Running sqrt of the time integral of the integrand (trapezoid).
std::vector<double> bootstrap_norm(std::span<const double> integrand, double dt);

// Weighted norm sum_{|a|+|b|<=n} ||(1+|v|^2)^{k/2} d_x^a d_v^b f||_2 with
// spectral x derivatives and centred differences in v, n <= 2.
double weighted_sobolev_norm(const DistField& f, int n, double k);

struct SnapshotHeader {
    PhaseGrid grid;
    FieldRole role = FieldRole::perturbation;
    double time = 0.0;
    double eps = 0.0;
    double delta = 0.0;
};

void write_snapshot(const std::filesystem::path& path, const DistField& f, double time, double eps,
                    double delta);
DistField read_snapshot(const std::filesystem::path& path, SnapshotHeader* header = nullptr);

void write_moments_csv(const std::filesystem::path& path, const MomentSet& m, const PhaseGrid& g);

}  // namespace kinlim
