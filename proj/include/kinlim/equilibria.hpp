#pragma once

#include <span>
#include <vector>

#include "kinlim/common.hpp"

namespace kinlim {

// Cell-centred uniform grid on [-v_max, v_max]^dim; the last velocity index
// runs fastest in flattened storage.
struct VelocityGrid {
    int dim = 1;
    int n = 64;
    double vmax = 8.0;

    double h() const { return 2.0 * vmax / n; }
    double node(int i) const { return -vmax + (i + 0.5) * h(); }
    int size() const;
    double cell_volume() const;
    // Velocity coordinates of flattened node `idx`.
    void coords(int idx, double* v) const;
};

struct GaussianComponent {
    double weight = 1.0;
    double center = 0.0;
    double sigma = 1.0;
};
using Profile1D = std::vector<GaussianComponent>;

enum class EquilibriumKind { maxwellian, two_stream, bump_on_tail, anisotropic_product };

struct EquilibriumDescriptor {
    EquilibriumKind kind = EquilibriumKind::maxwellian;
    double sigma = 1.0;
    double u = 0.0;               // two_stream drift
    double bump_density = 0.1;    // bump_on_tail
    double bump_velocity = 4.5;
    double bump_sigma = 0.5;
    std::vector<double> sigmas;   // anisotropic_product, one width per dimension
    // Test stub: zero mass, every transform and kernel vanishes.
    bool null_profile = false;
};

// Every supported family is a product over velocity dimensions of 1D Gaussian
// mixtures; transforms and gradients are taken from that closed form.
class Equilibrium {
public:
    Equilibrium(EquilibriumDescriptor desc, int dim_v, int n_v, double v_max);

    const EquilibriumDescriptor& descriptor() const { return desc_; }
    const VelocityGrid& v_grid() const { return grid_; }
    int dim_v() const { return grid_.dim; }
    const std::vector<double>& values() const { return values_; }
    const std::vector<Profile1D>& factors() const { return factors_; }

    bool radial() const;
    // Every factor is even in its own variable.
    bool even() const;

    double operator()(const double* v) const;
    // Writes dim_v components of grad mu.
    void gradient(const double* v, double* g) const;
    double factor(int d, double s) const;
    double factor_derivative(int d, double s) const;
    // 1D transform  int factor_d(s) e^{-i xi s} ds  without the 2 pi normalisation.
    cplx factor_transform(int d, double xi) const;

private:
    EquilibriumDescriptor desc_;
    VelocityGrid grid_;
    std::vector<Profile1D> factors_;
    std::vector<double> values_;
};

double eval_mu(const Equilibrium& eq, std::span<const double> v);

// (2 pi)^{-d} int mu(v) e^{-i xi.v} dv
cplx fourier_mu(const Equilibrium& eq, std::span<const double> xi);

struct MomentConstants {
    double eps = 0.0;
    // Entry of the shift matrix acting on the transverse component (the
    // isotropic value for radial profiles).
    double lambda = 1.0;
    // int mu (1+eps^2|v|^2)^{-1/2} dv
    double lambda_tilde = 1.0;
    int dim = 1;
    // Lambda_ij = int d_{v_j} vhat_i mu dv = lambda_tilde delta_ij - eps^2 Phi_ij
    std::vector<double> lambda_matrix;
    // Phi_ij = int v_i v_j mu (1+eps^2|v|^2)^{-3/2} dv
    std::vector<double> phi_matrix;

    double lam(int i, int j) const { return lambda_matrix[i * dim + j]; }
    double phi(int i, int j) const { return phi_matrix[i * dim + j]; }
};

MomentConstants moment_constants(const Equilibrium& eq, double eps);

}  // namespace kinlim
