#pragma once

#include <memory>
#include <span>
#include <vector>

#include "kinlim/common.hpp"
#include "kinlim/equilibria.hpp"

namespace kinlim {

// Dispersion function of the electrostatic linearisation,
//   D(z) = 1 + int_0^inf e^{-z s} K(s) ds,  K(s) = -(i/kappa) int khat.grad mu e^{-i s k.vhat} dv,
// on a periodic box where integer wavevector k has physical wavenumber 2 pi |k| / box_length.
// eps = 0 uses the closed form of the Gaussian-mixture marginal along k and is
// valid on the whole plane; eps > 0 integrates sampled kernels up to s_max.
struct PenroseKernelCache;
std::shared_ptr<PenroseKernelCache> make_penrose_cache();

struct PenroseSymbol {
    const Equilibrium* eq = nullptr;
    double eps = 0.0;
    // 0 selects a cutoff from the decay of the marginal.
    double s_max = 0.0;
    int n_s = 4096;
    double box_length = 2.0 * pi;
    // Sampled eps > 0 kernels, shared by copies of this symbol.
    std::shared_ptr<PenroseKernelCache> cache = make_penrose_cache();

    double kappa(std::span<const int> k) const;
};

struct DispersionRoot {
    std::vector<int> k;
    // Mode e^{i(kx - omega t)}: Im omega > 0 grows.
    cplx omega;
    double residual = 0.0;
    double growth() const { return omega.imag(); }
};

enum class Stability { stable, unstable, marginal };

struct StabilityReport {
    double margin = 0.0;
    std::vector<int> k_worst;
    Stability classification = Stability::stable;
    std::vector<DispersionRoot> roots;
    // Zero count inside the probed rectangle, per entry of k_set.
    std::vector<int> winding;
};

const char* to_string(Stability s);

// Symbol at z = gamma + i tau.
cplx symbol(const PenroseSymbol& ps, double gamma, double tau, std::span<const int> k);
// D(z) at any complex z where the representation converges.
cplx dispersion(const PenroseSymbol& ps, cplx z, std::span<const int> k);
// dD/dz from the differentiated Laplace integrand -s e^{-z s} K(s).
cplx dispersion_derivative(const PenroseSymbol& ps, cplx z, std::span<const int> k);
// Time-domain kernel K(tau) for the mode k.
cplx penrose_kernel(const PenroseSymbol& ps, double tau, std::span<const int> k);

// Zeros of D counted by the argument principle on the boundary of
// [gamma_min, gamma_max] x [-tau_max, tau_max].
int winding_number(const PenroseSymbol& ps, std::span<const int> k, double gamma_min, double gamma_max,
                   double tau_max);

StabilityReport stability_margin(const PenroseSymbol& ps, const std::vector<std::vector<int>>& k_set,
                                 std::span<const double> gamma_grid, std::span<const double> tau_grid,
                                 double tol_margin = 1e-3);

// Roots with residual below 1e-8, most unstable first. The search covers
// Re z in [-1.5, 2] (eps = 0) or [-0.3, 2] (eps > 0) and |Im z| <= tau_max.
std::vector<DispersionRoot> dispersion_roots(const PenroseSymbol& ps, std::span<const int> k,
                                             double tau_max = 6.0);

}  // namespace kinlim
