#pragma once

#include <filesystem>
#include <vector>

#include "kinlim/common.hpp"
#include "kinlim/equilibria.hpp"
#include "kinlim/phase_space.hpp"

namespace kinlim {

// Half spectra per vector component: [component][mode 0..nx/2], mode 0 is the mean.
using Spectrum = std::vector<std::vector<cplx>>;

Spectrum to_spectrum(const VecField& u);
VecField from_spectrum(const Spectrum& s, int nx);

// -phi'' = rho - <rho>, <phi> = 0.
Field poisson_solve(const Field& rho, double L);
VecField leray_project(const VecField& u, double L);
// (-d_xx + eps^2 lambda)^{-1} per mode, including the mean.
VecField helmholtz_solve(const VecField& src, double eps, double lambda, double L);

// Potentials per Fourier mode. Mode 0 of A carries the mean <A>; in the 1D
// reduction the fluctuating part of A_1 is zero (Coulomb gauge).
struct EMState {
    double eps = 0.0;
    double L = 1.0;
    int nx = 0;
    // Diagonal of the shift matrix, one entry per component.
    std::vector<double> lambda;
    Field phi;
    Spectrum A, dA;

    EMState() = default;
    EMState(int dim, int nx_, double L_, double eps_, std::vector<double> lambda_);
    int dim() const { return static_cast<int>(A.size()); }
    double kappa(int n) const { return 2.0 * pi * n / L; }
    // omega^2 = (kappa^2 + eps^2 lambda_d) / eps^2
    double omega(int d, int n) const;

    // E = -grad phi - eps dA, B_3 = d_x A_2.
    VecField E() const;
    Field B() const;
    double gauge_residual() const;
    // Per-mode energy eps^2 |dA|^2 + eps^2 omega^2 |A|^2 summed over modes.
    double wave_energy() const;
};

// Response of  A'' + omega^2 A = q(t),  q(t) = sum_m c[m] t^m  (cubic), after
// time t, plus the integral of A over [0, t].
struct OscillatorStep {
    cplx A, dA, A_integral;
};
OscillatorStep oscillate(double omega, cplx A0, cplx dA0, const cplx c[4], double t);

// Source held constant: every mode advanced exactly with q = s / eps^2.
void wave_step(EMState& s, const Spectrum& source, double dt);

// Source interpolated by the cubic Hermite polynomial through (s0, ds0) and
// (s1, ds1). Returns the step average of A.
Spectrum wave_step_hermite(EMState& s, const Spectrum& s0, const Spectrum& ds0, const Spectrum& s1,
                           const Spectrum& ds1, double dt);

struct DarwinHierarchy {
    int N = 1;
    double eps = 0.0;
    double lambda = 1.0;
    double L = 1.0;
    int nx = 0;
    // Index conventions: levels and j are 1-based; slot 0 is unused. Mode 0
    // (the mean) carries no hierarchy and is left zero.
    std::vector<std::vector<double>> sym_Sk;                // [mode][j]
    std::vector<std::vector<std::vector<double>>> op_Skj;   // [k][j][mode]
    std::vector<std::vector<double>> delta_eps_k;           // [k][mode], symbol of Delta_{eps,k}

    int modes() const { return nx / 2 + 1; }
    double kappa(int n) const { return 2.0 * pi * n / L; }
    // Symbol of -Delta_eps.
    double d_eps(int n) const { return kappa(n) * kappa(n) + eps * eps * lambda; }
};

DarwinHierarchy build_hierarchy(const Equilibrium& eq, double eps, int N, const PhaseGrid& grid);

// Transverse spectra of A_1..A_N from the spectra of j_2 and of the moments
// int vhat_2 vhat_1^{2j} g dv (mhat[j], j = 1..N-1; mhat[0] unused).
std::vector<std::vector<cplx>> darwin_potentials_spectral(const DarwinHierarchy& h,
                                                          const std::vector<cplx>& jhat,
                                                          const std::vector<std::vector<cplx>>& mhat);

// A_1..A_N as vector fields; moments must come from g in 1D2V with
// max_ell >= 2N - 1.
std::vector<VecField> darwin_potentials(const DarwinHierarchy& h, const MomentSet& moments);

void write_hierarchy_csv(const std::filesystem::path& path, const DarwinHierarchy& h);

}  // namespace kinlim
