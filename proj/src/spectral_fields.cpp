#include "kinlim/spectral_fields.hpp"

#include <cmath>
#include <fstream>

#include "kinlim/fft.hpp"

namespace kinlim {

Spectrum to_spectrum(const VecField& u) {
    Spectrum s;
    for (const auto& c : u.c) s.push_back(rfft(c));
    return s;
}

VecField from_spectrum(const Spectrum& s, int nx) {
    VecField u;
    for (const auto& c : s) u.c.push_back(irfft(c, nx));
    return u;
}

Field poisson_solve(const Field& rho, double L) {
    const int nx = static_cast<int>(rho.size());
    auto h = rfft(rho);
    h[0] = 0.0;
    for (int n = 1; n <= nx / 2; ++n) {
        const double k = 2.0 * pi * n / L;
        h[n] /= k * k;
    }
    return irfft(h, nx);
}

VecField leray_project(const VecField& u, double L) {
    (void)L;
    VecField out = u;
    // In one space dimension the divergence only sees component 1, whose
    // fluctuations are pure gradients.
    const double m = spatial_mean(u.c[0]);
    for (auto& x : out.c[0]) x = m;
    return out;
}

VecField helmholtz_solve(const VecField& src, double eps, double lambda, double L) {
    if (eps < 0.0) throw Error("helmholtz_solve: eps must be nonnegative");
    if (!(lambda > 0.0)) throw Error("helmholtz_solve: lambda must be positive");
    VecField out;
    for (const auto& c : src.c) {
        const int nx = static_cast<int>(c.size());
        auto h = rfft(c);
        const double shift = eps * eps * lambda;
        if (shift == 0.0) {
            if (std::abs(h[0]) > 1e-14) throw Error("helmholtz_solve: eps = 0 with a nonzero-mean source is singular");
            h[0] = 0.0;
        } else {
            h[0] /= shift;
        }
        for (int n = 1; n <= nx / 2; ++n) {
            const double k = 2.0 * pi * n / L;
            h[n] /= k * k + shift;
        }
        out.c.push_back(irfft(h, nx));
    }
    return out;
}

EMState::EMState(int dim, int nx_, double L_, double eps_, std::vector<double> lambda_)
    : eps(eps_), L(L_), nx(nx_), lambda(std::move(lambda_)), phi(nx_, 0.0),
      A(dim, std::vector<cplx>(nx_ / 2 + 1, 0.0)), dA(dim, std::vector<cplx>(nx_ / 2 + 1, 0.0)) {
    if (static_cast<int>(lambda.size()) != dim) throw Error("EMState: one lambda per component required");
}

double EMState::omega(int d, int n) const {
    const double k = kappa(n);
    return std::sqrt((k * k + eps * eps * lambda[d]) / (eps * eps));
}

VecField EMState::E() const {
    VecField e(dim(), nx);
    const Field dphi = spectral_derivative(phi, L, 1);
    for (int d = 0; d < dim(); ++d) {
        const Field da = irfft(dA[d], nx);
        for (int i = 0; i < nx; ++i) e.c[d][i] = -eps * da[i] - (d == 0 ? dphi[i] : 0.0);
    }
    return e;
}

Field EMState::B() const {
    if (dim() < 2) return Field(nx, 0.0);
    auto h = A[1];
    for (int n = 0; n <= nx / 2; ++n) h[n] *= cplx(0.0, kappa(n));
    h[nx / 2] = 0.0;
    return irfft(h, nx);
}

double EMState::gauge_residual() const {
    double r = 0.0;
    for (int n = 1; n <= nx / 2; ++n) r = std::max(r, kappa(n) * std::abs(A[0][n]));
    return r;
}

double EMState::wave_energy() const {
    double e = 0.0;
    for (int d = 0; d < dim(); ++d)
        for (int n = 0; n <= nx / 2; ++n) {
            const double w = omega(d, n);
            e += eps * eps * (std::norm(dA[d][n]) + w * w * std::norm(A[d][n]));
        }
    return e;
}

namespace {

// sum_n (-1)^n w^{2n} t^{2n+r+m} m! / (2n+r+m)!
double series(double w, double t, int m, int r) {
    double term = std::pow(t, r + m);
    for (int i = m + 1; i <= m + r; ++i) term /= i;
    double sum = term;
    const double w2t2 = w * w * t * t;
    for (int n = 0; n < 60; ++n) {
        const int base = 2 * n + r + m;
        term *= -w2t2 / ((base + 1.0) * (base + 2.0));
        sum += term;
        if (std::abs(term) <= 1e-18 * std::abs(sum)) break;
    }
    return sum;
}

}  // namespace

OscillatorStep oscillate(double omega, cplx A0, cplx dA0, const cplx c[4], double t) {
    OscillatorStep r;
    if (omega * t < 1.0) {
        const double c00 = series(omega, t, 0, 0), c01 = series(omega, t, 0, 1), c02 = series(omega, t, 0, 2);
        r.A = A0 * c00 + dA0 * c01;
        r.dA = -omega * omega * c01 * A0 + dA0 * c00;
        r.A_integral = A0 * c01 + dA0 * c02;
        for (int m = 0; m < 4; ++m) {
            if (c[m] == 0.0) continue;
            r.A += c[m] * series(omega, t, m, 2);
            r.dA += c[m] * series(omega, t, m, 1);
            r.A_integral += c[m] * series(omega, t, m, 3);
        }
        return r;
    }
    const double w2 = omega * omega, w4 = w2 * w2;
    auto q = [&](double s) { return c[0] + s * (c[1] + s * (c[2] + s * c[3])); };
    auto q1 = [&](double s) { return c[1] + s * (2.0 * c[2] + 3.0 * s * c[3]); };
    auto q2 = [&](double s) { return 2.0 * c[2] + 6.0 * s * c[3]; };
    const cplx q3 = 6.0 * c[3];
    auto ap = [&](double s) { return q(s) / w2 - q2(s) / w4; };
    auto ap1 = [&](double s) { return q1(s) / w2 - q3 / w4; };
    const cplx Q = t * (c[0] + t * (c[1] / 2.0 + t * (c[2] / 3.0 + t * c[3] / 4.0)));
    const cplx ap_int = Q / w2 - (q1(t) - q1(0.0)) / w4;
    const cplx a = A0 - ap(0.0);
    const cplx b = (dA0 - ap1(0.0)) / omega;
    const double cs = std::cos(omega * t), sn = std::sin(omega * t);
    r.A = ap(t) + a * cs + b * sn;
    r.dA = ap1(t) - a * omega * sn + b * omega * cs;
    r.A_integral = ap_int + a * sn / omega + b * (1.0 - cs) / omega;
    return r;
}

void wave_step(EMState& s, const Spectrum& source, double dt) {
    if (!(dt > 0.0)) throw Error("wave_step: dt must be positive");
    const double ie2 = 1.0 / (s.eps * s.eps);
    for (int d = 0; d < s.dim(); ++d)
        for (int n = 0; n <= s.nx / 2; ++n) {
            if (d == 0 && n > 0) continue;
            const cplx c[4] = {source[d][n] * ie2, 0.0, 0.0, 0.0};
            const auto r = oscillate(s.omega(d, n), s.A[d][n], s.dA[d][n], c, dt);
            s.A[d][n] = r.A;
            s.dA[d][n] = r.dA;
        }
}

Spectrum wave_step_hermite(EMState& s, const Spectrum& s0, const Spectrum& ds0, const Spectrum& s1,
                           const Spectrum& ds1, double dt) {
    if (!(dt > 0.0)) throw Error("wave_step_hermite: dt must be positive");
    const double ie2 = 1.0 / (s.eps * s.eps);
    Spectrum avg(s.dim(), std::vector<cplx>(s.nx / 2 + 1, 0.0));
    for (int d = 0; d < s.dim(); ++d)
        for (int n = 0; n <= s.nx / 2; ++n) {
            if (d == 0 && n > 0) continue;
            const cplx a0 = s0[d][n], a1 = ds0[d][n], b0 = s1[d][n], b1 = ds1[d][n];
            const cplx c[4] = {a0 * ie2, a1 * ie2, (3.0 * (b0 - a0) / dt - 2.0 * a1 - b1) / dt * ie2,
                               (2.0 * (a0 - b0) / dt + a1 + b1) / (dt * dt) * ie2};
            const auto r = oscillate(s.omega(d, n), s.A[d][n], s.dA[d][n], c, dt);
            s.A[d][n] = r.A;
            s.dA[d][n] = r.dA;
            avg[d][n] = r.A_integral / dt;
        }
    return avg;
}

DarwinHierarchy build_hierarchy(const Equilibrium& eq, double eps, int N, const PhaseGrid& grid) {
    if (N < 1) throw Error("build_hierarchy: N must be >= 1");
    if (eps < 0.0) throw Error("build_hierarchy: eps must be nonnegative");
    if (grid.dim_v != 2 || eq.dim_v() != 2) throw Error("build_hierarchy: requires the 1D2V geometry");
    if (!eq.radial()) throw Error("build_hierarchy: requires a radial equilibrium");

    DarwinHierarchy h;
    h.N = N;
    h.eps = eps;
    h.lambda = moment_constants(eq, eps).lambda;
    h.L = grid.L;
    h.nx = grid.nx;
    const int nm = h.modes();

    // raw[j] = int vhat_2 vhat_1^{2j} d_{v_2} mu dv
    std::vector<double> raw(N + 1, 0.0);
    const auto vg = grid.velocity();
    double v[2], vh[2], g[2];
    for (int iv = 0; iv < vg.size(); ++iv) {
        vg.coords(iv, v);
        rel_velocity({v, 2}, eps, {vh, 2});
        eq.gradient(v, g);
        double p = 1.0;
        for (int j = 0; j <= N; ++j) {
            raw[j] += vh[1] * p * g[1] * vg.cell_volume();
            p *= vh[0] * vh[0];
        }
    }

    h.sym_Sk.assign(nm, std::vector<double>(N + 1, 0.0));
    for (int n = 1; n < nm; ++n) {
        const double k2 = h.kappa(n) * h.kappa(n);
        const double d = h.d_eps(n);
        double num = 1.0, den = 1.0;
        for (int j = 1; j <= N; ++j) {
            num *= -k2;
            den *= d;
            h.sym_Sk[n][j] = num * raw[j] / den;
        }
    }

    h.op_Skj.assign(N + 1, std::vector<std::vector<double>>(N + 2, std::vector<double>(nm, 0.0)));
    h.delta_eps_k.assign(N + 1, std::vector<double>(nm, 0.0));
    for (int n = 1; n < nm; ++n) {
        h.delta_eps_k[1][n] = -h.d_eps(n);
        h.op_Skj[1][1][n] = -1.0;
    }
    const double e2 = eps * eps;
    for (int k = 1; k < N; ++k) {
        const double e2k2 = std::pow(eps, 2 * k + 2);
        for (int n = 1; n < nm; ++n) {
            double corr = 0.0;
            for (int j = 1; j <= k; ++j) corr += h.op_Skj[k][j][n] * h.sym_Sk[n][j];
            const double next = h.delta_eps_k[k][n] + e2k2 * corr;
            if (std::abs(next) < 1e-10)
                throw Error("build_hierarchy: Delta_{eps," + std::to_string(k + 1) + "} is singular at mode " +
                            std::to_string(n));
            h.delta_eps_k[k + 1][n] = next;
            // S_{k+1,j} = -(-Delta_{eps,k+1})^{-1} [ (-Delta_eps) S_{k,j-1}
            //             - sum_i sum_{l=j..k} eps^{2l} S_{k,i} S_i S_{l,j} ]
            const double inv = 1.0 / (-next);
            for (int j = 1; j <= k + 1; ++j) {
                double bracket = h.d_eps(n) * h.op_Skj[k][j - 1][n];
                for (int i = 1; i <= k; ++i)
                    for (int l = j; l <= k; ++l)
                        bracket -= std::pow(e2, l) * h.op_Skj[k][i][n] * h.sym_Sk[n][i] * h.op_Skj[l][j][n];
                h.op_Skj[k + 1][j][n] = -inv * bracket;
            }
        }
    }
    return h;
}

std::vector<std::vector<cplx>> darwin_potentials_spectral(const DarwinHierarchy& h,
                                                          const std::vector<cplx>& jhat,
                                                          const std::vector<std::vector<cplx>>& mhat) {
    const int nm = h.modes();
    const int N = h.N;
    std::vector<std::vector<cplx>> A(N + 1, std::vector<cplx>(nm, 0.0));
    for (int n = 1; n < nm; ++n) {
        const double d = h.d_eps(n);
        const double k2 = h.kappa(n) * h.kappa(n);
        A[1][n] = h.eps * jhat[n] / d;
        // M_j(g) = (-k^2)^j mhat_j / d^j
        std::vector<cplx> M(N, 0.0);
        double fac = 1.0;
        for (int j = 1; j < N; ++j) {
            fac *= -k2 / d;
            M[j] = fac * mhat[j][n];
        }
        cplx sumA = A[1][n];
        for (int k = 1; k < N; ++k) {
            cplx acc = 0.0;
            for (int j = 1; j <= k; ++j) acc += h.op_Skj[k][j][n] * (M[j] + h.eps * h.sym_Sk[n][j] * sumA);
            A[k + 1][n] = std::pow(h.eps, 2 * k + 1) * acc / (-h.delta_eps_k[k + 1][n]);
            sumA += A[k + 1][n];
        }
    }
    return A;
}

std::vector<VecField> darwin_potentials(const DarwinHierarchy& h, const MomentSet& moments) {
    if (moments.dim_v != 2) throw Error("darwin_potentials: requires 1D2V moments");
    if (moments.max_ell < 2 * h.N - 1) throw Error("darwin_potentials: moments must reach order 2N-1");
    const auto jhat = rfft(moments.j.c[1]);
    std::vector<std::vector<cplx>> mhat(h.N);
    for (int j = 1; j < h.N; ++j) mhat[j] = rfft(moments.component(2 * j + 1, 2 * j));
    const auto A = darwin_potentials_spectral(h, jhat, mhat);
    std::vector<VecField> out;
    for (int j = 1; j <= h.N; ++j) {
        VecField a(2, h.nx);
        a.c[1] = irfft(A[j], h.nx);
        out.push_back(std::move(a));
    }
    return out;
}

void write_hierarchy_csv(const std::filesystem::path& path, const DarwinHierarchy& h) {
    std::ofstream os(path);
    if (!os) throw Error("write_hierarchy_csv: cannot open " + path.string());
    os.precision(17);
    os << "mode,level,j,kind,value\n";
    for (int n = 1; n < h.modes(); ++n) {
        for (int j = 1; j <= h.N; ++j) os << n << ",," << j << ",S_j," << h.sym_Sk[n][j] << '\n';
        for (int k = 1; k <= h.N; ++k) {
            os << n << ',' << k << ",,Delta_eps_k," << h.delta_eps_k[k][n] << '\n';
            for (int j = 1; j <= k; ++j) os << n << ',' << k << ',' << j << ",S_kj," << h.op_Skj[k][j][n] << '\n';
        }
    }
}

}  // namespace kinlim
