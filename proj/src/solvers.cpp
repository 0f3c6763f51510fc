#include "kinlim/solvers.hpp"

#include <cmath>
#include <cstdio>
#include <optional>

#include "kinlim/fft.hpp"

namespace kinlim {

const char* to_string(Model m) {
    switch (m) {
        case Model::vm: return "VM";
        case Model::vp: return "VP";
        case Model::vd: return "VD";
    }
    return "?";
}

int RunConfig::steps() const { return static_cast<int>(std::llround(T_final / dt)); }

void RunConfig::validate() const {
    grid.validate();
    if (!(dt > 0.0) || !(T_final > 0.0)) throw Error("run config: dt and T_final must be positive");
    if (steps() < 1) throw Error("run config: T_final shorter than one step");
    if (std::abs(steps() * dt - T_final) > 1e-9 * T_final) throw Error("run config: T_final must be a multiple of dt");
    if (delta < 0.0) throw Error("run config: delta must be nonnegative");
    if (model != Model::vp && !(eps > 0.0)) throw Error("run config: VM and VD require eps > 0");
    if (model == Model::vd) {
        if (darwin_order < 1) throw Error("run config: Darwin order must be >= 1");
        if (grid.dim_v != 2) throw Error("run config: VD requires the 1D2V geometry");
    }
    if (prepared_order != 0 && prepared_order != 4 && prepared_order != 6 && prepared_order != 8)
        throw Error("run config: prepared order must be 0, 4, 6 or 8");
    if (prepared_order != 0 && model != Model::vm)
        throw Error("run config: prepared data (p > 0) is only defined for VM; VP and VD carry no free field data");
    if (model == Model::vd && !perturbation.fields.empty())
        throw Error("run config: VD fields follow from f; explicit field modes are not allowed");
    if (prepared_order != 0 && !perturbation.fields.empty())
        throw Error("run config: explicit field modes conflict with prepared data");
    if (output_every < 1) throw Error("run config: output cadence must be >= 1");
    if (substeps < 1) throw Error("run config: substeps must be >= 1");
    for (const auto& m : perturbation.f) {
        if (m.k < 1 || m.k >= grid.nx / 2) throw Error("run config: perturbation mode out of range");
        if ((m.shape == ModeShape::current2 || m.shape == ModeShape::stress) && grid.dim_v != 2)
            throw Error("run config: v_2 shapes need 1D2V");
    }
    for (const auto& m : perturbation.fields) {
        if (m.k < 1 || m.k >= grid.nx / 2) throw Error("run config: field mode out of range");
        if (grid.dim_v != 2) throw Error("run config: transverse field modes need 1D2V");
        if (model == Model::vp && (m.e2 != 0.0 || m.b3 != 0.0))
            throw Error("run config: VP carries no transverse field");
    }
}

namespace {

// d_b vhat_a = delta_ab / gamma - eps^2 v_a v_b / gamma^3
void vhat_jacobian(const double* v, int dim, double eps, double* vh, double* J) {
    double v2 = 0.0;
    for (int d = 0; d < dim; ++d) v2 += v[d] * v[d];
    const double gam = std::sqrt(1.0 + eps * eps * v2);
    for (int a = 0; a < dim; ++a) {
        vh[a] = v[a] / gam;
        for (int b = 0; b < dim; ++b) J[a * dim + b] = (a == b ? 1.0 / gam : 0.0) - eps * eps * v[a] * v[b] / (gam * gam * gam);
    }
}

std::vector<double> moment_weights(const PhaseGrid& g, double eps, int p, int q) {
    const auto vg = g.velocity();
    std::vector<double> w(vg.size());
    double v[2], vh[2];
    for (int iv = 0; iv < vg.size(); ++iv) {
        vg.coords(iv, v);
        rel_velocity({v, static_cast<std::size_t>(g.dim_v)}, eps, {vh, static_cast<std::size_t>(g.dim_v)});
        w[iv] = std::pow(vh[0], p) * (g.dim_v == 2 ? std::pow(vh[1], q) : 1.0) * vg.cell_volume();
    }
    return w;
}

Field apply_weights(const DistField& f, const std::vector<double>& w) {
    const int nvt = static_cast<int>(w.size());
    Field out(f.grid.nx, 0.0);
    for (int ix = 0; ix < f.grid.nx; ++ix) {
        const double* s = f.slice(ix);
        double acc = 0.0;
        for (int iv = 0; iv < nvt; ++iv) acc += s[iv] * w[iv];
        out[ix] = acc;
    }
    return out;
}

struct RateIntegrals {
    Field flux, d1, d2, cross;
};

// Time derivative of int psi f dv (or of g) split into field-independent
// velocity integrals and a pointwise combination with the fields.
class MomentRate {
public:
    MomentRate(const PhaseGrid& g, const Equilibrium& eq, double eps, int p, int q)
        : grid_(g), eps_(eps) {
        if (g.dim_v == 1 && q != 0) throw Error("moment rate: q must be 0 in 1D1V");
        const auto vg = g.velocity();
        const int nvt = vg.size(), dim = g.dim_v;
        const double w = vg.cell_volume();
        flux_.resize(nvt);
        d1_.resize(nvt);
        d2_.assign(nvt, 0.0);
        cross_.assign(nvt, 0.0);
        double v[2], vh[2], J[4];
        for (int iv = 0; iv < nvt; ++iv) {
            vg.coords(iv, v);
            vhat_jacobian(v, dim, eps, vh, J);
            const double a = vh[0], b = dim == 2 ? vh[1] : 1.0;
            const double psi = std::pow(a, p) * (dim == 2 ? std::pow(b, q) : 1.0);
            // d psi / d vhat_1 and d psi / d vhat_2
            const double pa = p > 0 ? p * std::pow(a, p - 1) * (dim == 2 ? std::pow(b, q) : 1.0) : 0.0;
            const double pb = (dim == 2 && q > 0) ? q * std::pow(a, p) * std::pow(b, q - 1) : 0.0;
            double grad[2] = {0.0, 0.0};
            for (int c = 0; c < dim; ++c) grad[c] = pa * J[0 * dim + c] + (dim == 2 ? pb * J[1 * dim + c] : 0.0);
            flux_[iv] = psi * a * w;
            d1_[iv] = grad[0] * w;
            if (dim == 2) {
                d2_[iv] = grad[1] * w;
                cross_[iv] = (grad[0] * vh[1] - grad[1] * vh[0]) * w;
            }
            const double mu = eq(v);
            c1_ += d1_[iv] * mu;
            c2_ += d2_[iv] * mu;
            cx_ += cross_[iv] * mu;
        }
    }

    RateIntegrals integrals(const DistField& f) const {
        RateIntegrals r;
        r.flux = apply_weights(f, flux_);
        r.d1 = apply_weights(f, d1_);
        if (grid_.dim_v == 2) {
            r.d2 = apply_weights(f, d2_);
            r.cross = apply_weights(f, cross_);
        } else {
            r.d2.assign(grid_.nx, 0.0);
            r.cross.assign(grid_.nx, 0.0);
        }
        return r;
    }

    // g_form: -d_x flux - dphi c1 + eps B cx + delta (E.d + eps B cross)
    // f form: -d_x flux + E.c + eps B cx + delta (E.d + eps B cross)
    Field combine(const RateIntegrals& r, double delta, const Field& dphi, const VecField& E, const Field& B,
                  bool g_form) const {
        Field out = spectral_derivative(r.flux, grid_.L, 1);
        const bool two = grid_.dim_v == 2;
        for (int i = 0; i < grid_.nx; ++i) {
            const double b = two ? B[i] : 0.0;
            const double e2 = two ? E.c[1][i] : 0.0;
            double lin = eps_ * b * cx_;
            lin += g_form ? -dphi[i] * c1_ : E.c[0][i] * c1_ + e2 * c2_;
            const double non = E.c[0][i] * r.d1[i] + e2 * r.d2[i] + eps_ * b * r.cross[i];
            out[i] = -out[i] + lin + delta * non;
        }
        return out;
    }

    // int d_2 psi mu dv
    double c2() const { return c2_; }

private:
    PhaseGrid grid_;
    double eps_;
    std::vector<double> flux_, d1_, d2_, cross_;
    double c1_ = 0.0, c2_ = 0.0, cx_ = 0.0;
};

// Transverse potential of the Darwin hierarchy as a function of f. The
// hierarchy is written for g, whose moments depend on A itself; per mode the
// relation is affine and solved exactly.
class DarwinSolver {
public:
    DarwinSolver(const PhaseGrid& g, const Equilibrium& eq, double eps, int N)
        : h_(build_hierarchy(eq, eps, N, g)), grid_(g), eps_(eps) {
        for (int j = 0; j < N; ++j) {
            weights_.push_back(moment_weights(g, eps, 2 * j, 1));
            rates_.emplace_back(g, eq, eps, 2 * j, 1);
        }
        const int nm = g.nx / 2 + 1;
        std::vector<cplx> unit_j(nm, eps * h_.lambda);
        std::vector<std::vector<cplx>> unit_m(N);
        for (int j = 1; j < N; ++j) unit_m[j].assign(nm, eps * rates_[j].c2());
        const auto b = sum_levels(darwin_potentials_spectral(h_, unit_j, unit_m));
        inv_.assign(nm, 0.0);
        for (int n = 1; n < nm; ++n) inv_[n] = 1.0 / (1.0 - b[n]);
    }

    const DarwinHierarchy& hierarchy() const { return h_; }

    // Sets the fluctuating A_2 and d_t A_2 of `em` (which must carry phi and
    // the mean modes). d_t A enters its own source through delta E_2; a few
    // fixed-point sweeps converge at rate O(delta eps).
    void solve(const DistField& f, EMState& em, double delta, bool with_dt, int iters = 3) const {
        const int N = h_.N, nm = grid_.nx / 2 + 1;
        const auto jhat = rfft(apply_weights(f, weights_[0]));
        std::vector<std::vector<cplx>> mhat(N);
        for (int j = 1; j < N; ++j) mhat[j] = rfft(apply_weights(f, weights_[j]));
        const auto a = sum_levels(darwin_potentials_spectral(h_, jhat, mhat));
        for (int n = 1; n < nm; ++n) em.A[1][n] = a[n] * inv_[n];
        for (int n = 1; n < nm; ++n) em.dA[1][n] = 0.0;
        if (!with_dt) return;
        std::vector<RateIntegrals> I;
        for (int j = 0; j < N; ++j) I.push_back(rates_[j].integrals(f));
        const Field dphi = spectral_derivative(em.phi, grid_.L, 1);
        for (int it = 0; it < iters; ++it) {
            const VecField E = em.E();
            const Field B = em.B();
            const auto dj = rfft(rates_[0].combine(I[0], delta, dphi, E, B, true));
            std::vector<std::vector<cplx>> dm(N);
            for (int j = 1; j < N; ++j) dm[j] = rfft(rates_[j].combine(I[j], delta, dphi, E, B, true));
            const auto da = sum_levels(darwin_potentials_spectral(h_, dj, dm));
            for (int n = 1; n < nm; ++n) em.dA[1][n] = da[n];
            if (delta == 0.0) break;
        }
    }

private:
    static std::vector<cplx> sum_levels(const std::vector<std::vector<cplx>>& A) {
        std::vector<cplx> s(A[1].size(), 0.0);
        for (std::size_t k = 1; k < A.size(); ++k)
            for (std::size_t n = 0; n < s.size(); ++n) s[n] += A[k][n];
        return s;
    }

    DarwinHierarchy h_;
    PhaseGrid grid_;
    double eps_;
    std::vector<std::vector<double>> weights_;
    std::vector<MomentRate> rates_;
    std::vector<cplx> inv_;
};

std::vector<double> em_lambdas(const MomentConstants& mc, int dim) {
    std::vector<double> l;
    for (int d = 0; d < dim; ++d) l.push_back(mc.lam(d, d));
    return l;
}

Spectrum zero_spectrum(int dim, int nx) { return Spectrum(dim, std::vector<cplx>(nx / 2 + 1, 0.0)); }

bool all_finite(const std::vector<double>& v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

// State and operators shared by the three models.
struct Core {
    const RunConfig& cfg;
    PhaseGrid g;
    Equilibrium eq;
    double eps_kin;  // eps in the kinematics; 0 for VP
    MomentConstants mc;
    Transport tr;
    SplitStepPlan plan;
    std::vector<double> w_rho, w_j1, w_j2, w_energy;
    DistField f;
    EMState em;

    Core(const RunConfig& c, double eps_kin_)
        : cfg(c), g(c.grid), eq(c.equilibrium, c.grid.dim_v, c.grid.nv, c.grid.vmax), eps_kin(eps_kin_),
          mc(moment_constants(eq, eps_kin_)), tr(g, &eq) {
        plan.dt = c.dt;
        plan.v_interp = c.v_interp;
        plan.substeps = c.substeps;
        plan.mass_fix = c.mass_fix;
        w_rho = moment_weights(g, eps_kin, 0, 0);
        w_j1 = moment_weights(g, eps_kin, 1, 0);
        if (g.dim_v == 2) w_j2 = moment_weights(g, eps_kin, 0, 1);
        const auto vg = g.velocity();
        w_energy.resize(vg.size());
        double v[2];
        for (int iv = 0; iv < vg.size(); ++iv) {
            vg.coords(iv, v);
            double v2 = 0.0;
            for (int d = 0; d < g.dim_v; ++d) v2 += v[d] * v[d];
            // (gamma - 1)/eps^2 written without cancellation
            const double gam = std::sqrt(1.0 + eps_kin * eps_kin * v2);
            w_energy[iv] = v2 / (gam + 1.0) * vg.cell_volume();
        }
        f = initial_perturbation(c, eq);
        em = EMState(g.dim_v, g.nx, g.L, eps_kin, em_lambdas(mc, g.dim_v));
        em.phi = poisson_solve(apply_weights(f, w_rho), g.L);
    }

    // Cheng-Knorr step: x(dt/2), Poisson, v(dt), x(dt/2). `extra` holds the
    // non-electrostatic part of the step-averaged E.
    AdvectReport fstep(DistField& h, const VecField& extra, const Field& B) {
        tr.advect_x(h, eps_kin, 0.5 * cfg.dt);
        const Field phi = poisson_solve(apply_weights(h, w_rho), g.L);
        const Field dphi = spectral_derivative(phi, g.L, 1);
        VecField E = extra;
        for (int i = 0; i < g.nx; ++i) E.c[0][i] -= dphi[i];
        auto rep = tr.advect_v(h, E, B, eps_kin, cfg.delta, cfg.dt, plan);
        tr.advect_x(h, eps_kin, 0.5 * cfg.dt);
        return rep;
    }
};

// Step-averaged non-electrostatic E and B from the potentials at both ends
// and the step average of A.
void averaged_fields(const EMState& a, const EMState& b, const Spectrum& Abar, double dt, VecField& extra,
                     Field& B) {
    const int nx = a.nx, dim = a.dim();
    extra = VecField(dim, nx);
    const double e1 = -a.eps * (b.A[0][0] - a.A[0][0]).real() / dt;
    for (int i = 0; i < nx; ++i) extra.c[0][i] = e1;
    B.assign(nx, 0.0);
    if (dim < 2) return;
    std::vector<cplx> d(nx / 2 + 1), h(nx / 2 + 1);
    for (int n = 0; n <= nx / 2; ++n) {
        d[n] = -a.eps * (b.A[1][n] - a.A[1][n]) / dt;
        h[n] = Abar[1][n] * cplx(0.0, a.kappa(n));
    }
    h[nx / 2] = 0.0;
    extra.c[1] = irfft(d, nx);
    B = irfft(h, nx);
}

struct Recorder {
    Core& c;
    RunResult& r;
    int k0 = 1;
    std::vector<double> cont_all;
    Field rho_prev, rho_cur, dj_cur;
    std::vector<int> out_steps;

    Recorder(Core& core, RunResult& res) : c(core), r(res), cont_all(core.cfg.steps() + 1, NAN) {
        if (!c.cfg.perturbation.f.empty()) k0 = c.cfg.perturbation.f.front().k;
    }

    // Called once per state n; fills the centred residual at n - 1.
    void step_moments(int n) {
        const Field rho = apply_weights(c.f, c.w_rho);
        if (n >= 2) {
            Field res(c.g.nx);
            for (int i = 0; i < c.g.nx; ++i) res[i] = (rho[i] - rho_prev[i]) / (2 * c.cfg.dt) + dj_cur[i];
            cont_all[n - 1] = l2_norm(res, c.g.L);
        }
        rho_prev = rho_cur;
        rho_cur = rho;
        dj_cur = spectral_derivative(apply_weights(c.f, c.w_j1), c.g.L, 1);
    }

    void record(int n, double t, const AdvectReport& rep) {
        const auto& g = c.g;
        const double eps = c.eps_kin, delta = c.cfg.delta;
        const Field rho = apply_weights(c.f, c.w_rho);
        const VecField E = c.em.E();
        const Field B = c.em.B();
        auto& d = r.diag;
        d.t.push_back(t);
        d.charge.push_back(spatial_mean(rho) * g.L);
        double kin = 0.0;
        for (int ix = 0; ix < g.nx; ++ix) {
            const double* s = c.f.slice(ix);
            for (std::size_t iv = 0; iv < c.w_energy.size(); ++iv) kin += s[iv] * c.w_energy[iv];
        }
        kin *= g.dx();
        double fe = 0.0, hn = 0.0, en = 0.0, bn = 0.0;
        for (int k = 0; k < E.dim(); ++k) {
            const double a = l2_norm(E.c[k], g.L);
            en += a * a;
            hn += std::pow(hn_norm(E.c[k], g.L, 2), 2);
        }
        bn = l2_norm(B, g.L);
        hn += std::pow(hn_norm(B, g.L, 2), 2);
        fe = 0.5 * (en + bn * bn);
        d.field_energy.push_back(fe);
        d.energy.push_back(kin + delta * fe);
        d.e_norm.push_back(std::sqrt(en));
        d.b_norm.push_back(bn);
        d.field_hn.push_back(std::sqrt(hn));
        d.e1_mode.push_back(rfft(E.c[0])[k0]);
        d.gauge.push_back(c.em.gauge_residual());
        const Field e1x = spectral_derivative(E.c[0], g.L, 1);
        const double rbar = spatial_mean(rho);
        double gauss = 0.0;
        for (int i = 0; i < g.nx; ++i) gauss = std::max(gauss, std::abs(e1x[i] - (rho[i] - rbar)));
        d.gauss.push_back(gauss);
        d.boundary.push_back(rep.boundary_max);

        VecField A(g.dim_v, g.nx);
        for (int k = 0; k < g.dim_v; ++k) A.c[k] = irfft(c.em.A[k], g.nx);
        const DistField gf = eps > 0.0 ? shift_to_g(c.f, A, eps, c.eq) : c.f;
        const auto ms = deposit_moments(gf, eps, 3);
        d.bootstrap.push_back(bootstrap_integrand(ms, g.L, 2));
        double mj = 0.0;
        for (int k = 0; k < g.dim_v; ++k) mj += ms.means[1][k] * ms.means[1][k];
        d.mean_jg.push_back(std::sqrt(mj));
        out_steps.push_back(n);
        if (c.cfg.record_fields) {
            r.hist_t.push_back(t);
            r.E_hist.push_back(E);
            r.B_hist.push_back(B);
        }
    }

    void finish() {
        auto& d = r.diag;
        d.continuity.clear();
        for (int n : out_steps) d.continuity.push_back(cont_all[n]);
        d.bootstrap = bootstrap_norm(d.bootstrap, c.cfg.dt * c.cfg.output_every);
    }
};

// VM: the transverse and mean potentials follow the exact oscillator with a
// cubic Hermite source built from s = eps P j(g) and its time derivative.
class VmStepper {
public:
    explicit VmStepper(Core& c) : c_(c), r1_(c.g, c.eq, c.eps_kin, 1, 0) {
        if (c.g.dim_v == 2) r2_.emplace(c.g, c.eq, c.eps_kin, 0, 1);
        sources(c.f, c.em, s_, ds_);
    }

    AdvectReport step() {
        const double dt = c_.cfg.dt;
        const int dim = c_.g.dim_v, nx = c_.g.nx;
        Spectrum s1 = s_, ds1 = ds_;
        for (int d = 0; d < dim; ++d)
            for (int n = 0; n <= nx / 2; ++n) {
                const cplx s2 = have_prev_ ? (ds_[d][n] - ds_prev_[d][n]) / dt : 0.0;
                s1[d][n] = s_[d][n] + dt * ds_[d][n] + 0.5 * dt * dt * s2;
                ds1[d][n] = ds_[d][n] + dt * s2;
            }
        AdvectReport rep;
        EMState em1;
        DistField f1;
        VecField extra;
        Field B;
        for (int pass = 0; pass < 2; ++pass) {
            em1 = c_.em;
            const Spectrum Abar = wave_step_hermite(em1, s_, ds_, s1, ds1, dt);
            averaged_fields(c_.em, em1, Abar, dt, extra, B);
            f1 = c_.f;
            rep = c_.fstep(f1, extra, B);
            correct(f1, em1, s1, ds1, 2);
        }
        c_.f = std::move(f1);
        c_.em = std::move(em1);
        ds_prev_ = ds_;
        have_prev_ = true;
        s_ = std::move(s1);
        ds_ = std::move(ds1);
        return rep;
    }

private:
    // Sources at the end of the step from f1, iterated with the oscillator.
    void correct(const DistField& f1, EMState& em1, Spectrum& s1, Spectrum& ds1, int iters) {
        const Field phi = poisson_solve(apply_weights(f1, c_.w_rho), c_.g.L);
        for (int it = 0; it < iters; ++it) {
            em1.phi = phi;
            sources(f1, em1, s1, ds1);
            em1 = c_.em;
            wave_step_hermite(em1, s_, ds_, s1, ds1, c_.cfg.dt);
        }
        em1.phi = phi;
    }

    void sources(const DistField& f, const EMState& em, Spectrum& s, Spectrum& ds) {
        const int dim = c_.g.dim_v, nx = c_.g.nx;
        const double eps = c_.eps_kin, delta = c_.cfg.delta;
        s = zero_spectrum(dim, nx);
        ds = zero_spectrum(dim, nx);
        const VecField E = em.E();
        const Field B = em.B();
        const Field dphi = spectral_derivative(em.phi, c_.g.L, 1);
        const Field j1 = apply_weights(f, c_.w_j1);
        s[0][0] = eps * (spatial_mean(j1) + eps * em.lambda[0] * em.A[0][0]);
        ds[0][0] = eps * spatial_mean(r1_.combine(r1_.integrals(f), delta, dphi, E, B, true));
        if (dim == 2) {
            const auto jh = rfft(apply_weights(f, c_.w_j2));
            const auto dj = rfft(r2_->combine(r2_->integrals(f), delta, dphi, E, B, true));
            for (int n = 0; n <= nx / 2; ++n) {
                s[1][n] = eps * (jh[n] + eps * em.lambda[1] * em.A[1][n]);
                ds[1][n] = eps * dj[n];
            }
        }
    }

    Core& c_;
    MomentRate r1_;
    std::optional<MomentRate> r2_;
    Spectrum s_, ds_, ds_prev_;
    bool have_prev_ = false;
};

// VD(N): fluctuating A_2 from the elliptic hierarchy at both ends of the
// step; the means keep the oscillator of VM.
class VdStepper {
public:
    explicit VdStepper(Core& c)
        : c_(c), darwin_(c.g, c.eq, c.eps_kin, c.cfg.darwin_order), r1_(c.g, c.eq, c.eps_kin, 1, 0),
          r2_(c.g, c.eq, c.eps_kin, 0, 1) {
        darwin_.solve(c.f, c.em, c.cfg.delta, true);
        mean_sources(c.f, c.em, s_, ds_);
    }

    AdvectReport step() {
        const double dt = c_.cfg.dt;
        const int nx = c_.g.nx;
        Spectrum s1 = s_, ds1 = ds_;
        for (int d = 0; d < 2; ++d) {
            const cplx s2 = have_prev_ ? (ds_[d][0] - ds_prev_[d][0]) / dt : 0.0;
            s1[d][0] = s_[d][0] + dt * ds_[d][0] + 0.5 * dt * dt * s2;
            ds1[d][0] = ds_[d][0] + dt * s2;
        }
        std::vector<cplx> A1(nx / 2 + 1), dA1(nx / 2 + 1);
        for (int n = 1; n <= nx / 2; ++n) {
            const cplx a = c_.em.A[1][n], da = c_.em.dA[1][n];
            const cplx dd = have_prev_ ? da - dA_prev_[n] : 0.0;
            A1[n] = a + dt * da + 0.5 * dt * dd;
            dA1[n] = da + dd;
        }
        AdvectReport rep;
        EMState em1;
        DistField f1;
        VecField extra;
        Field B;
        for (int pass = 0; pass < 2; ++pass) {
            em1 = c_.em;
            Spectrum Abar = wave_step_hermite(em1, s_, ds_, s1, ds1, dt);
            for (int n = 1; n <= nx / 2; ++n) {
                Abar[1][n] = 0.5 * (c_.em.A[1][n] + A1[n]) + dt * (c_.em.dA[1][n] - dA1[n]) / 12.0;
                em1.A[1][n] = A1[n];
                em1.dA[1][n] = dA1[n];
            }
            averaged_fields(c_.em, em1, Abar, dt, extra, B);
            f1 = c_.f;
            rep = c_.fstep(f1, extra, B);
            em1.phi = poisson_solve(apply_weights(f1, c_.w_rho), c_.g.L);
            for (int it = 0; it < 2; ++it) {
                darwin_.solve(f1, em1, c_.cfg.delta, true);
                mean_sources(f1, em1, s1, ds1);
                const auto keepA = em1.A[1], keepdA = em1.dA[1];
                const Field phi = em1.phi;
                em1 = c_.em;
                wave_step_hermite(em1, s_, ds_, s1, ds1, dt);
                em1.phi = phi;
                for (int n = 1; n <= nx / 2; ++n) {
                    em1.A[1][n] = keepA[n];
                    em1.dA[1][n] = keepdA[n];
                }
            }
            for (int n = 1; n <= nx / 2; ++n) {
                A1[n] = em1.A[1][n];
                dA1[n] = em1.dA[1][n];
            }
        }
        dA_prev_ = c_.em.dA[1];
        ds_prev_ = ds_;
        have_prev_ = true;
        c_.f = std::move(f1);
        c_.em = std::move(em1);
        s_ = std::move(s1);
        ds_ = std::move(ds1);
        return rep;
    }

    const DarwinSolver& darwin() const { return darwin_; }

private:
    void mean_sources(const DistField& f, const EMState& em, Spectrum& s, Spectrum& ds) {
        const int nx = c_.g.nx;
        const double eps = c_.eps_kin, delta = c_.cfg.delta;
        s = zero_spectrum(2, nx);
        ds = zero_spectrum(2, nx);
        const VecField E = em.E();
        const Field B = em.B();
        const Field dphi = spectral_derivative(em.phi, c_.g.L, 1);
        const Field j1 = apply_weights(f, c_.w_j1), j2 = apply_weights(f, c_.w_j2);
        s[0][0] = eps * (spatial_mean(j1) + eps * em.lambda[0] * em.A[0][0]);
        s[1][0] = eps * (spatial_mean(j2) + eps * em.lambda[1] * em.A[1][0]);
        ds[0][0] = eps * spatial_mean(r1_.combine(r1_.integrals(f), delta, dphi, E, B, true));
        ds[1][0] = eps * spatial_mean(r2_.combine(r2_.integrals(f), delta, dphi, E, B, true));
    }

    Core& c_;
    DarwinSolver darwin_;
    MomentRate r1_, r2_;
    Spectrum s_, ds_, ds_prev_;
    std::vector<cplx> dA_prev_;
    bool have_prev_ = false;
};

class VpStepper {
public:
    explicit VpStepper(Core& c) : c_(c) {}
    AdvectReport step() {
        VecField extra(c_.g.dim_v, c_.g.nx);
        const Field B(c_.g.nx, 0.0);
        auto rep = c_.fstep(c_.f, extra, B);
        c_.em.phi = poisson_solve(apply_weights(c_.f, c_.w_rho), c_.g.L);
        return rep;
    }

private:
    Core& c_;
};

void set_field_modes(const RunConfig& cfg, EMState& em) {
    for (const auto& m : cfg.perturbation.fields) {
        // B_3 = d_x A_2 and E_2 = -eps d_t A_2 for cos(kappa x) profiles.
        const double k = em.kappa(m.k);
        em.A[1][m.k] += cplx(0.0, -0.5 * m.b3 / k);
        em.dA[1][m.k] += -0.5 * m.e2 / em.eps;
    }
}

template <class Stepper>
RunResult drive(Core& c, Stepper& st, const StepObserver& observe) {
    const auto& cfg = c.cfg;
    RunResult r;
    Recorder rec(c, r);
    AdvectReport rep;
    const int steps = cfg.steps();
    rec.step_moments(0);
    rec.record(0, 0.0, rep);
    if (observe) observe(0.0, c.f, c.em);
    DistField last_f = c.f;
    double last_t = 0.0;
    for (int n = 1; n <= steps; ++n) {
        const double t = n * cfg.dt;
        rep = st.step();
        if (rep.leak) r.leak = true;
        bool finite = all_finite(c.em.phi);
        if (finite) {
            double acc = 0.0;
            for (double v : c.f.values) acc += v;
            finite = std::isfinite(acc);
        }
        if (!finite) {
            r.aborted = true;
            r.message = "non-finite state at t = " + std::to_string(t) + "; last good state at t = " +
                        std::to_string(last_t);
            if (!cfg.out_dir.empty()) {
                std::filesystem::create_directories(cfg.out_dir);
                write_snapshot(cfg.out_dir / "last_good.bin", last_f, last_t, c.eps_kin, cfg.delta);
            }
            c.f = std::move(last_f);
            break;
        }
        rec.step_moments(n);
        if (n % cfg.output_every == 0 || n == steps) rec.record(n, t, rep);
        if (observe) observe(t, c.f, c.em);
        if (!cfg.out_dir.empty() && cfg.snapshot_every > 0 && n % cfg.snapshot_every == 0) {
            std::filesystem::create_directories(cfg.out_dir);
            char name[64];
            std::snprintf(name, sizeof name, "snap_%06d.bin", n);
            write_snapshot(cfg.out_dir / name, c.f, t, c.eps_kin, cfg.delta);
        }
        if (n < steps) {
            last_f = c.f;
            last_t = t;
        }
    }
    rec.finish();
    r.f = std::move(c.f);
    r.em = std::move(c.em);
    return r;
}

}  // namespace

DistField initial_perturbation(const RunConfig& cfg, const Equilibrium& eq) {
    const auto& g = cfg.grid;
    DistField f(g, FieldRole::perturbation);
    const auto vg = g.velocity();
    double v[2];
    for (const auto& m : cfg.perturbation.f) {
        const double k = g.kappa(m.k);
        for (int ix = 0; ix < g.nx; ++ix) {
            const double a = m.amplitude * std::cos(k * g.x(ix) + m.phase);
            double* s = f.slice(ix);
            for (int iv = 0; iv < vg.size(); ++iv) {
                vg.coords(iv, v);
                double h = eq.values()[iv];
                if (m.shape == ModeShape::current1) h *= v[0];
                if (m.shape == ModeShape::current2) h *= v[1];
                if (m.shape == ModeShape::stress) h *= v[0] * v[1];
                s[iv] += a * h;
            }
        }
    }
    return f;
}

Field dt_moment_g(const DistField& f, const Equilibrium& eq, double eps, double delta, const Field& dphi,
                  const VecField& E, const Field& B, int p, int q) {
    MomentRate r(f.grid, eq, eps, p, q);
    return r.combine(r.integrals(f), delta, dphi, E, B, true);
}

Field dt_moment_f(const DistField& f, const Equilibrium& eq, double eps, double delta, const VecField& E,
                  const Field& B, int p, int q) {
    MomentRate r(f.grid, eq, eps, p, q);
    return r.combine(r.integrals(f), delta, Field(f.grid.nx, 0.0), E, B, false);
}

RunResult vm_run(const RunConfig& cfg, const StepObserver& observe) {
    cfg.validate();
    if (cfg.model != Model::vm) throw Error("vm_run: model must be VM");
    Core c(cfg, cfg.eps);
    if (cfg.prepared_order > 0) {
        auto d = well_prepared_init(cfg, cfg.prepared_order);
        c.em = std::move(d.em);
    } else {
        set_field_modes(cfg, c.em);
    }
    VmStepper st(c);
    return drive(c, st, observe);
}

RunResult vp_run(const RunConfig& cfg, const StepObserver& observe) {
    cfg.validate();
    if (cfg.model != Model::vp) throw Error("vp_run: model must be VP");
    Core c(cfg, 0.0);
    VpStepper st(c);
    return drive(c, st, observe);
}

RunResult vd_run(const RunConfig& cfg, const StepObserver& observe) {
    cfg.validate();
    if (cfg.model != Model::vd) throw Error("vd_run: model must be VD");
    Core c(cfg, cfg.eps);
    VdStepper st(c);
    return drive(c, st, observe);
}

RunResult run_model(const RunConfig& cfg, const StepObserver& observe) {
    switch (cfg.model) {
        case Model::vm: return vm_run(cfg, observe);
        case Model::vp: return vp_run(cfg, observe);
        case Model::vd: return vd_run(cfg, observe);
    }
    throw Error("run_model: unknown model");
}

PreparedData well_prepared_init(const RunConfig& cfg, int p) {
    if (p != 4 && p != 6 && p != 8) throw Error("well_prepared_init: p must be 4, 6 or 8");
    if (!(cfg.eps > 0.0)) throw Error("well_prepared_init: eps must be positive");
    cfg.grid.validate();
    const auto& g = cfg.grid;
    Equilibrium eq(cfg.equilibrium, g.dim_v, g.nv, g.vmax);
    const auto mc = moment_constants(eq, cfg.eps);
    PreparedData d;
    d.f0 = initial_perturbation(cfg, eq);
    d.em = EMState(g.dim_v, g.nx, g.L, cfg.eps, em_lambdas(mc, g.dim_v));
    d.em.phi = poisson_solve(apply_weights(d.f0, moment_weights(g, cfg.eps, 0, 0)), g.L);
    if (g.dim_v == 2) {
        DarwinSolver ds(g, eq, cfg.eps, p == 8 ? 2 : 1);
        ds.solve(d.f0, d.em, cfg.delta, true);
    }
    d.E0 = d.em.E();
    d.B0 = d.em.B();
    return d;
}

PreparedResiduals prepared_residuals(const RunConfig& cfg, const PreparedData& d) {
    const auto& g = cfg.grid;
    const double eps = cfg.eps;
    Equilibrium eq(cfg.equilibrium, g.dim_v, g.nv, g.vmax);
    PreparedResiduals r;
    const Field rho = apply_weights(d.f0, moment_weights(g, eps, 0, 0));
    const Field dphi = spectral_derivative(poisson_solve(rho, g.L), g.L, 1);
    // E0 + grad phi0 per component; the mean of A_1 is the only longitudinal potential.
    double e4 = 0.0;
    std::vector<Field> egp(g.dim_v);
    for (int k = 0; k < g.dim_v; ++k) {
        egp[k] = d.E0.c[k];
        if (k == 0)
            for (int i = 0; i < g.nx; ++i) egp[k][i] += dphi[i];
        e4 += std::pow(hn_norm(egp[k], g.L, 2), 2);
    }
    r.e4 = std::sqrt(e4);
    double a4 = 0.0;
    for (int k = 0; k < g.dim_v; ++k) a4 += std::pow(hn_norm(irfft(d.em.A[k], g.nx), g.L, 3), 2);
    r.a4 = std::sqrt(a4);
    if (g.dim_v < 2) {
        r.a6 = r.a4;
        r.e8 = r.e4;
        return r;
    }
    // Transverse part only: P removes the fluctuating longitudinal component,
    // and (-Delta)^{-1} acts on non-constant modes.
    const auto jh = rfft(apply_weights(d.f0, moment_weights(g, eps, 0, 1)));
    const auto djh = rfft(dt_moment_f(d.f0, eq, eps, cfg.delta, d.E0, d.B0, 0, 1));
    const auto eh = rfft(egp[1]);
    std::vector<cplx> ra(g.nx / 2 + 1, 0.0), re(g.nx / 2 + 1, 0.0);
    for (int n = 0; n <= g.nx / 2; ++n) {
        const double k2 = g.kappa(n) * g.kappa(n);
        ra[n] = d.em.A[1][n] - (n > 0 ? eps * jh[n] / k2 : 0.0);
        re[n] = eh[n] + (n > 0 ? eps * eps * djh[n] / k2 : 0.0);
    }
    double a6 = std::pow(hn_norm(irfft(ra, g.nx), g.L, 3), 2);
    a6 += std::pow(hn_norm(irfft(d.em.A[0], g.nx), g.L, 3), 2);
    r.a6 = std::sqrt(a6);
    double e8 = std::pow(hn_norm(irfft(re, g.nx), g.L, 2), 2);
    e8 += std::pow(hn_norm(egp[0], g.L, 2), 2);
    r.e8 = std::sqrt(e8);
    return r;
}

}  // namespace kinlim
