#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "kinlim/fft.hpp"
#include "kinlim/linear_response.hpp"
#include "kinlim/penrose.hpp"
#include "kinlim/solvers.hpp"

using namespace kinlim;

namespace {

RunConfig small_vm(double eps, double delta, double dt, double T) {
    RunConfig c;
    c.model = Model::vm;
    c.eps = eps;
    c.delta = delta;
    c.dt = dt;
    c.T_final = T;
    c.grid = {16, 4 * pi, 2, 32, 7.0};
    c.perturbation.f = {{1, 0.1, 0.0, ModeShape::density}, {1, 0.1, 0.3, ModeShape::current2}};
    return c;
}

double max_abs(const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

double max_drift(const std::vector<double>& w) {
    double m = 0.0;
    for (double x : w) m = std::max(m, std::abs(x - w.front()));
    return m;
}

// L2(0,T; L2_x) distance between recorded (E, B) histories.
double history_distance(const RunResult& a, const RunResult& b, double L) {
    REQUIRE(a.E_hist.size() == b.E_hist.size());
    const std::size_t n = a.E_hist.size();
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double e = 0.0;
        for (int d = 0; d < a.E_hist[i].dim(); ++d) {
            Field df = a.E_hist[i].c[d];
            for (std::size_t k = 0; k < df.size(); ++k) df[k] -= b.E_hist[i].c[d][k];
            e += std::pow(l2_norm(df, L), 2);
        }
        Field db = a.B_hist[i];
        for (std::size_t k = 0; k < db.size(); ++k) db[k] -= b.B_hist[i][k];
        e += std::pow(l2_norm(db, L), 2);
        s += (i == 0 || i + 1 == n ? 0.5 : 1.0) * e;
    }
    return std::sqrt(s * (a.hist_t[1] - a.hist_t[0]));
}

double moment_of_g(const DistField& f, const EMState& em, const Equilibrium& eq, int p, int q) {
    VecField A(f.grid.dim_v, f.grid.nx);
    for (int k = 0; k < f.grid.dim_v; ++k) A.c[k] = irfft(em.A[k], f.grid.nx);
    const auto m = velocity_moment(shift_to_g(f, A, em.eps, eq), em.eps, p, q);
    return rfft(m)[1].real();
}

}  // namespace

TEST_CASE("equilibrium is a fixed point for every model") {
    for (Model m : {Model::vm, Model::vp, Model::vd}) {
        RunConfig c;
        c.model = m;
        c.eps = 0.2;
        c.delta = 0.3;
        c.dt = 0.1;
        c.T_final = 100.0;
        c.output_every = 100;
        c.grid = {8, 2 * pi, 2, 16, 7.0};
        const auto r = run_model(c);
        CHECK(r.diag.t.back() == doctest::Approx(100.0));
        CHECK(max_abs(r.f.values) < 1e-11);
        CHECK(r.diag.e_norm.back() < 1e-11);
        CHECK(r.diag.b_norm.back() < 1e-11);
    }
}

TEST_CASE("config validation") {
    auto c = small_vm(0.1, 1e-3, 0.1, 1.0);
    c.eps = 0.0;
    CHECK_THROWS_AS(vm_run(c), Error);
    c = small_vm(0.1, 1e-3, 0.1, 1.0);
    c.model = Model::vd;
    c.grid.dim_v = 1;
    c.perturbation.f.pop_back();
    CHECK_THROWS_AS(vd_run(c), Error);
    c = small_vm(0.1, 1e-3, 0.1, 1.0);
    c.prepared_order = 5;
    CHECK_THROWS_AS(vm_run(c), Error);
    c.prepared_order = 6;
    c.model = Model::vp;
    CHECK_THROWS_AS(vp_run(c), Error);
    c.model = Model::vd;
    CHECK_THROWS_AS(vd_run(c), Error);
    c = small_vm(0.1, 1e-3, 0.1, 1.0);
    CHECK_THROWS_AS(well_prepared_init(c, 10), Error);
    c.T_final = 1.05;
    c.dt = 0.1;
    CHECK_THROWS_AS(vm_run(c), Error);
}

TEST_CASE("VM conservation: charge, Gauss, gauge, energy order and continuity order") {
    const double dts[2] = {0.2, 0.1};
    double drift[2], cont[2];
    for (int i = 0; i < 2; ++i) {
        auto c = small_vm(0.3, 0.5, dts[i], 4.0);
        const auto r = vm_run(c);
        for (double q : r.diag.charge) CHECK(std::abs(q - r.diag.charge.front()) < 1e-12);
        CHECK(max_abs(r.diag.gauss) < 1e-10);
        CHECK(max_abs(r.diag.gauge) < 1e-12);
        drift[i] = max_drift(r.diag.energy);
        // residual at the fixed time t = 1
        cont[i] = r.diag.continuity[static_cast<std::size_t>(std::llround(1.0 / dts[i]))];
        CHECK(std::isnan(r.diag.continuity.front()));
        CHECK(!r.aborted);
    }
    CHECK(drift[0] / drift[1] == doctest::Approx(4.0).epsilon(0.125));
    CHECK(std::log2(cont[0] / cont[1]) >= 1.95);
}

TEST_CASE("time derivative of g-moments matches the trajectory") {
    // Centred differences of int psi g dv along a VM run against the
    // moment-evolution identity evaluated at the middle state.
    auto c = small_vm(0.3, 0.5, 0.01, 0.02);
    Equilibrium eq(c.equilibrium, 2, c.grid.nv, c.grid.vmax);
    std::vector<DistField> fs;
    std::vector<EMState> ems;
    vm_run(c, [&](double, const DistField& f, const EMState& em) {
        fs.push_back(f);
        ems.push_back(em);
    });
    REQUIRE(fs.size() == 3);
    for (auto [p, q] : {std::pair{0, 1}, std::pair{1, 0}, std::pair{2, 1}}) {
        const double fd = (moment_of_g(fs[2], ems[2], eq, p, q) - moment_of_g(fs[0], ems[0], eq, p, q)) / 0.02;
        const Field dphi = spectral_derivative(ems[1].phi, c.grid.L, 1);
        const auto rate = dt_moment_g(fs[1], eq, c.eps, c.delta, dphi, ems[1].E(), ems[1].B(), p, q);
        const double an = rfft(rate)[1].real();
        CHECK(std::abs(fd - an) < 1e-3 * (std::abs(an) + 1e-3));
    }
}

TEST_CASE("VP Landau damping rate against the dispersion root") {
    RunConfig c;
    c.model = Model::vp;
    c.delta = 1e-4;
    c.dt = 0.1;
    c.T_final = 25.0;
    c.grid = {32, 4 * pi, 1, 128, 8.0};
    c.perturbation.f = {{1, 1.0, 0.0, ModeShape::density}};
    const auto r = vp_run(c);
    std::vector<double> u;
    for (auto z : r.diag.e1_mode) u.push_back(std::abs(z));
    Equilibrium eq({}, 1, 64, 8.0);
    PenroseSymbol ps{&eq, 0.0};
    ps.box_length = 4 * pi;
    const int k1[1] = {1};
    const auto roots = dispersion_roots(ps, k1);
    REQUIRE(!roots.empty());
    const double target = roots.front().growth();
    CHECK(envelope_rate(r.diag.t, u, 2.0, 24.0) == doctest::Approx(target).epsilon(0.05));
}

TEST_CASE("well-prepared data") {
    auto c = small_vm(0.1, 1e-3, 0.1, 1.0);
    c.grid = {16, 2 * pi, 2, 32, 7.0};
    SUBCASE("zero perturbation gives zero fields") {
        auto z = c;
        z.perturbation.f.clear();
        for (int p : {4, 6, 8}) {
            const auto d = well_prepared_init(z, p);
            for (const auto& comp : d.E0.c) CHECK(max_abs(comp) == 0.0);
            CHECK(max_abs(d.B0) == 0.0);
        }
    }
    SUBCASE("p = 6 matches the first Darwin potential exactly") {
        const auto d = well_prepared_init(c, 6);
        const auto r = prepared_residuals(c, d);
        CHECK(r.a6 < 1e-12);
        CHECK(r.e4 > 0.0);
        // The same A solves A = A_1[g(A)] with g = f - eps A.grad mu.
        Equilibrium eq(c.equilibrium, 2, c.grid.nv, c.grid.vmax);
        VecField A(2, c.grid.nx);
        A.c[1] = irfft(d.em.A[1], c.grid.nx);
        const auto h = build_hierarchy(eq, c.eps, 1, c.grid);
        const auto pot = darwin_potentials(h, deposit_moments(shift_to_g(d.f0, A, c.eps, eq), c.eps, 1));
        for (int i = 0; i < c.grid.nx; ++i) CHECK(std::abs(pot[0].c[1][i] - A.c[1][i]) < 1e-14);
    }
    SUBCASE("residual slopes") {
        // v_1 v_2 mu makes d_t j|0 nonzero, so every condition is active.
        c.perturbation.f.push_back({1, 0.1, 0.7, ModeShape::stress});
        std::vector<double> r4, r6, r8;
        const std::vector<double> epss = {0.05, 0.025, 0.0125};
        for (double eps : epss) {
            c.eps = eps;
            r4.push_back(prepared_residuals(c, well_prepared_init(c, 4)).r4());
            r6.push_back(prepared_residuals(c, well_prepared_init(c, 6)).r6());
            r8.push_back(prepared_residuals(c, well_prepared_init(c, 8)).r8());
        }
        for (int i = 0; i + 1 < 3; ++i) {
            CHECK(std::log2(r4[i] / r4[i + 1]) >= 1.0);
            CHECK(std::log2(r8[i] / r8[i + 1]) >= 3.0);
            // eps^2 (1 - c eps^2): the relativistic 1/gamma^2 in d_t j lowers
            // the finite-eps slope; it tends to 2 from below.
            const double s6 = std::log2(r6[i] / r6[i + 1]);
            CHECK(s6 > 1.9);
            CHECK(s6 < 2.0);
        }
        CHECK(std::log2(r6[1] / r6[2]) > std::log2(r6[0] / r6[1]));
    }
}

TEST_CASE("VD(1) potential solves the Darwin equation at every step") {
    auto c = small_vm(0.1, 0.2, 0.1, 0.5);
    c.grid = {16, 2 * pi, 2, 32, 7.0};
    c.model = Model::vd;
    Equilibrium eq(c.equilibrium, 2, c.grid.nv, c.grid.vmax);
    const auto h = build_hierarchy(eq, c.eps, 1, c.grid);
    int checked = 0;
    vd_run(c, [&](double, const DistField& f, const EMState& em) {
        VecField A(2, c.grid.nx);
        A.c[1] = irfft(em.A[1], c.grid.nx);
        // the mean is dynamic; compare fluctuations only
        const double mean = spatial_mean(A.c[1]);
        const auto pot = darwin_potentials(h, deposit_moments(shift_to_g(f, A, c.eps, eq), c.eps, 1));
        for (int i = 0; i < c.grid.nx; ++i) CHECK(std::abs(pot[0].c[1][i] - (A.c[1][i] - mean)) < 1e-13);
        ++checked;
    });
    CHECK(checked == 6);
}

TEST_CASE("model ordering for prepared data") {
    auto c = small_vm(0.1, 1e-3, 0.05, 2.0);
    c.grid = {16, 2 * pi, 2, 32, 7.0};
    c.perturbation.f = {{1, 0.2, 0.0, ModeShape::density}, {1, 0.2, 0.5, ModeShape::current2}};
    c.prepared_order = 6;
    c.record_fields = true;
    const auto vm = vm_run(c);
    auto d = c;
    d.prepared_order = 0;
    d.model = Model::vp;
    const auto vp = vp_run(d);
    d.model = Model::vd;
    const auto vd1 = vd_run(d);
    d.darwin_order = 2;
    const auto vd2 = vd_run(d);
    const double e_vp = history_distance(vm, vp, c.grid.L);
    const double e_vd1 = history_distance(vm, vd1, c.grid.L);
    const double e_vd2 = history_distance(vm, vd2, c.grid.L);
    CHECK(e_vp > e_vd1);
    CHECK(e_vd1 >= e_vd2);
}

TEST_CASE("scaling transforms") {
    auto c = small_vm(1.0, 0.2, 0.02, 0.04);
    c.grid = {16, 2 * pi, 2, 48, 8.0};
    Equilibrium eq(c.equilibrium, 2, c.grid.nv, c.grid.vmax);
    std::vector<FullState> s;
    vm_run(c, [&](double t, const DistField& f, const EMState& em) { s.push_back(to_full_state(f, em, eq, c.delta, t)); });
    REQUIRE(s.size() == 3);
    const auto native = system_residual(s[0], s[1], s[2]);
    CHECK(native.max() < 1e-2);
    CHECK(native.gauss < 1e-12);

    SUBCASE("lambda = 1 is the identity") {
        const auto a = rescale_velocity(s[1], 1.0);
        const auto b = rescale_spacetime(s[1], 1.0);
        CHECK(a.f.values == s[1].f.values);
        CHECK(b.f.values == s[1].f.values);
        CHECK(a.eps == s[1].eps);
    }
    SUBCASE("group property") {
        const auto back = rescale_velocity(rescale_velocity(s[1], 0.5), 2.0);
        double err = 0.0;
        for (std::size_t i = 0; i < back.f.values.size(); ++i)
            err = std::max(err, std::abs(back.f.values[i] - s[1].f.values[i]));
        CHECK(err < 1e-14);
        CHECK(back.f.grid.vmax == doctest::Approx(s[1].f.grid.vmax).epsilon(1e-15));
    }
    SUBCASE("transformed data solve the rescaled system") {
        for (double lam : {0.5, 2.0}) {
            for (auto tr : {rescale_velocity, rescale_spacetime}) {
                const auto r = system_residual(tr(s[0], lam), tr(s[1], lam), tr(s[2], lam));
                CHECK(r.vlasov < 10 * native.vlasov);
                CHECK(r.ampere < 10 * native.ampere);
                CHECK(r.faraday < 10 * native.faraday + 1e-14);
                CHECK(r.gauss < 1e-12);
            }
        }
    }
    SUBCASE("the residual detects a wrong speed of light") {
        auto a = rescale_velocity(s[0], 0.5), b = rescale_velocity(s[1], 0.5), d = rescale_velocity(s[2], 0.5);
        a.eps = b.eps = d.eps = 1.0;
        CHECK(system_residual(a, b, d).max() > 100 * native.max());
    }
    CHECK_THROWS_AS(rescale_velocity(s[1], 0.0), Error);
}

TEST_CASE("non-finite state aborts with the last good snapshot") {
    auto c = small_vm(0.3, 1.0, 0.1, 1.0);
    c.perturbation.f = {{1, 1e308, 0.0, ModeShape::density}};
    c.out_dir = std::filesystem::temp_directory_path() / "kinlim_abort_test";
    std::filesystem::remove_all(c.out_dir);
    const auto r = vm_run(c);
    CHECK(r.aborted);
    CHECK(r.message.find("non-finite") != std::string::npos);
    CHECK(std::filesystem::exists(c.out_dir / "last_good.bin"));
    std::filesystem::remove_all(c.out_dir);
}
