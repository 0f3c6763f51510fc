#include "kinlim/fft.hpp"

#include <fftw3.h>

#include <map>
#include <mutex>

namespace kinlim {

namespace {

// The FFTW planner is not reentrant.
std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}

struct PlanPair {
    fftw_plan fwd;
    fftw_plan bwd;
};

const PlanPair& plans_for(int n) {
    static std::map<int, PlanPair> cache;
    std::lock_guard<std::mutex> lock(planner_mutex());
    auto it = cache.find(n);
    if (it != cache.end()) return it->second;
    std::vector<double> r(n);
    std::vector<cplx> c(n / 2 + 1);
    auto* cp = reinterpret_cast<fftw_complex*>(c.data());
    PlanPair p{fftw_plan_dft_r2c_1d(n, r.data(), cp, FFTW_ESTIMATE | FFTW_UNALIGNED),
               fftw_plan_dft_c2r_1d(n, cp, r.data(), FFTW_ESTIMATE | FFTW_UNALIGNED)};
    return cache.emplace(n, p).first->second;
}

}  // namespace

std::vector<cplx> rfft(const Field& u) {
    const int n = static_cast<int>(u.size());
    Field tmp(u);
    std::vector<cplx> out(n / 2 + 1);
    fftw_execute_dft_r2c(plans_for(n).fwd, tmp.data(), reinterpret_cast<fftw_complex*>(out.data()));
    for (auto& c : out) c /= n;
    return out;
}

Field irfft(const std::vector<cplx>& uh, int n) {
    if (static_cast<int>(uh.size()) != n / 2 + 1) throw Error("irfft: spectrum size mismatch");
    std::vector<cplx> tmp(uh);
    Field out(n);
    fftw_execute_dft_c2r(plans_for(n).bwd, reinterpret_cast<fftw_complex*>(tmp.data()), out.data());
    return out;
}

Field spectral_derivative(const Field& u, double L, int order) {
    const int n = static_cast<int>(u.size());
    auto uh = rfft(u);
    for (int k = 0; k <= n / 2; ++k) {
        const cplx ik(0.0, 2.0 * pi * k / L);
        cplx m = 1.0;
        for (int o = 0; o < order; ++o) m *= ik;
        uh[k] *= m;
    }
    if (order % 2 == 1 && n % 2 == 0) uh[n / 2] = 0.0;
    return irfft(uh, n);
}

StridedFFT::StridedFFT(int n, int howmany) : n_(n), howmany_(howmany) {
    std::lock_guard<std::mutex> lock(planner_mutex());
    const int nc = n / 2 + 1;
    std::vector<double> r(static_cast<std::size_t>(n) * howmany);
    std::vector<cplx> c(static_cast<std::size_t>(nc) * howmany);
    auto* cp = reinterpret_cast<fftw_complex*>(c.data());
    fwd_ = fftw_plan_many_dft_r2c(1, &n, howmany, r.data(), nullptr, howmany, 1, cp, nullptr, howmany,
                                  1, FFTW_ESTIMATE | FFTW_UNALIGNED);
    bwd_ = fftw_plan_many_dft_c2r(1, &n, howmany, cp, nullptr, howmany, 1, r.data(), nullptr, howmany,
                                  1, FFTW_ESTIMATE | FFTW_UNALIGNED);
}

StridedFFT::~StridedFFT() {
    std::lock_guard<std::mutex> lock(planner_mutex());
    fftw_destroy_plan(static_cast<fftw_plan>(fwd_));
    fftw_destroy_plan(static_cast<fftw_plan>(bwd_));
}

void StridedFFT::forward(double* in, cplx* out) const {
    fftw_execute_dft_r2c(static_cast<fftw_plan>(fwd_), in, reinterpret_cast<fftw_complex*>(out));
}

void StridedFFT::backward(cplx* in, double* out) const {
    fftw_execute_dft_c2r(static_cast<fftw_plan>(bwd_), reinterpret_cast<fftw_complex*>(in), out);
    const double s = 1.0 / n_;
    const std::size_t total = static_cast<std::size_t>(n_) * howmany_;
    for (std::size_t i = 0; i < total; ++i) out[i] *= s;
}

}  // namespace kinlim
