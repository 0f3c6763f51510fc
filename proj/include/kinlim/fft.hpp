#pragma once

#include <vector>

#include "kinlim/common.hpp"

namespace kinlim {

// Half spectrum of a real periodic array: n/2 + 1 coefficients, forward
// transform normalised by 1/n so that coefficient 0 is the mean.
std::vector<cplx> rfft(const Field& u);
Field irfft(const std::vector<cplx>& uh, int n);

// d^order/dx^order of a periodic field on a box of length L. The Nyquist
// coefficient is dropped for odd orders.
Field spectral_derivative(const Field& u, double L, int order);

// Batched real transforms along the slow axis of a [n][howmany] array.
class StridedFFT {
public:
    StridedFFT(int n, int howmany);
    ~StridedFFT();
    StridedFFT(const StridedFFT&) = delete;
    StridedFFT& operator=(const StridedFFT&) = delete;

    // out: [(n/2+1)][howmany], unnormalised.
    void forward(double* in, cplx* out) const;
    // Destroys `in`; output scaled by 1/n.
    void backward(cplx* in, double* out) const;
    int n() const { return n_; }
    int howmany() const { return howmany_; }

private:
    int n_, howmany_;
    void* fwd_ = nullptr;
    void* bwd_ = nullptr;
};

}  // namespace kinlim
