#pragma once

// Dense arithmetic kernels behind the tensor core.
//
// Every kernel has a portable scalar reference implementation. On x86-64 an
// AVX2+FMA variant is compiled into a separate translation unit and chosen at
// startup when the CPU reports both features. Setting CAPGEN_SIMD=off in the
// environment pins the scalar table.

#include <cstddef>
#include <span>

namespace capgen {

using Real = double;

namespace kernels {

struct KernelTable {
    const char* name;

    Real (*dot)(const Real* a, const Real* b, std::size_t n);
    // y += alpha * x
    void (*axpy)(Real alpha, const Real* x, Real* y, std::size_t n);
    // C[m,n] += A[m,k] * B[k,n]
    void (*gemm_nn)(std::size_t m, std::size_t k, std::size_t n, const Real* a, const Real* b, Real* c);
    // C[m,n] += A[m,k] * B[n,k]^T
    void (*gemm_nt)(std::size_t m, std::size_t k, std::size_t n, const Real* a, const Real* b, Real* c);
    // C[m,n] += A[k,m]^T * B[k,n]
    void (*gemm_tn)(std::size_t m, std::size_t k, std::size_t n, const Real* a, const Real* b, Real* c);
};

const KernelTable& scalar_table();

// nullptr when the build has no AVX2 variant or the CPU lacks AVX2/FMA.
const KernelTable* avx2_table();

// The table used by the tensor core. Resolved once per process.
const KernelTable& active();

inline Real dot(std::span<const Real> a, std::span<const Real> b) {
    return active().dot(a.data(), b.data(), a.size());
}

inline void axpy(Real alpha, std::span<const Real> x, std::span<Real> y) {
    active().axpy(alpha, x.data(), y.data(), x.size());
}

}  // namespace kernels
}  // namespace capgen
