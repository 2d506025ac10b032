#include "capgen/kernels.hpp"

namespace capgen::kernels {
namespace {

Real dot_scalar(const Real* a, const Real* b, std::size_t n) {
    Real acc = 0;
    for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

void axpy_scalar(Real alpha, const Real* x, Real* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void gemm_nn_scalar(std::size_t m, std::size_t k, std::size_t n, const Real* a, const Real* b, Real* c) {
    for (std::size_t i = 0; i < m; ++i) {
        Real* crow = c + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const Real av = a[i * k + p];
            const Real* brow = b + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

void gemm_nt_scalar(std::size_t m, std::size_t k, std::size_t n, const Real* a, const Real* b, Real* c) {
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) c[i * n + j] += dot_scalar(a + i * k, b + j * k, k);
}

void gemm_tn_scalar(std::size_t m, std::size_t k, std::size_t n, const Real* a, const Real* b, Real* c) {
    for (std::size_t p = 0; p < k; ++p) {
        const Real* arow = a + p * m;
        const Real* brow = b + p * n;
        for (std::size_t i = 0; i < m; ++i) {
            const Real av = arow[i];
            Real* crow = c + i * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

}  // namespace

const KernelTable& scalar_table() {
    static const KernelTable table{"scalar", dot_scalar, axpy_scalar, gemm_nn_scalar, gemm_nt_scalar,
                                   gemm_tn_scalar};
    return table;
}

}  // namespace capgen::kernels
