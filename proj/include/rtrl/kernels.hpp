#pragma once

// Dense GEMM kernels on row-major buffers.
//
// Every output element is accumulated over k in ascending order by exactly one
// thread, so the parallel kernels produce bit-identical results to the serial
// reference for any thread count.

#include <cstddef>

namespace rtrl::kernels {

namespace serial {
// C(m x n) = A(m x k) * B(k x n)
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c);
// C(m x n) = A(k x m)^T * B(k x n)
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c);
// C(m x n) = A(m x k) * B(n x k)^T
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c);
}  // namespace serial

namespace parallel {
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c);
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c);
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c);
}  // namespace parallel

/// Elementwise tanh, within 1e-15 relative of std::tanh. Written branch-free
/// so it vectorizes; NaN and +-inf inputs give NaN.
void tanh_inplace(double* x, std::size_t n);

/// Keeps large temporaries on the heap instead of fresh mmap pages (glibc
/// only; a no-op elsewhere). Idempotent.
void tune_allocator();

/// Sets the OpenMP team size used by the parallel kernels and rollout workers.
void set_worker_count(int workers);
int worker_count();

}  // namespace rtrl::kernels
