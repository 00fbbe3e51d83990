#include "rtrl/kernels.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif
#ifdef __GLIBC__
#include <malloc.h>
#endif

namespace rtrl::kernels {

namespace {

int g_workers = 1;

// Below this many multiply-adds a parallel region costs more than it saves.
constexpr std::size_t kParallelWork = 1u << 15;

constexpr std::size_t kRowBlock = 4;
constexpr std::size_t kColBlock = 16;

// C rows [i0, i0+kRowBlock) for the product of A (element (i,p) at a[i*as_i + p*as_p]) and
// row-major B. Every output element is summed over p in increasing order starting from zero,
// whichever branch computes it.
inline void block_rows(std::size_t i0, std::size_t rows, std::size_t n, std::size_t k, const double* __restrict a,
                       std::size_t as_i, std::size_t as_p, const double* __restrict b, double* __restrict c) {
  std::size_t j0 = 0;
  if (rows == kRowBlock) {
    for (; j0 + kColBlock <= n; j0 += kColBlock) {
      double acc0[kColBlock] = {}, acc1[kColBlock] = {}, acc2[kColBlock] = {}, acc3[kColBlock] = {};
      const double* a0 = a + i0 * as_i;
      const double* a1 = a0 + as_i;
      const double* a2 = a1 + as_i;
      const double* a3 = a2 + as_i;
      for (std::size_t p = 0; p < k; ++p) {
        const double* __restrict bp = b + p * n + j0;
        const double x0 = a0[p * as_p], x1 = a1[p * as_p], x2 = a2[p * as_p], x3 = a3[p * as_p];
#pragma omp simd
        for (std::size_t jj = 0; jj < kColBlock; ++jj) {
          acc0[jj] += x0 * bp[jj];
          acc1[jj] += x1 * bp[jj];
          acc2[jj] += x2 * bp[jj];
          acc3[jj] += x3 * bp[jj];
        }
      }
      double* c0 = c + i0 * n + j0;
      for (std::size_t jj = 0; jj < kColBlock; ++jj) {
        c0[jj] = acc0[jj];
        c0[n + jj] = acc1[jj];
        c0[2 * n + jj] = acc2[jj];
        c0[3 * n + jj] = acc3[jj];
      }
    }
    const double* a0 = a + i0 * as_i;
    const double* a1 = a0 + as_i;
    const double* a2 = a1 + as_i;
    const double* a3 = a2 + as_i;
    for (std::size_t j = j0; j < n; ++j) {
      double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
      for (std::size_t p = 0; p < k; ++p) {
        const double bpj = b[p * n + j];
        s0 += a0[p * as_p] * bpj;
        s1 += a1[p * as_p] * bpj;
        s2 += a2[p * as_p] * bpj;
        s3 += a3[p * as_p] * bpj;
      }
      c[i0 * n + j] = s0;
      c[(i0 + 1) * n + j] = s1;
      c[(i0 + 2) * n + j] = s2;
      c[(i0 + 3) * n + j] = s3;
    }
    return;
  }
  for (std::size_t r = 0; r < rows; ++r) {
    double* __restrict ci = c + (i0 + r) * n;
    for (std::size_t j = j0; j < n; ++j) ci[j] = 0.0;
    for (std::size_t p = 0; p < k; ++p) {
      const double arp = a[(i0 + r) * as_i + p * as_p];
      const double* __restrict bp = b + p * n;
      for (std::size_t j = j0; j < n; ++j) ci[j] += arp * bp[j];
    }
  }
}

inline std::size_t row_blocks(std::size_t m) { return (m + kRowBlock - 1) / kRowBlock; }

inline void run_block(std::size_t blk, std::size_t m, std::size_t n, std::size_t k, const double* a,
                      std::size_t as_i, std::size_t as_p, const double* b, double* c) {
  const std::size_t i0 = blk * kRowBlock;
  block_rows(i0, std::min(kRowBlock, m - i0), n, k, a, as_i, as_p, b, c);
}

std::vector<double> transposed(std::size_t rows, std::size_t cols, const double* x) {
  std::vector<double> t(rows * cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) t[c * rows + r] = x[r * cols + c];
  return t;
}

}  // namespace

namespace serial {

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c) {
  for (std::size_t blk = 0; blk < row_blocks(m); ++blk) run_block(blk, m, n, k, a, k, 1, b, c);
}

void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c) {
  for (std::size_t blk = 0; blk < row_blocks(m); ++blk) run_block(blk, m, n, k, a, 1, m, b, c);
}

void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c) {
  const std::vector<double> bt = transposed(n, k, b);
  gemm_nn(m, n, k, a, bt.data(), c);
}

}  // namespace serial

namespace parallel {

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c) {
  const bool big = m * n * k >= kParallelWork;
  const auto blocks = static_cast<long long>(row_blocks(m));
#pragma omp parallel for schedule(static) if (big)
  for (long long blk = 0; blk < blocks; ++blk) run_block(static_cast<std::size_t>(blk), m, n, k, a, k, 1, b, c);
}

void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c) {
  const bool big = m * n * k >= kParallelWork;
  const auto blocks = static_cast<long long>(row_blocks(m));
#pragma omp parallel for schedule(static) if (big)
  for (long long blk = 0; blk < blocks; ++blk) run_block(static_cast<std::size_t>(blk), m, n, k, a, 1, m, b, c);
}

void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c) {
  const std::vector<double> bt = transposed(n, k, b);
  gemm_nn(m, n, k, a, bt.data(), c);
}

}  // namespace parallel

void tanh_inplace(double* __restrict x, std::size_t n) {
  constexpr double kLog2e = 1.4426950408889634074;
  constexpr double kLn2Hi = 6.93147180369123816490e-01;
  constexpr double kLn2Lo = 1.90821492927058770002e-10;
  constexpr double kShift = 6755399441055744.0;  // 1.5 * 2^52
  using std::bit_cast;
#pragma omp simd
  for (std::size_t i = 0; i < n; ++i) {
    const double v = x[i];
    const double a = std::fabs(v);
    // exp(-2a) with a clamped to 19, where tanh already rounds to 1
    const std::int64_t below = bit_cast<std::int64_t>(a - 19.0) >> 63;
    const double y = -2.0 * bit_cast<double>((bit_cast<std::int64_t>(a) & below) |
                                             (bit_cast<std::int64_t>(19.0) & ~below));
    const double ks = y * kLog2e + kShift;
    const double k = ks - kShift;
    const double r = (y - k * kLn2Hi) - k * kLn2Lo;
    double p = 1.0 / 6227020800.0;
    p = p * r + 1.0 / 479001600.0;
    p = p * r + 1.0 / 39916800.0;
    p = p * r + 1.0 / 3628800.0;
    p = p * r + 1.0 / 362880.0;
    p = p * r + 1.0 / 40320.0;
    p = p * r + 1.0 / 5040.0;
    p = p * r + 1.0 / 720.0;
    p = p * r + 1.0 / 120.0;
    p = p * r + 1.0 / 24.0;
    p = p * r + 1.0 / 6.0;
    p = p * r + 0.5;
    p = p * r + 1.0;
    p = p * r + 1.0;
    const std::int64_t ki = bit_cast<std::int64_t>(ks) - bit_cast<std::int64_t>(kShift);
    const double e = p * bit_cast<double>((ki + 1023) << 52);
    const double big = (1.0 - e) / (1.0 + e);

    // Taylor series near zero, where 1 - e cancels
    const double s = v * v;
    double t = 6404582.0 / 10854718875.0;
    t = t * s - 929569.0 / 638512875.0;
    t = t * s + 21844.0 / 6081075.0;
    t = t * s - 1382.0 / 155925.0;
    t = t * s + 62.0 / 2835.0;
    t = t * s - 17.0 / 315.0;
    t = t * s + 2.0 / 15.0;
    t = t * s - 1.0 / 3.0;
    const double small = a + a * s * t;

    const std::int64_t tiny = bit_cast<std::int64_t>(a - 0.125) >> 63;
    const double m = bit_cast<double>((bit_cast<std::int64_t>(small) & tiny) | (bit_cast<std::int64_t>(big) & ~tiny));
    x[i] = std::copysign(m + (v - v), v);
  }
}

void tune_allocator() {
#ifdef __GLIBC__
  static const bool done = [] {
    mallopt(M_MMAP_THRESHOLD, 256 << 20);
    mallopt(M_TRIM_THRESHOLD, 512 << 20);
    return true;
  }();
  (void)done;
#endif
}

void set_worker_count(int workers) {
  g_workers = std::max(1, workers);
#ifdef _OPENMP
  omp_set_num_threads(g_workers);
#endif
}

int worker_count() { return g_workers; }

}  // namespace rtrl::kernels
