// Compiled with -mavx2 -mfma; only reached after a runtime CPU check.

#include <immintrin.h>

#include <array>
#include <cmath>
#include <limits>
#include <vector>

#include "decompound/kernels.hpp"

namespace decompound::kernels::avx2 {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// exp for arguments <= 0. Lanes below -708 (including -inf) flush to zero,
// which only drops terms that are negligible next to the leading exp(0) term.
inline __m256d exp_nonpositive(__m256d x) {
  const __m256d floor_arg = _mm256_set1_pd(-708.0);
  const __m256d underflow = _mm256_cmp_pd(x, floor_arg, _CMP_LT_OQ);
  x = _mm256_max_pd(x, floor_arg);
  const __m256d n = _mm256_round_pd(_mm256_mul_pd(x, _mm256_set1_pd(1.4426950408889634074)),
                                    _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
  __m256d r = _mm256_fnmadd_pd(n, _mm256_set1_pd(6.93145751953125e-1), x);
  r = _mm256_fnmadd_pd(n, _mm256_set1_pd(1.42860682030941723212e-6), r);

  // Taylor series to degree 12; |r| <= ln2/2 keeps the remainder below 2e-16.
  __m256d p = _mm256_set1_pd(1.0 / 479001600.0);
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 39916800.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 3628800.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 362880.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 40320.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 5040.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 720.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 120.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 24.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 6.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(0.5));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0));

  const __m256i n64 = _mm256_cvtepi32_epi64(_mm256_cvtpd_epi32(n));
  const __m256i bits = _mm256_slli_epi64(_mm256_add_epi64(n64, _mm256_set1_epi64x(1023)), 52);
  const __m256d result = _mm256_mul_pd(p, _mm256_castsi256_pd(bits));
  return _mm256_andnot_pd(underflow, result);
}

inline double hmax(__m256d v) {
  alignas(32) std::array<double, 4> lanes;
  _mm256_store_pd(lanes.data(), v);
  return std::max(std::max(lanes[0], lanes[1]), std::max(lanes[2], lanes[3]));
}

inline double hsum(__m256d v) {
  alignas(32) std::array<double, 4> lanes;
  _mm256_store_pd(lanes.data(), v);
  return (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
}

// Quadratic-form term for four consecutive components at a single point.
template <std::size_t Dim>
inline __m256d terms_at(const ComponentTable& t, std::size_t k, const double* x) {
  const std::size_t kp = t.padded;
  const __m256d lc = _mm256_loadu_pd(t.log_coef.data() + k);
  const __m256d half = _mm256_set1_pd(0.5);
  if constexpr (Dim == 1) {
    const __m256d dx = _mm256_sub_pd(_mm256_set1_pd(x[0]), _mm256_loadu_pd(t.mean.data() + k));
    const __m256d u = _mm256_mul_pd(_mm256_loadu_pd(t.chol_inv.data() + k), dx);
    return _mm256_fnmadd_pd(_mm256_mul_pd(half, u), u, lc);
  } else {
    const __m256d dx0 = _mm256_sub_pd(_mm256_set1_pd(x[0]), _mm256_loadu_pd(t.mean.data() + k));
    const __m256d dx1 = _mm256_sub_pd(_mm256_set1_pd(x[1]), _mm256_loadu_pd(t.mean.data() + kp + k));
    const __m256d u0 = _mm256_mul_pd(_mm256_loadu_pd(t.chol_inv.data() + k), dx0);
    __m256d u1 = _mm256_mul_pd(_mm256_loadu_pd(t.chol_inv.data() + kp + k), dx0);
    u1 = _mm256_fmadd_pd(_mm256_loadu_pd(t.chol_inv.data() + 2 * kp + k), dx1, u1);
    const __m256d maha = _mm256_fmadd_pd(u1, u1, _mm256_mul_pd(u0, u0));
    return _mm256_fnmadd_pd(half, maha, lc);
  }
}

template <std::size_t Dim>
double log_density_components(const ComponentTable& t, const double* x) {
  thread_local std::vector<double> scratch;
  scratch.resize(t.padded);
  __m256d vmax = _mm256_set1_pd(kNegInf);
  for (std::size_t k = 0; k < t.padded; k += 4) {
    const __m256d q = terms_at<Dim>(t, k, x);
    _mm256_storeu_pd(scratch.data() + k, q);
    vmax = _mm256_max_pd(vmax, q);
  }
  const double top = hmax(vmax);
  if (top == kNegInf) return kNegInf;
  const __m256d vtop = _mm256_set1_pd(top);
  __m256d acc = _mm256_setzero_pd();
  for (std::size_t k = 0; k < t.padded; k += 4)
    acc = _mm256_add_pd(acc, exp_nonpositive(_mm256_sub_pd(_mm256_loadu_pd(scratch.data() + k), vtop)));
  return top + std::log(hsum(acc));
}

// Four points at once, looping over components with broadcast parameters.
template <std::size_t Dim>
__m256d point_terms(const ComponentTable& t, std::size_t k, const __m256d* xs) {
  const std::size_t kp = t.padded;
  const __m256d lc = _mm256_set1_pd(t.log_coef[k]);
  const __m256d half = _mm256_set1_pd(0.5);
  if constexpr (Dim == 1) {
    const __m256d u = _mm256_mul_pd(_mm256_set1_pd(t.chol_inv[k]), _mm256_sub_pd(xs[0], _mm256_set1_pd(t.mean[k])));
    return _mm256_fnmadd_pd(_mm256_mul_pd(half, u), u, lc);
  } else {
    const __m256d dx0 = _mm256_sub_pd(xs[0], _mm256_set1_pd(t.mean[k]));
    const __m256d dx1 = _mm256_sub_pd(xs[1], _mm256_set1_pd(t.mean[kp + k]));
    const __m256d u0 = _mm256_mul_pd(_mm256_set1_pd(t.chol_inv[k]), dx0);
    const __m256d u1 = _mm256_fmadd_pd(_mm256_set1_pd(t.chol_inv[2 * kp + k]), dx1,
                                       _mm256_mul_pd(_mm256_set1_pd(t.chol_inv[kp + k]), dx0));
    return _mm256_fnmadd_pd(half, _mm256_fmadd_pd(u1, u1, _mm256_mul_pd(u0, u0)), lc);
  }
}

template <std::size_t Dim>
void batch_points(const ComponentTable& t, std::span<const double> points, std::span<double> out) {
  const std::size_t n = out.size();
  std::size_t p = 0;
  for (; p + 4 <= n; p += 4) {
    __m256d xs[Dim];
    if constexpr (Dim == 1) {
      xs[0] = _mm256_loadu_pd(points.data() + p);
    } else {
      const double* base = points.data() + 2 * p;
      xs[0] = _mm256_setr_pd(base[0], base[2], base[4], base[6]);
      xs[1] = _mm256_setr_pd(base[1], base[3], base[5], base[7]);
    }
    __m256d vmax = _mm256_set1_pd(kNegInf);
    for (std::size_t k = 0; k < t.count; ++k) vmax = _mm256_max_pd(vmax, point_terms<Dim>(t, k, xs));
    __m256d acc = _mm256_setzero_pd();
    for (std::size_t k = 0; k < t.count; ++k)
      acc = _mm256_add_pd(acc, exp_nonpositive(_mm256_sub_pd(point_terms<Dim>(t, k, xs), vmax)));
    alignas(32) std::array<double, 4> tops, sums;
    _mm256_store_pd(tops.data(), vmax);
    _mm256_store_pd(sums.data(), acc);
    for (std::size_t lane = 0; lane < 4; ++lane)
      out[p + lane] = tops[lane] == kNegInf ? kNegInf : tops[lane] + std::log(sums[lane]);
  }
  for (; p < n; ++p) out[p] = scalar::log_density(t, points.data() + p * Dim);
}

}  // namespace

double log_density(const ComponentTable& table, const double* x) {
  switch (table.dim) {
    case 1: return log_density_components<1>(table, x);
    case 2: return log_density_components<2>(table, x);
    default: return scalar::log_density(table, x);
  }
}

void log_density_batch(const ComponentTable& table, std::span<const double> points, std::span<double> out) {
  switch (table.dim) {
    case 1: batch_points<1>(table, points, out); break;
    case 2: batch_points<2>(table, points, out); break;
    default: scalar::log_density_batch(table, points, out);
  }
}

}  // namespace decompound::kernels::avx2
