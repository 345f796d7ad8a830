#pragma once

// Batched Gaussian-mixture log-density kernels.
//
// Every kernel has a portable scalar reference in kernels::scalar and, where
// the build and the CPU allow it, an AVX2+FMA variant in kernels::avx2. The
// free functions at namespace scope dispatch at runtime; the environment
// variable DECOMPOUND_ISA=scalar pins the reference path.

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

namespace decompound::kernels {

/// Structure-of-arrays view of a Gaussian mixture, padded to a multiple of
/// kLanes components. Padding components carry log_coef = -inf.
///
/// Component k has log-density  log_coef[k] - 0.5 * |T_k (x - mean_k)|^2
/// where T_k is the lower-triangular inverse Cholesky factor of its
/// covariance, stored packed row-major: entry (i, j), j <= i, lives at
/// chol_inv[(i*(i+1)/2 + j) * padded + k].
struct ComponentTable {
  static constexpr std::size_t kLanes = 4;

  std::size_t dim = 0;
  std::size_t count = 0;
  std::size_t padded = 0;
  std::vector<double> log_coef;
  std::vector<double> mean;      // dim * padded
  std::vector<double> chol_inv;  // dim*(dim+1)/2 * padded

  ComponentTable() = default;
  ComponentTable(std::size_t dim, std::size_t count);

  double& mean_at(std::size_t axis, std::size_t k) { return mean[axis * padded + k]; }
  double& chol_at(std::size_t i, std::size_t j, std::size_t k) { return chol_inv[(i * (i + 1) / 2 + j) * padded + k]; }
  double mean_at(std::size_t axis, std::size_t k) const { return mean[axis * padded + k]; }
  double chol_at(std::size_t i, std::size_t j, std::size_t k) const {
    return chol_inv[(i * (i + 1) / 2 + j) * padded + k];
  }
};

enum class Isa { scalar, avx2 };

std::string_view isa_name(Isa isa);
bool isa_available(Isa isa);
Isa active_isa();
/// Overrides dispatch for the whole process; throws if the ISA is unavailable.
void set_isa(Isa isa);

/// log sum_k exp(component k at x). Returns -inf only if every term underflows.
double log_density(const ComponentTable& table, const double* x);

/// Point-major batch: points.size() == out.size() * dim.
void log_density_batch(const ComponentTable& table, std::span<const double> points, std::span<double> out);

namespace scalar {
double log_density(const ComponentTable& table, const double* x);
void log_density_batch(const ComponentTable& table, std::span<const double> points, std::span<double> out);
}  // namespace scalar

namespace avx2 {
// Only dim 1 and 2 are vectorized; other dims forward to scalar.
double log_density(const ComponentTable& table, const double* x);
void log_density_batch(const ComponentTable& table, std::span<const double> points, std::span<double> out);
}  // namespace avx2

}  // namespace decompound::kernels
