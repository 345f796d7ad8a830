#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "decompound/model.hpp"
#include "decompound/rng.hpp"

namespace decompound {

/// Jump record of a compound Poisson path on (0, horizon].
struct SamplePath {
  std::size_t dim = 1;
  double horizon = 1.0;
  std::vector<double> jump_times;   // strictly increasing
  std::vector<double> jump_values;  // point-major, jump_times.size() * dim

  std::size_t jump_count() const { return jump_times.size(); }
  std::span<const double> jump(std::size_t j) const { return {jump_values.data() + j * dim, dim}; }
};

/// Increments Z_1..Z_n observed on a regular mesh. Zero increments are stored
/// as exact zero vectors. An empty sample (n = 0) is allowed and means "no data".
struct IncrementSample {
  std::size_t dim = 1;
  double mesh = 1.0;
  std::vector<double> z;  // point-major, n * dim

  IncrementSample() = default;
  IncrementSample(std::size_t dim, double mesh, std::vector<double> z);

  std::size_t size() const { return dim == 0 ? 0 : z.size() / dim; }
  std::span<const double> at(std::size_t i) const { return {z.data() + i * dim, dim}; }
  /// Bitwise-exact zero test; this is what routes an increment to the atom.
  bool is_zero(std::size_t i) const;
  std::size_t zero_count() const;
};

SamplePath simulate_path(const CppModel& model, double horizon, Rng& rng);

IncrementSample simulate_increments(const CppModel& model, std::size_t n, double mesh, Rng& rng);

/// Sums a path's jumps over the cells ((i-1) mesh, i mesh], i = 1..n.
IncrementSample increments_from_path(const SamplePath& path, double mesh, std::size_t n);

/// Snaps every increment with max-norm <= tol to the exact zero vector. tol = 0 leaves the sample untouched.
IncrementSample snap_zeros(IncrementSample sample, double tol);

}  // namespace decompound
