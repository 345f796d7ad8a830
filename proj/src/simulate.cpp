#include "decompound/simulate.hpp"

#include <algorithm>
#include <cmath>

#include "decompound/error.hpp"

namespace decompound {

IncrementSample::IncrementSample(std::size_t dim_, double mesh_, std::vector<double> z_)
    : dim(dim_), mesh(mesh_), z(std::move(z_)) {
  if (dim == 0) throw InputError("increment dimension must be positive");
  if (!(mesh > 0.0) || !std::isfinite(mesh)) throw InputError("mesh must be positive");
  if (z.size() % dim != 0) throw InputError("increment data length is not a multiple of the dimension");
  for (double v : z)
    if (!std::isfinite(v)) throw InputError("increment data contains a non-finite value");
}

bool IncrementSample::is_zero(std::size_t i) const {
  for (double v : at(i))
    if (v != 0.0) return false;
  return true;
}

std::size_t IncrementSample::zero_count() const {
  std::size_t count = 0;
  for (std::size_t i = 0; i < size(); ++i) count += is_zero(i) ? 1 : 0;
  return count;
}

SamplePath simulate_path(const CppModel& model, double horizon, Rng& rng) {
  if (!(horizon > 0.0) || !std::isfinite(horizon)) throw InputError("horizon must be positive");
  SamplePath path;
  path.dim = model.dim();
  path.horizon = horizon;
  const auto count = rng.poisson(model.lambda * horizon);
  path.jump_times.resize(count);
  for (auto& t : path.jump_times) t = rng.uniform() * horizon;
  std::sort(path.jump_times.begin(), path.jump_times.end());
  path.jump_values.resize(count * path.dim);
  for (std::size_t j = 0; j < count; ++j) model.jumps.sample_into(rng, path.jump_values.data() + j * path.dim);
  return path;
}

IncrementSample simulate_increments(const CppModel& model, std::size_t n, double mesh, Rng& rng) {
  if (n < 1) throw InputError("need at least one increment");
  if (!(mesh > 0.0) || !std::isfinite(mesh)) throw InputError("mesh must be positive");
  const std::size_t d = model.dim();
  std::vector<double> z(n * d, 0.0);
  std::vector<double> jump(d);
  const double rate = model.lambda * mesh;
  for (std::size_t i = 0; i < n; ++i) {
    const auto count = rng.poisson(rate);
    for (std::uint64_t j = 0; j < count; ++j) {
      model.jumps.sample_into(rng, jump.data());
      for (std::size_t a = 0; a < d; ++a) z[i * d + a] += jump[a];
    }
  }
  return IncrementSample(d, mesh, std::move(z));
}

IncrementSample increments_from_path(const SamplePath& path, double mesh, std::size_t n) {
  if (!(mesh > 0.0)) throw InputError("mesh must be positive");
  std::vector<double> z(n * path.dim, 0.0);
  for (std::size_t j = 0; j < path.jump_count(); ++j) {
    const double cell = std::ceil(path.jump_times[j] / mesh);
    if (cell < 1.0 || cell > static_cast<double>(n)) continue;
    const auto i = static_cast<std::size_t>(cell) - 1;
    for (std::size_t a = 0; a < path.dim; ++a) z[i * path.dim + a] += path.jump_values[j * path.dim + a];
  }
  return IncrementSample(path.dim, mesh, std::move(z));
}

IncrementSample snap_zeros(IncrementSample sample, double tol) {
  if (tol < 0.0) throw InputError("zero tolerance must be nonnegative");
  if (tol == 0.0) return sample;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    double norm = 0.0;
    for (double v : sample.at(i)) norm = std::max(norm, std::abs(v));
    if (norm <= tol)
      for (std::size_t a = 0; a < sample.dim; ++a) sample.z[i * sample.dim + a] = 0.0;
  }
  return sample;
}

}  // namespace decompound
