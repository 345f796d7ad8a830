#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "decompound/grid.hpp"
#include "decompound/model.hpp"
#include "decompound/simulate.hpp"
#include "json.hpp"

namespace decompound {

enum class PowerRoute { exact, grid_fft, monte_carlo };
std::string_view route_name(PowerRoute route);

struct DensityOptions {
  double mesh = 1.0;
  /// Poisson truncation: smallest M >= min_terms with P(N > M) < tail_tol.
  double tail_tol = 1e-10;
  int min_terms = 10;
  /// When set, overrides the automatic truncation level.
  std::optional<int> terms;
  ConvolutionOptions convolution{};
  /// Grid size per axis for the FFT route; 0 picks 16384 (d = 1) or 512 (d = 2).
  std::size_t fft_points_per_axis = 0;
  /// Partial-sum draws for the Monte Carlo route (d > 2).
  std::size_t mc_draws = 10000;
  std::uint64_t mc_seed = 0x5eed;
};

class GridPowers;
class MonteCarloPowers;

/// Density of the increment law w.r.t. the fixed measure (point mass at 0) + Lebesgue:
///
///   atom   : e^{-lambda mesh} at the exact zero vector
///   density: sum_{m=1}^{M} Poisson(m; lambda mesh) r^{*m}(x) elsewhere.
///
/// Convolution powers use exact mixture algebra while the component budget
/// permits, then grid FFT (d <= 2) or Monte Carlo convolution (d > 2).
/// Immutable after construction and safe to evaluate concurrently.
class IncrementDensity {
public:
  explicit IncrementDensity(CppModel model, DensityOptions options = {});
  ~IncrementDensity();
  IncrementDensity(IncrementDensity&&) noexcept;
  IncrementDensity& operator=(IncrementDensity&&) noexcept;

  struct Value {
    bool atom;
    double value;
  };
  Value operator()(std::span<const double> x) const;

  /// Log of the continuous part at x (ignores the atom).
  double log_continuous(std::span<const double> x) const;
  void log_continuous_batch(std::span<const double> points, std::span<double> out) const;

  const CppModel& model() const { return model_; }
  std::size_t dim() const { return model_.dim(); }
  double mesh() const { return options_.mesh; }
  double atom_mass() const { return atom_mass_; }
  /// sum_{m=1}^{M} Poisson weights; equals 1 - atom - tail.
  double continuous_mass() const { return continuous_mass_; }
  int terms() const { return terms_; }
  int exact_terms() const { return exact_terms_; }
  double tail_mass() const { return tail_mass_; }
  double prune_loss() const { return prune_loss_; }
  PowerRoute route() const;
  /// tail_mass * sup_m sup_x r^{*m}(x); sup of r^{*m} never exceeds sup of r.
  double truncation_error_bound() const;
  /// Normalized mixture of the exactly represented powers, with its total Poisson weight.
  const NormalMixture& exact_part() const { return *exact_mixture_; }
  double exact_part_mass() const { return exact_mass_; }

  nlohmann::json metadata() const;

private:
  CppModel model_;
  DensityOptions options_;
  double atom_mass_ = 0.0;
  double continuous_mass_ = 0.0;
  double tail_mass_ = 0.0;
  double prune_loss_ = 0.0;
  int terms_ = 0;
  int exact_terms_ = 0;
  double exact_mass_ = 0.0;
  double log_exact_mass_ = 0.0;
  std::optional<NormalMixture> exact_mixture_;
  std::unique_ptr<GridPowers> grid_;
  std::unique_ptr<MonteCarloPowers> monte_carlo_;
};

/// Poisson truncation level for a given mean.
int poisson_truncation(double mean, double tail_tol, int min_terms);
/// P(N > M) for N ~ Poisson(mean).
double poisson_tail(double mean, int terms);

/// sum_i log k(Z_i): atoms contribute -lambda*mesh, the rest the log continuous density.
double log_likelihood(const IncrementSample& sample, const IncrementDensity& density);
double log_likelihood(const IncrementSample& sample, const CppModel& model, DensityOptions options = {});

/// Log of dR_num/dR_den on the observed path:
///   sum over jumps of log(lambda_num r_num(x) / (lambda_den r_den(x))) - (lambda_num - lambda_den) * horizon.
double path_log_likelihood_ratio(const SamplePath& path, const CppModel& num, const CppModel& den);

struct GriddedDensity {
  Grid grid;
  std::vector<double> values;  // continuous part at grid.points()
  double integral = 0.0;
};

/// Continuous part on a d <= 2 grid.
GriddedDensity density_grid(const IncrementDensity& density, const Grid& grid);

/// Grid-FFT evaluation of sum_{m=first..last} weight_m r^{*m}, seeded by an exact r^{*(first-1)}.
class GridPowers {
public:
  GridPowers(const NormalMixture& base, const NormalMixture* start, int first, int last,
             std::span<const double> weights, std::size_t points_per_axis);
  double value(std::span<const double> x) const;
  double lost_mass() const { return lost_mass_; }

private:
  std::size_t dim_;
  std::array<long, 2> origin_{};  // integer node offset per axis
  std::array<std::size_t, 2> count_{1, 1};
  double spacing_ = 0.0;
  std::vector<double> values_;
  double lost_mass_ = 0.0;
};

}  // namespace decompound
