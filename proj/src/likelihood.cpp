#include "decompound/likelihood.hpp"

#include <boost/math/special_functions/gamma.hpp>
#include <cmath>
#include <limits>
#include <numeric>

#include "decompound/error.hpp"

namespace decompound {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double top = std::max(a, b);
  return top + std::log1p(std::exp(std::min(a, b) - top));
}

double log_poisson(double mean, int m) {
  return -mean + m * std::log(mean) - std::lgamma(static_cast<double>(m) + 1.0);
}

}  // namespace

std::string_view route_name(PowerRoute route) {
  switch (route) {
    case PowerRoute::exact: return "exact";
    case PowerRoute::grid_fft: return "grid_fft";
    case PowerRoute::monte_carlo: return "monte_carlo";
  }
  return "unknown";
}

double poisson_tail(double mean, int terms) {
  // P(N > M) = P(Gamma(M + 1, 1) < mean)
  return boost::math::gamma_p(static_cast<double>(terms) + 1.0, mean);
}

int poisson_truncation(double mean, double tail_tol, int min_terms) {
  if (!(mean > 0.0)) throw InputError("Poisson mean must be positive");
  if (!(tail_tol > 0.0)) throw InputError("tail tolerance must be positive");
  int m = std::max(min_terms, 1);
  while (poisson_tail(mean, m) >= tail_tol) ++m;
  return m;
}

/// Monte Carlo convolution: r^{*m}(x) ~ mean_j r(x - S_j^{(m-1)}).
class MonteCarloPowers {
public:
  MonteCarloPowers(const NormalMixture& base, int first, int last, std::vector<double> weights, std::size_t draws,
                   std::uint64_t seed)
      : base_(base), first_(first), last_(last), weights_(std::move(weights)), draws_(draws), dim_(base.dim()) {
    Rng rng(seed, 0x4d43);
    partial_sums_.assign(static_cast<std::size_t>(last - first + 1) * draws * dim_, 0.0);
    std::vector<double> running(draws * dim_, 0.0);
    std::vector<double> y(dim_);
    // running holds S^{(k)}; power m needs S^{(m-1)}
    for (int k = 1; k < last; ++k) {
      for (std::size_t j = 0; j < draws; ++j) {
        base.sample_into(rng, y.data());
        for (std::size_t a = 0; a < dim_; ++a) running[j * dim_ + a] += y[a];
      }
      const int m = k + 1;
      if (m >= first) std::copy(running.begin(), running.end(), partial_sums_.begin() + slot(m));
    }
  }

  double value(std::span<const double> x) const {
    std::vector<double> shifted(dim_);
    double total = 0.0;
    for (int m = first_; m <= last_; ++m) {
      if (m == 1) {
        total += weights_[0] * base_.density(x);
        continue;
      }
      double acc = 0.0;
      const double* sums = partial_sums_.data() + slot(m);
      for (std::size_t j = 0; j < draws_; ++j) {
        for (std::size_t a = 0; a < dim_; ++a) shifted[a] = x[a] - sums[j * dim_ + a];
        acc += base_.density(shifted);
      }
      total += weights_[m - first_] * acc / static_cast<double>(draws_);
    }
    return total;
  }

private:
  std::size_t slot(int m) const { return static_cast<std::size_t>(m - first_) * draws_ * dim_; }

  NormalMixture base_;
  int first_, last_;
  std::vector<double> weights_;
  std::size_t draws_;
  std::size_t dim_;
  std::vector<double> partial_sums_;
};

IncrementDensity::IncrementDensity(CppModel model, DensityOptions options)
    : model_(std::move(model)), options_(options) {
  if (!(options_.mesh > 0.0)) throw InputError("mesh must be positive");
  const double rate = model_.lambda * options_.mesh;
  atom_mass_ = std::exp(-rate);
  terms_ = options_.terms ? *options_.terms : poisson_truncation(rate, options_.tail_tol, options_.min_terms);
  if (terms_ < 1) throw InputError("Poisson truncation must keep at least one term");
  tail_mass_ = poisson_tail(rate, terms_);

  std::vector<double> weights(terms_);
  for (int m = 1; m <= terms_; ++m) weights[m - 1] = std::exp(log_poisson(rate, m));
  continuous_mass_ = std::accumulate(weights.begin(), weights.end(), 0.0);

  auto powers = convolution_powers(model_.jumps, terms_, options_.convolution);
  exact_terms_ = static_cast<int>(powers.powers.size());
  prune_loss_ = powers.pruned_mass;

  if (exact_terms_ > 0) {
    std::vector<double> w;
    std::vector<Vector> mu;
    std::vector<Matrix> cov;
    const bool shared = false;
    exact_mass_ = std::accumulate(weights.begin(), weights.begin() + exact_terms_, 0.0);
    for (int m = 1; m <= exact_terms_; ++m) {
      const auto& p = powers.powers[m - 1];
      for (std::size_t k = 0; k < p.size(); ++k) {
        w.push_back(weights[m - 1] * p.weights()[k] / exact_mass_);
        mu.push_back(p.means()[k]);
        cov.push_back(p.covariance(k));
      }
    }
    const double total = std::accumulate(w.begin(), w.end(), 0.0);
    for (double& x : w) x /= total;
    exact_mixture_.emplace(std::move(w), std::move(mu), std::move(cov), shared);
    log_exact_mass_ = std::log(exact_mass_);
  } else {
    log_exact_mass_ = kNegInf;
  }

  if (exact_terms_ < terms_) {
    const int first = exact_terms_ + 1;
    std::vector<double> tail_weights(weights.begin() + exact_terms_, weights.end());
    const NormalMixture* start = exact_terms_ > 0 ? &powers.powers.back() : nullptr;
    if (dim() <= 2) {
      std::size_t points = options_.fft_points_per_axis;
      if (points == 0) points = dim() == 1 ? 16384 : 512;
      grid_ = std::make_unique<GridPowers>(model_.jumps, start, first, terms_, tail_weights, points);
    } else {
      if (first != 1 && first != exact_terms_ + 1) throw InputError("internal: bad Monte Carlo power range");
      monte_carlo_ = std::make_unique<MonteCarloPowers>(model_.jumps, first, terms_, std::move(tail_weights),
                                                        options_.mc_draws, options_.mc_seed);
    }
  }
}

IncrementDensity::~IncrementDensity() = default;
IncrementDensity::IncrementDensity(IncrementDensity&&) noexcept = default;
IncrementDensity& IncrementDensity::operator=(IncrementDensity&&) noexcept = default;

PowerRoute IncrementDensity::route() const {
  if (grid_) return PowerRoute::grid_fft;
  if (monte_carlo_) return PowerRoute::monte_carlo;
  return PowerRoute::exact;
}

double IncrementDensity::truncation_error_bound() const {
  return tail_mass_ * model_.jumps.density_upper_bound();
}

double IncrementDensity::log_continuous(std::span<const double> x) const {
  if (x.size() != dim()) throw InputError("increment dimension does not match model dimension");
  double result = exact_mixture_ ? log_exact_mass_ + exact_mixture_->log_density(x) : kNegInf;
  if (grid_) {
    const double v = grid_->value(x);
    if (v > 0.0) result = log_add(result, std::log(v));
  } else if (monte_carlo_) {
    const double v = monte_carlo_->value(x);
    if (v > 0.0) result = log_add(result, std::log(v));
  }
  return result;
}

void IncrementDensity::log_continuous_batch(std::span<const double> points, std::span<double> out) const {
  if (points.size() != out.size() * dim()) throw InputError("batch shape does not match model dimension");
  if (exact_mixture_) {
    exact_mixture_->log_density_batch(points, out);
    for (double& v : out) v += log_exact_mass_;
  } else {
    std::fill(out.begin(), out.end(), kNegInf);
  }
  if (grid_ || monte_carlo_) {
    for (std::size_t i = 0; i < out.size(); ++i) {
      const std::span<const double> x(points.data() + i * dim(), dim());
      const double v = grid_ ? grid_->value(x) : monte_carlo_->value(x);
      if (v > 0.0) out[i] = log_add(out[i], std::log(v));
    }
  }
}

IncrementDensity::Value IncrementDensity::operator()(std::span<const double> x) const {
  if (x.size() != dim()) throw InputError("increment dimension does not match model dimension");
  bool zero = true;
  for (double v : x) {
    if (!std::isfinite(v)) throw InputError("increment is not finite");
    zero = zero && v == 0.0;
  }
  if (zero) return {true, atom_mass_};
  return {false, std::exp(log_continuous(x))};
}

nlohmann::json IncrementDensity::metadata() const {
  nlohmann::json j;
  j["M"] = terms_;
  j["exact_terms"] = exact_terms_;
  j["tail_mass"] = tail_mass_;
  j["route"] = std::string(route_name(route()));
  j["prune_loss"] = prune_loss_;
  j["truncation_error_bound"] = truncation_error_bound();
  j["grid_lost_mass"] = grid_ ? grid_->lost_mass() : 0.0;
  return j;
}

double log_likelihood(const IncrementSample& sample, const IncrementDensity& density) {
  if (sample.size() > 0 && sample.dim != density.dim())
    throw InputError("sample dimension does not match model dimension");
  const double log_atom = -density.model().lambda * density.mesh();
  double total = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    total += sample.is_zero(i) ? log_atom : density.log_continuous(sample.at(i));
  }
  return total;
}

double log_likelihood(const IncrementSample& sample, const CppModel& model, DensityOptions options) {
  options.mesh = sample.mesh;
  return log_likelihood(sample, IncrementDensity(model, options));
}

double path_log_likelihood_ratio(const SamplePath& path, const CppModel& num, const CppModel& den) {
  if (num.dim() != den.dim() || num.dim() != path.dim) throw InputError("path and model dimensions differ");
  double total = 0.0;
  const double log_rate_ratio = std::log(num.lambda) - std::log(den.lambda);
  for (std::size_t j = 0; j < path.jump_count(); ++j) {
    const auto x = path.jump(j);
    total += log_rate_ratio + num.jumps.log_density(x) - den.jumps.log_density(x);
  }
  return total - (num.lambda - den.lambda) * path.horizon;
}

GriddedDensity density_grid(const IncrementDensity& density, const Grid& grid) {
  if (density.dim() > 2) throw UnsupportedError("density grids are supported for d <= 2 only");
  if (grid.dim != density.dim()) throw InputError("grid dimension does not match model dimension");
  GriddedDensity out{grid, std::vector<double>(grid.size()), 0.0};
  const auto points = grid.points();
  density.log_continuous_batch(points, out.values);
  for (double& v : out.values) v = std::exp(v);
  out.integral = grid.integrate(out.values);
  return out;
}

}  // namespace decompound
