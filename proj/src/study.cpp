#include "decompound/study.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

#include "decompound/stats.hpp"

namespace decompound {

void parallel_for(std::size_t count, std::size_t threads, const std::function<void(std::size_t)>& body) {
  threads = std::max<std::size_t>(1, std::min(threads, count));
  if (threads == 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> workers;
  for (std::size_t t = 0; t < threads; ++t) {
    workers.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          body(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& w : workers) w.join();
  if (failure) std::rethrow_exception(failure);
}

std::pair<CppModel, CppModel> random_model_pair(std::size_t dim, LambdaRange range, Rng& rng) {
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * rng.uniform(); };
  const double lambda0 = uniform(range.lo, range.hi);
  const double lambda = uniform(range.lo, range.hi);
  Vector mu0(dim), mu(dim);
  Matrix cov0 = Matrix::Zero(dim, dim), cov = Matrix::Zero(dim, dim);
  for (std::size_t a = 0; a < dim; ++a) {
    mu0(a) = uniform(-1.0, 1.0);
    mu(a) = mu0(a) + uniform(-1.5, 1.5);
    cov0(a, a) = uniform(0.5, 2.0);
    cov(a, a) = uniform(0.5, 2.0);
  }
  if (dim == 2) {
    const double rho0 = uniform(-0.5, 0.5), rho = uniform(-0.5, 0.5);
    cov0(0, 1) = cov0(1, 0) = rho0 * std::sqrt(cov0(0, 0) * cov0(1, 1));
    cov(0, 1) = cov(1, 0) = rho * std::sqrt(cov(0, 0) * cov(1, 1));
  }
  return {CppModel(lambda0, NormalMixture::gaussian(mu0, cov0)), CppModel(lambda, NormalMixture::gaussian(mu, cov))};
}

std::vector<SweepPair> certification_sweep(std::size_t count, std::size_t dim, std::uint64_t seed,
                                           const MetricOptions& options, LambdaRange range, std::size_t threads) {
  std::vector<std::optional<SweepPair>> slots(count);
  const Rng root(seed, 0);
  parallel_for(count, threads, [&](std::size_t i) {
    Rng rng = root.substream(i);
    auto [m0, m] = random_model_pair(dim, range, rng);
    auto lemma = check_lemma1(m0, m, options, range);
    auto dp = check_data_processing(m0, m, options);
    slots[i].emplace(SweepPair{std::move(m0), std::move(m), std::move(lemma), std::move(dp)});
  });
  std::vector<SweepPair> out;
  out.reserve(count);
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

nlohmann::json RateStudyConfig::to_json() const {
  const auto p = prior ? *prior : default_prior_config(truth.dim());
  return {{"truth", model_to_json(truth)},
          {"mesh", mesh},
          {"sizes", sizes},
          {"replicates", replicates},
          {"seed", seed},
          {"chain", chain_config_to_json(chain)},
          {"prior", prior_config_to_json(p)},
          {"grid_points", grid_points}};
}

Grid study_grid(const NormalMixture& truth, std::size_t points_per_axis) {
  const double sd = truth.max_axis_sd();
  double lo = 0.0, hi = 0.0;
  bool first = true;
  for (const auto& mu : truth.means()) {
    for (Eigen::Index a = 0; a < mu.size(); ++a) {
      lo = first ? mu(a) : std::min(lo, mu(a));
      hi = first ? mu(a) : std::max(hi, mu(a));
      first = false;
    }
  }
  lo -= 8.0 * sd;
  hi += 8.0 * sd;
  if (truth.dim() == 1) return Grid::line(lo, hi, points_per_axis ? points_per_axis : 801);
  if (truth.dim() == 2) return Grid::square(lo, hi, points_per_axis ? points_per_axis : 101);
  throw UnsupportedError("the rate study evaluates densities on a grid and supports d <= 2 only");
}

RateStudyResult run_rate_study(const RateStudyConfig& config, std::size_t threads) {
  if (config.sizes.empty()) throw InputError("rate study needs at least one sample size");
  if (config.replicates < 1) throw InputError("rate study needs at least one replicate");
  for (std::size_t n : config.sizes)
    if (n < 1) throw InputError("sample sizes must be positive");
  config.chain.validate();
  const auto prior = config.prior ? *config.prior : default_prior_config(config.truth.dim());
  const Grid grid = study_grid(config.truth.jumps, config.grid_points);
  const std::size_t jobs = config.sizes.size() * config.replicates;
  std::vector<RateStudyRow> rows(jobs);
  const Rng root(config.seed, 0);
  parallel_for(jobs, threads, [&](std::size_t job) {
    const std::size_t n = config.sizes[job / config.replicates];
    const std::size_t rep = job % config.replicates;
    // data and chain streams depend on (n, replicate) only
    Rng data_rng = root.substream(mix64(n) ^ rep);
    const auto sample = simulate_increments(config.truth, n, config.mesh, data_rng);
    Posterior post(sample, prior.lambda, prior.dpm);
    ChainConfig chain = config.chain;
    chain.seed = mix64(config.seed ^ mix64(n));
    chain.stream = rep;
    const auto out = run_chain(post, chain);
    const auto band = posterior_mean_density(out, grid);
    const double lambda_mean = posterior_mean_lambda(out);
    rows[job] = {n, rep, hellinger_gridded(config.truth.jumps, grid, band.mean), lambda_mean,
                 std::abs(lambda_mean - config.truth.lambda), out.ess_lambda};
  });

  RateStudyResult result;
  result.rows = rows;
  for (std::size_t s = 0; s < config.sizes.size(); ++s) {
    std::vector<double> h, le;
    for (std::size_t r = 0; r < config.replicates; ++r) {
      h.push_back(rows[s * config.replicates + r].hellinger);
      le.push_back(rows[s * config.replicates + r].lambda_error);
    }
    result.median_hellinger.push_back(stats::quantile(h, 0.5));
    result.median_lambda_error.push_back(stats::quantile(le, 0.5));
  }
  result.strictly_decreasing = true;
  for (std::size_t s = 1; s < config.sizes.size(); ++s) {
    if (!(config.sizes[s] > config.sizes[s - 1]) || !(result.median_hellinger[s] < result.median_hellinger[s - 1]))
      result.strictly_decreasing = false;
  }
  if (config.sizes.size() >= 2) {
    std::vector<double> x, y;
    for (std::size_t s = 0; s < config.sizes.size(); ++s) {
      x.push_back(std::log(static_cast<double>(config.sizes[s])));
      y.push_back(std::log(result.median_hellinger[s]));
    }
    result.slope = stats::fit_line(x, y).slope;
  }
  return result;
}

nlohmann::json RateStudyResult::summary(const RateStudyConfig& config) const {
  nlohmann::json per_n = nlohmann::json::array();
  for (std::size_t s = 0; s < config.sizes.size(); ++s) {
    per_n.push_back({{"n", config.sizes[s]},
                     {"median_hellinger", median_hellinger[s]},
                     {"median_lambda_error", median_lambda_error[s]}});
  }
  return {{"config", config.to_json()},
          {"per_n", per_n},
          {"slope", slope ? nlohmann::json(*slope) : nlohmann::json(nullptr)},
          {"strictly_decreasing", strictly_decreasing}};
}

}  // namespace decompound
