#pragma once

// Sampler audits shared by the unit tests and the acceptance runner.

#include <algorithm>
#include <array>
#include <boost/math/special_functions/gamma.hpp>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "decompound/posterior.hpp"
#include "decompound/stats.hpp"

namespace checks {

using namespace decompound;

struct GewekeStat {
  std::string name;
  double forward_mean;
  double chain_mean;
  double z;
};

struct MicroModel {
  std::size_t n = 3;
  LambdaPrior lambda = LambdaPrior::uniform(0.5, 2.0);
  DpmPrior dpm = [] {
    auto p = DpmPrior::defaults(1);
    p.truncation = 3;
    return p;
  }();
};

struct JointDraw {
  double lambda;
  MixtureParams params;
  std::vector<LatentIncrement> latent;
  std::vector<double> z;
};

inline void simulate_given_params(JointDraw& draw, const MicroModel& micro, Rng& rng) {
  const NormalMixture r = draw.params.to_mixture();
  const auto& w = draw.params.weights;
  draw.latent.assign(micro.n, {});
  draw.z.assign(micro.n, 0.0);
  for (std::size_t i = 0; i < micro.n; ++i) {
    auto& inc = draw.latent[i];
    inc.count = rng.poisson(draw.lambda);
    double sum = 0.0;
    for (std::size_t j = 0; j < inc.count; ++j) {
      const std::size_t k = rng.categorical(w);
      const double y = draw.params.means[k](0) + std::sqrt(draw.params.sigma(0, 0)) * rng.normal();
      inc.jumps.push_back(y);
      inc.labels.push_back(static_cast<int>(k));
      sum += y;
    }
    draw.z[i] = sum;
    if (inc.count > 0) inc.jumps.back() = sum - std::accumulate(inc.jumps.begin(), inc.jumps.end() - 1, 0.0);
  }
}

inline std::array<double, 10> geweke_statistics(const JointDraw& d) {
  const auto& p = d.params;
  double mix_mean = 0.0, jumps = 0.0, atan_sq = 0.0, zeros = 0.0;
  for (std::size_t k = 0; k < p.weights.size(); ++k) mix_mean += p.weights[k] * p.means[k](0);
  for (const auto& inc : d.latent) jumps += static_cast<double>(inc.count);
  for (double z : d.z) {
    atan_sq += std::atan(z) * std::atan(z);
    zeros += z == 0.0;
  }
  const double s2 = p.sigma(0, 0);
  return {d.lambda, d.lambda * d.lambda, std::log(s2), 1.0 / s2, p.weights[0], mix_mean, p.means[0](0), jumps, atan_sq,
          zeros};
}

inline const std::array<const char*, 10> kGewekeNames = {
    "lambda", "lambda^2", "log sigma^2", "1/sigma^2", "w1", "mixture mean", "mu1", "jump count", "sum atan(z)^2",
    "zero count"};

/// Marginal-conditional draws against successive-conditional draws.
inline std::vector<GewekeStat> geweke_test(std::uint64_t seed, std::size_t forward_draws, std::size_t chain_iters) {
  const MicroModel micro;
  ChainConfig config;
  std::vector<std::array<double, 10>> forward, chain;

  Rng frng(seed, 1);
  for (std::size_t s = 0; s < forward_draws; ++s) {
    JointDraw d{micro.lambda.sample(frng), sample_prior_params(micro.dpm, frng), {}, {}};
    simulate_given_params(d, micro, frng);
    forward.push_back(geweke_statistics(d));
  }

  Rng rng(seed, 2);
  JointDraw d{micro.lambda.sample(rng), sample_prior_params(micro.dpm, rng), {}, {}};
  for (std::size_t s = 0; s < chain_iters; ++s) {
    simulate_given_params(d, micro, rng);
    Posterior post(IncrementSample(1, 1.0, d.z), micro.lambda, micro.dpm);
    // the posterior holds the data sorted; carry the latents along
    std::vector<std::size_t> order(micro.n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return d.z[a] < d.z[b]; });
    std::vector<LatentIncrement> latent(micro.n);
    for (std::size_t i = 0; i < micro.n; ++i) latent[i] = d.latent[order[i]];
    ChainState state{d.lambda, d.params, d.params.to_mixture(), std::move(latent), 0.0};
    update_latent(state, post, config, rng);
    update_lambda(state, post, rng);
    update_mixture(state, post, rng);
    d.lambda = state.lambda;
    d.params = state.params;
    d.latent = state.latent;
    d.z = post.sample.z;
    chain.push_back(geweke_statistics(d));
  }

  std::vector<GewekeStat> out;
  for (std::size_t k = 0; k < 10; ++k) {
    std::vector<double> f(forward.size()), c(chain.size());
    for (std::size_t s = 0; s < f.size(); ++s) f[s] = forward[s][k];
    for (std::size_t s = 0; s < c.size(); ++s) c[s] = chain[s][k];
    const double fm = stats::mean(f), cm = stats::mean(c);
    const double se_f2 = stats::variance(f) / static_cast<double>(f.size());
    const double se_c = stats::batch_means_se(c, 100);
    out.push_back({kGewekeNames[k], fm, cm, (cm - fm) / std::sqrt(se_f2 + se_c * se_c)});
  }
  return out;
}

struct ChiSquareResult {
  double statistic;
  double p_value;
  std::size_t bins;
};

/// Slice-sampler draws of lambda at frozen (S, n) against the truncated
/// Gamma(S + 1, n) law, binned at its equiprobable quantiles.
inline ChiSquareResult lambda_conditional_chi_square(std::size_t jumps, std::size_t n, const LambdaPrior& prior,
                                                      std::size_t draws, std::size_t thin, std::size_t bins,
                                                      std::uint64_t seed) {
  const double shape = static_cast<double>(jumps) + 1.0, rate = static_cast<double>(n);
  const double f_lo = boost::math::gamma_p(shape, rate * prior.lo), f_hi = boost::math::gamma_p(shape, rate * prior.hi);
  std::vector<double> edges;
  for (std::size_t b = 1; b < bins; ++b) {
    const double p = f_lo + (f_hi - f_lo) * static_cast<double>(b) / static_cast<double>(bins);
    edges.push_back(boost::math::gamma_p_inv(shape, p) / rate);
  }
  Rng rng(seed, 0);
  double x = prior.median();
  std::vector<double> counts(bins, 0.0);
  for (std::size_t s = 0; s < draws; ++s) {
    for (std::size_t t = 0; t < thin; ++t) x = sample_lambda_conditional(x, jumps, n, 1.0, prior, rng);
    const auto bin = static_cast<std::size_t>(std::upper_bound(edges.begin(), edges.end(), x) - edges.begin());
    counts[bin] += 1.0;
  }
  const double expected = static_cast<double>(draws) / static_cast<double>(bins);
  double chi = 0.0;
  for (double c : counts) chi += (c - expected) * (c - expected) / expected;
  return {chi, stats::chi_square_survival(chi, static_cast<double>(bins - 1)), bins};
}

}  // namespace checks
