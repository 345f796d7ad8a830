#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <vector>

#include "decompound/error.hpp"
#include "decompound/metrics.hpp"
#include "decompound/posterior.hpp"
#include "decompound/simulate.hpp"
#include "decompound/stats.hpp"
#include "decompound/study.hpp"
#include "doctest.h"
#include "sampler_checks.hpp"

using namespace decompound;

namespace {

Posterior standard_posterior(std::size_t n, std::uint64_t seed) {
  Rng rng(seed, 0);
  const CppModel truth(1.0, NormalMixture::gaussian1d(0, 1));
  return Posterior(simulate_increments(truth, n, 1.0, rng), LambdaPrior{}, DpmPrior::defaults(1));
}

}  // namespace

TEST_CASE("chain initialization") {
  const Posterior zeros(IncrementSample(1, 1.0, std::vector<double>(5, 0.0)), LambdaPrior{}, DpmPrior::defaults(1));
  ChainConfig cfg;
  Rng rng(1, 0);
  const auto s0 = init_chain(zeros, cfg, rng);
  CHECK(s0.total_jumps() == 0);
  CHECK(s0.lambda == doctest::Approx(LambdaPrior{}.median()));

  const auto post = standard_posterior(30, 2);
  Rng a(3, 0), b(3, 0);
  const auto sa = init_chain(post, cfg, a), sb = init_chain(post, cfg, b);
  for (std::size_t i = 0; i < post.sample.size(); ++i) {
    const auto& inc = sa.latent[i];
    if (post.sample.is_zero(i)) {
      CHECK(inc.count == 0);
    } else {
      CHECK(inc.count == 1);
      CHECK(inc.jumps[0] == post.sample.at(i)[0]);
    }
  }
  CHECK(sa.log_post == sb.log_post);
  CHECK(sa.params.means[0] == sb.params.means[0]);

  cfg.initial_lambda = 7.0;
  CHECK_THROWS_AS(init_chain(post, cfg, rng), InputError);
  ChainConfig bad;
  bad.p_birth = 0.5;
  CHECK_THROWS_AS(bad.validate(), InputError);
}

namespace {

// Birth/death kernel on one increment whose jumps live on the lattice {-10..10}
// (r a discretized two-component mixture), with t capped at t_max by rejecting
// births. Returns the worst relative detailed-balance violation and, per t, the
// stationary mass of the kernel and the exact conditional P(T = t | Z = z).
struct LatticeResult {
  double worst_balance = 0.0;
  std::vector<double> chain, exact;
};

LatticeResult lattice_kernel(int z, int t_max) {
  constexpr int L = 10;
  std::vector<double> pmf(2 * L + 1);
  for (int v = -L; v <= L; ++v) {
    const double x = 0.3 * v;
    pmf[v + L] = 0.6 * std::exp(-0.5 * (x + 0.8) * (x + 0.8)) + 0.4 * std::exp(-0.5 * (x - 1.1) * (x - 1.1) / 0.5);
  }
  const double total = std::accumulate(pmf.begin(), pmf.end(), 0.0);
  for (double& p : pmf) p /= total;
  auto log_r = [&](int v) { return std::abs(v) > L ? -INFINITY : std::log(pmf[v + L]); };
  const double rate = 1.7;
  ChainConfig cfg;

  // a state is the list of free jumps; the residual is z minus their sum
  using State = std::vector<int>;
  auto residual = [&](const State& s) { return z - std::accumulate(s.begin(), s.end(), 0); };
  auto log_target = [&](const State& s) {
    const auto t = static_cast<double>(s.size() + 1);
    double lp = t * std::log(rate) - std::lgamma(t + 1.0) + log_r(residual(s));
    for (int y : s) lp += log_r(y);
    return lp;
  };
  std::vector<State> states{{}};
  for (std::size_t k = 0; k < states.size(); ++k) {
    if (static_cast<int>(states[k].size()) + 1 >= t_max) continue;
    for (int y = -L; y <= L; ++y) {
      State n = states[k];
      n.push_back(y);
      if (std::isfinite(log_target(n))) states.push_back(n);
    }
  }
  std::map<State, std::size_t> index;
  for (std::size_t i = 0; i < states.size(); ++i) index[states[i]] = i;

  LatticeResult out;
  std::vector<std::vector<std::pair<std::size_t, double>>> kernel(states.size());
  for (std::size_t i = 0; i < states.size(); ++i) {
    const State& s = states[i];
    const std::size_t t = s.size() + 1;
    double stay = 1.0;
    if (static_cast<int>(t) < t_max) {
      for (int y = -L; y <= L; ++y) {
        State n = s;
        n.push_back(y);
        const double la = birth_log_acceptance(rate, t, log_r(residual(n)), log_r(residual(s)), cfg);
        const double p = cfg.p_birth * pmf[y + L] * std::min(1.0, std::exp(la));
        if (p == 0.0) continue;
        kernel[i].push_back({index.at(n), p});
        stay -= p;
        const double ld = death_log_acceptance(rate, t + 1, log_r(residual(s)), log_r(residual(n)), cfg);
        const double back = cfg.p_death * std::min(1.0, std::exp(ld));
        const double lhs = std::exp(log_target(s)) * p, rhs = std::exp(log_target(n)) * back;
        out.worst_balance = std::max(out.worst_balance, std::abs(lhs - rhs) / std::max(lhs, rhs));
      }
    }
    if (t >= 2) {
      const State n(s.begin(), s.end() - 1);
      const double ld = death_log_acceptance(rate, t, log_r(residual(n)), log_r(residual(s)), cfg);
      const double p = cfg.p_death * std::min(1.0, std::exp(ld));
      REQUIRE(p > 0.0);  // every state can step down, so the kernel is irreducible
      kernel[i].push_back({index.at(n), p});
      stay -= p;
    }
    kernel[i].push_back({i, stay});
  }

  std::vector<double> pi(states.size(), 0.0), next(states.size());
  pi[0] = 1.0;
  for (int it = 0; it < 5000; ++it) {
    std::fill(next.begin(), next.end(), 0.0);
    for (std::size_t i = 0; i < states.size(); ++i)
      for (auto [j, p] : kernel[i]) next[j] += pi[i] * p;
    pi.swap(next);
  }
  out.chain.assign(t_max + 1, 0.0);
  for (std::size_t i = 0; i < states.size(); ++i) out.chain[states[i].size() + 1] += pi[i];

  // rate^t / t! pmf^{*t}(z), normalized over t = 1..t_max
  out.exact.assign(t_max + 1, 0.0);
  std::vector<double> power(pmf);
  int offset = L;  // value v sits at index v + offset
  double norm = 0.0;
  for (int t = 1; t <= t_max; ++t) {
    if (t > 1) {
      std::vector<double> conv(power.size() + pmf.size() - 1, 0.0);
      for (std::size_t a = 0; a < power.size(); ++a)
        for (std::size_t b = 0; b < pmf.size(); ++b) conv[a + b] += power[a] * pmf[b];
      power.swap(conv);
      offset += L;
    }
    const int at = z + offset;
    out.exact[t] = at >= 0 && at < static_cast<int>(power.size()) ? std::pow(rate, t) / std::tgamma(t + 1.0) * power[at] : 0.0;
    norm += out.exact[t];
  }
  for (double& e : out.exact) e /= norm;
  return out;
}

}  // namespace

TEST_CASE("birth and death satisfy detailed balance on a lattice") {
  // z = 0 keeps every residual on the lattice up to t = 3; z = 4 up to t = 2
  for (auto [z, t_max] : {std::pair{0, 3}, std::pair{4, 2}, std::pair{-2, 2}}) {
    const auto r = lattice_kernel(z, t_max);
    CHECK(r.worst_balance < 1e-12);
    for (int t = 1; t <= t_max; ++t) {
      INFO("z = " << z << ", t = " << t);
      CHECK(r.chain[t] == doctest::Approx(r.exact[t]).epsilon(1e-9));
    }
  }
}

TEST_CASE("relocation is its own inverse and keeps the sum") {
  LatentIncrement inc;
  inc.count = 4;
  inc.jumps = {0.3, -1.2, 0.5, 0.0, 2.0, 1.0, 0.0, 0.0};
  inc.labels = {0, 0, 0, 0};
  const std::vector<double> z{1.7, 0.4};
  inc.jumps[6] = z[0] - (0.3 + 0.5 + 2.0);
  inc.jumps[7] = z[1] - (-1.2 + 0.0 + 1.0);
  const auto original = inc.jumps;
  Rng rng(5, 0);
  for (int rep = 0; rep < 100; ++rep) {
    const std::size_t a = rep % 3, b = a + 1 + rep % (3 - a);
    const std::vector<double> step{rng.normal(), rng.normal()};
    const std::vector<double> mirrored{-step[0], -step[1]};
    apply_relocation(inc, z, a, b, step);
    for (std::size_t c = 0; c < 2; ++c) {
      double s = 0.0;
      for (std::size_t j = 0; j < 4; ++j) s += inc.jumps[j * 2 + c];
      CHECK(std::abs(s - z[c]) < 1e-9);
    }
    apply_relocation(inc, z, a, b, mirrored);
    for (std::size_t k = 0; k < original.size(); ++k) CHECK(std::abs(inc.jumps[k] - original[k]) < 1e-12);
  }
  CHECK_THROWS_AS(apply_relocation(inc, z, 2, 1, std::vector<double>{0, 0}), InputError);
  CHECK_THROWS_AS(apply_relocation(inc, z, 0, 4, std::vector<double>{0, 0}), InputError);
}

TEST_CASE("latent moves preserve the sum constraint") {
  const auto post = standard_posterior(60, 6);
  ChainConfig cfg;
  Rng rng(7, 0);
  auto state = init_chain(post, cfg, rng);
  for (int it = 0; it < 500; ++it) {
    update_latent(state, post, cfg, rng);
    update_lambda(state, post, rng);
    update_mixture(state, post, rng);
  }
  CHECK(state.total_jumps() > 0);
  for (std::size_t i = 0; i < post.sample.size(); ++i) {
    const auto& inc = state.latent[i];
    if (post.sample.is_zero(i)) {
      CHECK(inc.count == 0);
      continue;
    }
    const double s = std::accumulate(inc.jumps.begin(), inc.jumps.end(), 0.0);
    CHECK(std::abs(s - post.sample.at(i)[0]) < 1e-9);
    for (int label : inc.labels) CHECK((label >= 0 && label < post.dpm_prior.truncation));
  }
}

TEST_CASE("lambda conditional") {
  const LambdaPrior uniform{};
  // S = 0, n = 100: truncated exponential
  Rng rng(8, 0);
  std::vector<double> draws;
  double x = 1.0;
  for (int i = 0; i < 10000; ++i) {
    x = sample_lambda_conditional(x, 0, 100, 1.0, uniform, rng);
    draws.push_back(x);
  }
  for (double p : {0.1, 0.5, 0.9}) {
    const double exact = uniform.lo - std::log(1.0 - p * (1.0 - std::exp(-100.0 * (uniform.hi - uniform.lo)))) / 100.0;
    CHECK(std::abs(stats::quantile(draws, p) - exact) < 0.004);
  }

  // S = 50, n = 50: mode at 1
  std::vector<double> hist(40, 0.0);
  for (int i = 0; i < 100000; ++i) {
    x = sample_lambda_conditional(x, 50, 50, 1.0, uniform, rng);
    REQUIRE((x >= uniform.lo && x <= uniform.hi));
    const int b = static_cast<int>((x - 0.5) / 0.025);
    if (b >= 0 && b < 40) hist[b] += 1;
  }
  const auto peak = std::max_element(hist.begin(), hist.end()) - hist.begin();
  CHECK(std::abs(0.5 + 0.025 * (peak + 0.5) - 1.0) <= 0.05);

  const auto chi = checks::lambda_conditional_chi_square(37, 25, LambdaPrior::uniform(0.5, 2.0), 10000, 5, 20, 9);
  CHECK(chi.p_value > 0.01);
}

TEST_CASE("mixture update on fixed latents") {
  Rng data(10, 0);
  std::vector<double> z(500);
  for (double& v : z) v = 3.0 + data.normal();
  const Posterior post(IncrementSample(1, 1.0, z), LambdaPrior{}, DpmPrior::defaults(1));
  ChainConfig cfg;
  Rng rng(11, 0);
  auto state = init_chain(post, cfg, rng);
  double acc = 0.0;
  int kept = 0;
  for (int it = 0; it < 2000; ++it) {
    update_mixture(state, post, rng);
    for (const auto& inc : state.latent)
      for (int label : inc.labels) REQUIRE(state.params.weights[label] > 0.0);
    if (it >= 200) acc += state.mixture.mean()(0), ++kept;
  }
  CHECK(std::abs(acc / kept - 3.0) < 0.1);

  // with no data the update is a prior draw
  const Posterior empty(IncrementSample(1, 1.0, {}), LambdaPrior{}, DpmPrior::defaults(1));
  auto es = init_chain(empty, cfg, rng);
  std::vector<double> first_means;
  for (int it = 0; it < 20000; ++it) {
    update_mixture(es, empty, rng);
    first_means.push_back(es.params.means[0](0));
  }
  CHECK(std::abs(stats::mean(first_means)) < 4.0 * 2.0 / std::sqrt(20000.0));
  CHECK(stats::variance(first_means) == doctest::Approx(4.0).epsilon(0.05));
}

TEST_CASE("Geweke joint distribution test") {
  const auto z = checks::geweke_test(2024, 20000, 100000);
  for (const auto& s : z) {
    INFO(s.name << " forward " << s.forward_mean << " chain " << s.chain_mean << " z " << s.z);
    CHECK(std::abs(s.z) < 4.0);
  }
}

TEST_CASE("no data reproduces the prior") {
  const Posterior empty(IncrementSample(1, 1.0, {}), LambdaPrior{}, DpmPrior::defaults(1));
  ChainConfig cfg;
  cfg.iterations = 11000;
  cfg.burn_in = 1000;
  cfg.thin = 1;
  const auto out = run_chain(empty, cfg);
  std::vector<double> lambdas;
  for (const auto& s : out.states) lambdas.push_back(s.lambda);
  REQUIRE(lambdas.size() == 10000);
  const LambdaPrior prior{};
  CHECK(stats::ks_one_sample(lambdas, [&](double t) { return prior.cdf(t); }).p_value > 0.01);
}

TEST_CASE("all-zero data pull lambda down") {
  const Posterior zeros(IncrementSample(1, 1.0, std::vector<double>(20, 0.0)), LambdaPrior{}, DpmPrior::defaults(1));
  ChainConfig cfg;
  cfg.iterations = 6000;
  cfg.burn_in = 1000;
  cfg.thin = 1;
  const auto out = run_chain(zeros, cfg);
  std::vector<double> l;
  for (const auto& s : out.states) l.push_back(s.lambda);
  const double se = stats::batch_means_se(l);
  CHECK(stats::mean(l) < LambdaPrior{}.mean() - 3.0 * se);
  // exact conditional: exponential(20) truncated to [0.1, 5]
  CHECK(std::abs(stats::mean(l) - 0.15) < 4.0 * se + 1e-3);
}

TEST_CASE("data permutation does not change the chain") {
  Rng rng(12, 0);
  const CppModel truth(1.0, NormalMixture::gaussian1d(0, 1));
  auto sample = simulate_increments(truth, 40, 1.0, rng);
  auto shuffled = sample;
  std::reverse(shuffled.z.begin(), shuffled.z.end());
  ChainConfig cfg;
  cfg.iterations = 300;
  cfg.burn_in = 100;
  cfg.thin = 5;
  const auto a = run_chain(Posterior(sample, LambdaPrior{}, DpmPrior::defaults(1)), cfg);
  const auto b = run_chain(Posterior(shuffled, LambdaPrior{}, DpmPrior::defaults(1)), cfg);
  CHECK(a.lambda_trace == b.lambda_trace);
  CHECK(posterior_mean_lambda(a) == posterior_mean_lambda(b));
}

TEST_CASE("posterior mean density summaries") {
  ChainOutput out;
  const auto m = NormalMixture::gaussian1d(0.5, 2.0);
  out.states.push_back({1, 1.0, 0, m, 0.0});
  const auto g = Grid::line(-12, 12, 2401);
  const auto band = posterior_mean_density(out, g);
  const auto pts = g.points();
  for (std::size_t i = 0; i < pts.size(); i += 100) {
    CHECK(band.mean[i] == doctest::Approx(m.density(std::span<const double>(&pts[i], 1))).epsilon(1e-12));
    CHECK(band.lower[i] == band.mean[i]);
  }
  out.states.push_back({2, 1.0, 0, NormalMixture::gaussian1d(-1.0, 0.5), 0.0});
  const auto two = posterior_mean_density(out, g);
  CHECK(std::abs(g.integrate(two.mean) - 1.0) < 1e-4);
  CHECK_THROWS_AS(posterior_mean_density(ChainOutput{}, g), InputError);
}

TEST_CASE("chains from overdispersed starts agree" * doctest::timeout(600)) {
  const auto post = standard_posterior(200, 13);
  std::vector<std::vector<double>> traces;
  for (double start : {0.2, 4.5}) {
    ChainConfig cfg;
    cfg.initial_lambda = start;
    cfg.stream = traces.size();
    const auto out = run_chain(post, cfg);
    std::vector<double> l;
    for (const auto& s : out.states) l.push_back(s.lambda);
    traces.push_back(l);
  }
  const double rhat = stats::gelman_rubin(traces);
  INFO("R-hat " << rhat);
  CHECK(rhat < 1.1);
}

TEST_CASE("posterior mean density recovers the truth at n = 800" * doctest::timeout(900)) {
  const auto post = standard_posterior(800, 14);
  ChainConfig cfg;
  cfg.seed = 14;
  const auto out = run_chain(post, cfg);
  const auto truth = NormalMixture::gaussian1d(0, 1);
  const auto grid = study_grid(truth, 801);
  const auto band = posterior_mean_density(out, grid);
  const double h = hellinger_gridded(truth, grid, band.mean);
  INFO("h = " << h << ", lambda = " << posterior_mean_lambda(out));
  CHECK(h < 0.15);
  CHECK(std::abs(posterior_mean_lambda(out) - 1.0) < 0.15);
}
