#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "decompound/metrics.hpp"
#include "decompound/posterior.hpp"
#include "decompound/prior.hpp"
#include "json.hpp"

namespace decompound {

/// Runs body(0..count-1) on up to `threads` workers. Results must be written
/// to per-index slots so the outcome does not depend on scheduling.
void parallel_for(std::size_t count, std::size_t threads, const std::function<void(std::size_t)>& body);

/// Random pair for certification sweeps: intensities uniform on the range,
/// r0 a Gaussian with random location and scale, r a shifted and rescaled Gaussian.
std::pair<CppModel, CppModel> random_model_pair(std::size_t dim, LambdaRange range, Rng& rng);

struct SweepPair {
  CppModel model0;
  CppModel model;
  LemmaOneReport lemma;
  DataProcessingReport data_processing;
};

/// Pair i draws from Rng(seed).substream(i).
std::vector<SweepPair> certification_sweep(std::size_t count, std::size_t dim, std::uint64_t seed,
                                           const MetricOptions& options, LambdaRange range, std::size_t threads);

struct RateStudyConfig {
  CppModel truth = CppModel(1.0, NormalMixture::gaussian1d(0.0, 1.0));
  double mesh = 1.0;
  std::vector<std::size_t> sizes{50, 200, 800};
  std::size_t replicates = 5;
  std::uint64_t seed = 1;
  ChainConfig chain{};
  std::optional<PriorConfig> prior;  // defaults for the truth's dimension when absent
  /// Grid nodes per axis for the posterior-mean density; 0 picks 801 (d = 1) or 101 (d = 2).
  std::size_t grid_points = 0;

  nlohmann::json to_json() const;
};

struct RateStudyRow {
  std::size_t n;
  std::size_t replicate;
  double hellinger;
  double lambda_mean;
  double lambda_error;
  double ess_lambda;
};

struct RateStudyResult {
  std::vector<RateStudyRow> rows;  // ordered by (n, replicate)
  std::vector<double> median_hellinger;  // parallel to config.sizes
  std::vector<double> median_lambda_error;
  std::optional<double> slope;  // log-log slope of median Hellinger error vs n
  bool strictly_decreasing = false;

  nlohmann::json summary(const RateStudyConfig& config) const;
};

/// Grid covering the truth's jump density by 8 sd on every side.
Grid study_grid(const NormalMixture& truth, std::size_t points_per_axis);

RateStudyResult run_rate_study(const RateStudyConfig& config, std::size_t threads);

}  // namespace decompound
