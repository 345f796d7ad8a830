#pragma once

#include <functional>
#include <span>
#include <vector>

namespace decompound::stats {

double mean(std::span<const double> x);
double variance(std::span<const double> x);  // unbiased
double quantile(std::vector<double> x, double p);  // linear interpolation, type 7

/// Kolmogorov limiting survival function Q(t) = 2 sum_{k>=1} (-1)^{k-1} exp(-2 k^2 t^2).
double kolmogorov_survival(double t);

struct KsResult {
  double statistic;
  double p_value;
};
KsResult ks_one_sample(std::vector<double> sample, const std::function<double(double)>& cdf);
KsResult ks_two_sample(std::vector<double> a, std::vector<double> b);

/// Upper tail of the chi-square distribution.
double chi_square_survival(double statistic, double dof);

/// Geyer initial-positive-sequence effective sample size.
double effective_sample_size(std::span<const double> chain);
/// Standard error of the mean from non-overlapping batch means.
double batch_means_se(std::span<const double> chain, std::size_t batches = 50);
/// Potential scale reduction over chains of equal length.
double gelman_rubin(const std::vector<std::vector<double>>& chains);

/// Ordinary least squares slope and intercept.
struct LineFit {
  double slope;
  double intercept;
};
LineFit fit_line(std::span<const double> x, std::span<const double> y);

}  // namespace decompound::stats
