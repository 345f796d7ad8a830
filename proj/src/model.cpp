#include "decompound/model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>

#include "decompound/error.hpp"

namespace decompound {

namespace {

constexpr double kLogTwoPi = 1.8378770664093454836;

bool nearly_equal(double a, double b, double rel) {
  return std::abs(a - b) <= rel * std::max({1.0, std::abs(a), std::abs(b)});
}

bool same_matrix(const Matrix& a, const Matrix& b, double rel) {
  for (Eigen::Index i = 0; i < a.size(); ++i)
    if (!nearly_equal(a.data()[i], b.data()[i], rel)) return false;
  return true;
}

}  // namespace

NormalMixture::NormalMixture(std::vector<double> weights, std::vector<Vector> means, std::vector<Matrix> covariances,
                             bool shared_sigma)
    : shared_(shared_sigma), weights_(std::move(weights)), means_(std::move(means)), covs_(std::move(covariances)) {
  validate_and_factor();
}

NormalMixture NormalMixture::gaussian(const Vector& mean, const Matrix& covariance) {
  return NormalMixture({1.0}, {mean}, {covariance}, true);
}

NormalMixture NormalMixture::shared(std::vector<double> weights, std::vector<Vector> means, const Matrix& sigma) {
  return NormalMixture(std::move(weights), std::move(means), {sigma}, true);
}

NormalMixture NormalMixture::gaussian1d(double mean, double variance) {
  return gaussian(Vector::Constant(1, mean), Matrix::Constant(1, 1, variance));
}

void NormalMixture::validate_and_factor() {
  if (weights_.empty()) throw InputError("mixture has no components");
  if (means_.size() != weights_.size()) throw InputError("mixture weights and means differ in length");
  if (shared_ ? covs_.size() != 1 : covs_.size() != weights_.size())
    throw InputError("mixture covariance count does not match components");
  dim_ = static_cast<std::size_t>(means_.front().size());
  if (dim_ == 0) throw InputError("mixture dimension must be positive");

  double total = 0.0;
  for (double w : weights_) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw InputError("mixture weights must be finite and nonnegative");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    std::ostringstream msg;
    msg << "mixture weights sum to " << total << ", expected 1";
    throw InputError(msg.str());
  }
  for (const auto& mu : means_) {
    if (static_cast<std::size_t>(mu.size()) != dim_) throw InputError("mixture means differ in dimension");
    if (!mu.allFinite()) throw InputError("mixture mean is not finite");
  }

  // drop negligible components
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < weights_.size(); ++i)
    if (weights_[i] >= kMinWeight) keep.push_back(i);
  if (keep.empty()) throw InputError("every mixture weight is below the minimum");
  if (keep.size() != weights_.size()) {
    std::vector<double> w;
    std::vector<Vector> mu;
    std::vector<Matrix> cov;
    for (std::size_t i : keep) {
      w.push_back(weights_[i]);
      mu.push_back(std::move(means_[i]));
      if (!shared_) cov.push_back(std::move(covs_[i]));
    }
    weights_ = std::move(w);
    means_ = std::move(mu);
    if (!shared_) covs_ = std::move(cov);
  }
  const double kept = std::accumulate(weights_.begin(), weights_.end(), 0.0);
  for (double& w : weights_) w /= kept;

  chol_.clear();
  chol_.reserve(covs_.size());
  for (auto& cov : covs_) {
    if (cov.rows() != static_cast<Eigen::Index>(dim_) || cov.cols() != static_cast<Eigen::Index>(dim_))
      throw InputError("covariance has wrong shape");
    if (!cov.allFinite()) throw InputError("covariance is not finite");
    const double scale = std::max(1.0, cov.cwiseAbs().maxCoeff());
    if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) throw InputError("covariance is not symmetric");
    cov = 0.5 * (cov + cov.transpose());
    Eigen::LLT<Matrix> llt(cov);
    if (llt.info() != Eigen::Success) throw InputError("covariance is not positive definite");
    Matrix lower = llt.matrixL();
    for (std::size_t i = 0; i < dim_; ++i)
      if (!(lower(i, i) > 0.0)) throw InputError("covariance is not positive definite");
    chol_.push_back(std::move(lower));
  }

  cumulative_.resize(weights_.size());
  std::partial_sum(weights_.begin(), weights_.end(), cumulative_.begin());

  table_ = kernels::ComponentTable(dim_, weights_.size());
  std::vector<Matrix> inverses;
  std::vector<double> log_dets;
  for (const auto& lower : chol_) {
    inverses.push_back(lower.triangularView<Eigen::Lower>().solve(Matrix::Identity(dim_, dim_)));
    log_dets.push_back(lower.diagonal().array().log().sum());
  }
  for (std::size_t k = 0; k < weights_.size(); ++k) {
    const std::size_t c = shared_ ? 0 : k;
    table_.log_coef[k] = std::log(weights_[k]) - 0.5 * static_cast<double>(dim_) * kLogTwoPi - log_dets[c];
    for (std::size_t i = 0; i < dim_; ++i) {
      table_.mean_at(i, k) = means_[k](i);
      for (std::size_t j = 0; j <= i; ++j) table_.chol_at(i, j, k) = inverses[c](i, j);
    }
  }
}

double NormalMixture::log_density(std::span<const double> x) const {
  if (x.size() != dim_) throw InputError("point dimension does not match mixture dimension");
  return kernels::log_density(table_, x.data());
}

double NormalMixture::density(std::span<const double> x) const { return std::exp(log_density(x)); }

void NormalMixture::log_density_batch(std::span<const double> points, std::span<double> out) const {
  if (points.size() != out.size() * dim_) throw InputError("batch shape does not match mixture dimension");
  kernels::log_density_batch(table_, points, out);
}

void NormalMixture::component_log_terms(std::span<const double> x, std::span<double> out) const {
  const auto& t = table_;
  for (std::size_t k = 0; k < t.count; ++k) {
    double maha = 0.0;
    for (std::size_t i = 0; i < dim_; ++i) {
      double u = 0.0;
      for (std::size_t j = 0; j <= i; ++j) u += t.chol_at(i, j, k) * (x[j] - t.mean_at(j, k));
      maha += u * u;
    }
    out[k] = t.log_coef[k] - 0.5 * maha;
  }
}

Vector NormalMixture::mean() const {
  Vector m = Vector::Zero(dim_);
  for (std::size_t k = 0; k < size(); ++k) m += weights_[k] * means_[k];
  return m;
}

Matrix NormalMixture::covariance() const {
  const Vector m = mean();
  Matrix c = Matrix::Zero(dim_, dim_);
  for (std::size_t k = 0; k < size(); ++k) {
    const Vector diff = means_[k] - m;
    c += weights_[k] * (covariance(k) + diff * diff.transpose());
  }
  return c;
}

double NormalMixture::density_upper_bound() const {
  double bound = 0.0;
  for (std::size_t k = 0; k < size(); ++k) bound += std::exp(table_.log_coef[k]);
  return bound;
}

double NormalMixture::max_axis_sd() const {
  double sd = 0.0;
  for (const auto& c : covs_) sd = std::max(sd, std::sqrt(c.diagonal().maxCoeff()));
  return sd;
}

void NormalMixture::sample_into(Rng& rng, double* out) const {
  const double u = rng.uniform();
  std::size_t k = static_cast<std::size_t>(std::upper_bound(cumulative_.begin(), cumulative_.end(), u) - cumulative_.begin());
  k = std::min(k, size() - 1);
  const Matrix& lower = chol_[shared_ ? 0 : k];
  double eps[16];
  std::vector<double> big;
  double* z = eps;
  if (dim_ > 16) {
    big.resize(dim_);
    z = big.data();
  }
  for (std::size_t i = 0; i < dim_; ++i) z[i] = rng.normal();
  for (std::size_t i = 0; i < dim_; ++i) {
    double v = means_[k](i);
    for (std::size_t j = 0; j <= i; ++j) v += lower(i, j) * z[j];
    out[i] = v;
  }
}

Vector NormalMixture::sample(Rng& rng) const {
  Vector x(dim_);
  sample_into(rng, x.data());
  return x;
}

NormalMixture convolve(const NormalMixture& a, const NormalMixture& b) {
  if (a.dim() != b.dim()) throw InputError("cannot convolve mixtures of different dimension");
  const bool shared = a.shared_sigma() && b.shared_sigma();
  std::vector<double> w;
  std::vector<Vector> mu;
  std::vector<Matrix> cov;
  w.reserve(a.size() * b.size());
  mu.reserve(a.size() * b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < b.size(); ++j) {
      w.push_back(a.weights()[i] * b.weights()[j]);
      mu.push_back(a.means()[i] + b.means()[j]);
      if (!shared) cov.push_back(a.covariance(i) + b.covariance(j));
    }
  }
  if (shared) cov.push_back(a.covariance(0) + b.covariance(0));
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  for (double& x : w) x /= total;
  return NormalMixture(std::move(w), std::move(mu), std::move(cov), shared);
}

NormalMixture merge_duplicates(const NormalMixture& m) {
  constexpr double kRel = 1e-12;
  const std::size_t n = m.size();
  if (n < 2) return m;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  const std::size_t d = m.dim();
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    for (std::size_t i = 0; i < d; ++i) {
      if (m.means()[x](i) != m.means()[y](i)) return m.means()[x](i) < m.means()[y](i);
    }
    return false;
  });
  std::vector<double> w;
  std::vector<Vector> mu;
  std::vector<Matrix> cov;
  std::vector<std::size_t> rep;
  for (std::size_t idx : order) {
    bool merged = false;
    if (!rep.empty()) {
      const std::size_t last = rep.back();
      bool same = true;
      for (std::size_t i = 0; i < d && same; ++i) same = nearly_equal(m.means()[last](i), m.means()[idx](i), kRel);
      if (same && !m.shared_sigma()) same = same_matrix(m.covariance(last), m.covariance(idx), kRel);
      if (same) {
        w.back() += m.weights()[idx];
        merged = true;
      }
    }
    if (!merged) {
      rep.push_back(idx);
      w.push_back(m.weights()[idx]);
      mu.push_back(m.means()[idx]);
      if (!m.shared_sigma()) cov.push_back(m.covariance(idx));
    }
  }
  if (m.shared_sigma()) cov.push_back(m.covariance(0));
  return NormalMixture(std::move(w), std::move(mu), std::move(cov), m.shared_sigma());
}

PrunedMixture prune_smallest(const NormalMixture& m, double prune_tol) {
  const std::size_t n = m.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return m.weights()[x] < m.weights()[y]; });
  std::vector<bool> drop(n, false);
  double dropped = 0.0;
  for (std::size_t r = 0; r + 1 < n; ++r) {
    const double w = m.weights()[order[r]];
    if (dropped + w > prune_tol) break;
    dropped += w;
    drop[order[r]] = true;
  }
  if (dropped == 0.0) return {m, 0.0};
  std::vector<double> w;
  std::vector<Vector> mu;
  std::vector<Matrix> cov;
  for (std::size_t i = 0; i < n; ++i) {
    if (drop[i]) continue;
    w.push_back(m.weights()[i] / (1.0 - dropped));
    mu.push_back(m.means()[i]);
    if (!m.shared_sigma()) cov.push_back(m.covariance(i));
  }
  if (m.shared_sigma()) cov.push_back(m.covariance(0));
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  for (double& x : w) x /= total;
  return {NormalMixture(std::move(w), std::move(mu), std::move(cov), m.shared_sigma()), dropped};
}

namespace {

PrunedMixture next_power(const NormalMixture& previous, const NormalMixture& base, const ConvolutionOptions& options) {
  NormalMixture next = merge_duplicates(convolve(previous, base));
  if (next.size() <= options.max_components) return {std::move(next), 0.0};
  return prune_smallest(next, options.prune_tol);
}

}  // namespace

PrunedMixture self_convolve(const NormalMixture& m, int k, const ConvolutionOptions& options) {
  if (k < 1) throw InputError("self-convolution power must be >= 1");
  PrunedMixture result{m, 0.0};
  for (int step = 2; step <= k; ++step) {
    auto next = next_power(result.mixture, m, options);
    result.mixture = std::move(next.mixture);
    result.pruned_mass += next.pruned_mass;
  }
  return result;
}

ConvolutionPowers convolution_powers(const NormalMixture& m, int max_power, const ConvolutionOptions& options) {
  ConvolutionPowers out;
  if (max_power < 1) return out;
  if (m.size() > options.max_components) {
    out.budget_exhausted = true;
    return out;
  }
  out.powers.push_back(m);
  for (int step = 2; step <= max_power; ++step) {
    auto next = next_power(out.powers.back(), m, options);
    if (next.mixture.size() > options.max_components) {
      out.budget_exhausted = true;
      break;
    }
    out.pruned_mass += next.pruned_mass;
    out.powers.push_back(std::move(next.mixture));
  }
  return out;
}

CppModel::CppModel(double lambda_, NormalMixture jumps_) : lambda(lambda_), jumps(std::move(jumps_)) {
  if (!(lambda > 0.0) || !std::isfinite(lambda)) throw InputError("jump intensity lambda must be positive and finite");
}

void to_json(nlohmann::json& j, const NormalMixture& m) {
  j = nlohmann::json::object();
  j["dim"] = m.dim();
  j["weights"] = m.weights();
  auto means = nlohmann::json::array();
  for (const auto& mu : m.means()) means.push_back(std::vector<double>(mu.data(), mu.data() + mu.size()));
  j["means"] = means;
  auto covs = nlohmann::json::array();
  for (const auto& c : m.covariances()) {
    auto rows = nlohmann::json::array();
    for (Eigen::Index r = 0; r < c.rows(); ++r) {
      std::vector<double> row(c.cols());
      for (Eigen::Index s = 0; s < c.cols(); ++s) row[s] = c(r, s);
      rows.push_back(row);
    }
    covs.push_back(rows);
  }
  j["covariances"] = covs;
  j["shared_sigma"] = m.shared_sigma();
}

NormalMixture mixture_from_json(const nlohmann::json& j) {
  try {
    const auto dim = j.at("dim").get<std::size_t>();
    auto weights = j.at("weights").get<std::vector<double>>();
    std::vector<Vector> means;
    for (const auto& m : j.at("means")) {
      const auto v = m.get<std::vector<double>>();
      if (v.size() != dim) throw InputError("mixture mean has wrong length");
      means.emplace_back(Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size())));
    }
    std::vector<Matrix> covs;
    for (const auto& c : j.at("covariances")) {
      Matrix mat(dim, dim);
      if (c.size() != dim) throw InputError("covariance has wrong shape");
      for (std::size_t r = 0; r < dim; ++r) {
        const auto row = c.at(r).get<std::vector<double>>();
        if (row.size() != dim) throw InputError("covariance has wrong shape");
        for (std::size_t s = 0; s < dim; ++s) mat(r, s) = row[s];
      }
      covs.push_back(std::move(mat));
    }
    const bool shared = j.value("shared_sigma", false);
    return NormalMixture(std::move(weights), std::move(means), std::move(covs), shared);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed mixture JSON: ") + e.what());
  }
}

nlohmann::json model_to_json(const CppModel& m) {
  nlohmann::json j;
  j["lambda"] = m.lambda;
  j["jumps"] = m.jumps;
  return j;
}

CppModel model_from_json(const nlohmann::json& j) {
  try {
    return CppModel(j.at("lambda").get<double>(), mixture_from_json(j.at("jumps")));
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed model JSON: ") + e.what());
  }
}

}  // namespace decompound
