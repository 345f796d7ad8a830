#include "decompound/prior.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "decompound/error.hpp"

namespace decompound {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

LambdaPrior::Family parse_family(const std::string& name) {
  if (name == "uniform") return LambdaPrior::Family::uniform;
  if (name == "linear") return LambdaPrior::Family::linear;
  if (name == "vee") return LambdaPrior::Family::vee;
  if (name == "bump") return LambdaPrior::Family::bump;
  throw InputError("unknown lambda prior family: " + name);
}

Vector json_vector(const nlohmann::json& j, std::size_t dim, const char* what) {
  const auto v = j.get<std::vector<double>>();
  if (v.size() != dim) throw InputError(std::string(what) + " has wrong length");
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(dim));
}

Matrix json_matrix(const nlohmann::json& j, std::size_t dim, const char* what) {
  Matrix m(dim, dim);
  if (j.size() != dim) throw InputError(std::string(what) + " has wrong shape");
  for (std::size_t r = 0; r < dim; ++r) {
    const auto row = j.at(r).get<std::vector<double>>();
    if (row.size() != dim) throw InputError(std::string(what) + " has wrong shape");
    for (std::size_t c = 0; c < dim; ++c) m(r, c) = row[c];
  }
  return m;
}

nlohmann::json matrix_json(const Matrix& m) {
  auto rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    std::vector<double> row(m.cols());
    for (Eigen::Index c = 0; c < m.cols(); ++c) row[c] = m(r, c);
    rows.push_back(row);
  }
  return rows;
}

bool is_spd(const Matrix& m) {
  if (m.rows() != m.cols() || m.rows() == 0) return false;
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, m.cwiseAbs().maxCoeff())) return false;
  Eigen::LLT<Matrix> llt(m);
  return llt.info() == Eigen::Success;
}

double log_multivariate_gamma(double a, std::size_t d) {
  double out = 0.25 * static_cast<double>(d * (d - 1)) * std::log(std::numbers::pi);
  for (std::size_t j = 0; j < d; ++j) out += std::lgamma(a - 0.5 * static_cast<double>(j));
  return out;
}

}  // namespace

std::string family_name(LambdaPrior::Family family) {
  switch (family) {
    case LambdaPrior::Family::uniform: return "uniform";
    case LambdaPrior::Family::linear: return "linear";
    case LambdaPrior::Family::vee: return "vee";
    case LambdaPrior::Family::bump: return "bump";
  }
  return "unknown";
}

LambdaPrior::LambdaPrior(double lo_, double hi_, Family family_, double shape)
    : lo(lo_), hi(hi_), family(family_) {
  if (!(lo > 0.0) || !(hi > lo) || !std::isfinite(hi)) throw InputError("lambda prior needs 0 < lo < hi < inf");
  if (family == Family::linear) {
    slope = shape;
    if (!(slope > -1.0)) throw InputError("linear lambda prior needs slope > -1");
  }
  if (family == Family::vee) {
    center = shape;
    if (!(center > lo && center < hi)) throw InputError("vee lambda prior needs lo < center < hi");
  }
}

double LambdaPrior::pdf(double lambda) const {
  if (!(lambda >= lo && lambda <= hi)) return 0.0;
  const double width = hi - lo;
  const double u = (lambda - lo) / width;
  switch (family) {
    case Family::uniform: return 1.0 / width;
    case Family::linear: return (1.0 + slope * u) / (width * (1.0 + 0.5 * slope));
    case Family::vee: {
      const double z = 0.5 * ((center - lo) * (center - lo) + (hi - center) * (hi - center));
      return std::abs(lambda - center) / z;
    }
    case Family::bump: return 6.0 * u * (1.0 - u) / width;
  }
  return 0.0;
}

double LambdaPrior::logpdf(double lambda) const {
  const double p = pdf(lambda);
  return p > 0.0 ? std::log(p) : kNegInf;
}

double LambdaPrior::cdf(double lambda) const {
  if (lambda <= lo) return 0.0;
  if (lambda >= hi) return 1.0;
  const double width = hi - lo;
  const double u = (lambda - lo) / width;
  switch (family) {
    case Family::uniform: return u;
    case Family::linear: return (u + 0.5 * slope * u * u) / (1.0 + 0.5 * slope);
    case Family::vee: {
      const double a = center - lo, b = hi - center;
      const double z = a * a + b * b;
      if (lambda < center) return (a * a - (center - lambda) * (center - lambda)) / z;
      return (a * a + (lambda - center) * (lambda - center)) / z;
    }
    case Family::bump: return u * u * (3.0 - 2.0 * u);
  }
  return 0.0;
}

double LambdaPrior::quantile(double p) const {
  if (!(p >= 0.0 && p <= 1.0)) throw InputError("quantile level must lie in [0, 1]");
  if (family == Family::uniform) return lo + p * (hi - lo);
  double a = lo, b = hi;
  for (int it = 0; it < 200 && b - a > 1e-15 * hi; ++it) {
    const double mid = 0.5 * (a + b);
    (cdf(mid) < p ? a : b) = mid;
  }
  return 0.5 * (a + b);
}

double LambdaPrior::mean() const {
  // Simpson on a fine grid; every family is piecewise polynomial
  const int n = 20000;
  const double h = (hi - lo) / n;
  double s = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double x = lo + i * h;
    const double w = (i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0);
    s += w * x * pdf(x);
  }
  return s * h / 3.0;
}

double LambdaPrior::sample(Rng& rng) const { return quantile(rng.uniform()); }

DpmPrior DpmPrior::defaults(std::size_t dim) {
  DpmPrior p;
  p.concentration = 1.0;
  p.base_mean = Vector::Zero(dim);
  p.base_cov = 4.0 * Matrix::Identity(dim, dim);
  p.iw_df = static_cast<double>(dim) + 2.0;
  p.iw_scale = Matrix::Identity(dim, dim);
  p.truncation = 50;
  return p;
}

void DpmPrior::validate() const {
  const auto d = dim();
  if (d == 0) throw InputError("DPM prior dimension must be positive");
  if (!(concentration > 0.0) || !std::isfinite(concentration)) throw InputError("DP concentration must be positive");
  if (!base_mean.allFinite()) throw InputError("base mean must be finite");
  if (static_cast<std::size_t>(base_cov.rows()) != d || !is_spd(base_cov))
    throw InputError("base covariance must be symmetric positive-definite");
  if (!(iw_df > static_cast<double>(d) - 1.0)) throw InputError("inverse Wishart degrees of freedom must exceed d - 1");
  if (static_cast<std::size_t>(iw_scale.rows()) != d || !is_spd(iw_scale))
    throw InputError("inverse Wishart scale must be symmetric positive-definite");
  if (truncation < 1) throw InputError("stick-breaking truncation must be >= 1");
}

NormalMixture MixtureParams::to_mixture() const {
  std::vector<double> w;
  std::vector<Vector> mu;
  double total = 0.0;
  for (std::size_t k = 0; k < weights.size(); ++k) total += weights[k];
  for (std::size_t k = 0; k < weights.size(); ++k) {
    if (weights[k] / total < NormalMixture::kMinWeight) continue;
    w.push_back(weights[k] / total);
    mu.push_back(means[k]);
  }
  return NormalMixture::shared(std::move(w), std::move(mu), sigma);
}

Matrix sample_inverse_wishart(double df, const Matrix& scale, Rng& rng) {
  // Bartlett: Sigma^{-1} = L A A^T L^T with L L^T = scale^{-1}
  const auto d = static_cast<std::size_t>(scale.rows());
  const Matrix precision_scale = scale.llt().solve(Matrix::Identity(d, d));
  const Matrix lower = precision_scale.llt().matrixL();
  Matrix a = Matrix::Zero(d, d);
  for (std::size_t i = 0; i < d; ++i) {
    a(i, i) = std::sqrt(2.0 * rng.gamma(0.5 * (df - static_cast<double>(i))));
    for (std::size_t j = 0; j < i; ++j) a(i, j) = rng.normal();
  }
  const Matrix la = lower * a;
  const Matrix precision = la * la.transpose();
  Matrix sigma = precision.llt().solve(Matrix::Identity(d, d));
  return 0.5 * (sigma + sigma.transpose());
}

double inverse_wishart_logpdf(const Matrix& sigma, double df, const Matrix& scale) {
  const auto d = static_cast<std::size_t>(sigma.rows());
  Eigen::LLT<Matrix> ls(sigma), lp(scale);
  const double logdet_sigma = 2.0 * Matrix(ls.matrixL()).diagonal().array().log().sum();
  const double logdet_scale = 2.0 * Matrix(lp.matrixL()).diagonal().array().log().sum();
  const double trace = ls.solve(scale).trace();
  const double dd = static_cast<double>(d);
  return 0.5 * df * logdet_scale - 0.5 * df * dd * std::log(2.0) - log_multivariate_gamma(0.5 * df, d) -
         0.5 * (df + dd + 1.0) * logdet_sigma - 0.5 * trace;
}

std::vector<double> stick_breaking_weights(std::size_t count, double concentration, Rng& rng) {
  std::vector<double> w(count);
  double remaining = 1.0;
  for (std::size_t k = 0; k + 1 < count; ++k) {
    const double v = rng.beta(1.0, concentration);
    w[k] = v * remaining;
    remaining *= 1.0 - v;
  }
  w[count - 1] = remaining;
  return w;
}

MixtureParams sample_prior_params(const DpmPrior& prior, Rng& rng) {
  prior.validate();
  const auto d = prior.dim();
  const auto k = static_cast<std::size_t>(prior.truncation);
  MixtureParams params;
  params.sigma = sample_inverse_wishart(prior.iw_df, prior.iw_scale, rng);
  params.weights = stick_breaking_weights(k, prior.concentration, rng);
  const Matrix base_lower = prior.base_cov.llt().matrixL();
  params.means.reserve(k);
  Vector z(d);
  for (std::size_t c = 0; c < k; ++c) {
    for (std::size_t a = 0; a < d; ++a) z(a) = rng.normal();
    params.means.push_back(prior.base_mean + base_lower * z);
  }
  return params;
}

NormalMixture sample_prior_draw(const DpmPrior& prior, Rng& rng) { return sample_prior_params(prior, rng).to_mixture(); }

double dpm_log_prior(const DpmPrior& prior, const MixtureParams& params) {
  const auto d = prior.dim();
  double out = inverse_wishart_logpdf(params.sigma, prior.iw_df, prior.iw_scale);
  const Eigen::LLT<Matrix> base(prior.base_cov);
  const double base_logdet = 2.0 * Matrix(base.matrixL()).diagonal().array().log().sum();
  for (const auto& mu : params.means) {
    const Vector diff = mu - prior.base_mean;
    out += -0.5 * (static_cast<double>(d) * std::log(2.0 * std::numbers::pi) + base_logdet +
                   diff.dot(base.solve(diff)));
  }
  // stick fractions v_k ~ Beta(1, alpha), k < K
  double remaining = 1.0;
  const double alpha = prior.concentration;
  for (std::size_t k = 0; k + 1 < params.weights.size(); ++k) {
    if (!(remaining > 0.0)) break;
    const double v = std::clamp(params.weights[k] / remaining, 0.0, 1.0);
    if (v >= 1.0) break;
    out += std::log(alpha) + (alpha - 1.0) * std::log1p(-v);
    remaining -= params.weights[k];
  }
  return out;
}

bool AssumptionReport::all_pass() const {
  return std::all_of(clauses.begin(), clauses.end(), [](const auto& c) { return c.pass; });
}

nlohmann::json AssumptionReport::to_json() const {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& c : clauses) {
    j.push_back({{"clause", c.name}, {"pass", c.pass}, {"warning", c.warning}, {"message", c.message},
                 {"constants", c.constants}});
  }
  return {{"all_pass", all_pass()}, {"clauses", j}};
}

BaseMeasureSpec BaseMeasureSpec::from_prior(const DpmPrior& prior) {
  return {Family::gaussian, prior.base_mean, prior.base_cov.diagonal().cwiseSqrt()};
}

namespace {

AssumptionClause check_lambda_density(const LambdaPrior& lambda, std::optional<double> interior_truth) {
  AssumptionClause clause{"lambda_density_bounds", false, false, "", {}};
  constexpr int kPoints = 10000;
  double lo_val = std::numeric_limits<double>::infinity(), hi_val = 0.0;
  double interior_min = std::numeric_limits<double>::infinity();
  for (int i = 0; i < kPoints; ++i) {
    const double x = lambda.lo + (lambda.hi - lambda.lo) * i / (kPoints - 1);
    const double p = lambda.pdf(x);
    lo_val = std::min(lo_val, p);
    hi_val = std::max(hi_val, p);
    if (i > 0 && i + 1 < kPoints) interior_min = std::min(interior_min, p);
  }
  clause.constants = {{"pi_lower", lo_val}, {"pi_upper", hi_val}, {"grid_points", kPoints}};
  if (lo_val > 0.0 && std::isfinite(hi_val)) {
    clause.pass = true;
    clause.message = "density bounded away from 0 and infinity on the support";
  } else if (interior_min > 0.0 && std::isfinite(hi_val) && interior_truth &&
             *interior_truth > lambda.lo && *interior_truth < lambda.hi) {
    clause.pass = true;
    clause.warning = true;
    clause.message = "density vanishes only at the endpoints; accepted because the true intensity is interior";
  } else {
    clause.message = "density is not bounded away from zero on the support";
  }
  return clause;
}

double axis_tail(const BaseMeasureSpec& base, std::size_t a, double x) {
  const double m = base.location(a), s = base.scale(a);
  if (base.family == BaseMeasureSpec::Family::gaussian) {
    return 0.5 * std::erfc((x - m) / (s * std::sqrt(2.0))) + 0.5 * std::erfc((x + m) / (s * std::sqrt(2.0)));
  }
  return 1.0 - (std::atan((x - m) / s) + std::atan((x + m) / s)) / std::numbers::pi;
}

AssumptionClause check_base_tail(const BaseMeasureSpec& base) {
  AssumptionClause clause{"base_measure_tail", false, false, "", {}};
  const auto d = static_cast<std::size_t>(base.location.size());
  double reach = 1.0;
  for (std::size_t a = 0; a < d; ++a) reach = std::max(reach, std::abs(base.location(a)) + base.scale(a));
  // union bound over axes dominates 1 - alpha([-x, x]^d)
  std::vector<double> xs, log_tails;
  for (double x = 2.0 * reach; x < 1e12 * reach; x *= 1.25) {
    double tail = 0.0;
    for (std::size_t a = 0; a < d; ++a) tail += axis_tail(base, a, x);
    if (!(tail > 1e-300)) break;
    xs.push_back(x);
    log_tails.push_back(std::log(tail));
  }
  if (xs.size() < 8) {
    clause.message = "tail vanishes too fast to fit; treated as sub-Gaussian";
    clause.pass = base.family == BaseMeasureSpec::Family::gaussian;
    return clause;
  }
  // exponent a1 from the slope of log(-log tail) against log x over the upper half
  const std::size_t start = xs.size() / 2;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  std::size_t n = 0;
  for (std::size_t i = start; i < xs.size(); ++i) {
    if (!(log_tails[i] < 0.0)) continue;
    const double lx = std::log(xs[i]), ly = std::log(-log_tails[i]);
    sx += lx, sy += ly, sxx += lx * lx, sxy += lx * ly;
    ++n;
  }
  const double a1 = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  double c1 = std::numeric_limits<double>::infinity();
  for (std::size_t i = start; i < xs.size(); ++i) c1 = std::min(c1, -log_tails[i] / std::pow(xs[i], a1));
  c1 *= 0.5;
  const double b1 = 1.0;
  bool envelope = a1 > 0.5 && c1 > 0.0;
  for (std::size_t i = start; i < xs.size() && envelope; ++i)
    envelope = log_tails[i] <= std::log(b1) - c1 * std::pow(xs[i], a1);
  clause.constants = {{"a1", a1}, {"b1", b1}, {"C1", c1}, {"x_from", xs[start]}};
  clause.pass = envelope;
  clause.message = envelope ? "tail bounded by b1 exp(-C1 x^a1)" : "tail decays slower than any exp(-C x^a)";
  return clause;
}

AssumptionClause check_covariance_prior(const DpmPrior& dpm) {
  AssumptionClause clause{"covariance_prior", false, false, "", {}};
  const bool valid = dpm.iw_df > static_cast<double>(dpm.dim()) - 1.0 && is_spd(dpm.iw_scale);
  clause.pass = valid;
  clause.constants = {{"family", "inverse_wishart"}, {"kappa", 2}, {"df", dpm.iw_df}};
  clause.message = valid ? "inverse Wishart family is certified with kappa = 2"
                         : "inverse Wishart parameters are invalid";
  return clause;
}

}  // namespace

AssumptionReport validate_assumptions(const DpmPrior& dpm, const BaseMeasureSpec& base, const LambdaPrior& lambda,
                                      std::optional<double> interior_truth) {
  AssumptionReport report;
  report.clauses.push_back(check_lambda_density(lambda, interior_truth));
  report.clauses.push_back(check_base_tail(base));
  report.clauses.push_back(check_covariance_prior(dpm));
  return report;
}

AssumptionReport validate_assumptions(const DpmPrior& dpm, const LambdaPrior& lambda,
                                      std::optional<double> interior_truth) {
  return validate_assumptions(dpm, BaseMeasureSpec::from_prior(dpm), lambda, interior_truth);
}

PriorConfig default_prior_config(std::size_t dim) { return {LambdaPrior{}, DpmPrior::defaults(dim)}; }

PriorConfig prior_config_from_json(const nlohmann::json& j, std::size_t dim) {
  PriorConfig config = default_prior_config(dim);
  try {
    if (j.contains("lambda")) {
      const auto& l = j.at("lambda");
      const auto family = parse_family(l.value("family", std::string("uniform")));
      double shape = 0.0;
      if (family == LambdaPrior::Family::linear) shape = l.value("slope", 0.0);
      if (family == LambdaPrior::Family::vee) shape = l.at("center").get<double>();
      config.lambda = LambdaPrior(l.value("lo", config.lambda.lo), l.value("hi", config.lambda.hi), family, shape);
    }
    if (j.contains("dpm")) {
      const auto& p = j.at("dpm");
      auto& dpm = config.dpm;
      dpm.concentration = p.value("concentration", dpm.concentration);
      if (p.contains("base_mean")) dpm.base_mean = json_vector(p.at("base_mean"), dim, "base_mean");
      if (p.contains("base_cov")) dpm.base_cov = json_matrix(p.at("base_cov"), dim, "base_cov");
      dpm.iw_df = p.value("iw_df", dpm.iw_df);
      if (p.contains("iw_scale")) dpm.iw_scale = json_matrix(p.at("iw_scale"), dim, "iw_scale");
      dpm.truncation = p.value("truncation_K", dpm.truncation);
    }
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed prior JSON: ") + e.what());
  }
  config.dpm.validate();
  return config;
}

nlohmann::json prior_config_to_json(const PriorConfig& config) {
  nlohmann::json l = {{"lo", config.lambda.lo}, {"hi", config.lambda.hi}, {"family", family_name(config.lambda.family)}};
  if (config.lambda.family == LambdaPrior::Family::linear) l["slope"] = config.lambda.slope;
  if (config.lambda.family == LambdaPrior::Family::vee) l["center"] = config.lambda.center;
  const auto& d = config.dpm;
  nlohmann::json p = {{"concentration", d.concentration},
                      {"base_mean", std::vector<double>(d.base_mean.data(), d.base_mean.data() + d.base_mean.size())},
                      {"base_cov", matrix_json(d.base_cov)},
                      {"iw_df", d.iw_df},
                      {"iw_scale", matrix_json(d.iw_scale)},
                      {"truncation_K", d.truncation}};
  return {{"lambda", l}, {"dpm", p}};
}

}  // namespace decompound
