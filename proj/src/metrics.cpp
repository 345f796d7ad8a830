#include "decompound/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <sstream>

#include "decompound/error.hpp"
#include "decompound/rng.hpp"

namespace decompound {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNegInf = -kInf;
constexpr double kRoundingFloor = 1e-12;
constexpr std::size_t kMcBatch = 4096;

using LogDensityFn = std::function<void(std::span<const double>, std::span<double>)>;

// Integrands in terms of l0 = log f0, l = log f and an optional offset c.
// Index 0: h^2, 1: K (pointwise nonnegative form), 2: V, 3: (c + l0 - l)^2 f0.
constexpr std::size_t kOutputs = 4;
using Values = std::array<double, kOutputs>;

void quad_integrands(double l0, double l, double c, Values& out) {
  if (l0 == kNegInf) {
    const double f = l == kNegInf ? 0.0 : std::exp(l);
    out = {f, f, 0.0, 0.0};
    return;
  }
  const double f0 = std::exp(l0);
  if (l == kNegInf) {
    out = {f0, kInf, kInf, kInf};
    return;
  }
  const double f = std::exp(l);
  const double r = l0 - l;
  const double root = std::exp(0.5 * l0) - std::exp(0.5 * l);
  out[0] = root * root;
  out[1] = f0 * r - f0 + f;
  out[2] = f0 * r * r;
  out[3] = f0 * (c + r) * (c + r);
}

// Same integrands divided by f0, for draws from f0.
void mc_integrands(double l0, double l, double c, Values& out) {
  if (l == kNegInf) {
    out = {1.0, kInf, kInf, kInf};
    return;
  }
  const double r = l0 - l;
  const double root = 1.0 - std::exp(-0.5 * r);
  out[0] = root * root;
  out[1] = r - 1.0 + std::exp(-r);
  out[2] = r * r;
  out[3] = (c + r) * (c + r);
}

struct Integrals {
  Values value{};
  Values error{};
  Method method = Method::quadrature;
  nlohmann::json config;
};

struct Box {
  std::size_t dim = 1;
  std::array<double, 2> lo{}, hi{};
  double min_sd = kInf;
};

double min_axis_sd(const NormalMixture& m) {
  double sd = kInf;
  for (const auto& c : m.covariances()) sd = std::min(sd, std::sqrt(c.diagonal().minCoeff()));
  return sd;
}

// Box covering every m-fold convolution power m = 1..max_power of each mixture.
Box power_box(std::span<const NormalMixture* const> mixtures, int max_power, double reach) {
  Box box;
  box.dim = mixtures.front()->dim();
  if (box.dim > 2) throw UnsupportedError("quadrature supports d <= 2 only");
  for (std::size_t a = 0; a < box.dim; ++a) {
    box.lo[a] = kInf;
    box.hi[a] = kNegInf;
  }
  double sd = 0.0;
  for (const auto* m : mixtures) {
    sd = std::max(sd, m->max_axis_sd());
    box.min_sd = std::min(box.min_sd, min_axis_sd(*m));
  }
  for (const auto* m : mixtures) {
    for (std::size_t a = 0; a < box.dim; ++a) {
      double mu_min = kInf, mu_max = kNegInf;
      for (const auto& mu : m->means()) {
        mu_min = std::min(mu_min, mu(a));
        mu_max = std::max(mu_max, mu(a));
      }
      for (int p = 1; p <= max_power; ++p) {
        const double spread = reach * std::sqrt(static_cast<double>(p)) * sd;
        box.lo[a] = std::min(box.lo[a], p * mu_min - spread);
        box.hi[a] = std::max(box.hi[a], p * mu_max + spread);
      }
    }
  }
  return box;
}

Grid quadrature_grid(const Box& box, const MetricOptions& options) {
  std::size_t n = options.points_per_axis;
  if (n == 0) n = box.dim == 1 ? 4096 : 1024;
  const std::size_t cap = box.dim == 1 ? (std::size_t{1} << 18) : 4096;
  double width = 0.0;
  for (std::size_t a = 0; a < box.dim; ++a) width = std::max(width, box.hi[a] - box.lo[a]);
  // keep at least four nodes per standard deviation of the narrowest component
  const auto needed = static_cast<std::size_t>(std::ceil(4.0 * width / box.min_sd)) + 1;
  n = std::min(std::max(n, needed), cap);
  if (n % 2 == 0) ++n;  // odd count so the even nodes form a coarser trapezoid grid
  return Grid(box.dim, box.lo, box.hi, n);
}

Integrals quadrature(const Grid& grid, const LogDensityFn& log_f0, const LogDensityFn& log_f, double c) {
  const std::size_t n = grid.points_per_axis;
  const std::size_t dim = grid.dim;
  // d = 1 is a single row of n nodes; d = 2 is n rows of n nodes
  const std::size_t rows = dim == 1 ? 1 : n;
  const std::size_t cols = n;
  std::vector<double> points(cols * dim), l0(cols), l(cols);
  const double h0 = grid.spacing(0);
  const double h1 = dim == 2 ? grid.spacing(1) : h0;
  auto weight = [](std::size_t i, std::size_t count, double spacing) {
    return (i == 0 || i + 1 == count) ? 0.5 * spacing : spacing;
  };
  auto coarse_weight = [](std::size_t i, std::size_t count, double spacing) {
    if (i % 2 != 0) return 0.0;
    return (i == 0 || i + 1 == count) ? spacing : 2.0 * spacing;
  };
  Values fine{}, coarse{};
  Values terms{};
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      if (dim == 1) {
        points[j] = grid.node(0, j);
      } else {
        points[j * 2] = grid.node(0, i);
        points[j * 2 + 1] = grid.node(1, j);
      }
    }
    log_f0(points, l0);
    log_f(points, l);
    const double wi = dim == 1 ? 1.0 : weight(i, rows, h0);
    const double ci = dim == 1 ? 1.0 : coarse_weight(i, rows, h0);
    for (std::size_t j = 0; j < cols; ++j) {
      const double w = wi * weight(j, cols, h1);
      const double cw = ci * coarse_weight(j, cols, h1);
      quad_integrands(l0[j], l[j], c, terms);
      for (std::size_t o = 0; o < kOutputs; ++o) {
        if (w != 0.0) fine[o] += w * terms[o];
        if (cw != 0.0) coarse[o] += cw * terms[o];
      }
    }
  }
  Integrals out;
  out.method = Method::quadrature;
  for (std::size_t o = 0; o < kOutputs; ++o) {
    out.value[o] = fine[o];
    out.error[o] = std::abs(fine[o] - coarse[o]) + kRoundingFloor * (1.0 + std::abs(fine[o]));
    if (!std::isfinite(out.error[o])) out.error[o] = kInf;
  }
  out.config = {{"method", "quadrature"},
                {"points_per_axis", n},
                {"lo", std::vector<double>(grid.lo.begin(), grid.lo.begin() + dim)},
                {"hi", std::vector<double>(grid.hi.begin(), grid.hi.begin() + dim)}};
  return out;
}

// Gaussian-mixture draws with antithetic partners sharing component labels.
class AntitheticSampler {
public:
  explicit AntitheticSampler(const NormalMixture& m) : m_(m), dim_(m.dim()) {
    for (std::size_t k = 0; k < m.size(); ++k) lower_.push_back(Matrix(m.covariance(k).llt().matrixL()));
  }

  // Adds one jump to `plus` and its mirror to `minus`.
  void add_pair(Rng& rng, double* plus, double* minus) {
    const std::size_t k = rng.categorical(m_.weights());
    z_.resize(dim_);
    for (auto& v : z_) v = rng.normal();
    const auto& mu = m_.means()[k];
    const auto& lower = lower_[k];
    for (std::size_t a = 0; a < dim_; ++a) {
      double s = 0.0;
      for (std::size_t b = 0; b <= a; ++b) s += lower(a, b) * z_[b];
      plus[a] += mu(a) + s;
      minus[a] += mu(a) - s;
    }
  }

private:
  const NormalMixture& m_;
  std::size_t dim_;
  std::vector<Matrix> lower_;
  std::vector<double> z_;
};

// draw(rng, plus, minus) fills one antithetic pair of points.
Integrals monte_carlo(std::size_t dim, std::size_t draws, std::uint64_t seed,
                      const std::function<void(Rng&, double*, double*)>& draw, const LogDensityFn& log_f0,
                      const LogDensityFn& log_f, double c) {
  if (draws < 4) throw InputError("Monte Carlo needs at least 4 draws");
  const std::size_t pairs = draws / 2;
  Rng rng(seed, 0x6d6574);
  std::vector<double> points(2 * kMcBatch * dim), l0(2 * kMcBatch), l(2 * kMcBatch);
  Values sum{}, sum_sq{};
  Values a{}, b{};
  for (std::size_t start = 0; start < pairs; start += kMcBatch) {
    const std::size_t count = std::min(kMcBatch, pairs - start);
    std::fill(points.begin(), points.end(), 0.0);
    for (std::size_t p = 0; p < count; ++p) draw(rng, &points[2 * p * dim], &points[(2 * p + 1) * dim]);
    const std::span<const double> used(points.data(), 2 * count * dim);
    log_f0(used, std::span<double>(l0.data(), 2 * count));
    log_f(used, std::span<double>(l.data(), 2 * count));
    for (std::size_t p = 0; p < count; ++p) {
      mc_integrands(l0[2 * p], l[2 * p], c, a);
      mc_integrands(l0[2 * p + 1], l[2 * p + 1], c, b);
      for (std::size_t o = 0; o < kOutputs; ++o) {
        const double v = 0.5 * (a[o] + b[o]);
        sum[o] += v;
        sum_sq[o] += v * v;
      }
    }
  }
  Integrals out;
  out.method = Method::monte_carlo;
  const auto np = static_cast<double>(pairs);
  for (std::size_t o = 0; o < kOutputs; ++o) {
    const double mean = sum[o] / np;
    const double var = std::max(0.0, (sum_sq[o] / np - mean * mean) * np / (np - 1.0));
    out.value[o] = mean;
    out.error[o] = std::sqrt(var / np);
  }
  out.config = {{"method", "monte_carlo"}, {"draws", 2 * pairs}, {"seed", seed}, {"antithetic", true}};
  return out;
}

Method resolve(Method requested, std::size_t dim) {
  if (requested == Method::automatic) return dim <= 2 ? Method::quadrature : Method::monte_carlo;
  if (requested == Method::quadrature && dim > 2) throw UnsupportedError("quadrature supports d <= 2 only");
  return requested;
}

LogDensityFn mixture_fn(const NormalMixture& m) {
  return [&m](std::span<const double> x, std::span<double> out) { m.log_density_batch(x, out); };
}

LogDensityFn continuous_fn(const IncrementDensity& q) {
  return [&q](std::span<const double> x, std::span<double> out) { q.log_continuous_batch(x, out); };
}

Integrals p_integrals(const NormalMixture& r0, const NormalMixture& r, const MetricOptions& options, double c) {
  if (r0.dim() != r.dim()) throw InputError("jump densities have different dimensions");
  const std::size_t dim = r0.dim();
  const Method method = resolve(options.method, dim);
  if (method == Method::quadrature) {
    const std::array<const NormalMixture*, 2> both{&r0, &r};
    const Grid grid = quadrature_grid(power_box(both, 1, options.reach), options);
    return quadrature(grid, mixture_fn(r0), mixture_fn(r), c);
  }
  AntitheticSampler sampler(r0);
  auto draw = [&](Rng& rng, double* plus, double* minus) { sampler.add_pair(rng, plus, minus); };
  return monte_carlo(dim, options.mc_draws, options.mc_seed, draw, mixture_fn(r0), mixture_fn(r), c);
}

DivergenceEstimate make_estimate(DivergenceKind kind, double atom, double continuous, double error, Method method,
                                 const nlohmann::json& config) {
  DivergenceEstimate e;
  e.kind = kind;
  e.method = method;
  e.atom_term = atom;
  e.continuous_term = continuous;
  e.config = config;
  const double total = atom + continuous;
  if (kind == DivergenceKind::hellinger) {
    const double h2 = std::max(0.0, total);
    e.value = std::sqrt(h2);
    e.numerical_error = std::sqrt(h2 + error) - std::sqrt(std::max(0.0, h2 - error));
  } else {
    e.value = total;
    e.numerical_error = error;
  }
  e.mc_std_error = method == Method::monte_carlo ? e.numerical_error : 0.0;
  return e;
}

DivergenceSet make_set(const Integrals& in, Values atom, double continuous_scale, double extra_error) {
  DivergenceSet s;
  const DivergenceKind kinds[3] = {DivergenceKind::hellinger, DivergenceKind::kl, DivergenceKind::v};
  DivergenceEstimate* slots[3] = {&s.h, &s.k, &s.v};
  for (std::size_t o = 0; o < 3; ++o) {
    const double error = continuous_scale * in.error[o] + extra_error;
    *slots[o] = make_estimate(kinds[o], atom[o], continuous_scale * in.value[o], error, in.method, in.config);
  }
  return s;
}

struct QEvaluation {
  Integrals integrals;
  DivergenceSet set;
};

QEvaluation q_evaluate(const CppModel& model0, const CppModel& model, const MetricOptions& options) {
  if (model0.dim() != model.dim()) throw InputError("models have different dimensions");
  const std::size_t dim = model0.dim();
  const IncrementDensity q0(model0, options.density);
  const IncrementDensity q(model, options.density);
  const double a0 = q0.atom_mass(), a = q.atom_mass();
  const Values atom{scalar_h(a0, a) * scalar_h(a0, a), scalar_k(a0, a), scalar_v(a0, a), 0.0};
  double extra = 0.0;
  for (const auto* d : {&q0, &q}) {
    extra += 10.0 * (d->tail_mass() + d->prune_loss());
    extra += d->metadata().at("grid_lost_mass").get<double>();
  }
  const Method method = resolve(options.method, dim);
  QEvaluation out;
  if (method == Method::quadrature) {
    const std::array<const NormalMixture*, 2> both{&model0.jumps, &model.jumps};
    const int powers = std::max(q0.terms(), q.terms());
    const Grid grid = quadrature_grid(power_box(both, powers, options.reach), options);
    out.integrals = quadrature(grid, continuous_fn(q0), continuous_fn(q), 0.0);
    out.set = make_set(out.integrals, atom, 1.0, extra);
  } else {
    // draws from the continuous part of Q0: a zero-truncated Poisson number of jumps
    AntitheticSampler sampler(model0.jumps);
    const double rate = model0.lambda * options.density.mesh;
    auto draw = [&](Rng& rng, double* plus, double* minus) {
      std::uint64_t count = 0;
      while (count == 0) count = rng.poisson(rate);
      for (std::uint64_t j = 0; j < count; ++j) sampler.add_pair(rng, plus, minus);
    };
    out.integrals = monte_carlo(dim, options.mc_draws, options.mc_seed, draw, continuous_fn(q0), continuous_fn(q), 0.0);
    out.set = make_set(out.integrals, atom, 1.0 - a0, extra);
  }
  for (auto* e : {&out.set.h, &out.set.k, &out.set.v}) {
    e->config["q0"] = q0.metadata();
    e->config["q"] = q.metadata();
  }
  return out;
}

double rate0(const CppModel& m0, const MetricOptions& o) { return m0.lambda * o.density.mesh; }

}  // namespace

double scalar_k(double x, double y) {
  if (!(x > 0.0) || !(y > 0.0)) throw InputError("scalar divergences need positive arguments");
  const long double a = x, b = y;
  return static_cast<double>(a * std::log(a / b) - a + b);
}

double scalar_v(double x, double y) {
  if (!(x > 0.0) || !(y > 0.0)) throw InputError("scalar divergences need positive arguments");
  const long double l = std::log(static_cast<long double>(x) / y);
  return static_cast<double>(x * l * l);
}

double scalar_h(double x, double y) {
  if (!(x > 0.0) || !(y > 0.0)) throw InputError("scalar divergences need positive arguments");
  return std::abs(std::sqrt(x) - std::sqrt(y));
}

std::string_view kind_name(DivergenceKind kind) {
  switch (kind) {
    case DivergenceKind::hellinger: return "h";
    case DivergenceKind::kl: return "K";
    case DivergenceKind::v: return "V";
  }
  return "unknown";
}

std::string_view method_name(Method method) {
  switch (method) {
    case Method::automatic: return "automatic";
    case Method::quadrature: return "quadrature";
    case Method::monte_carlo: return "monte_carlo";
  }
  return "unknown";
}

nlohmann::json metric_options_to_json(const MetricOptions& o) {
  return {{"method", std::string(method_name(o.method))},
          {"points_per_axis", o.points_per_axis},
          {"reach", o.reach},
          {"mc_draws", o.mc_draws},
          {"mc_seed", o.mc_seed},
          {"mesh", o.density.mesh},
          {"tail_tol", o.density.tail_tol}};
}

nlohmann::json DivergenceEstimate::to_json() const {
  return {{"kind", std::string(kind_name(kind))},
          {"value", value},
          {"method", std::string(method_name(method))},
          {"mc_std_error", mc_std_error},
          {"numerical_error", numerical_error},
          {"atom_term", atom_term},
          {"continuous_term", continuous_term},
          {"config", config}};
}

const DivergenceEstimate& DivergenceSet::get(DivergenceKind kind) const {
  switch (kind) {
    case DivergenceKind::hellinger: return h;
    case DivergenceKind::kl: return k;
    case DivergenceKind::v: return v;
  }
  return k;
}

DivergenceSet divergences_p(const NormalMixture& r0, const NormalMixture& r, const MetricOptions& options) {
  return make_set(p_integrals(r0, r, options, 0.0), Values{}, 1.0, 0.0);
}

DivergenceEstimate divergence_p(DivergenceKind kind, const NormalMixture& r0, const NormalMixture& r,
                                const MetricOptions& options) {
  return divergences_p(r0, r, options).get(kind);
}

DivergenceSet divergences_q(const CppModel& model0, const CppModel& model, const MetricOptions& options) {
  return q_evaluate(model0, model, options).set;
}

DivergenceEstimate divergence_q(DivergenceKind kind, const CppModel& model0, const CppModel& model,
                                const MetricOptions& options) {
  return divergences_q(model0, model, options).get(kind);
}

double path_kl(const CppModel& model0, const CppModel& model, const MetricOptions& options) {
  const double l0 = rate0(model0, options), l = rate0(model, options);
  return l0 * divergences_p(model0.jumps, model.jumps, options).k.value + scalar_k(l0, l);
}

nlohmann::json PathVBound::to_json() const {
  return {{"III", iii}, {"IV", iv}, {"bound_III", bound_iii}, {"bound_IV", bound_iv},
          {"error", error}, {"III_ok", iii_ok}, {"IV_ok", iv_ok}};
}

namespace {

PathVBound path_v_from(const Integrals& p, double l0, double l) {
  PathVBound b;
  const double kp = p.value[1], vp = p.value[2];
  const double k_rate = scalar_k(l0, l);
  b.iii = l0 * p.value[3];
  const double inner = l0 * kp + k_rate;
  b.iv = inner * inner;
  b.bound_iii = 2.0 * scalar_v(l0, l) + 2.0 * l0 * vp;
  b.bound_iv = 2.0 * l0 * l0 * vp + 2.0 * k_rate * k_rate;
  const double err_iii = l0 * p.error[3];
  const double err_iv = 2.0 * std::abs(inner) * l0 * p.error[1] + l0 * l0 * p.error[1] * p.error[1];
  b.error = err_iii + err_iv;
  const double err_bound_iii = 2.0 * l0 * p.error[2];
  const double err_bound_iv = 2.0 * l0 * l0 * p.error[2];
  b.iii_ok = b.iii <= b.bound_iii + 3.0 * (err_iii + err_bound_iii);
  b.iv_ok = b.iv <= b.bound_iv + 3.0 * (err_iv + err_bound_iv);
  return b;
}

}  // namespace

PathVBound path_v_bound(const CppModel& model0, const CppModel& model, const MetricOptions& options) {
  const double l0 = rate0(model0, options), l = rate0(model, options);
  const auto p = p_integrals(model0.jumps, model.jumps, options, std::log(l0 / l));
  return path_v_from(p, l0, l);
}

double path_hellinger_bound(const CppModel& model0, const CppModel& model, const MetricOptions& options) {
  const double l0 = rate0(model0, options), l = rate0(model, options);
  return std::sqrt(l0) * divergences_p(model0.jumps, model.jumps, options).h.value + scalar_h(l0, l);
}

namespace {

// sup over a in [lo, hi] of ratio(lo / a) / a; ratio is decreasing, so b = lo is the worst partner of a.
double interval_sup(double lo, double hi, double (*ratio)(double)) {
  constexpr int kSteps = 100000;
  double best = ratio(1.0) / lo;
  for (int i = 1; i <= kSteps; ++i) {
    const double a = lo + (hi - lo) * i / kSteps;
    best = std::max(best, ratio(lo / a) / a);
  }
  return best;
}

// (t - 1 - log t) / (1 - t)^2, continuous at t = 1
double k_ratio(double t) {
  const double u = 1.0 - t;
  if (std::abs(u) < 1e-4) return 0.5 + u / 3.0 + u * u / 4.0;
  return (t - 1.0 - std::log(t)) / (u * u);
}

// log^2 t / (1 - t)^2, continuous at t = 1
double v_ratio(double t) {
  const double u = 1.0 - t;
  if (std::abs(u) < 1e-4) return 1.0 + u + 11.0 * u * u / 12.0;
  const double l = std::log(t);
  return l * l / (u * u);
}

}  // namespace

LemmaOneConstant lemma1_constant(LambdaRange range) {
  if (!(range.lo > 0.0) || !(range.hi >= range.lo)) throw InputError("intensity range must satisfy 0 < lo <= hi");
  const double lo = range.lo, hi = range.hi;
  LemmaOneConstant c{};
  c.c_k = interval_sup(lo, hi, k_ratio);
  c.c_vr = interval_sup(lo, hi, v_ratio);
  c.k_max = std::max(scalar_k(lo, hi), scalar_k(hi, lo));
  c.c_v = 2.0 * c.c_vr + 4.0 * c.c_k + 2.0 * c.c_k * c.k_max;
  c.kl = std::max(hi, c.c_k);
  c.v = std::max({2.0 * hi * (1.0 + hi), 4.0 * hi, c.c_v});
  c.hell = std::max(std::sqrt(hi), 1.0 / (2.0 * std::sqrt(lo)));
  c.c_bar = std::max({c.kl, c.v, c.hell});
  return c;
}

nlohmann::json LemmaOneConstant::to_json() const {
  return {{"c_k", c_k}, {"c_vr", c_vr}, {"k_max", k_max}, {"c_v", c_v}, {"kl", kl}, {"v", v}, {"hellinger", hell}, {"c_bar", c_bar}};
}

std::optional<double> InequalityRecord::tightness() const {
  if (rhs == 0.0) return std::nullopt;
  return lhs / rhs;
}

nlohmann::json InequalityRecord::to_json() const {
  nlohmann::json j = {{"id", id}, {"lhs", lhs}, {"rhs", rhs}, {"margin", margin()}, {"error", error}, {"pass", pass}};
  const auto t = tightness();
  j["tightness"] = t ? nlohmann::json(*t) : nlohmann::json(nullptr);
  return j;
}

InequalityRecord make_record(std::string id, double lhs, double rhs, double error) {
  InequalityRecord r;
  r.id = std::move(id);
  r.lhs = lhs;
  r.rhs = rhs;
  r.error = error;
  r.pass = lhs <= rhs + 3.0 * error;
  return r;
}

bool LemmaOneReport::all_pass() const {
  return std::all_of(records.begin(), records.end(), [](const auto& r) { return r.pass; });
}

nlohmann::json LemmaOneReport::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : records) rows.push_back(r.to_json());
  return {{"records", rows},
          {"constant", constant.to_json()},
          {"range", {range.lo, range.hi}},
          {"all_pass", all_pass()},
          {"P", {p.h.to_json(), p.k.to_json(), p.v.to_json()}},
          {"Q", {q.h.to_json(), q.k.to_json(), q.v.to_json()}}};
}

LemmaOneReport check_lemma1(const CppModel& model0, const CppModel& model, const MetricOptions& options,
                            LambdaRange range) {
  const double l0 = rate0(model0, options), l = rate0(model, options);
  range.lo = std::min({range.lo, l0, l});
  range.hi = std::max({range.hi, l0, l});
  LemmaOneReport rep;
  rep.range = range;
  rep.constant = lemma1_constant(range);
  const auto pint = p_integrals(model0.jumps, model.jumps, options, 0.0);
  rep.p = make_set(pint, Values{}, 1.0, 0.0);
  rep.q = q_evaluate(model0, model, options).set;

  const auto& p = rep.p;
  const auto& q = rep.q;
  const double kp = p.k.value, vp = p.v.value, hp = p.h.value;
  const double ek = p.k.numerical_error, ev = p.v.numerical_error, eh = p.h.numerical_error;
  const double k_rate = scalar_k(l0, l), v_rate = scalar_v(l0, l), h_rate = scalar_h(l0, l);
  const double delta = std::abs(l0 - l);
  const double cb = rep.constant.c_bar;

  rep.records[0] = make_record("eq5", q.k.value, l0 * kp + k_rate, q.k.numerical_error + l0 * ek);
  rep.records[1] = make_record(
      "eq6", q.v.value,
      2.0 * l0 * (1.0 + l0) * vp + 4.0 * l0 * kp + 2.0 * v_rate + 4.0 * k_rate + 2.0 * k_rate * k_rate,
      q.v.numerical_error + 2.0 * l0 * (1.0 + l0) * ev + 4.0 * l0 * ek);
  rep.records[2] = make_record("eq7", q.h.value, std::sqrt(l0) * hp + h_rate, q.h.numerical_error + std::sqrt(l0) * eh);
  rep.records[3] = make_record("eq8", q.k.value, cb * (kp + delta * delta), q.k.numerical_error + cb * ek);
  rep.records[4] =
      make_record("eq9", q.v.value, cb * (vp + kp + delta * delta), q.v.numerical_error + cb * (ev + ek));
  rep.records[5] = make_record("eq10", q.h.value, cb * (delta + hp), q.h.numerical_error + cb * eh);
  return rep;
}

nlohmann::json DataProcessingReport::to_json() const {
  return {{"h", h.to_json()},
          {"K", k.to_json()},
          {"V", v.to_json()},
          {"V_strict", v_strict.to_json()},
          {"path_V", path_v.to_json()},
          {"all_pass", all_pass()}};
}

DataProcessingReport check_data_processing(const CppModel& model0, const CppModel& model,
                                           const MetricOptions& options) {
  const double l0 = rate0(model0, options), l = rate0(model, options);
  const auto pint = p_integrals(model0.jumps, model.jumps, options, std::log(l0 / l));
  const auto p = make_set(pint, Values{}, 1.0, 0.0);
  const auto q = q_evaluate(model0, model, options).set;
  DataProcessingReport rep;
  rep.path_v = path_v_from(pint, l0, l);
  rep.h = make_record("h", q.h.value, std::sqrt(l0) * p.h.value + scalar_h(l0, l),
                      q.h.numerical_error + std::sqrt(l0) * p.h.numerical_error);
  rep.k = make_record("K", q.k.value, l0 * p.k.value + scalar_k(l0, l), q.k.numerical_error + l0 * p.k.numerical_error);
  rep.v = make_record("V", q.v.value, rep.path_v.total() + 4.0 * q.k.value,
                      q.v.numerical_error + rep.path_v.error + 4.0 * q.k.numerical_error);
  rep.v_strict = make_record("V_strict", q.v.value, rep.path_v.total(), q.v.numerical_error + rep.path_v.error);
  return rep;
}

double hellinger_gridded(const NormalMixture& r0, const Grid& grid, std::span<const double> values) {
  if (grid.dim != r0.dim()) throw InputError("grid dimension does not match the density");
  if (values.size() != grid.size()) throw InputError("gridded values do not match the grid");
  const auto points = grid.points();
  std::vector<double> log_r0(grid.size());
  r0.log_density_batch(points, log_r0);
  std::vector<double> integrand(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (values[i] < 0.0) throw InputError("gridded density must be nonnegative");
    const double d = std::exp(0.5 * log_r0[i]) - std::sqrt(values[i]);
    integrand[i] = d * d;
  }
  return std::sqrt(std::max(0.0, grid.integrate(integrand)));
}

std::string certification_csv_header() { return "pair_id,inequality,lhs,rhs,margin,pass\n"; }

std::string certification_csv_rows(std::size_t pair_id, std::span<const InequalityRecord> records) {
  std::ostringstream out;
  char buf[256];
  for (const auto& r : records) {
    std::snprintf(buf, sizeof buf, "%zu,%s,%.17g,%.17g,%.17g,%s\n", pair_id, r.id.c_str(), r.lhs, r.rhs, r.margin(),
                  r.pass ? "true" : "false");
    out << buf;
  }
  return out.str();
}

}  // namespace decompound
