#include <cmath>
#include <numbers>
#include <vector>

#include "decompound/error.hpp"
#include "decompound/grid.hpp"
#include "decompound/model.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace decompound;

namespace {

NormalMixture two_point(double a, double b, double var) {
  Vector ma(1), mb(1);
  ma << a;
  mb << b;
  return NormalMixture::shared({0.5, 0.5}, {ma, mb}, Matrix::Constant(1, 1, var));
}

double at(const NormalMixture& m, double x) {
  return m.density(std::span<const double>(&x, 1));
}

}  // namespace

TEST_CASE("mixture density examples") {
  CHECK(at(NormalMixture::gaussian1d(0, 1), 0.0) == doctest::Approx(1.0 / std::sqrt(2.0 * std::numbers::pi)).epsilon(1e-15));
  CHECK(at(two_point(-1, 1, 1), 0.0) == doctest::Approx(0.24197072451914337).epsilon(1e-14));

  const auto g2 = NormalMixture::gaussian(Vector::Zero(2), Matrix::Identity(2, 2));
  const double far[2] = {40.0 / std::sqrt(2.0), 40.0 / std::sqrt(2.0)};
  const double v = g2.density(std::span<const double>(far, 2));
  CHECK(v >= 0.0);
  CHECK(v < 1e-300);
  CHECK(std::isfinite(g2.log_density(std::span<const double>(far, 2))));
}

TEST_CASE("dimension mismatch and invalid construction are input errors") {
  const auto g = NormalMixture::gaussian1d(0, 1);
  const double x[2] = {0, 0};
  CHECK_THROWS_AS(g.density(std::span<const double>(x, 2)), InputError);
  Vector m(1);
  m << 0;
  CHECK_THROWS_AS(NormalMixture({0.5, 0.4}, {m, m}, {Matrix::Identity(1, 1)}, true), InputError);
  CHECK_THROWS_AS(NormalMixture({1.0}, {m}, {Matrix::Constant(1, 1, -1.0)}), InputError);
  Matrix asym(2, 2);
  asym << 1, 0.5, 0.4, 1;
  CHECK_THROWS_AS(NormalMixture::gaussian(Vector::Zero(2), asym), InputError);
  CHECK_THROWS_AS(convolve(g, NormalMixture::gaussian(Vector::Zero(2), Matrix::Identity(2, 2))), InputError);
  CHECK_THROWS_AS(NormalMixture({1e-20}, {m}, {Matrix::Identity(1, 1)}), InputError);
}

TEST_CASE("tiny weights are dropped and the rest renormalized") {
  Vector a(1), b(1);
  a << 0;
  b << 1;
  NormalMixture m({1.0 - 1e-16, 1e-16}, {a, b}, {Matrix::Identity(1, 1)}, true);
  CHECK(m.size() == 1);
  CHECK(m.weights()[0] == 1.0);
}

TEST_CASE("convolution identities") {
  const auto n2 = convolve(NormalMixture::gaussian1d(0, 1), NormalMixture::gaussian1d(0, 1));
  REQUIRE(n2.size() == 1);
  CHECK(n2.covariance(0)(0, 0) == 2.0);

  const auto sq = merge_duplicates(convolve(two_point(-1, 1, 1), two_point(-1, 1, 1)));
  REQUIRE(sq.size() == 3);
  std::vector<std::pair<double, double>> comps;
  for (std::size_t k = 0; k < 3; ++k) comps.emplace_back(sq.means()[k](0), sq.weights()[k]);
  std::sort(comps.begin(), comps.end());
  CHECK(comps[0].first == doctest::Approx(-2.0));
  CHECK(comps[0].second == doctest::Approx(0.25).epsilon(1e-14));
  CHECK(comps[1].first == doctest::Approx(0.0));
  CHECK(comps[1].second == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(comps[2].second == doctest::Approx(0.25).epsilon(1e-14));
  CHECK(sq.covariance(0)(0, 0) == 2.0);

  Vector m1(1), m2(1), m3(1);
  m1 << -0.3;
  m2 << 1.2;
  m3 << 2.0;
  NormalMixture a({0.2, 0.8}, {m1, m2}, {Matrix::Constant(1, 1, 0.5), Matrix::Constant(1, 1, 2.0)});
  NormalMixture b({0.6, 0.4}, {m3, m1}, {Matrix::Constant(1, 1, 1.5), Matrix::Constant(1, 1, 0.7)});
  const auto ab = convolve(a, b), ba = convolve(b, a);
  double total = 0.0;
  for (double w : ab.weights()) total += w;
  CHECK(std::abs(total - 1.0) < 1e-12);
  for (double x = -10; x <= 10; x += 0.25) CHECK(std::abs(at(ab, x) - at(ba, x)) < 1e-12);
}

TEST_CASE("self-convolution") {
  const auto m = two_point(-1, 2, 0.6);
  const auto one = self_convolve(m, 1);
  CHECK(one.mixture.size() == m.size());
  for (double x = -4; x <= 4; x += 0.5) CHECK(at(one.mixture, x) == at(m, x));

  Vector mu(2);
  mu << 0.4, -1.0;
  Matrix s(2, 2);
  s << 1.0, 0.3, 0.3, 0.5;
  const auto g5 = self_convolve(NormalMixture::gaussian(mu, s), 5).mixture;
  REQUIRE(g5.size() == 1);
  CHECK((g5.means()[0] - 5.0 * mu).norm() < 1e-14);
  CHECK((g5.covariance(0) - 5.0 * s).norm() < 1e-13);

  // three-fold power against an FFT convolution
  const auto m3 = self_convolve(m, 3).mixture;
  const double h = 0.01;
  const std::size_t n = 8192;
  const auto ref = oracle::fft_power(m, 3, h, n);
  double sup = 0.0;
  for (std::size_t j = 0; j < n; j += 3) {
    const double x = (static_cast<double>(j) - static_cast<double>(n / 2)) * h;
    sup = std::max(sup, std::abs(at(m3, x) - ref[j]));
  }
  CHECK(sup < 1e-6);
}

TEST_CASE("self-convolution moments survive pruning") {
  Vector a(1), b(1), c(1);
  a << -1.0;
  b << 0.5;
  c << 3.0;
  NormalMixture m({0.5, 0.3, 0.2}, {a, b, c}, {Matrix::Constant(1, 1, 0.8)}, true);
  ConvolutionOptions opt;
  opt.max_components = 40;
  opt.prune_tol = 1e-12;
  for (int k : {2, 4, 6}) {
    const auto p = self_convolve(m, k, opt);
    CHECK(std::abs(p.mixture.mean()(0) - k * m.mean()(0)) < 1e-10);
    CHECK(std::abs(p.mixture.covariance()(0, 0) - k * m.covariance()(0, 0)) < 1e-10);
    double total = 0.0;
    for (double w : p.mixture.weights()) total += w;
    CHECK(std::abs(total - 1.0) < 1e-12);
  }
}

TEST_CASE("mass conservation on a covering grid") {
  const auto m = two_point(-1, 2, 0.6);
  const auto g = Grid::line(-1 - 8 * 0.8, 2 + 8 * 0.8, 4001);
  const auto pts = g.points();
  std::vector<double> vals(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) vals[i] = at(m, pts[i]);
  CHECK(std::abs(g.integrate(vals) - 1.0) < 1e-6);

  Matrix s(2, 2);
  s << 1.0, 0.4, 0.4, 0.8;
  const auto g2m = NormalMixture::gaussian(Vector::Zero(2), s);
  const auto g2 = Grid::square(-8, 8, 401);
  const auto p2 = g2.points();
  std::vector<double> v2(g2.size());
  for (std::size_t i = 0; i < v2.size(); ++i) v2[i] = g2m.density(std::span<const double>(p2.data() + 2 * i, 2));
  CHECK(std::abs(g2.integrate(v2) - 1.0) < 1e-6);
}

TEST_CASE("sampling moments and determinism") {
  const auto g = NormalMixture::gaussian(Vector::Zero(2), Matrix::Identity(2, 2));
  Rng rng(21, 0);
  const int n = 100000;
  Vector sum = Vector::Zero(2);
  for (int i = 0; i < n; ++i) sum += g.sample(rng);
  sum /= n;
  CHECK(std::abs(sum(0)) < 3.0 / std::sqrt(n));
  CHECK(std::abs(sum(1)) < 3.0 / std::sqrt(n));

  Matrix s(2, 2);
  s << 2.0, -0.6, -0.6, 1.0;
  const auto h = NormalMixture::gaussian(Vector::Zero(2), s);
  Matrix acc = Matrix::Zero(2, 2);
  for (int i = 0; i < n; ++i) {
    const Vector x = h.sample(rng);
    acc += x * x.transpose();
  }
  acc /= n;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) CHECK(std::abs(acc(i, j) - s(i, j)) < 0.05 * std::abs(s(i, j)));

  Rng r1(3, 4), r2(3, 4);
  for (int i = 0; i < 10; ++i) CHECK(h.sample(r1) == h.sample(r2));
}

TEST_CASE("json round trip") {
  const auto m = two_point(-1, 2, 0.6);
  nlohmann::json j = m;
  const auto back = mixture_from_json(j);
  CHECK(back.size() == 2);
  CHECK(back.shared_sigma());
  CHECK(at(back, 0.3) == at(m, 0.3));
  const auto cm = model_from_json(model_to_json(CppModel(1.5, m)));
  CHECK(cm.lambda == 1.5);
  CHECK_THROWS_AS(CppModel(0.0, m), InputError);
  CHECK_THROWS_AS(CppModel(-1.0, m), InputError);
}
