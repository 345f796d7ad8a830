#include <cmath>
#include <vector>

#include "decompound/error.hpp"
#include "decompound/simulate.hpp"
#include "decompound/stats.hpp"
#include "doctest.h"

using namespace decompound;

TEST_CASE("path jump count is Poisson") {
  const CppModel m(1.0, NormalMixture::gaussian1d(0, 1));
  const Rng root(1, 0);
  const int reps = 100000;
  double total = 0.0;
  for (int i = 0; i < reps; ++i) {
    Rng rng = root.substream(i);
    const auto p = simulate_path(m, 1.0, rng);
    total += static_cast<double>(p.jump_count());
    for (std::size_t j = 1; j < p.jump_count(); ++j) REQUIRE(p.jump_times[j] > p.jump_times[j - 1]);
    for (double t : p.jump_times) REQUIRE((t > 0.0 && t <= 1.0));
  }
  CHECK(std::abs(total / reps - 1.0) < 3.0 * std::sqrt(1.0 / reps));
}

TEST_CASE("tiny intensity gives almost no jumps") {
  const CppModel m(1e-6, NormalMixture::gaussian1d(0, 1));
  Rng rng(2, 0);
  const int reps = 100000;
  int zeros = 0;
  for (int i = 0; i < reps; ++i) zeros += simulate_path(m, 1.0, rng).jump_count() == 0;
  const double p = std::exp(-1e-6);
  CHECK(std::abs(zeros / double(reps) - p) <= 3.0 * std::sqrt(p * (1 - p) / reps) + 1.0 / reps);
}

TEST_CASE("identical seeds give identical samples") {
  const CppModel m(1.3, NormalMixture::gaussian1d(0.5, 2));
  Rng a(7, 1), b(7, 1);
  const auto pa = simulate_path(m, 5.0, a), pb = simulate_path(m, 5.0, b);
  CHECK(pa.jump_times == pb.jump_times);
  CHECK(pa.jump_values == pb.jump_values);
  Rng c(7, 2), d(7, 2);
  CHECK(simulate_increments(m, 50, 1.0, c).z == simulate_increments(m, 50, 1.0, d).z);
}

TEST_CASE("zero fraction and moments of increments") {
  const CppModel m(1.0, NormalMixture::gaussian1d(0, 1));
  Rng rng(3, 0);
  const std::size_t n = 100000;
  const auto s = simulate_increments(m, n, 1.0, rng);
  CHECK(s.size() == n);
  const double p = std::exp(-1.0);
  CHECK(std::abs(s.zero_count() / double(n) - p) < 3.0 * std::sqrt(p * (1 - p) / n));

  const CppModel m2(2.0, NormalMixture::gaussian1d(0, 1));
  const auto s2 = simulate_increments(m2, n, 1.0, rng);
  CHECK(std::abs(stats::mean(s2.z)) < 4.0 * std::sqrt(2.0 / n));
  CHECK(std::abs(stats::variance(s2.z) - 2.0) < 0.1);

  Rng r1(4, 0);
  CHECK(simulate_increments(m, 1, 1.0, r1).size() == 1);
  CHECK_THROWS_AS(simulate_increments(m, 10, 0.0, r1), InputError);
}

TEST_CASE("path increments match direct increments in law") {
  const CppModel m(1.5, NormalMixture::gaussian1d(0.3, 1));
  const std::size_t n = 10000;
  Rng a(5, 0), b(5, 1);
  const auto path = simulate_path(m, static_cast<double>(n), a);
  const auto from_path = increments_from_path(path, 1.0, n);
  const auto direct = simulate_increments(m, n, 1.0, b);
  CHECK(stats::ks_two_sample(from_path.z, direct.z).p_value > 0.01);
}

TEST_CASE("mesh additivity") {
  const CppModel m(0.8, NormalMixture::gaussian1d(0.5, 1));
  const std::size_t n = 100000;
  Rng a(6, 0), b(6, 1);
  const auto coarse = simulate_increments(m, n, 2.0, a);
  const auto fine = simulate_increments(m, 2 * n, 1.0, b);
  std::vector<double> sums(n);
  for (std::size_t i = 0; i < n; ++i) sums[i] = fine.z[2 * i] + fine.z[2 * i + 1];
  // mean 0.8 * 2 * 0.5 = 0.8, variance 1.6 * 1.25 = 2
  CHECK(std::abs(stats::mean(coarse.z) - stats::mean(sums)) < 4.0 * std::sqrt(2 * 2.0 / n));
  CHECK(std::abs(stats::variance(coarse.z) - stats::variance(sums)) < 0.08);
  CHECK(std::abs(stats::mean(coarse.z) - 0.8) < 4.0 * std::sqrt(2.0 / n));
}

TEST_CASE("zero snapping") {
  IncrementSample s(1, 1.0, {0.0, 1e-12, 0.5, -2e-12});
  CHECK(s.zero_count() == 1);
  const auto snapped = snap_zeros(s, 1e-11);
  CHECK(snapped.zero_count() == 3);
  CHECK(snap_zeros(s, 0.0).zero_count() == 1);
  CHECK(IncrementSample(2, 1.0, {}).size() == 0);
}
