#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <random>

namespace decompound {

/// Philox4x32-10 counter-based generator addressed by (seed, stream).
///
/// Two generators with the same (seed, stream) produce identical sequences;
/// distinct streams are statistically independent, so parallel replicates
/// only need distinct stream ids. Satisfies UniformRandomBitGenerator.
class Rng {
public:
  using result_type = std::uint64_t;

  Rng(std::uint64_t seed = 0, std::uint64_t stream = 0);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }
  result_type operator()();

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }

  /// Independent generator for a child stream, e.g. one per replicate or per increment.
  Rng substream(std::uint64_t id) const;

  /// Uniform on the open interval (0, 1) with 53 random bits.
  double uniform();
  double normal();
  double gamma(double shape);  // unit scale
  double beta(double a, double b);
  std::uint64_t poisson(double mean);
  /// Index drawn proportionally to nonnegative weights (need not be normalized).
  template <class Range>
  std::size_t categorical(const Range& weights);

private:
  void refill();

  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t counter_ = 0;
  std::array<std::uint64_t, 2> buffer_{};
  int available_ = 0;
  std::normal_distribution<double> normal_;
};

template <class Range>
std::size_t Rng::categorical(const Range& weights) {
  double total = 0.0;
  for (double w : weights) total += w;
  double u = uniform() * total;
  std::size_t last_positive = 0;
  std::size_t i = 0;
  for (double w : weights) {
    if (w > 0.0) {
      last_positive = i;
      if (u < w) return i;
      u -= w;
    }
    ++i;
  }
  return last_positive;
}

/// splitmix64 finalizer; used to derive stream ids and content keys.
std::uint64_t mix64(std::uint64_t x);

}  // namespace decompound
